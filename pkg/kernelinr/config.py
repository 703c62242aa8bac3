"""Flat key=value run configuration, validated into TrainConfig."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable

from kernelinr.exceptions import InvalidInputError
from kernelinr.models.training import TrainConfig

# Optional numeric keys; "none" on these means "derive the default".
_NULLABLE = {"rff.features", "sigma.base"}
_NULLS = {"none", "null", ""}


def parse_lines(lines: Iterable[str], source: str = "<config>") -> dict[str, str]:
    """Read `key = value` lines; `#` starts a comment, blank lines are skipped."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInputError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise InvalidInputError(f"{source}:{lineno}: empty key")
        values[key] = value
    return values


def nest(flat: dict[str, str]) -> dict:
    """Turn dotted keys into nested dicts: {'rff.sigma': '1'} -> {'rff': {'sigma': '1'}}."""
    tree: dict = {}
    for key, value in flat.items():
        node = tree
        *parents, leaf = key.split(".")
        for part in parents:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise InvalidInputError(f"Key {key!r} conflicts with scalar key {part!r}")
            node = child
        if isinstance(node.get(leaf), dict):
            raise InvalidInputError(f"Key {key!r} conflicts with section {key}.*")
        node[leaf] = None if key in _NULLABLE and value.lower() in _NULLS else value
    return tree


def load_config(path: str | Path | None = None, overrides: Iterable[str] = ()) -> TrainConfig:
    """Load a config file (optional) and apply `key=value` overrides on top."""
    flat: dict[str, str] = {}
    if path is not None:
        with open(path) as fh:
            flat.update(parse_lines(fh, source=str(path)))
    flat.update(parse_lines(overrides, source="--set"))
    return TrainConfig.model_validate(nest(flat))


def config_hash(config: TrainConfig) -> str:
    payload = json.dumps(config.model_dump(mode="json"), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()
