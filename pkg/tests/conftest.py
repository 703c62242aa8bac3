import numpy as np
import pytest

from kernelinr.engine.fixtures import make_tiny_fixture
from kernelinr.engine.mlp import mlp_init
from kernelinr.models.inr import InrModel
from kernelinr.models.training import TrainConfig
from kernelinr.models.weights import PermutationTable, WeightBundle


# ── Bundle builders ──────────────────────────────────────────────────


def make_layer(filters: int = 2, channels: int = 2, kernel: int = 3, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.standard_normal((filters, channels, kernel, kernel)).astype(np.float32)


def make_bundle(
    shapes: list[tuple[int, int, int]] | None = None,
    seed: int = 0,
    residuals: list[bytes] | None = None,
    name: str = "test",
    accuracy: float | None = None,
) -> WeightBundle:
    """Random bundle; shapes are (filters, channels, kernel) per layer."""
    shapes = shapes or [(2, 2, 3)]
    return WeightBundle(
        layers=[make_layer(f, c, k, seed + i) for i, (f, c, k) in enumerate(shapes)],
        model_name=name,
        source_accuracy=accuracy,
        residuals=residuals or [],
    )


def make_scalar_bundle(values: list[float], filters: int | None = None) -> WeightBundle:
    """One layer of 1x1 kernels holding `values`, laid out F x C (C = 1 by default)."""
    arr = np.asarray(values, dtype=np.float32)
    filters = filters or arr.size
    return WeightBundle(layers=[arr.reshape(filters, arr.size // filters, 1, 1)])


def make_table(*perms) -> PermutationTable:
    return PermutationTable.from_perms(np.asarray(p) for p in perms)


def make_model(widths: list[int] | None = None, seed: int = 0, dtype=np.float64) -> InrModel:
    return mlp_init(widths or [3, 8, 8, 8, 8, 2], seed=seed, dtype=dtype)


def make_config(**overrides) -> TrainConfig:
    """Small, fast training settings."""
    base = {"steps": 50, "batch": 4, "hidden": 8, "eval_every": 10, "encoder": "pe"}
    base.update(overrides)
    return TrainConfig.model_validate(base)


# ── Fixtures ─────────────────────────────────────────────────────────


@pytest.fixture
def bundle() -> WeightBundle:
    return make_bundle([(2, 3, 3), (4, 2, 3), (3, 4, 1)], seed=3, residuals=[b"\x00\x01", b""])


@pytest.fixture(scope="session")
def tiny():
    return make_tiny_fixture(seed=0)
