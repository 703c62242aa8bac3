from typing import NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


def frozen_array(value, dtype) -> np.ndarray:
    """Copy `value` into a read-only contiguous array of `dtype`."""
    arr = np.array(value, dtype=dtype, copy=True, order="C")
    arr.setflags(write=False)
    return arr


class KernelCoord(NamedTuple):
    layer: int
    filter: int
    channel: int


class WeightBundle(BaseModel):
    """Ordered convolutional kernels [F, C, kh, kw] of a CNN plus opaque residual blobs."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    layers: list[np.ndarray]
    model_name: str = ""
    source_accuracy: float | None = Field(default=None, ge=0.0, le=1.0)
    residuals: list[bytes] = Field(default_factory=list)

    @field_validator("layers", mode="before")
    @classmethod
    def _freeze_layers(cls, value):
        return [frozen_array(layer, np.float32) for layer in value]

    @property
    def layer_count(self) -> int:
        return len(self.layers)

    @property
    def shapes(self) -> list[tuple[int, ...]]:
        return [tuple(int(d) for d in layer.shape) for layer in self.layers]

    @property
    def parameter_count(self) -> int:
        return sum(int(layer.size) for layer in self.layers)

    @property
    def slot_counts(self) -> list[int]:
        return [int(layer.shape[0] * layer.shape[1]) for layer in self.layers]

    @property
    def slot_count(self) -> int:
        return sum(self.slot_counts)

    @property
    def kernel_size(self) -> int:
        """Largest square kernel side across layers."""
        return max(int(layer.shape[2]) for layer in self.layers)


class BundleMeta(BaseModel):
    """Everything reconstruction needs from a bundle except the kernel payload."""

    model_config = ConfigDict(
        frozen=True, ser_json_bytes="base64", val_json_bytes="base64"
    )

    model_name: str = ""
    source_accuracy: float | None = Field(default=None, ge=0.0, le=1.0)
    shapes: list[tuple[int, int, int, int]]
    residuals: list[bytes] = Field(default_factory=list)

    @property
    def kernel_size(self) -> int:
        return max(s[2] for s in self.shapes)

    @property
    def slot_counts(self) -> list[int]:
        return [s[0] * s[1] for s in self.shapes]


class PermutationTable(BaseModel):
    """Per-layer bijections over flattened (f, c) slots, s = f * C + c.

    Output slot perm[i] receives input slot i; equivalently output slot j holds
    input slot inverses[j].
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    perms: list[np.ndarray]
    inverses: list[np.ndarray]

    @model_validator(mode="before")
    @classmethod
    def _derive_inverses(cls, data):
        if isinstance(data, dict) and "inverses" not in data:
            data = {**data, "inverses": [_inverse_of(p) for p in data["perms"]]}
        return data

    @field_validator("perms", "inverses", mode="before")
    @classmethod
    def _freeze(cls, value):
        return [frozen_array(p, np.int64) for p in value]

    @classmethod
    def from_perms(cls, perms) -> "PermutationTable":
        return cls(perms=list(perms))

    @property
    def layer_count(self) -> int:
        return len(self.perms)

    @property
    def slot_counts(self) -> list[int]:
        return [int(p.size) for p in self.perms]

    @property
    def is_identity(self) -> bool:
        return all(np.array_equal(p, np.arange(p.size)) for p in self.perms)


def _inverse_of(perm) -> np.ndarray:
    # Out-of-range or repeated entries leave -1 holes; the validator reports them.
    perm = np.asarray(perm, dtype=np.int64)
    inv = np.full(perm.size, -1, dtype=np.int64)
    ok = (perm >= 0) & (perm < perm.size)
    inv[perm[ok]] = np.arange(perm.size, dtype=np.int64)[ok]
    return inv
