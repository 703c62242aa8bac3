import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from kernelinr.models.enums import EncoderKind, SigmaMode
from kernelinr.models.weights import frozen_array


class PeConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    levels: int = Field(default=6, ge=1)
    base: float = Field(default=2.0, gt=1.0)


class RffMap(BaseModel):
    """Frequency matrix B (D x d) with entries drawn i.i.d. from N(0, sigma^2)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    matrix: np.ndarray
    sigma: float = Field(gt=0.0)
    seed: int = Field(ge=0)

    @field_validator("matrix", mode="before")
    @classmethod
    def _freeze(cls, value):
        arr = frozen_array(value, np.float32)
        if arr.ndim != 2:
            raise ValueError(f"RFF matrix must be 2-D, got shape {arr.shape}")
        return arr

    @property
    def features(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def input_dim(self) -> int:
        return int(self.matrix.shape[1])


class SigmaSchedule(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: SigmaMode = SigmaMode.GLOBAL_FIXED
    sigma_base: float = Field(default=400.0, gt=0.0)
    ref_params: int = Field(default=36864, ge=1)  # 64x64 3x3 layer
    clamp_min: float = Field(default=10.0, gt=0.0)
    clamp_max: float = Field(default=1000.0, gt=0.0)

    @model_validator(mode="after")
    def _check_clamp(self):
        if self.clamp_min > self.clamp_max:
            raise ValueError("clamp_min must not exceed clamp_max")
        return self


class CoordinateEncoder(BaseModel):
    """Input transform applied to normalized (layer, filter, channel) coordinates.

    RFF holds either one map shared by all layers or one map per bundle layer.
    """

    model_config = ConfigDict(frozen=True)

    kind: EncoderKind
    input_dim: int = Field(default=3, ge=1)
    pe: PeConfig | None = None
    rff_maps: list[RffMap] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_kind(self):
        if self.kind == EncoderKind.PE and self.pe is None:
            raise ValueError("PE encoder requires a PeConfig")
        if self.kind == EncoderKind.RFF:
            if not self.rff_maps:
                raise ValueError("RFF encoder requires at least one map")
            shapes = {m.matrix.shape for m in self.rff_maps}
            if len(shapes) != 1:
                raise ValueError("all RFF maps must share one shape")
            if self.rff_maps[0].input_dim != self.input_dim:
                raise ValueError("RFF map input dimension does not match encoder")
        return self

    @property
    def output_dim(self) -> int:
        if self.kind == EncoderKind.PE:
            return 2 * self.pe.levels * self.input_dim
        if self.kind == EncoderKind.RFF:
            return 2 * self.rff_maps[0].features
        return self.input_dim

    @property
    def per_layer(self) -> bool:
        return self.kind == EncoderKind.RFF and len(self.rff_maps) > 1
