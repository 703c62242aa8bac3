import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from kernelinr.models.encoding import CoordinateEncoder
from kernelinr.models.weights import PermutationTable


class InrModel(BaseModel):
    """Five-layer coordinate MLP: ReLU after layers 1-4, linear output.

    weights[i] has shape (widths[i], widths[i + 1]); parameters are updated in place.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    widths: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    seed: int = Field(default=0, ge=0)

    @property
    def input_dim(self) -> int:
        return self.widths[0]

    @property
    def output_dim(self) -> int:
        return self.widths[-1]

    @property
    def parameter_count(self) -> int:
        return sum(int(w.size) + int(b.size) for w, b in zip(self.weights, self.biases))


class Gradients(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    weights: list[np.ndarray]
    biases: list[np.ndarray]


class AdamState(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    lr: float = Field(default=5e-3, gt=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)
    step: int = Field(default=0, ge=0)
    m_weights: list[np.ndarray]
    v_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_biases: list[np.ndarray]


class GradCheckReport(BaseModel):
    max_rel_error: float
    worst_layer: int | None = None
    worst_kind: str | None = None  # "weight" or "bias"
    checked: int = 0
    skipped_kinks: int = 0


class LayerStats(BaseModel):
    """Per-bundle-layer z-score parameters of the training targets."""

    model_config = ConfigDict(frozen=True)

    mean: float
    std: float = Field(gt=0.0)


class InrCheckpoint(BaseModel):
    """The compressed representation: MLP, its input encoder and target scaling.

    `table` is the slot ordering the MLP was trained on; reconstruction inverts it.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    model: InrModel
    encoder: CoordinateEncoder
    layer_stats: list[LayerStats]
    kernel_size: int = Field(ge=1)
    adam: AdamState | None = None
    table: PermutationTable | None = None
