import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from kernelinr.models.enums import (
    EncoderKind,
    OrderingStrategy,
    Refinement,
    StartRule,
    TargetTag,
    TieRule,
)


class OrderingConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    strategy: OrderingStrategy = OrderingStrategy.UOS
    start_rule: StartRule = StartRule.SLOT_ZERO
    tie_rule: TieRule = TieRule.LOWEST_ORIGINAL_INDEX
    refinement: Refinement = Refinement.NONE
    max_passes: int = Field(default=50, ge=1)


class SmoothnessReport(BaseModel):
    euclidean_energy: float = Field(ge=0.0)
    cosine_objective: float
    per_layer_path_cost: list[float] = Field(default_factory=list)


class LayerPermutationReport(BaseModel):
    layer: int
    strategy: OrderingStrategy
    path_cost_before: float = Field(ge=0.0)
    path_cost_after: float = Field(ge=0.0)
    smoothness_energy_before: float = Field(ge=0.0)
    smoothness_energy_after: float = Field(ge=0.0)


class NtkReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # columns
    coefficients: np.ndarray  # Q^T Y
    encoder: EncoderKind
    target: TargetTag


class SpectrumReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    magnitude: np.ndarray  # centered (fftshift) |DFT|
    total_energy: float = Field(ge=0.0)
    cutoff: float | None = None
    low_freq_fraction: float | None = Field(default=None, ge=0.0, le=1.0)


class SpectralRow(BaseModel):
    """One line of the ntk-report CSV."""

    encoder: EncoderKind
    target: TargetTag
    index: int
    eigenvalue: float
    coefficient: float
