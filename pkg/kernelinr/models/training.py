from pydantic import BaseModel, ConfigDict, Field, model_validator

from kernelinr.models.analysis import OrderingConfig
from kernelinr.models.encoding import PeConfig
from kernelinr.models.enums import (
    EncoderKind,
    OrderingStrategy,
    Refinement,
    SigmaMode,
    StartRule,
)


class RffSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    sigma: float = Field(default=400.0, gt=0.0)
    features: int | None = Field(default=None, ge=1)  # None -> hidden // 2
    seed: int = Field(default=0, ge=0)


class SigmaSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: SigmaMode = SigmaMode.GLOBAL_FIXED
    base: float | None = Field(default=None, gt=0.0)  # None -> rff.sigma
    ref_params: int = Field(default=36864, ge=1)
    clamp_min: float = Field(default=10.0, gt=0.0)
    clamp_max: float = Field(default=1000.0, gt=0.0)


class AdamSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lr: float = Field(default=5e-3, gt=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)
    lr_floor: float = Field(default=0.1, ge=0.0, le=1.0)  # final lr as a fraction of lr


class OrderingSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    start_rule: StartRule = StartRule.SLOT_ZERO
    refinement: Refinement = Refinement.NONE
    max_passes: int = Field(default=50, ge=1)


class TrainConfig(BaseModel):
    """Reconstruction run settings.

    alpha and beta weight the attention and distillation terms of the full
    objective L_recon + alpha * L_atten + beta * L_KD; only L_recon is trained,
    so both are pinned to zero.
    """

    model_config = ConfigDict(extra="forbid")

    steps: int = Field(default=2000, ge=1)
    batch: int = Field(default=256, ge=1)
    seed: int = Field(default=0, ge=0)
    hidden: int = Field(default=64, ge=1)
    strategy: OrderingStrategy = OrderingStrategy.UOS
    eval_every: int = Field(default=100, ge=1)
    alpha: float = Field(default=0.0, ge=0.0, le=0.0)
    beta: float = Field(default=0.0, ge=0.0, le=0.0)
    encoder: EncoderKind = EncoderKind.RFF
    pe: PeConfig = Field(default_factory=PeConfig)
    rff: RffSettings = Field(default_factory=RffSettings)
    sigma: SigmaSettings = Field(default_factory=SigmaSettings)
    optim: AdamSettings = Field(default_factory=AdamSettings)
    ordering: OrderingSettings = Field(default_factory=OrderingSettings)

    @model_validator(mode="after")
    def _check_clamp(self):
        if self.sigma.clamp_min > self.sigma.clamp_max:
            raise ValueError("sigma.clamp_min must not exceed sigma.clamp_max")
        return self

    def ordering_config(self) -> OrderingConfig:
        return OrderingConfig(
            strategy=self.strategy,
            start_rule=self.ordering.start_rule,
            refinement=self.ordering.refinement,
            max_passes=self.ordering.max_passes,
        )


class EvalRecord(BaseModel):
    step: int = Field(ge=1)
    recon_loss: float
    wall_ms: float = Field(ge=0.0)


class TrainHistory(BaseModel):
    records: list[EvalRecord] = Field(default_factory=list)
    final_recon_mse: float | None = None

    @property
    def final_loss(self) -> float | None:
        return self.records[-1].recon_loss if self.records else None


class SigmaSweepRecord(BaseModel):
    sigma: float
    recon_mse: float
    final_loss: float
