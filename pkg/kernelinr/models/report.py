from datetime import datetime, timezone

UTC = timezone.utc

from pydantic import BaseModel, Field


class ValidationViolation(BaseModel):
    rule_id: str
    message: str
    layer: int | None = None
    severity: str = "error"  # "error" or "warning"


class ValidationResult(BaseModel):
    valid: bool
    violations: list[ValidationViolation] = Field(default_factory=list)


class RunManifest(BaseModel):
    command: str
    argv: list[str]
    config_hash: str
    seeds: list[int] = Field(default_factory=list)
    inputs: list[str] = Field(default_factory=list)
    outputs: list[str] = Field(default_factory=list)
    version: str
    wall_ms: float = Field(ge=0)
    created_at: datetime = Field(default_factory=lambda: datetime.now(UTC))


class CellResult(BaseModel):
    strategy: str
    encoder: str
    seed: int
    recon_mse: float | None = None
    final_loss: float | None = None
    error: str | None = None


class TrendCheck(BaseModel):
    name: str
    wins: int
    trials: int
    required: int
    passed: bool
    detail: str = ""


class ReproSummary(BaseModel):
    fixture: str
    seeds: list[int]
    cells: list[CellResult] = Field(default_factory=list)
    checks: list[TrendCheck] = Field(default_factory=list)
    failed_cells: int = 0

    @property
    def all_passed(self) -> bool:
        return self.failed_cells == 0 and all(c.passed for c in self.checks)
