from __future__ import annotations

from typing import Any

from kernelinr.models.report import ValidationViolation


class KernelInrError(Exception):
    """Base class for all errors raised by kernelinr."""


class FormatError(KernelInrError):
    """Raised when an artifact has the wrong magic bytes or an unknown version."""


class CorruptionError(KernelInrError):
    """Raised when an artifact payload is truncated or has trailing garbage."""


class InvalidInputError(KernelInrError):
    """Raised when inputs violate a structural rule (shape, range, bijection)."""

    def __init__(
        self, message: str, violations: list[ValidationViolation] | None = None
    ):
        super().__init__(message)
        self.violations = violations or []


class NumericError(KernelInrError):
    """Raised on non-finite values or when an iterative solver does not converge."""

    def __init__(self, message: str, record: dict[str, Any] | None = None):
        super().__init__(message)
        self.record = record or {}


class RefusalError(KernelInrError):
    """Raised when a request would trigger a guarded combinatorial blow-up."""
