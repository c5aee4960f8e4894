"""Exception hierarchy shared by every difflab module."""

from __future__ import annotations


class DiffLabError(Exception):
    """Base class; ``kind`` is the machine-readable tag used by the CLI."""

    kind = "error"

    def to_dict(self) -> dict:
        return {"error": self.kind, "message": str(self)}


class DomainError(DiffLabError, ValueError):
    kind = "domain_error"


class NumericError(DiffLabError, ArithmeticError):
    """Quadrature or root finding failed to reach its tolerance."""

    kind = "numeric_error"

    def __init__(self, message: str, achieved_tol: float | None = None):
        super().__init__(message)
        self.achieved_tol = achieved_tol

    def to_dict(self) -> dict:
        out = super().to_dict()
        out["achieved_tol"] = self.achieved_tol
        return out


class AdmissibilityError(DiffLabError):
    """Stepsize violates the contraction conditions."""

    kind = "admissibility_error"

    def __init__(self, message: str, condition: str | None = None):
        super().__init__(message)
        self.condition = condition

    def to_dict(self) -> dict:
        out = super().to_dict()
        out["condition"] = self.condition
        return out


class DivergenceError(DiffLabError):
    kind = "divergence_error"

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step

    def to_dict(self) -> dict:
        out = super().to_dict()
        out["step"] = self.step
        return out


class BudgetError(DiffLabError):
    kind = "budget_error"


class UnsupportedError(DiffLabError):
    kind = "unsupported"


class ConfigError(DiffLabError):
    """Invalid experiment config; ``field`` is the dotted path at fault."""

    kind = "config_error"

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field

    def to_dict(self) -> dict:
        out = super().to_dict()
        out["field"] = self.field
        return out
