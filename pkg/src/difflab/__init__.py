"""Score-based diffusion sampling lab.

Forward SDE schedules, a closed-form Gaussian oracle, an exponential-integrator
reverse sampler, W2 upper-bound evaluation and iteration-complexity
prescriptions.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AdmissibilityError,
    BudgetError,
    ConfigError,
    DiffLabError,
    DivergenceError,
    DomainError,
    NumericError,
    UnsupportedError,
)
from .schedule import Family, KernelParams, ScheduleSpec, kernel_params, int_f, int_g2, prior_distribution  # noqa: E402
from .gaussian_oracle import GaussianModel, VarianceTrace  # noqa: E402

__all__ = [
    "__version__",
    "AdmissibilityError",
    "BudgetError",
    "ConfigError",
    "DiffLabError",
    "DivergenceError",
    "DomainError",
    "NumericError",
    "UnsupportedError",
    "Family",
    "KernelParams",
    "ScheduleSpec",
    "kernel_params",
    "int_f",
    "int_g2",
    "prior_distribution",
    "GaussianModel",
    "VarianceTrace",
]
