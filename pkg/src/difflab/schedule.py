"""Forward SDE coefficient families ``dx = -f(t) x dt + g(t) dB``.

Every built-in family has closed forms for the integrals of ``f`` and
``g**2`` and for the Gaussian transition kernel

    x_t | x_0 ~ N(a1(t) x_0, a2(t) I),
    a1(t) = exp(-int_0^t f),  a2(t) = int_0^t exp(-2 int_s^t f) g(s)^2 ds.

CUSTOM schedules fall back to adaptive Simpson quadrature.
All array-valued helpers broadcast over numpy inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping

import numpy as np

from .errors import DomainError
from .quadrature import adaptive_simpson


class Family(str, Enum):
    VE_EXP = "VE_EXP"
    VE_CONST = "VE_CONST"
    VE_SQRT2AT = "VE_SQRT2AT"
    VE_POLY = "VE_POLY"
    VP_CONST = "VP_CONST"
    VP_LINEAR = "VP_LINEAR"
    VP_POLY = "VP_POLY"
    VP_EXP = "VP_EXP"
    CUSTOM = "CUSTOM"

    @property
    def is_ve(self) -> bool:
        return self.name.startswith("VE_")

    @property
    def is_vp(self) -> bool:
        return self.name.startswith("VP_")


PARAM_NAMES: dict[Family, tuple[str, ...]] = {
    Family.VE_EXP: ("a", "b"),
    Family.VE_CONST: ("a",),
    Family.VE_SQRT2AT: ("a",),
    Family.VE_POLY: ("a", "b", "c"),
    Family.VP_CONST: ("beta_const",),
    Family.VP_LINEAR: ("beta_min", "beta_max"),
    Family.VP_POLY: ("beta_min", "beta_max", "rho"),
    Family.VP_EXP: ("beta_min", "beta_max"),
    Family.CUSTOM: (),
}

BUILTIN_FAMILIES = tuple(f for f in Family if f is not Family.CUSTOM)


def _pow_diff(x0, x1, p):
    """``x1**p - x0**p`` for positive ``x0 <= x1`` without cancellation."""
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    return x0**p * np.expm1(p * np.log1p((x1 - x0) / x0))


@dataclass(frozen=True)
class KernelParams:
    a1: float
    a2: float


@dataclass(frozen=True)
class GaussianMarginal:
    """Zero-mean isotropic Gaussian; ``variance`` is per coordinate."""

    variance: float
    mean: float = 0.0

    def sample(self, rng: np.random.Generator, n: int, d: int) -> np.ndarray:
        return self.mean + math.sqrt(self.variance) * rng.standard_normal((n, d))


@dataclass(frozen=True)
class ScheduleSpec:
    """One forward-SDE schedule on the horizon ``[0, horizon_T]``.

    Build with :meth:`build` (validates parameters) or :meth:`custom`.
    """

    family: Family
    params: Mapping[str, float]
    horizon_T: float
    f_fn: Callable[[float], float] | None = field(default=None, compare=False)
    g_fn: Callable[[float], float] | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "params", {k: float(v) for k, v in self.params.items()})
        T = float(self.horizon_T)
        object.__setattr__(self, "horizon_T", T)
        if not (math.isfinite(T) and T > 0):
            raise DomainError(f"horizon_T must be positive and finite, got {T}")
        fam = self.family
        if fam is Family.CUSTOM:
            if self.f_fn is None or self.g_fn is None:
                raise DomainError("CUSTOM schedule needs both f and g callables")
            return
        expected = PARAM_NAMES[fam]
        if set(self.params) != set(expected):
            raise DomainError(
                f"{fam.value} takes parameters {expected}, got {tuple(self.params)}"
            )
        for k, v in self.params.items():
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{fam.value}.{k} must be positive, got {v}")
        p = self.params
        if fam is Family.VP_POLY and p["rho"] < 1:
            raise DomainError(f"VP_POLY exponent rho must be >= 1, got {p['rho']}")
        if fam in (Family.VP_POLY, Family.VP_EXP) and not p["beta_max"] > p["beta_min"]:
            raise DomainError(f"{fam.value} needs beta_max > beta_min")
        if fam is Family.VP_LINEAR and p["beta_max"] < p["beta_min"]:
            raise DomainError("VP_LINEAR needs beta_max >= beta_min")

    # -- constructors -----------------------------------------------------

    @classmethod
    def build(cls, family: Family | str, horizon_T: float, **params: float) -> "ScheduleSpec":
        return cls(Family(family), params, horizon_T)

    @classmethod
    def custom(
        cls, f: Callable[[float], float], g: Callable[[float], float], horizon_T: float
    ) -> "ScheduleSpec":
        return cls(Family.CUSTOM, {}, horizon_T, f_fn=f, g_fn=g)

    @classmethod
    def ve_poly_from_sigma(
        cls, sigma_min: float, sigma_max: float, rho: float, horizon_T: float
    ) -> "ScheduleSpec":
        """VE_POLY with ``sigma(t) = (sigma_min**(1/rho) + A t)**rho``.

        Then ``g(t) = sqrt(2 rho A) (B + A t)**(rho - 1/2)``, which is
        ``(b + a t)**c`` with ``c = rho - 1/2`` after rescaling ``B, A``.
        """
        if rho <= 0.5:
            raise DomainError("rho must exceed 1/2 so that the exponent c is positive")
        B = sigma_min ** (1.0 / rho)
        A = sigma_max ** (1.0 / rho) - B
        c = rho - 0.5
        k = (2.0 * rho * A) ** (1.0 / (2.0 * c))
        return cls.build(Family.VE_POLY, horizon_T, a=k * A, b=k * B, c=c)

    @classmethod
    def ve_exp_from_sigma(
        cls, sigma_min: float, sigma_max: float, horizon_T: float
    ) -> "ScheduleSpec":
        """VE_EXP with ``sigma(t) = sigma_min (sigma_max/sigma_min)**t``."""
        r = math.log(sigma_max / sigma_min)
        return cls.build(Family.VE_EXP, horizon_T, a=sigma_min * math.sqrt(2.0 * r), b=r)

    def with_horizon(self, horizon_T: float) -> "ScheduleSpec":
        return ScheduleSpec(self.family, dict(self.params), horizon_T, self.f_fn, self.g_fn)

    def to_dict(self) -> dict:
        if self.family is Family.CUSTOM:
            raise DomainError("CUSTOM schedules are not serializable")
        return {"family": self.family.value, "horizon_T": self.horizon_T, **self.params}

    @classmethod
    def from_dict(cls, data: Mapping) -> "ScheduleSpec":
        data = dict(data)
        family = data.pop("family")
        T = data.pop("horizon_T")
        return cls.build(family, T, **data)

    # -- coefficient functions --------------------------------------------

    @property
    def is_vp(self) -> bool:
        return self.family.is_vp

    @property
    def is_ve(self) -> bool:
        return self.family.is_ve

    def _vp_ab(self) -> tuple[float, float]:
        p = self.params
        rho = p["rho"]
        b = p["beta_min"] ** (1.0 / rho)
        return p["beta_max"] ** (1.0 / rho) - b, b

    def beta(self, t):
        """Noise rate of a VP family."""
        p = self.params
        t = np.asarray(t, dtype=float)
        fam = self.family
        if fam is Family.VP_CONST:
            return np.full_like(t, p["beta_const"])
        if fam is Family.VP_LINEAR:
            return p["beta_min"] + (p["beta_max"] - p["beta_min"]) * t
        if fam is Family.VP_POLY:
            a, b = self._vp_ab()
            return (b + a * t) ** p["rho"]
        if fam is Family.VP_EXP:
            return p["beta_min"] * np.exp(t * math.log(p["beta_max"] / p["beta_min"]))
        raise DomainError(f"{fam.value} is not a VP family")

    def int_beta(self, t0, t1):
        p = self.params
        t0 = np.asarray(t0, dtype=float)
        t1 = np.asarray(t1, dtype=float)
        fam = self.family
        if fam is Family.VP_CONST:
            return p["beta_const"] * (t1 - t0)
        if fam is Family.VP_LINEAR:
            return p["beta_min"] * (t1 - t0) + 0.5 * (p["beta_max"] - p["beta_min"]) * (t1 - t0) * (t1 + t0)
        if fam is Family.VP_POLY:
            a, b = self._vp_ab()
            rho = p["rho"]
            return _pow_diff(b + a * t0, b + a * t1, rho + 1.0) / (a * (rho + 1.0))
        if fam is Family.VP_EXP:
            lr = math.log(p["beta_max"] / p["beta_min"])
            return p["beta_min"] * np.exp(lr * t0) * np.expm1(lr * (t1 - t0)) / lr
        raise DomainError(f"{fam.value} is not a VP family")

    def f(self, t):
        t = np.asarray(t, dtype=float)
        if self.is_ve:
            return np.zeros_like(t)
        if self.is_vp:
            return 0.5 * self.beta(t)
        return np.vectorize(self.f_fn, otypes=[float])(t)

    def g2(self, t):
        """Squared diffusion coefficient ``g(t)**2``."""
        p = self.params
        t = np.asarray(t, dtype=float)
        fam = self.family
        if fam is Family.VE_EXP:
            return p["a"] ** 2 * np.exp(2.0 * p["b"] * t)
        if fam is Family.VE_CONST:
            return np.full_like(t, p["a"] ** 2)
        if fam is Family.VE_SQRT2AT:
            return 2.0 * p["a"] * t
        if fam is Family.VE_POLY:
            return (p["b"] + p["a"] * t) ** (2.0 * p["c"])
        if self.is_vp:
            return self.beta(t)
        return np.vectorize(self.g_fn, otypes=[float])(t) ** 2

    def g(self, t):
        return np.sqrt(self.g2(t))

    def int_f(self, t0, t1):
        if self.is_ve:
            return np.zeros(np.broadcast(np.asarray(t0), np.asarray(t1)).shape)
        if self.is_vp:
            return 0.5 * self.int_beta(t0, t1)
        return _vec2(lambda a, b: adaptive_simpson(self.f_fn, a, b), t0, t1)

    def int_g2(self, t0, t1):
        p = self.params
        t0 = np.asarray(t0, dtype=float)
        t1 = np.asarray(t1, dtype=float)
        fam = self.family
        if fam is Family.VE_EXP:
            a, b = p["a"], p["b"]
            return a * a * np.exp(2.0 * b * t0) * np.expm1(2.0 * b * (t1 - t0)) / (2.0 * b)
        if fam is Family.VE_CONST:
            return p["a"] ** 2 * (t1 - t0)
        if fam is Family.VE_SQRT2AT:
            return p["a"] * (t1 - t0) * (t1 + t0)
        if fam is Family.VE_POLY:
            a, b, c = p["a"], p["b"], p["c"]
            return _pow_diff(b + a * t0, b + a * t1, 2.0 * c + 1.0) / (a * (2.0 * c + 1.0))
        if self.is_vp:
            return self.int_beta(t0, t1)
        return _vec2(lambda a, b: adaptive_simpson(lambda s: self.g_fn(s) ** 2, a, b), t0, t1)

    def a1(self, t):
        return np.exp(-self.int_f(0.0, t))

    def a2(self, t):
        t = np.asarray(t, dtype=float)
        if self.is_ve:
            return self.int_g2(0.0, t)
        if self.is_vp:
            return -np.expm1(-self.int_beta(0.0, t))
        return np.vectorize(self._custom_a2, otypes=[float])(t)

    def _custom_a2(self, t: float) -> float:
        def integrand(s: float) -> float:
            decay = adaptive_simpson(self.f_fn, s, t)
            return math.exp(-2.0 * decay) * self.g_fn(s) ** 2

        return adaptive_simpson(integrand, 0.0, t)

    def check_time(self, t: float, name: str = "t") -> float:
        T = self.horizon_T
        t = float(t)
        slack = 1e-12 * T
        if not (-slack <= t <= T + slack):
            raise DomainError(f"{name}={t} outside [0, {T}]")
        return min(max(t, 0.0), T)


def _vec2(fn, t0, t1):
    t0, t1 = np.broadcast_arrays(np.asarray(t0, dtype=float), np.asarray(t1, dtype=float))
    out = np.array([fn(float(a), float(b)) for a, b in zip(t0.ravel(), t1.ravel())])
    return out.reshape(t0.shape) if t0.shape else float(out[0])


def kernel_params(spec: ScheduleSpec, t: float) -> KernelParams:
    """Closed-form transition-kernel coefficients ``(a1(t), a2(t))``."""
    t = spec.check_time(t)
    return KernelParams(a1=float(spec.a1(t)), a2=float(spec.a2(t)))


def _check_interval(spec: ScheduleSpec, t0: float, t1: float) -> tuple[float, float]:
    if t1 < t0:
        raise DomainError(f"inverted interval [{t0}, {t1}]")
    return spec.check_time(t0, "t0"), spec.check_time(t1, "t1")


def int_f(spec: ScheduleSpec, t0: float, t1: float) -> float:
    t0, t1 = _check_interval(spec, t0, t1)
    return float(spec.int_f(t0, t1))


def int_g2(spec: ScheduleSpec, t0: float, t1: float) -> float:
    t0, t1 = _check_interval(spec, t0, t1)
    return float(spec.int_g2(t0, t1))


def prior_distribution(spec: ScheduleSpec) -> GaussianMarginal:
    """Gaussian started from the noise part of the forward solution at ``T``."""
    return GaussianMarginal(variance=float(spec.a2(spec.horizon_T)))
