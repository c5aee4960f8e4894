"""Iteration-complexity prescriptions per schedule family.

Each prescription is the literal closed form for its family: a horizon ``T = K eta`` that makes the prior-contraction term
``O(eps)``, a stepsize cap and a score-error cap. Multiplicative constants
hidden in the O(.) statements are *not* restored; ``K_min = ceil(T / eta_max)``
is therefore a scaling comparator, not a certified step count (see the
``disclaimer`` field).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, UnsupportedError
from .schedule import PARAM_NAMES, Family, ScheduleSpec

CONST_COEFF = "CONST_COEFF"
VP_GENERAL = "VP_GENERAL"

DISCLAIMER = "multiplicative constants suppressed in the O(.) statements are not included"

ORDER_LABELS: dict[str, str] = {
    Family.VE_EXP.value: "O(d log(d/eps)/eps^2)",
    Family.VE_CONST.value: "O(d^{3/2} log(d/eps)/eps^3)",
    Family.VE_SQRT2AT.value: "O(d^{5/4}/eps^{5/2})",
    Family.VE_POLY.value: "O(d^{1/(2(2c+1))+1}/eps^{1/(2c+1)+2})",
    CONST_COEFF: "O(d log(d/eps)/eps^2)",
    Family.VP_CONST.value: "O(d log(d/eps)/eps^2)",
    Family.VP_LINEAR.value: "O(d sqrt(log(d/eps))/eps^2)",
    Family.VP_POLY.value: "O(d (log(d/eps))^{1/(rho+1)}/eps^2)",
    Family.VP_EXP.value: "O(d log(log(d/eps))/eps^2)",
    VP_GENERAL: "O(d (log(d/eps))^{3 c3+1}/eps^2)",
}

DEFAULT_PARAMS: dict[str, dict[str, float]] = {
    Family.VE_EXP.value: {"a": 1.0, "b": 1.0},
    Family.VE_CONST.value: {"a": 1.0},
    Family.VE_SQRT2AT.value: {"a": 1.0},
    Family.VE_POLY.value: {"a": 1.0, "b": 1.0, "c": 1.0},
    Family.VP_CONST.value: {"beta_const": 1.0},
    Family.VP_LINEAR.value: {"beta_min": 0.1, "beta_max": 20.0},
    Family.VP_POLY.value: {"beta_min": 0.1, "beta_max": 20.0, "rho": 2.0},
    Family.VP_EXP.value: {"beta_min": 0.1, "beta_max": 20.0},
}


@dataclass(frozen=True)
class ComplexityQuery:
    """Target accuracy, dimension and data constants.

    ``c1, c2, c3`` are the growth constants ``beta(t) <= c1 (int_0^t beta)^c3 + c2``
    used only by the general VP prescription.
    """

    eps: float
    d: int
    m0: float = 1.0
    L0: float = 1.0
    x_star_norm: float = 0.0
    M1: float = 0.0
    c1: float | None = None
    c2: float | None = None
    c3: float | None = None

    def __post_init__(self):
        if not (self.eps > 0 and math.isfinite(self.eps)):
            raise DomainError(f"eps must be positive, got {self.eps}")
        if int(self.d) != self.d or self.d < 1:
            raise DomainError(f"d must be a positive integer, got {self.d}")
        if not 0 < self.m0 <= self.L0:
            raise DomainError("need 0 < m0 <= L0")

    @property
    def x0_bound(self) -> float:
        return math.sqrt(2.0 * self.d / self.m0) + self.x_star_norm


@dataclass(frozen=True)
class Prescription:
    family: str
    params: Mapping[str, float]
    eps: float
    d: int
    T_val: float
    eta_max: float
    M_max: float
    K_min: int
    order_label: str
    disclaimer: str = DISCLAIMER
    extras: Mapping[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "params": dict(self.params),
            "eps": self.eps,
            "d": self.d,
            "T": self.T_val,
            "eta_max": self.eta_max,
            "M_max": self.M_max,
            "K_min": self.K_min,
            "order_label": self.order_label,
            "disclaimer": self.disclaimer,
            "extras": dict(self.extras),
        }


def _k_min(T: float, eta: float) -> int:
    if not (T > 0 and math.isfinite(T)):
        raise DomainError(f"prescribed horizon T = {T} is not positive; target too loose")
    if not eta > 0:
        raise DomainError(f"prescribed stepsize {eta} is not positive")
    return int(math.ceil(T / eta))


def _log_target(q: ComplexityQuery) -> float:
    lt = math.log(math.sqrt(q.d) / q.eps)
    if lt <= 0:
        raise DomainError(f"log(sqrt(d)/eps) = {lt:.3g} <= 0: eps >= sqrt(d) needs no steps")
    return lt


def _build(family, params, q, T, eta, M, label_key=None, **extras) -> Prescription:
    fam = family.value if isinstance(family, Family) else str(family)
    return Prescription(
        family=fam,
        params=dict(params),
        eps=q.eps,
        d=q.d,
        T_val=T,
        eta_max=eta,
        M_max=M,
        K_min=_k_min(T, eta),
        order_label=ORDER_LABELS[label_key or fam],
        extras=extras,
    )


def _check_params(family: Family, params: Mapping[str, float]) -> dict[str, float]:
    # reuse the schedule validation (positivity, rho >= 1, ordering)
    ScheduleSpec(family, dict(params), 1.0)
    return {k: float(v) for k, v in params.items()}


def _ve_exp(p, q):
    lt = _log_target(q)
    if q.eps >= 1:
        raise DomainError("VE_EXP score cap eps/log(1/eps) needs eps < 1")
    T = lt / (2.0 * p["b"])
    return T, q.eps**2 / q.d, q.eps / math.log(1.0 / q.eps)


def _ve_const(p, q):
    ratio = q.d / q.eps
    if ratio <= math.e:
        raise DomainError(f"VE_CONST caps need d/eps > e (log factor >= 1), got {ratio:.4g}")
    lg = math.log(ratio)
    T = math.sqrt(q.d) / q.eps
    return T, q.eps**2 / (q.d * lg), q.eps / math.sqrt(lg)


def _ve_sqrt2at(p, q):
    return q.d**0.25 / math.sqrt(q.eps), q.eps**2 / q.d, q.eps**1.5


def _ve_poly(p, q):
    c = p["c"]
    e = 1.0 / (2.0 * c + 1.0)
    T = q.d ** (0.5 * e) / q.eps**e
    return T, q.eps**2 / q.d, q.eps ** (1.0 + 2.0 * c * e)


def _vp_poly_T(a: float, b: float, rho: float, lt: float) -> float:
    return (a * (rho + 1.0)) ** (1.0 / (rho + 1.0)) / a * lt ** (1.0 / (rho + 1.0)) - b / a


def _vp_poly(p, q):
    rho = p["rho"]
    b = p["beta_min"] ** (1.0 / rho)
    a = p["beta_max"] ** (1.0 / rho) - b
    T = _vp_poly_T(a, b, rho, _log_target(q))
    return T, q.eps**2 / q.d, q.eps


def _vp_linear(p, q):
    a = p["beta_max"] - p["beta_min"]
    b = p["beta_min"]
    T = _vp_poly_T(a, b, 1.0, _log_target(q))
    return T, q.eps**2 / q.d, q.eps


def _vp_exp(p, q):
    a = p["beta_min"]
    b = math.log(p["beta_max"] / p["beta_min"])
    inner = (b / a) * _log_target(q)
    if inner <= 1:
        raise DomainError("VP_EXP horizon (1/b) log((b/a) log(sqrt(d)/eps)) is not positive")
    return math.log(inner) / b, q.eps**2 / q.d, q.eps


def const_coeff(alpha: float, sigma: float, q: ComplexityQuery) -> tuple[float, float, float, dict]:
    """Explicit caps for ``f = alpha``, ``g = sigma`` (both constant).

    Requires ``m0 >= 2 alpha / sigma^2``. With ``x0b = sqrt(2d/m0) + |x*|`` and

        C1 = x0b (4 alpha + sigma^2 L0) + alpha sqrt(d sigma^2 / (2 alpha)) + sigma sqrt(d),

    the caps are ``M <= eps alpha / (8 sigma^2)``,
    ``eta <= min(1, alpha / (2 alpha^2 + 2 (2 alpha + sigma^2 L0)^2),
    eps^2 alpha^2 / (64 C1^2 (3 alpha + sigma^2 L0)^2),
    alpha / (8 M1 (1 + 2 x0b + sigma sqrt(d) / sqrt(2 alpha)) sigma^2))`` and
    ``K eta >= log((4 x0b / eps - 1) (2 alpha / (m0 sigma^2)) + 1) / (2 alpha)``.
    """
    if not (alpha > 0 and sigma > 0):
        raise DomainError("alpha and sigma must be positive")
    m0, L0 = q.m0, q.L0
    if m0 < 2.0 * alpha / sigma**2:
        raise DomainError(f"constant-coefficient caps need m0 >= 2 alpha / sigma^2 = {2 * alpha / sigma**2:.6g}")
    s2 = sigma**2
    x0b = q.x0_bound
    C1 = x0b * (4.0 * alpha + s2 * L0) + alpha * math.sqrt(q.d * s2 / (2.0 * alpha)) + sigma * math.sqrt(q.d)
    caps = [
        1.0,
        alpha / (2.0 * alpha**2 + 2.0 * (2.0 * alpha + s2 * L0) ** 2),
        q.eps**2 * alpha**2 / (64.0 * C1**2 * (3.0 * alpha + s2 * L0) ** 2),
    ]
    if q.M1 > 0:
        caps.append(alpha / (8.0 * q.M1 * (1.0 + 2.0 * x0b + sigma * math.sqrt(q.d) / math.sqrt(2.0 * alpha)) * s2))
    inner = (4.0 * x0b / q.eps - 1.0) * (2.0 * alpha / (m0 * s2)) + 1.0
    if inner <= 1:
        raise DomainError("target eps >= 4 |x0| needs no steps")
    T = math.log(inner) / (2.0 * alpha)
    return T, min(caps), q.eps * alpha / (8.0 * s2), {"C1": C1}


def _vp_const(p, q):
    beta = p["beta_const"]
    T, eta, M, extra = const_coeff(0.5 * beta, math.sqrt(beta), q)
    return T, eta, M, extra


_CLOSED_FORMS = {
    Family.VE_EXP: _ve_exp,
    Family.VE_CONST: _ve_const,
    Family.VE_SQRT2AT: _ve_sqrt2at,
    Family.VE_POLY: _ve_poly,
    Family.VP_LINEAR: _vp_linear,
    Family.VP_POLY: _vp_poly,
    Family.VP_EXP: _vp_exp,
}


def prescribe(family, params: Mapping[str, float] | None, query: ComplexityQuery) -> Prescription:
    """Closed-form ``(K eta, eta, M, K)`` budget for one family.

    ``family`` is a :class:`Family`, or ``"CONST_COEFF"`` (params ``alpha``,
    ``sigma``). VP_CONST uses the constant-coefficient caps with
    ``alpha = beta/2``, ``sigma = sqrt(beta)``; VP_LINEAR is the ``rho = 1``
    case of the polynomial VP prescription. For the general VP prescription use
    :func:`prescribe_vp_general`.

    Raises:
        UnsupportedError: CUSTOM or unknown family.
        DomainError: degenerate target (non-positive horizon) or parameters.
    """
    name = family.value if isinstance(family, Family) else str(family)
    if name == CONST_COEFF:
        p = dict(params or {})
        T, eta, M, extra = const_coeff(float(p["alpha"]), float(p["sigma"]), query)
        return _build(CONST_COEFF, p, query, T, eta, M, **extra)
    try:
        fam = Family(name)
    except ValueError as exc:
        raise UnsupportedError(f"unknown family {name!r}") from exc
    if fam is Family.CUSTOM:
        raise UnsupportedError("CUSTOM schedules have no closed-form prescription")
    p = _check_params(fam, params if params is not None else DEFAULT_PARAMS[fam.value])
    if fam is Family.VP_CONST:
        T, eta, M, extra = _vp_const(p, query)
        return _build(fam, p, query, T, eta, M, **extra)
    if fam is Family.VP_LINEAR and p["beta_max"] == p["beta_min"]:
        T, eta, M, extra = _vp_const({"beta_const": p["beta_min"]}, query)
        return _build(fam, p, query, T, eta, M, label_key=Family.VP_CONST.value, **extra)
    T, eta, M = _CLOSED_FORMS[fam](p, query)
    return _build(fam, p, query, T, eta, M)


def prescribe_vp_general(family, params: Mapping[str, float], query: ComplexityQuery) -> Prescription:
    """General VP prescription under ``beta(t) <= c1 (int_0^t beta)^c3 + c2``.

    ``T`` solves ``int_0^T beta = log(sqrt(d)/eps)``, ``M <= eps / log(sqrt(d)/eps)^c3``
    and ``eta <= eps^2 / (d log(sqrt(d)/eps)^(3 c3))``, the stepsize needed
    for the ``sqrt(eta d) (int beta)^(3 c3 / 2)`` term; this reproduces the
    stated order ``d log^(3 c3 + 1) / eps^2``. The stated cap
    ``eps^2 / (d log(1/eps)^(3/c3))`` is reported as ``eta_as_stated``.
    The growth condition is verified on a 1024-point grid of ``[0, T]``.
    """
    fam = Family(family)
    if not fam.is_vp:
        raise UnsupportedError("the general VP prescription applies to VP families only")
    c1, c2, c3 = query.c1, query.c2, query.c3
    if c1 is None or c2 is None or c3 is None or min(c1, c2, c3) <= 0:
        raise DomainError("general VP prescription needs positive growth constants c1, c2, c3")
    p = _check_params(fam, params)
    lt = _log_target(query)
    probe = ScheduleSpec(fam, p, 1.0)
    hi = 1.0
    while float(probe.int_beta(0.0, hi)) < lt:
        hi *= 2.0
        if hi > 1e12:
            raise DomainError("int beta does not reach log(sqrt(d)/eps)")
    T = brentq(lambda t: float(probe.int_beta(0.0, t)) - lt, 0.0, hi, xtol=1e-14, rtol=1e-15)
    grid = np.linspace(0.0, T, 1024)
    slack = c1 * probe.int_beta(0.0, grid) ** c3 + c2 - probe.beta(grid)
    if np.any(slack < 0):
        worst = float(grid[int(np.argmin(slack))])
        raise DomainError(f"growth condition beta <= c1 (int beta)^c3 + c2 fails at t={worst:.6g}")
    eta = query.eps**2 / (query.d * lt ** (3.0 * c3))
    M = query.eps / lt**c3
    extras = {"c1": c1, "c2": c2, "c3": c3}
    if query.eps < 1:
        extras["eta_as_stated"] = query.eps**2 / (query.d * math.log(1.0 / query.eps) ** (3.0 / c3))
    return Prescription(
        family=VP_GENERAL,
        params={"schedule": fam.value, **p},
        eps=query.eps,
        d=query.d,
        T_val=T,
        eta_max=eta,
        M_max=M,
        K_min=_k_min(T, eta),
        order_label=ORDER_LABELS[VP_GENERAL],
        extras=extras,
    )


def lower_bound_gaussian(query: ComplexityQuery) -> float:
    """The ``sqrt(d)/eps`` comparator of the Gaussian lower bound (constants suppressed)."""
    return math.sqrt(query.d) / query.eps


@dataclass
class OrderingRow:
    eps: float
    d: int
    family: str
    K_min: int
    rank: int
    prescription: Prescription


@dataclass
class OrderingReport:
    rows: list[OrderingRow]
    flags: list[str]

    def table(self) -> list[dict]:
        return [
            {"eps": r.eps, "d": r.d, "family": r.family, "K_min": r.K_min, "rank": r.rank}
            for r in self.rows
        ]


def ordering_report(
    queries: Iterable[ComplexityQuery],
    families: Iterable[str | Family] | None = None,
    params: Mapping[str, Mapping[str, float]] | None = None,
) -> OrderingReport:
    """Rank families by ``K_min`` at each ``(eps, d)`` (rank 1 = fewest steps).

    Flags record where the constant-diffusion VE schedule needs more steps
    than the exponential one (the ``eps^-2`` to ``eps^-3`` jump).
    """
    fams = [f.value if isinstance(f, Family) else str(f) for f in (families or DEFAULT_PARAMS)]
    params = params or {}
    rows: list[OrderingRow] = []
    flags: list[str] = []
    for q in queries:
        batch = []
        for name in fams:
            pr = prescribe(name, params.get(name), q)
            batch.append(pr)
        batch.sort(key=lambda pr: (pr.K_min, pr.family))
        by_name = {}
        for i, pr in enumerate(batch, start=1):
            rows.append(OrderingRow(q.eps, q.d, pr.family, pr.K_min, i, pr))
            by_name[pr.family] = pr
        ve_c, ve_e = by_name.get(Family.VE_CONST.value), by_name.get(Family.VE_EXP.value)
        if ve_c is not None and ve_e is not None and ve_c.K_min > ve_e.K_min:
            flags.append(
                f"eps={q.eps:g} d={q.d}: VE_CONST K_min {ve_c.K_min} > VE_EXP K_min {ve_e.K_min}"
            )
    return OrderingReport(rows, flags)


def family_names() -> list[str]:
    return [f.value for f in Family if f is not Family.CUSTOM]


__all__ = [
    "CONST_COEFF",
    "VP_GENERAL",
    "ComplexityQuery",
    "Prescription",
    "prescribe",
    "prescribe_vp_general",
    "const_coeff",
    "lower_bound_gaussian",
    "ordering_report",
    "OrderingReport",
    "DEFAULT_PARAMS",
    "ORDER_LABELS",
    "DISCLAIMER",
    "family_names",
    "PARAM_NAMES",
]
