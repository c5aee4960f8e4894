"""Upper-bound machinery for W2(law(y_K), p0) under strongly log-concave data.

Time conventions: ``q_c`` and ``q_m`` take forward time ``t``;
``q_L(ctx, t)`` and ``q_mu(ctx, t)`` take reverse time and return
``L(T - t)`` and ``mu(T - t)``. Internally everything is evaluated at
forward time ``u``.

Two identities keep the expensive integrals closed-form. With
``v_m(u) = a1(u)**2 / m0 + a2(u)`` one has ``v_m' = g**2 - 2 f v_m``, so

    c(u) = g(u)**2 / v_m(u) = v_m'/v_m + 2 f(u),
    int c = log(v_m(u1) / v_m(u0)) + 2 int f,
    m(u) = 2 c(u) - 2 f(u).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import AdmissibilityError, DomainError, NumericError
from .gaussian_oracle import GaussianModel, step_edges
from .quadrature import gauss_legendre, grid_extremum
from .schedule import ScheduleSpec

VP_AGREEMENT_TOL = 1e-9


def x0_l2_default(m0: float, d: int, x_star_norm: float = 0.0) -> float:
    """Upper bound ``sqrt(2 d / m0) + |x*|`` on ``(E|x0|^2)^(1/2)``."""
    if not m0 > 0:
        raise DomainError("m0 must be positive")
    if d < 1:
        raise DomainError("d must be >= 1")
    if x_star_norm < 0:
        raise DomainError("x_star_norm must be nonnegative")
    return math.sqrt(2.0 * d / m0) + x_star_norm


@dataclass(frozen=True)
class BoundContext:
    """Regularity constants of the data plus run geometry.

    ``x0_l2=None`` substitutes :func:`x0_l2_default`; ``x0_l2_exact``
    records which value is in use.
    """

    spec: ScheduleSpec
    d: int
    K: int
    eta: float
    m0: float
    L0: float
    M: float = 0.0
    M1: float = 0.0
    x_star_norm: float = 0.0
    x0_l2: float | None = None
    x0_l2_exact: bool = field(default=False, init=False)

    def __post_init__(self):
        if not (0 < self.m0 <= self.L0 and math.isfinite(self.L0)):
            raise DomainError(f"need 0 < m0 <= L0, got m0={self.m0}, L0={self.L0}")
        if self.M < 0 or self.M1 < 0:
            raise DomainError("M and M1 must be nonnegative")
        if int(self.K) != self.K or self.K < 1:
            raise DomainError(f"K must be a positive integer, got {self.K}")
        if not self.eta > 0:
            raise DomainError("eta must be positive")
        T = self.spec.horizon_T
        if abs(self.K * self.eta - T) > 1e-12 * T:
            raise DomainError(f"K*eta = {self.K * self.eta} does not match T = {T}")
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "x0_l2_exact", self.x0_l2 is not None)
        if self.x0_l2 is None:
            object.__setattr__(
                self, "x0_l2", x0_l2_default(self.m0, self.d, self.x_star_norm)
            )

    @classmethod
    def for_gaussian(
        cls, model: GaussianModel, spec: ScheduleSpec, K: int, M: float = 0.0, M1: float = 0.0
    ) -> "BoundContext":
        """Constants of ``N(0, s0 I_d)``: ``m0 = L0 = 1/s0``, exact ``|x0|_L2``."""
        return cls(
            spec=spec,
            d=model.d,
            K=K,
            eta=spec.horizon_T / K,
            m0=model.m0,
            L0=model.L0,
            M=M,
            M1=M1,
            x_star_norm=0.0,
            x0_l2=model.x0_l2,
        )

    @property
    def T(self) -> float:
        return self.spec.horizon_T

    def to_dict(self) -> dict:
        return {
            "schedule": self.spec.to_dict(),
            "d": self.d,
            "K": self.K,
            "eta": self.eta,
            "m0": self.m0,
            "L0": self.L0,
            "M": self.M,
            "M1": self.M1,
            "x_star_norm": self.x_star_norm,
            "x0_l2": self.x0_l2,
            "x0_l2_exact": self.x0_l2_exact,
        }


# -- pointwise quantities at forward time u (vectorized) ----------------------


def _v_m(ctx: BoundContext, u):
    spec = ctx.spec
    return spec.a1(u) ** 2 / ctx.m0 + spec.a2(u)


def _c(ctx: BoundContext, u):
    return ctx.spec.g2(u) / _v_m(ctx, u)


def _lipschitz(ctx: BoundContext, u):
    spec = ctx.spec
    u = np.asarray(u, dtype=float)
    a2 = spec.a2(u)
    with np.errstate(divide="ignore", over="ignore"):
        noise_branch = np.where(a2 > 0, 1.0 / np.where(a2 > 0, a2, 1.0), np.inf)
        # large int f overflows to inf, where the noise branch is the minimum anyway
        data_branch = np.exp(2.0 * spec.int_f(0.0, u)) * ctx.L0
    return np.minimum(noise_branch, data_branch)


def _num(ctx: BoundContext, u):
    """``c(u) - f(u)``: numerator of the first stepsize condition."""
    return _c(ctx, u) - ctx.spec.f(u)


def _den(ctx: BoundContext, u):
    spec = ctx.spec
    g2 = spec.g2(u)
    return spec.f(u) ** 2 + g2**2 * _lipschitz(ctx, u) ** 2 + ctx.M1 * g2


def _rev(ctx: BoundContext, t: float) -> float:
    return ctx.T - ctx.spec.check_time(t)


def q_c(ctx: BoundContext, t: float) -> float:
    return float(_c(ctx, ctx.spec.check_time(t)))


def q_m(ctx: BoundContext, t: float) -> float:
    u = ctx.spec.check_time(t)
    return float(2.0 * _c(ctx, u) - 2.0 * ctx.spec.f(u))


def q_L(ctx: BoundContext, t: float) -> float:
    """``L(T - t)``; at ``t = T`` the noise branch is infinite and L0 wins."""
    return float(_lipschitz(ctx, _rev(ctx, t)))


def q_mu(ctx: BoundContext, t: float) -> float:
    u = _rev(ctx, t)
    spec = ctx.spec
    mu = _num(ctx, u) - ctx.eta * spec.f(u) ** 2 - ctx.eta * spec.g2(u) ** 2 * _lipschitz(ctx, u) ** 2
    return float(mu)


def int_c(ctx: BoundContext, u0: float, u1: float) -> float:
    """Closed-form ``int_{u0}^{u1} c``."""
    spec = ctx.spec
    return float(np.log(_v_m(ctx, u1) / _v_m(ctx, u0)) + 2.0 * spec.int_f(u0, u1))


def lipschitz_switch(ctx: BoundContext) -> float | None:
    """Forward time where the two branches of L cross, or None.

    ``a2(u) exp(2 int_0^u f) L0`` increases from 0, so the data branch
    ``exp(2 int f) L0`` is active before the crossing and ``1/a2`` after.
    """
    spec = ctx.spec

    def excess(u: float) -> float:
        return float(spec.a2(u) * np.exp(2.0 * spec.int_f(0.0, u)) * ctx.L0) - 1.0

    if excess(ctx.T) <= 0:
        return None
    return brentq(excess, 0.0, ctx.T, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def _split_integrate(fn, lo: np.ndarray, hi: np.ndarray, knot: float | None) -> np.ndarray:
    """Gauss-Legendre over each interval, split at a kink of the integrand."""
    if knot is None:
        return gauss_legendre(fn, lo, hi)
    mid = np.clip(knot, lo, hi)
    return gauss_legendre(fn, lo, mid) + gauss_legendre(fn, mid, hi)


# -- suprema ------------------------------------------------------------------


def q_c1(ctx: BoundContext) -> float:
    """``sup_t exp(-1/2 int_{T-t}^T m) exp(-int_0^T f) |x0|_L2``."""
    return sup_c1(ctx)[0]


def sup_c1(ctx: BoundContext) -> tuple[float, float]:
    spec = ctx.spec
    T = ctx.T
    v_T = float(_v_m(ctx, T))
    F_T = float(spec.int_f(0.0, T))

    def profile(t):
        lo = T - np.asarray(t, dtype=float)
        half_m = np.log(v_T / _v_m(ctx, lo)) + spec.int_f(lo, T)
        return np.exp(-half_m - F_T) * ctx.x0_l2

    return grid_extremum(profile, 0.0, T, maximize=True)


def q_c2(ctx: BoundContext) -> float:
    """``sup_t (a1(t)^2 |x0|^2 + d a2(t))^(1/2)``."""
    return sup_c2(ctx)[0]


def sup_c2(ctx: BoundContext) -> tuple[float, float]:
    spec = ctx.spec

    def profile(t):
        return np.sqrt(spec.a1(t) ** 2 * ctx.x0_l2**2 + ctx.d * spec.a2(t))

    return grid_extremum(profile, 0.0, ctx.T, maximize=True)


# -- per-step pieces ------------------------------------------------------------


@dataclass
class StepTerms:
    """Per-step integrals over the forward interval of each reverse step."""

    int_f: np.ndarray
    int_g2: np.ndarray
    int_num: np.ndarray  # int (c - f)
    int_f2: np.ndarray
    int_g4L2: np.ndarray
    int_drift: np.ndarray  # int (f + g^2 L)
    int_drift_sq: np.ndarray  # int (f + g^2 L)^2


def step_terms(ctx: BoundContext) -> StepTerms:
    spec = ctx.spec
    lo, hi = step_edges(ctx.T, ctx.K)
    knot = lipschitz_switch(ctx)

    def drift(u):
        return spec.f(u) + spec.g2(u) * _lipschitz(ctx, u)

    return StepTerms(
        int_f=np.asarray(spec.int_f(lo, hi), dtype=float),
        int_g2=np.asarray(spec.int_g2(lo, hi), dtype=float),
        int_num=_split_integrate(lambda u: _num(ctx, u), lo, hi, None),
        int_f2=gauss_legendre(lambda u: spec.f(u) ** 2, lo, hi),
        int_g4L2=_split_integrate(lambda u: (spec.g2(u) * _lipschitz(ctx, u)) ** 2, lo, hi, knot),
        int_drift=_split_integrate(drift, lo, hi, knot),
        int_drift_sq=_split_integrate(lambda u: drift(u) ** 2, lo, hi, knot),
    )


def q_h(ctx: BoundContext, k: int, c1: float | None = None, c2: float | None = None) -> float:
    """``h_{k,eta}`` for step ``1 <= k <= K``."""
    if not 1 <= k <= ctx.K:
        raise DomainError(f"k must be in [1, {ctx.K}], got {k}")
    spec = ctx.spec
    c1 = q_c1(ctx) if c1 is None else c1
    c2 = q_c2(ctx) if c2 is None else c2
    lo = ctx.T * (ctx.K - k) / ctx.K
    hi = ctx.T * (ctx.K - k + 1) / ctx.K
    knot = lipschitz_switch(ctx)
    drift = _split_integrate(
        lambda u: spec.f(u) + spec.g2(u) * _lipschitz(ctx, u), np.array([lo]), np.array([hi]), knot
    )[0]
    return float(
        c1 * drift + c2 * spec.int_f(lo, hi) + math.sqrt(float(spec.int_g2(lo, hi))) * math.sqrt(ctx.d)
    )


# -- the bound ------------------------------------------------------------------


@dataclass
class BoundReport:
    value: float
    prior_term: float
    sum_term: float
    int_c_total: float
    c1: float
    c2: float
    factors: np.ndarray
    brackets: np.ndarray
    h: np.ndarray
    ctx: BoundContext

    def to_dict(self, include_steps: bool = True) -> dict:
        out = {
            "value": self.value,
            "prior_term": self.prior_term,
            "sum_term": self.sum_term,
            "int_c": self.int_c_total,
            "c1": self.c1,
            "c2": self.c2,
            "min_factor": float(self.factors.min()),
            "max_factor": float(self.factors.max()),
            "context": self.ctx.to_dict(),
        }
        if include_steps:
            out["factors"] = self.factors.tolist()
            out["brackets"] = self.brackets.tolist()
            out["h"] = self.h.tolist()
        return out


def theorem_bound(ctx: BoundContext) -> BoundReport:
    """Evaluate the two-term upper bound literally.

    ``value = exp(-int_0^{K eta} c) |x0| + sum_k prod_{j>k} r_j * B_k`` with

        r_j = 1 - int mu + M1 eta int g^2,
        B_k = M1 eta (1 + |x0| + c2) int g^2 + M int g^2
              + sqrt(eta) h_k (int (f + g^2 L)^2)^(1/2).

    The product-sum is accumulated by Horner's rule, ``acc <- r_k acc + B_k``,
    which never forms the (possibly underflowing) products explicitly.

    Raises:
        AdmissibilityError: some ``r_j`` falls outside ``(0, 1)``.
    """
    eta = ctx.eta
    st = step_terms(ctx)
    c1 = q_c1(ctx)
    c2 = q_c2(ctx)
    int_mu = st.int_num - eta * st.int_f2 - eta * st.int_g4L2
    factors = 1.0 - int_mu + ctx.M1 * eta * st.int_g2
    bad = np.flatnonzero(~((factors > 0.0) & (factors < 1.0)))
    if bad.size:
        k = int(bad[0]) + 1
        raise AdmissibilityError(
            f"contraction factor {factors[bad[0]]:.6g} at step k={k} is outside (0, 1)",
            condition="contraction-factor",
        )
    h = c1 * st.int_drift + c2 * st.int_f + np.sqrt(st.int_g2) * math.sqrt(ctx.d)
    brackets = (
        ctx.M1 * eta * (1.0 + ctx.x0_l2 + c2) * st.int_g2
        + ctx.M * st.int_g2
        + math.sqrt(eta) * h * np.sqrt(st.int_drift_sq)
    )
    acc = 0.0
    for r, b in zip(factors, brackets):
        acc = r * acc + b
    ic = int_c(ctx, 0.0, ctx.T)
    prior = math.exp(-ic) * ctx.x0_l2
    return BoundReport(prior + acc, prior, acc, ic, c1, c2, factors, brackets, h, ctx)


def prior_gap(ctx: BoundContext) -> float:
    """``exp(-int_0^T f) |x0|_L2``: W2 gap between the forward law at T and the prior."""
    return math.exp(-float(ctx.spec.int_f(0.0, ctx.T))) * ctx.x0_l2


# -- stepsize admissibility -------------------------------------------------------


@dataclass
class StepsizeReport:
    admissible: bool
    eta: float
    eta_star: float
    cond1_min: float
    cond1_arg: float
    cond2_min: float
    cond2_arg: float
    binding: str
    violated: str | None = None
    vp_closed_form_eta: float | None = None
    vp_max_rel_dev: float | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def vp_rate_closed_form(ctx: BoundContext, u):
    """VP-specialized ``c(u) - f(u)``::

        beta/2 * (m0 - (1 - m0) e^{-B}) / (m0 + (1 - m0) e^{-B}),  B = int_0^u beta.
    """
    spec = ctx.spec
    if not spec.is_vp:
        raise DomainError("closed form applies to VP schedules only")
    e = np.exp(-spec.int_beta(0.0, u))
    m0 = ctx.m0
    return 0.5 * spec.beta(u) * (m0 - (1.0 - m0) * e) / (m0 + (1.0 - m0) * e)


def stepsize_admissible(ctx: BoundContext, n_grid: int = 1024) -> StepsizeReport:
    """Check both stepsize conditions over ``u`` in ``[0, T]``.

    Condition 1: ``eta <= min (c - f) / (f^2 + g^4 L^2 + M1 g^2)``.
    Condition 2: ``eta <= min 1 / (c - f)``.
    Both implicitly need ``c - f > 0``; a nonpositive rate anywhere makes
    every ``eta`` inadmissible. Points where ``g = 0`` (where both the rate
    and the denominator vanish) are skipped.
    """
    spec = ctx.spec
    T = ctx.T
    grid = np.linspace(0.0, T, n_grid)
    num = _num(ctx, grid)
    live = spec.g2(grid) > 0
    neg = live & (num <= 0)
    if neg.any():
        u_bad = float(grid[np.flatnonzero(neg)[0]])
        return StepsizeReport(
            admissible=False,
            eta=ctx.eta,
            eta_star=0.0,
            cond1_min=float(np.min(num[live] / _den(ctx, grid[live]))),
            cond1_arg=u_bad,
            cond2_min=-math.inf,
            cond2_arg=u_bad,
            binding="positivity",
            violated=f"rate c(u) - f(u) <= 0 at u={u_bad:.6g}; no stepsize is admissible",
        )

    def ratio1(u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return _num(ctx, u) / _den(ctx, u)

    def ratio2(u):
        with np.errstate(divide="ignore"):
            return 1.0 / _num(ctx, np.asarray(u, dtype=float))

    m1, a1 = grid_extremum(ratio1, 0.0, T, maximize=False, n_grid=n_grid)
    m2, a2 = grid_extremum(ratio2, 0.0, T, maximize=False, n_grid=n_grid)
    if not (math.isfinite(m1) and m1 > 0):
        raise NumericError("stepsize condition 1 could not be evaluated", achieved_tol=math.inf)
    eta_star = min(m1, m2)
    binding = "stepsize-1" if m1 <= m2 else "stepsize-2"
    report = StepsizeReport(
        admissible=ctx.eta <= eta_star,
        eta=ctx.eta,
        eta_star=eta_star,
        cond1_min=m1,
        cond1_arg=a1,
        cond2_min=m2,
        cond2_arg=a2,
        binding=binding,
    )
    if not report.admissible:
        report.violated = f"{binding}: eta={ctx.eta:.6g} exceeds {eta_star:.6g}"
    if spec.is_vp:
        closed = vp_rate_closed_form(ctx, grid)
        general = _num(ctx, grid)
        dev = float(np.max(np.abs(closed - general) / np.maximum(np.abs(general), 1e-300)))
        with np.errstate(divide="ignore", invalid="ignore"):
            cf_eta = min(
                float(np.min(closed / _den(ctx, grid))), float(np.min(1.0 / closed))
            )
        report.vp_closed_form_eta = cf_eta
        report.vp_max_rel_dev = dev
        if dev > VP_AGREEMENT_TOL:
            raise NumericError(
                f"VP closed-form rate disagrees with the general formula (rel {dev:.3g})",
                achieved_tol=dev,
            )
    return report


def require_admissible(ctx: BoundContext) -> StepsizeReport:
    report = stepsize_admissible(ctx)
    if not report.admissible:
        raise AdmissibilityError(report.violated or "stepsize inadmissible", condition=report.binding)
    return report
