"""Closed-form ground truth for isotropic Gaussian data ``p0 = N(0, s0 I_d)``.

With Gaussian data every forward marginal is Gaussian with per-coordinate
variance ``v(t) = a1(t)**2 s0 + a2(t)``, the score is ``-x / v(t)`` and the
discrete reverse chain stays isotropic Gaussian, so its law is a single
scalar that obeys

    s_k = (1 - A_k)**2 s_{k-1} + G_k,    s_0 = a2(T),

with ``A_k`` the integral of ``alpha = g**2 / v - f`` and ``G_k`` the
integral of ``g**2`` over the k-th step (run backwards from ``T``).
Nothing here materializes d-dimensional vectors except the score itself.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from .errors import BudgetError, DomainError
from .quadrature import adaptive_simpson, gauss_legendre
from .schedule import ScheduleSpec

K_CAP = 10_000_000


@dataclass(frozen=True)
class GaussianModel:
    sigma0_sq: float
    d: int = 1

    def __post_init__(self):
        if not (self.sigma0_sq > 0 and math.isfinite(self.sigma0_sq)):
            raise DomainError(f"sigma0_sq must be positive, got {self.sigma0_sq}")
        if int(self.d) != self.d or self.d < 1:
            raise DomainError(f"d must be a positive integer, got {self.d}")
        object.__setattr__(self, "d", int(self.d))

    @property
    def sigma0(self) -> float:
        return math.sqrt(self.sigma0_sq)

    @property
    def m0(self) -> float:
        return 1.0 / self.sigma0_sq

    @property
    def L0(self) -> float:
        return 1.0 / self.sigma0_sq

    @property
    def x0_l2(self) -> float:
        """Exact ``(E|x0|^2)^(1/2)``."""
        return math.sqrt(self.d * self.sigma0_sq)

    @property
    def vp_admissible(self) -> bool:
        # VP stepsize conditions need m0 > 1/2
        return self.m0 > 0.5


class ContractionWarning(UserWarning):
    pass


@dataclass
class VarianceTrace:
    sigma_hat_sq: np.ndarray
    alpha_integrals: np.ndarray
    g2_integrals: np.ndarray
    violations: list[int] = field(default_factory=list)

    @property
    def K(self) -> int:
        return len(self.alpha_integrals)

    @property
    def final(self) -> float:
        return float(self.sigma_hat_sq[-1])

    def write_csv(self, fh: IO[str]) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["k", "sigma_hat_sq", "alpha_int", "g2_int"])
        writer.writerow([0, f"{self.sigma_hat_sq[0]:.17g}", "", ""])
        for k in range(1, self.K + 1):
            writer.writerow(
                [
                    k,
                    f"{self.sigma_hat_sq[k]:.17g}",
                    f"{self.alpha_integrals[k - 1]:.17g}",
                    f"{self.g2_integrals[k - 1]:.17g}",
                ]
            )


def marginal_variance(model: GaussianModel, spec: ScheduleSpec, t):
    """Per-coordinate variance of the forward marginal at time ``t``."""
    return spec.a1(t) ** 2 * model.sigma0_sq + spec.a2(t)


def gamma(model: GaussianModel, spec: ScheduleSpec, t):
    """``g(t)**2 / v(t)``; equals ``alpha + f``."""
    return spec.g2(t) / marginal_variance(model, spec, t)


def alpha(model: GaussianModel, spec: ScheduleSpec, t):
    """Linear contraction rate of the exact reverse drift."""
    return gamma(model, spec, t) - spec.f(t)


def exact_score(model: GaussianModel, spec: ScheduleSpec, t: float, x: np.ndarray) -> np.ndarray:
    t = spec.check_time(t)
    return -np.asarray(x) / float(marginal_variance(model, spec, t))


def step_edges(T: float, K: int) -> tuple[np.ndarray, np.ndarray]:
    """Forward-time interval of each reverse step ``k = 1..K``.

    Step k covers ``[T (K-k)/K, T (K-k+1)/K]``; the sampler uses the same grid.
    """
    k = np.arange(1, K + 1, dtype=float)
    return T * (K - k) / K, T * (K - k + 1) / K


def alpha_integrals(model: GaussianModel, spec: ScheduleSpec, lo, hi) -> np.ndarray:
    return gauss_legendre(lambda s: alpha(model, spec, s), lo, hi)


def _check_grid(spec: ScheduleSpec, K: int, eta: float) -> None:
    if int(K) != K or K < 1:
        raise DomainError(f"K must be a positive integer, got {K}")
    if not eta > 0:
        raise DomainError(f"eta must be positive, got {eta}")
    if abs(K * eta - spec.horizon_T) > 1e-12 * spec.horizon_T:
        raise DomainError(f"K*eta = {K * eta} does not match horizon T = {spec.horizon_T}")


def variance_recursion(model: GaussianModel, spec: ScheduleSpec, K: int, eta: float) -> VarianceTrace:
    """Exact per-coordinate variance of ``y_0..y_K`` for Gaussian data."""
    _check_grid(spec, K, eta)
    lo, hi = step_edges(spec.horizon_T, K)
    a_int = alpha_integrals(model, spec, lo, hi)
    g_int = np.asarray(spec.int_g2(lo, hi), dtype=float)
    s = np.empty(K + 1)
    s[0] = float(spec.a2(spec.horizon_T))
    for k in range(K):
        s[k + 1] = (1.0 - a_int[k]) ** 2 * s[k] + g_int[k]
    violations = [int(k) + 1 for k in np.flatnonzero(a_int >= 1.0)]
    if violations:
        warnings.warn(
            f"{len(violations)} step(s) with alpha integral >= 1 (first at k={violations[0]})",
            ContractionWarning,
            stacklevel=2,
        )
    return VarianceTrace(s, a_int, g_int, violations)


def w2_exact(model: GaussianModel, sigma_hat: float) -> float:
    """W2 between ``N(0, sigma_hat**2 I)`` and the data law."""
    if sigma_hat < 0:
        raise DomainError("sigma_hat must be nonnegative")
    return math.sqrt(model.d) * abs(sigma_hat - model.sigma0)


class _Cumulative:
    """Antiderivative of a smooth function on [0, T] from a tabulated GL sum."""

    def __init__(self, fn, T: float, cells: int = 2048):
        self.fn = fn
        self.edges = np.linspace(0.0, T, cells + 1)
        pieces = gauss_legendre(fn, self.edges[:-1], self.edges[1:])
        self.table = np.concatenate([[0.0], np.cumsum(pieces)])
        self.h = T / cells

    def __call__(self, t: float) -> float:
        i = min(int(t / self.h), len(self.edges) - 2)
        left = self.edges[i]
        extra = gauss_legendre(self.fn, np.array([left]), np.array([t]))[0] if t > left else 0.0
        return float(self.table[i] + extra)


def compute_c0(model: GaussianModel, spec: ScheduleSpec) -> float:
    """First-order-in-stepsize coefficient of the terminal variance.

    ``s_K = S_0 + c0 * eta + O(eta**2)`` at fixed ``T``, with

        c0 = -exp(-2 A(T)) Q(T) a2(T)
             - int_0^T exp(-2 A(t)) Q(t) g(t)^2 dt
             + int_0^T exp(-2 A(t)) alpha(t) g(t)^2 dt,

    ``A`` and ``Q`` the running integrals of ``alpha`` and ``alpha**2``.
    """
    T = spec.horizon_T
    al = lambda s: alpha(model, spec, s)  # noqa: E731
    A = _Cumulative(al, T)
    Q = _Cumulative(lambda s: al(s) ** 2, T)

    def weight(t: float) -> float:
        return math.exp(-2.0 * A(t)) * float(spec.g2(t))

    first = -math.exp(-2.0 * A(T)) * Q(T) * float(spec.a2(T))
    second = -adaptive_simpson(lambda t: weight(t) * Q(t), 0.0, T)
    third = adaptive_simpson(lambda t: weight(t) * float(al(t)), 0.0, T)
    return first + second + third


def continuum_limit(model: GaussianModel, spec: ScheduleSpec) -> float:
    """``eta -> 0`` limit of the terminal variance: ``s0 (1 - exp(-2 int gamma))``."""
    T = spec.horizon_T
    v_T = float(marginal_variance(model, spec, T))
    # int_0^T gamma = log(v(T)/v(0)) + 2 int_0^T f, since v' = g^2 - 2 f v
    log_decay = math.log(v_T / model.sigma0_sq) + 2.0 * float(spec.int_f(0.0, T))
    return model.sigma0_sq * -math.expm1(-2.0 * log_decay)


def fit_linear_score(
    model: GaussianModel,
    spec: ScheduleSpec,
    t: float,
    sample_count: int,
    seed: int,
    chunk: int = 1 << 16,
) -> float:
    """Least-squares ``theta`` for the score model ``s(x) = -theta x``.

    Minimizes the Monte-Carlo denoising score-matching loss at fixed ``t``
    (the weight ``g(t)**2`` is a constant there and drops out):

        theta_hat = sum <x_t, z> / sqrt(a2) / sum |x_t|^2,
        x_t = a1 x_0 + sqrt(a2) z.
    """
    if sample_count < 2:
        raise DomainError("sample_count must be at least 2")
    t = spec.check_time(t)
    a1 = float(spec.a1(t))
    a2 = float(spec.a2(t))
    if a2 <= 0:
        raise DomainError("denoising target is undefined at t with a2(t) = 0")
    rng = np.random.Generator(np.random.Philox(key=seed))
    num = 0.0
    den = 0.0
    done = 0
    while done < sample_count:
        n = min(chunk, sample_count - done)
        x0 = model.sigma0 * rng.standard_normal((n, model.d))
        z = rng.standard_normal((n, model.d))
        xt = a1 * x0 + math.sqrt(a2) * z
        num += float(np.sum(xt * z)) / math.sqrt(a2)
        den += float(np.sum(xt * xt))
        done += n
    return num / den


@dataclass(frozen=True)
class MinimalK:
    K: int | None
    w2: float
    achievable: bool
    best_K: int
    best_w2: float
    eta: float

    @property
    def T(self) -> float | None:
        return None if self.K is None else self.K * self.eta


def minimal_k_search(
    model: GaussianModel,
    spec: ScheduleSpec,
    eps: float,
    eta: float,
    k_max: int = K_CAP,
) -> MinimalK:
    """Smallest K with exact W2 <= eps when ``eta`` is fixed and ``T = K eta``.

    Only the schedule family of ``spec`` is used; its horizon is replaced by
    ``K * eta`` for each candidate. With the grid fixed, step k of a run with
    horizon ``K eta`` covers ``[j eta, (j+1) eta]``, ``j = K - k``, so

        s_K = a2(K eta) P_K + sum_{j<K} P_j G_j,   P_j = prod_{i<j} (1 - A_i)**2,

    and every candidate K costs O(1) on top of the previous one.
    The search stops early with ``achievable=False`` once the start-up
    contribution ``P_K (a2(K eta) + s0)`` is negligible, i.e. the terminal
    variance has converged to its fixed-eta floor.
    """
    if not eps > 0:
        raise DomainError("eps must be positive")
    if not eta > 0:
        raise DomainError("eta must be positive")
    s0 = model.sigma0
    sqrt_d = math.sqrt(model.d)
    P = 1.0
    S = 0.0
    best_K, best_w2 = 0, math.inf
    j0 = 0
    chunk = 16
    while j0 < k_max:
        n = min(chunk, k_max - j0)
        j = np.arange(j0, j0 + n, dtype=float)
        lo, hi = j * eta, (j + 1) * eta
        r2 = (1.0 - alpha_integrals(model, spec, lo, hi)) ** 2
        G = np.asarray(spec.int_g2(lo, hi), dtype=float)
        # a non-contracting schedule overflows to inf, which never hits eps
        with np.errstate(over="ignore", invalid="ignore"):
            P_before = P * np.concatenate([[1.0], np.cumprod(r2[:-1])])
            P_after = P_before * r2
            S_after = S + np.cumsum(P_before * G)
            var = spec.a2(hi) * P_after + S_after
            w2 = sqrt_d * np.abs(np.sqrt(var) - s0)
        i_best = int(np.argmin(w2))
        if w2[i_best] < best_w2:
            best_K, best_w2 = j0 + i_best + 1, float(w2[i_best])
        hit = np.flatnonzero(w2 <= eps)
        if hit.size:
            K = j0 + int(hit[0]) + 1
            return MinimalK(K, float(w2[hit[0]]), True, K, float(w2[hit[0]]), eta)
        P, S = float(P_after[-1]), float(S_after[-1])
        residual = P * (float(spec.a2(hi[-1])) + model.sigma0_sq)
        if residual < 1e-13 * float(var[-1]):
            return MinimalK(None, float(w2[-1]), False, best_K, best_w2, eta)
        j0 += n
        chunk = min(chunk * 2, 1 << 18)
    raise BudgetError(
        f"no K <= {k_max} reaches W2 <= {eps} (best {best_w2:.6g} at K={best_K})"
    )
