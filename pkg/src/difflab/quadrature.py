"""Numerical integration and 1-D extremum search.

Adaptive Simpson is the certified path (CUSTOM schedules, cross-checks);
composite Gauss-Legendre is the vectorized path for per-step integrals of
smooth integrands over many short intervals.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import DomainError, NumericError

ABS_TOL = 1e-12
REL_TOL = 1e-10
MAX_DEPTH = 60
_MAX_EVALS = 4_000_000


def adaptive_simpson(
    fn: Callable[[float], float],
    a: float,
    b: float,
    abs_tol: float = ABS_TOL,
    rel_tol: float = REL_TOL,
    max_depth: int = MAX_DEPTH,
) -> float:
    """Integrate a scalar function over [a, b] by adaptive Simpson.

    The acceptance test on each panel is the classical
    ``|S_left + S_right - S| <= 15 * tol`` with one Richardson correction.
    ``tol`` is ``max(abs_tol, rel_tol * |I|)`` where ``|I|`` comes from a
    16-panel composite Simpson pilot estimate.

    Raises:
        DomainError: ``b < a``.
        NumericError: a panel hit ``max_depth`` without meeting its
            tolerance; ``achieved_tol`` carries the summed error estimate.
    """
    if b < a:
        raise DomainError(f"inverted interval [{a}, {b}]")
    if a == b:
        return 0.0
    xs = np.linspace(a, b, 33)
    ys = np.array([fn(float(x)) for x in xs])
    h = (b - a) / 32
    pilot = h / 3 * (ys[0] + ys[-1] + 4 * ys[1:-1:2].sum() + 2 * ys[2:-1:2].sum())
    if not math.isfinite(pilot):
        raise NumericError("integrand is not finite on the interval", achieved_tol=math.inf)
    tol = max(abs_tol, rel_tol * abs(pilot))

    total = 0.0
    err_sum = 0.0
    failed = False
    n_evals = 33
    # seed with the 16 pilot panels so narrow features are not missed
    stack = []
    for i in range(16):
        lo, mid, hi = xs[2 * i], xs[2 * i + 1], xs[2 * i + 2]
        flo, fmid, fhi = ys[2 * i], ys[2 * i + 1], ys[2 * i + 2]
        whole = (hi - lo) / 6 * (flo + 4 * fmid + fhi)
        stack.append((lo, hi, flo, fmid, fhi, whole, tol / 16, 0))
    while stack:
        lo, hi, flo, fmid, fhi, whole, ptol, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        lm = 0.5 * (lo + mid)
        rm = 0.5 * (mid + hi)
        flm = fn(lm)
        frm = fn(rm)
        n_evals += 2
        left = (mid - lo) / 6 * (flo + 4 * flm + fmid)
        right = (hi - mid) / 6 * (fmid + 4 * frm + fhi)
        delta = left + right - whole
        if abs(delta) <= 15 * ptol or depth >= max_depth or n_evals > _MAX_EVALS:
            if abs(delta) > 15 * ptol:
                failed = True
            total += left + right + delta / 15
            err_sum += abs(delta) / 15
            continue
        stack.append((lo, mid, flo, flm, fmid, left, ptol / 2, depth + 1))
        stack.append((mid, hi, fmid, frm, fhi, right, ptol / 2, depth + 1))
    if failed or not math.isfinite(total):
        raise NumericError(
            f"adaptive Simpson did not converge on [{a}, {b}] (requested {tol:.3g})",
            achieved_tol=err_sum,
        )
    return total


@lru_cache(maxsize=None)
def _leggauss(order: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(order)
    return nodes, weights


def gauss_legendre(
    fn: Callable[[np.ndarray], np.ndarray],
    lo: np.ndarray,
    hi: np.ndarray,
    order: int = 16,
    max_width: float = 0.25,
) -> np.ndarray:
    """Vectorized composite Gauss-Legendre over many intervals at once.

    Each interval ``[lo[i], hi[i]]`` is split into ``ceil(width / max_width)``
    equal pieces. ``fn`` must accept and return arrays.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    if np.any(hi < lo):
        raise DomainError("inverted interval in gauss_legendre")
    nodes, weights = _leggauss(order)
    pieces = np.maximum(1, np.ceil((hi - lo) / max_width).astype(int))
    out = np.zeros(lo.shape)
    for p in np.unique(pieces):
        sel = pieces == p
        a = lo[sel]
        width = (hi[sel] - a) / p
        acc = np.zeros(a.shape)
        for j in range(p):
            left = a + j * width
            half = 0.5 * width
            x = (left + half)[:, None] + half[:, None] * nodes[None, :]
            acc += half * (fn(x.ravel()).reshape(x.shape) @ weights)
        out[sel] = acc
    return out


def grid_extremum(
    fn: Callable[[np.ndarray], np.ndarray],
    lo: float,
    hi: float,
    maximize: bool = True,
    n_grid: int = 1024,
    passes: int = 3,
) -> tuple[float, float]:
    """Extremum of a 1-D function on [lo, hi]: dense grid then golden section.

    Returns ``(value, argument)``. Each refinement pass runs golden-section
    search on the two grid cells adjacent to the incumbent, shrinking the
    bracket by a factor of ten between passes. Non-finite grid values are
    skipped (used for removable endpoint singularities).
    """
    sign = 1.0 if maximize else -1.0
    grid = np.linspace(lo, hi, n_grid)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = sign * np.asarray(fn(grid), dtype=float)
    finite = np.isfinite(vals)
    if not finite.any():
        return sign * math.nan, math.nan
    vals = np.where(finite, vals, -np.inf)
    i = int(np.argmax(vals))
    best_x, best_v = float(grid[i]), float(vals[i])
    if hi <= lo:
        return sign * best_v, best_x

    def score(x: float) -> float:
        with np.errstate(divide="ignore", invalid="ignore"):
            v = sign * float(np.asarray(fn(np.array([x])), dtype=float)[0])
        return v if math.isfinite(v) else -math.inf

    half_width = (hi - lo) / (n_grid - 1)
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    for _ in range(passes):
        a = max(lo, best_x - half_width)
        b = min(hi, best_x + half_width)
        c = b - invphi * (b - a)
        d = a + invphi * (b - a)
        fc, fd = score(c), score(d)
        for _ in range(40):
            if fc > fd:
                b, d, fd = d, c, fc
                c = b - invphi * (b - a)
                fc = score(c)
            else:
                a, c, fc = c, d, fd
                d = a + invphi * (b - a)
                fd = score(d)
        for x, v in ((c, fc), (d, fd)):
            if v > best_v:
                best_x, best_v = x, v
        half_width /= 10.0
    return sign * best_v, best_x
