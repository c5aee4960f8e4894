"""Shared fixtures and independent reference definitions for the test suite."""

from __future__ import annotations

import math

import mpmath as mp
import pytest
from scipy import integrate

from difflab.gaussian_oracle import GaussianModel
from difflab.schedule import Family, ScheduleSpec

mp.mp.dps = 30

#: One representative parameter set per built-in family.
FAMILY_PARAMS = {
    Family.VE_EXP: {"a": 1.0, "b": 1.0},
    Family.VE_CONST: {"a": 1.0},
    Family.VE_SQRT2AT: {"a": 1.0},
    Family.VE_POLY: {"a": 1.0, "b": 1.0, "c": 1.0},
    Family.VP_CONST: {"beta_const": 1.0},
    Family.VP_LINEAR: {"beta_min": 0.1, "beta_max": 20.0},
    Family.VP_POLY: {"beta_min": 0.1, "beta_max": 20.0, "rho": 2.0},
    Family.VP_EXP: {"beta_min": 0.1, "beta_max": 20.0},
}


def ref_beta(family: Family, p: dict, t):
    """Noise rate written out independently of the library (mpmath)."""
    t = mp.mpf(t)
    if family is Family.VP_CONST:
        return mp.mpf(p["beta_const"])
    if family is Family.VP_LINEAR:
        return p["beta_min"] + (p["beta_max"] - p["beta_min"]) * t
    if family is Family.VP_POLY:
        r = mp.mpf(p["rho"])
        b = mp.mpf(p["beta_min"]) ** (1 / r)
        a = mp.mpf(p["beta_max"]) ** (1 / r) - b
        return (b + a * t) ** r
    if family is Family.VP_EXP:
        return p["beta_min"] * (mp.mpf(p["beta_max"]) / p["beta_min"]) ** t
    raise ValueError(family)


def ref_f(family: Family, p: dict, t):
    if family.is_ve:
        return mp.mpf(0)
    return ref_beta(family, p, t) / 2


def ref_g2(family: Family, p: dict, t):
    t = mp.mpf(t)
    if family is Family.VE_EXP:
        return mp.mpf(p["a"]) ** 2 * mp.exp(2 * p["b"] * t)
    if family is Family.VE_CONST:
        return mp.mpf(p["a"]) ** 2
    if family is Family.VE_SQRT2AT:
        return 2 * p["a"] * t
    if family is Family.VE_POLY:
        return (p["b"] + p["a"] * t) ** (2 * mp.mpf(p["c"]))
    return ref_beta(family, p, t)


def ref_kernel(family: Family, p: dict, t: float) -> tuple[float, float]:
    """(a1, a2) from the defining integrals by nested adaptive quadrature.

    ``a1 = exp(-int_0^t f)`` and ``a2 = int_0^t exp(-2 int_s^t f) g(s)^2 ds``;
    the integrands are the mpmath definitions above, integrated with QUADPACK.
    """
    f = lambda s: float(ref_f(family, p, s))
    g2 = lambda s: float(ref_g2(family, p, s))
    opts = dict(epsabs=0.0, epsrel=1e-13, limit=200)
    F = lambda s: integrate.quad(f, s, t, **opts)[0] if s < t else 0.0
    a1 = math.exp(-F(0.0))
    a2 = integrate.quad(lambda s: math.exp(-2.0 * F(s)) * g2(s), 0.0, t, **opts)[0]
    return a1, a2


@pytest.fixture(params=list(FAMILY_PARAMS), ids=lambda f: f.value)
def family(request) -> Family:
    return request.param


def make_spec(family: Family, T: float = 1.0, **override) -> ScheduleSpec:
    params = dict(FAMILY_PARAMS[family])
    params.update(override)
    return ScheduleSpec.build(family, T, **params)


def fit_se(model: GaussianModel, spec: ScheduleSpec, t: float, n: int) -> float:
    """Delta-method standard error of the least-squares coefficient.

    With x = u + sqrt(a2) z, u ~ N(0, s), s = a1^2 s0, v = s + a2, the
    linearized error is tau = z^2 s/v + c u z - u^2/v, c = 1/sqrt(a2) - 2 sqrt(a2)/v,
    so Var(tau) = 4 s^2/v^2 + c^2 s and Var(theta) = Var(tau) / (n d v^2).
    """
    a1, a2 = float(spec.a1(t)), float(spec.a2(t))
    s = a1 * a1 * model.sigma0_sq
    v = s + a2
    c = 1 / math.sqrt(a2) - 2 * math.sqrt(a2) / v
    var_tau = 4 * s * s / (v * v) + c * c * s
    return math.sqrt(var_tau / (n * model.d * v * v))


# -- acceptance report ---------------------------------------------------------

#: (criterion number, passed, detail) lines recorded by the acceptance tests.
ACCEPTANCE: list[tuple[int, bool, str]] = []


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE.append((number, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}")
