from __future__ import annotations

import math

import mpmath as mp
import pytest

from difflab.complexity import (
    CONST_COEFF,
    DEFAULT_PARAMS,
    DISCLAIMER,
    ComplexityQuery,
    const_coeff,
    family_names,
    lower_bound_gaussian,
    ordering_report,
    prescribe,
    prescribe_vp_general,
)
from difflab.errors import DomainError, UnsupportedError

mp.mp.dps = 40


def ceil_mp(x) -> int:
    return int(mp.ceil(x))


# -- hand-evaluated fixtures (mpmath, independent of the module) ----------------


def test_ve_exp_fixture():
    q = ComplexityQuery(eps=0.1, d=16)
    pr = prescribe("VE_EXP", {"a": 1.0, "b": 0.5}, q)
    T = mp.log(40) / 1
    eta = mp.mpf("0.01") / 16
    assert pr.T_val == pytest.approx(float(T), rel=1e-15)
    assert pr.T_val == pytest.approx(3.68888, abs=1e-5)
    assert pr.eta_max == pytest.approx(6.25e-4, rel=1e-15)
    assert pr.K_min == ceil_mp(T / eta) == 5903
    assert pr.M_max == pytest.approx(float(mp.mpf("0.1") / mp.log(10)), rel=1e-15)


def test_ve_sqrt2at_fixture():
    pr = prescribe("VE_SQRT2AT", {"a": 1.0}, ComplexityQuery(0.1, 16))
    T = mp.mpf(16) ** mp.mpf("0.25") / mp.sqrt(mp.mpf("0.1"))
    assert pr.T_val == pytest.approx(float(T), rel=1e-14)
    assert pr.K_min == ceil_mp(T / (mp.mpf("0.01") / 16)) == 10120
    assert pr.M_max == pytest.approx(float(mp.mpf("0.1") ** 1.5), rel=1e-14)


def test_ve_poly_fixture():
    pr = prescribe("VE_POLY", {"a": 1.0, "b": 1.0, "c": 1.0}, ComplexityQuery(0.1, 16))
    T = mp.mpf(16) ** (mp.mpf(1) / 6) / mp.mpf("0.1") ** (mp.mpf(1) / 3)
    assert pr.T_val == pytest.approx(float(T), rel=1e-14)
    assert pr.K_min == ceil_mp(T / (mp.mpf("0.01") / 16))
    assert pr.M_max == pytest.approx(float(mp.mpf("0.1") ** (mp.mpf(5) / 3)), rel=1e-14)


def test_vp_poly_fixture():
    rho = mp.mpf(5)
    b = mp.mpf("0.1") ** (1 / rho)
    a = mp.mpf(20) ** (1 / rho) - b
    lt = mp.log(mp.sqrt(16) / mp.mpf("0.1"))
    T = (a * (rho + 1)) ** (1 / (rho + 1)) / a * lt ** (1 / (rho + 1)) - b / a
    pr = prescribe("VP_POLY", {"beta_min": 0.1, "beta_max": 20.0, "rho": 5.0}, ComplexityQuery(0.1, 16))
    assert pr.T_val == pytest.approx(float(T), rel=1e-13)
    assert pr.K_min == ceil_mp(T / (mp.mpf("0.01") / 16))
    assert pr.M_max == pytest.approx(0.1)


def test_vp_exp_fixture():
    a, b = mp.mpf("0.1"), mp.log(200)
    T = mp.log(b / a * mp.log(40)) / b
    pr = prescribe("VP_EXP", {"beta_min": 0.1, "beta_max": 20.0}, ComplexityQuery(0.1, 16))
    assert pr.T_val == pytest.approx(float(T), rel=1e-14)
    assert pr.K_min == ceil_mp(T / (mp.mpf("0.01") / 16))


def test_vp_linear_is_rho_one():
    q = ComplexityQuery(0.05, 64)
    lin = prescribe("VP_LINEAR", {"beta_min": 0.1, "beta_max": 20.0}, q)
    poly = prescribe("VP_POLY", {"beta_min": 0.1, "beta_max": 20.0, "rho": 1.0}, q)
    assert lin.T_val == pytest.approx(poly.T_val, rel=1e-14)
    assert lin.K_min == poly.K_min


def test_const_coeff_direct():
    """The constant-coefficient caps, re-evaluated by hand."""
    q = ComplexityQuery(0.1, 4, m0=1.0, L0=1.0)
    alpha, sigma = 0.5, 1.0
    T, eta, M, extra = const_coeff(alpha, sigma, q)
    x0b = math.sqrt(8)
    C1 = x0b * (2 + 1) + 0.5 * math.sqrt(4 / 1.0) + 2
    assert extra["C1"] == pytest.approx(C1)
    assert M == pytest.approx(0.1 * 0.5 / 8)
    assert eta == pytest.approx(min(1, 0.5 / (0.5 + 2 * 4), 0.01 * 0.25 / (64 * C1**2 * (2.5) ** 2)))
    assert T == pytest.approx(math.log((4 * x0b / 0.1 - 1) * 1.0 + 1))
    vp = prescribe("VP_CONST", {"beta_const": 1.0}, q)
    assert vp.T_val == pytest.approx(T) and vp.eta_max == pytest.approx(eta)
    cc = prescribe(CONST_COEFF, {"alpha": 0.5, "sigma": 1.0}, q)
    assert cc.K_min == vp.K_min
    with pytest.raises(DomainError):
        const_coeff(1.0, 1.0, ComplexityQuery(0.1, 4, m0=1.0, L0=1.0))  # m0 < 2 alpha / sigma^2


def test_order_labels():
    q = ComplexityQuery(0.1, 16)
    assert prescribe("VE_CONST", None, q).order_label == "O(d^{3/2} log(d/eps)/eps^3)"
    assert prescribe("VP_EXP", None, q).order_label == "O(d log(log(d/eps))/eps^2)"
    assert all(prescribe(f, None, q).disclaimer == DISCLAIMER for f in family_names())


def test_degenerate_targets():
    with pytest.raises(DomainError):
        prescribe("VP_LINEAR", None, ComplexityQuery(1.0, 1))  # log(sqrt(d)/eps) = 0
    with pytest.raises(DomainError):
        prescribe("VE_CONST", None, ComplexityQuery(1.0, 2))  # d/eps <= e
    with pytest.raises(UnsupportedError):
        prescribe("CUSTOM", None, ComplexityQuery(0.1, 4))
    with pytest.raises(UnsupportedError):
        prescribe("NOPE", None, ComplexityQuery(0.1, 4))
    with pytest.raises(DomainError):
        ComplexityQuery(0.0, 4)


# -- grid properties -------------------------------------------------------------

EPS = (0.2, 0.1, 0.05)
DIMS = (4, 16, 64)


@pytest.mark.parametrize("family", family_names())
def test_k_min_above_lower_bound(family):
    for eps in EPS:
        for d in DIMS:
            q = ComplexityQuery(eps, d)
            assert prescribe(family, None, q).K_min >= lower_bound_gaussian(q)


@pytest.mark.parametrize("family", family_names())
def test_k_min_monotone_in_eps_and_d(family):
    for d in DIMS:
        ks = [prescribe(family, None, ComplexityQuery(eps, d)).K_min for eps in EPS]
        assert ks == sorted(ks)
    for eps in EPS:
        ks = [prescribe(family, None, ComplexityQuery(eps, d)).K_min for d in DIMS]
        assert ks == sorted(ks)


def test_vp_poly_decreasing_in_rho():
    """Fixed polynomial coefficients beta = (b + a t)^rho, i.e. beta_min = b^rho, beta_max = (a + b)^rho."""
    a, b = 1.0, 1.0
    for eps, d in ((0.1, 16), (0.05, 64)):
        q = ComplexityQuery(eps, d)
        ks = [
            prescribe("VP_POLY", {"beta_min": b**rho, "beta_max": (a + b) ** rho, "rho": rho}, q).K_min
            for rho in range(1, 11)
        ]
        assert all(k2 < k1 for k1, k2 in zip(ks, ks[1:]))


def test_ve_const_d_scaling():
    for d in (4, 16):
        k1 = prescribe("VE_CONST", None, ComplexityQuery(0.1, d)).K_min
        k4 = prescribe("VE_CONST", None, ComplexityQuery(0.1, 4 * d)).K_min
        assert k4 / k1 == pytest.approx(8 * math.log(40 * d) / math.log(10 * d), rel=1e-3)


def test_vp_eps_squared_scaling():
    for fam in ("VP_LINEAR", "VP_POLY", "VP_EXP"):
        k1 = prescribe(fam, None, ComplexityQuery(0.05, 64)).K_min
        k2 = prescribe(fam, None, ComplexityQuery(0.025, 64)).K_min
        assert 3.9 <= k2 / k1 <= 4.3


def test_ordering_report():
    report = ordering_report([ComplexityQuery(0.05, 64)])
    rows = {r.family: r for r in report.rows}
    assert len(rows) == 8
    assert sorted(r.rank for r in report.rows) == list(range(1, 9))
    assert rows["VE_CONST"].K_min > rows["VE_EXP"].K_min
    assert rows["VE_CONST"].K_min == max(rows[f].K_min for f in family_names() if f.startswith("VE_"))
    assert report.flags and "VE_CONST" in report.flags[0]


def test_lower_bound_examples():
    assert lower_bound_gaussian(ComplexityQuery(0.1, 16)) == pytest.approx(40)
    assert lower_bound_gaussian(ComplexityQuery(1.0, 1)) == pytest.approx(1)


def test_vp_general():
    # beta = b + a t satisfies beta^2 = b^2 + 2 a int beta, so beta <= sqrt(2a) (int beta)^(1/2) + b
    q = ComplexityQuery(0.1, 16, c1=6.4, c2=0.1, c3=0.5)
    pr = prescribe_vp_general("VP_LINEAR", DEFAULT_PARAMS["VP_LINEAR"], q)
    lt = math.log(40)
    assert 0.1 * pr.T_val + 9.95 * pr.T_val**2 == pytest.approx(lt, rel=1e-12)
    assert pr.eta_max == pytest.approx(0.01 / (16 * lt**1.5))
    assert pr.M_max == pytest.approx(0.1 / lt**0.5)
    assert pr.extras["eta_as_stated"] == pytest.approx(0.01 / (16 * math.log(10) ** 6))
    with pytest.raises(DomainError):
        prescribe_vp_general("VP_LINEAR", DEFAULT_PARAMS["VP_LINEAR"], ComplexityQuery(0.1, 16, c1=6.0, c2=0.1, c3=0.5))
    with pytest.raises(UnsupportedError):
        prescribe_vp_general("VE_EXP", {"a": 1.0, "b": 1.0}, q)


def test_prescription_dict():
    d = prescribe("VE_EXP", None, ComplexityQuery(0.1, 16)).to_dict()
    assert set(d) == {"family", "params", "eps", "d", "T", "eta_max", "M_max", "K_min", "order_label", "disclaimer", "extras"}
    assert d["family"] == "VE_EXP"
