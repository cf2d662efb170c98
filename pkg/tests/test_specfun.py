import math

import numpy as np
import pytest
from scipy import stats

from lazyclock import specfun as sf
from lazyclock import laws
from oracles import FROZEN, bessel_k_integral, ellipk_agm, gl_integrate, i0_series, ik_series, norm_cdf_cf


# ---- frozen oracle values reproduce from the pure-python oracles ---------

def test_frozen_oracles_reproduce():
    assert i0_series(2.0) * math.exp(-2.0) == pytest.approx(FROZEN["i0s_2"], abs=1e-15)
    assert i0_series(1.0) ** 2 == pytest.approx(FROZEN["i0_1_sq"], abs=1e-13)
    assert ellipk_agm(0.5) == pytest.approx(FROZEN["ellipk_half"], abs=1e-15)
    assert bessel_k_integral(0.25, 2.0) == pytest.approx(FROZEN["bessel_k_quarter_2"], abs=1e-12)
    assert norm_cdf_cf(1.959964) == pytest.approx(FROZEN["phi_1959964"], abs=1e-15)


# ---- normal --------------------------------------------------------------

def test_norm_cdf_examples():
    assert sf.norm_cdf(0.0) == 0.5
    assert sf.norm_cdf(40.0) == 1.0
    assert abs(sf.norm_cdf(1.959964) - FROZEN["phi_1959964"]) < 1e-9
    assert abs(sf.norm_cdf(1.959964) - 0.975) < 1e-9


def test_norm_cdf_matches_continued_fraction():
    for x in (-6.0, -2.5, -0.3, 0.7, 3.1, 7.5):
        assert sf.norm_cdf(x) == pytest.approx(norm_cdf_cf(x), rel=1e-13)


def test_norm_symmetry_and_monotone():
    x = np.linspace(-8, 8, 4001)
    F = sf.norm_cdf(x)
    assert np.all(np.diff(F) >= 0)
    assert np.all(np.diff(F[np.abs(x) <= 6]) > 0)
    assert np.max(np.abs(F + sf.norm_cdf(-x) - 1.0)) < 1e-14


def test_norm_pdf_is_derivative():
    x = np.linspace(-5, 5, 41)
    h = 1e-5
    fd = (sf.norm_cdf(x + h) - sf.norm_cdf(x - h)) / (2 * h)
    assert np.max(np.abs(fd - sf.norm_pdf(x))) < 1e-9


def test_norm_ppf_round_trip():
    p = np.array([1e-12, 0.01, 0.3, 0.5, 0.9, 1 - 1e-9])
    assert np.allclose(sf.norm_cdf(sf.norm_ppf(p)), p, rtol=1e-10)


# ---- Bessel and elliptic ---------------------------------------------------

def test_bessel_i_scaled_examples():
    assert sf.bessel_i_scaled(0, 0.0) == 1.0
    assert sf.bessel_i_scaled(1, 0.0) == 0.0
    assert abs(sf.bessel_i_scaled(0, 2.0) - FROZEN["i0s_2"]) < 1e-12


def test_bessel_i_scaled_vs_series():
    for k in (0, 1, 3, 7):
        for x in (0.1, 1.0, 4.0, 10.0):
            assert sf.bessel_i_scaled(k, x) == pytest.approx(math.exp(-x) * ik_series(k, x), rel=1e-12)


def test_bessel_i_scaled_no_overflow():
    v = sf.bessel_i_scaled(0, 1e6)
    assert 0 < v <= 1 and math.isfinite(v)
    assert v == pytest.approx(1.0 / math.sqrt(2 * math.pi * 1e6), rel=1e-6)


def test_bessel_i_scaled_errors():
    with pytest.raises(ValueError):
        sf.bessel_i_scaled(0, -1.0)
    with pytest.raises(ValueError):
        sf.bessel_i_scaled(-1, 1.0)


def test_skellam_normalisation_identity():
    # e^{-x} sum_k I_|k|(x) = 1
    for x in (0.5, 2.0, 10.0):
        ks = np.arange(-200, 201)
        assert abs(np.sum(sf.bessel_i_scaled(np.abs(ks), x)) - 1.0) < 1e-12


def test_bessel_k_examples():
    assert abs(sf.bessel_k(0.5, 1.0) - math.sqrt(math.pi / 2) * math.exp(-1)) < 1e-12
    assert sf.bessel_k(-0.5, 1.0) == sf.bessel_k(0.5, 1.0)
    assert abs(sf.bessel_k(0.25, 2.0) - FROZEN["bessel_k_quarter_2"]) < 1e-10


def test_bessel_k_decreasing_and_errors():
    x = np.linspace(0.1, 10, 50)
    assert np.all(np.diff(sf.bessel_k(0.3, x)) < 0)
    with pytest.raises(ValueError):
        sf.bessel_k(0.3, 0.0)


def test_elliptic_k():
    assert sf.complete_elliptic_k(0.0) == math.pi / 2
    assert abs(sf.complete_elliptic_k(0.5) - FROZEN["ellipk_half"]) < 1e-12
    for m in (0.1, 0.9, 0.999999):
        assert sf.complete_elliptic_k(m) == pytest.approx(ellipk_agm(m), rel=1e-13)
    assert sf.complete_elliptic_k(1 - 1e-16) == math.inf
    with pytest.raises(ValueError):
        sf.complete_elliptic_k(1.0)
    with pytest.raises(ValueError):
        sf.complete_elliptic_k(-0.1)


# ---- quadrature -----------------------------------------------------------

def test_quadrature_spec_validation():
    with pytest.raises(ValueError):
        sf.QuadratureSpec(abs_tol=0.0)
    with pytest.raises(ValueError):
        sf.QuadratureSpec(max_depth=0)


def test_integrate_examples():
    spec = sf.QuadratureSpec()
    assert sf.integrate(lambda x: 1.0, 0.0, 1.0, spec) == pytest.approx(1.0, abs=1e-12)
    assert abs(sf.integrate(lambda x: 1 / math.sqrt(x), 0.0, 1.0, spec, singular="left") - 2.0) < 1e-8
    val = sf.integrate(lambda x: 1 / math.sqrt(math.cos(x) ** 2 + 0.25 * math.sin(x) ** 2), 0.0, math.pi / 2, spec)
    assert abs(val - ellipk_agm(0.75)) < 1e-8


def test_integrate_singular_both_and_right():
    spec = sf.QuadratureSpec()
    v = sf.integrate(lambda s: 1 / (math.pi * math.sqrt(s * (1 - s))), 0.0, 1.0, spec, singular="both")
    assert abs(v - 1.0) < 1e-8
    v = sf.integrate(lambda s: 1 / math.sqrt(1 - s), 0.0, 1.0, spec, singular="right")
    assert abs(v - 2.0) < 1e-8


def test_integrate_nonconvergence():
    with pytest.raises(sf.QuadratureError):
        sf.integrate(lambda x: math.sin(1 / x) / x, 1e-9, 1.0, sf.QuadratureSpec(1e-14, 3))


def test_gauss_legendre_vs_pure_oracle():
    x, w = sf.gauss_legendre(12)
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    f = lambda s: math.exp(s) * math.cos(3 * s)
    ref = gl_integrate(f, 0.0, 1.0, panels=50)
    assert float(np.sum(w * np.exp(x) * np.cos(3 * x))) == pytest.approx(ref, abs=1e-14)


def test_graded_rule_handles_endpoint_singularity():
    rule = sf.graded_rule(0.0, 2.0, left=True, right=True)
    approx = np.sum(rule.weights / (math.pi * np.sqrt(rule.nodes * (2.0 - rule.nodes))))
    # the two end cells are left out of the rule; add their exact arcsine mass
    lo = (2 / math.pi) * math.asin(math.sqrt(rule.lo_cut / 2.0))
    hi = 1 - (2 / math.pi) * math.asin(math.sqrt(rule.hi_cut / 2.0))
    assert approx + lo + hi == pytest.approx(1.0, abs=1e-10)


# ---- root finding ----------------------------------------------------------

def test_find_root_examples():
    tol = 1e-12
    assert abs(sf.find_root(lambda x: x - 0.3, 0.0, 1.0, tol) - 0.3) <= tol
    assert abs(sf.find_root(lambda x: float(sf.norm_cdf(x)) - 0.5, -1.0, 1.0, tol)) <= tol
    r = sf.find_root(lambda s: float(laws.bridge_lastzero_cdf(s, 1.0, 1.0, 1.0)) - 0.9, 0.0, 1.0, tol)
    # forward evaluation: the CDF slope is O(1) here, so the residual is O(tol)
    assert abs(float(laws.bridge_lastzero_cdf(r, 1.0, 1.0, 1.0)) - 0.9) < 1e-10


def test_find_root_bracket_error():
    with pytest.raises(sf.BracketError):
        sf.find_root(lambda x: x + 2.0, 0.0, 1.0)


def test_find_root_composed_with_cdf():
    tol = 1e-12
    for p in (0.01, 0.4, 0.77, 0.999):
        r = sf.find_root(lambda x: float(sf.norm_cdf(x)) - p, -10.0, 10.0, tol)
        assert abs(float(sf.norm_cdf(r)) - p) <= 10 * tol


def test_newton_matches_bisection():
    rng = np.random.default_rng(3)
    p = rng.random(500)
    f = lambda x, i: sf.norm_cdf(x) - p[i]
    df = lambda x, i: sf.norm_pdf(x)
    a = sf.newton_bracketed_vec(f, df, np.full(500, -12.0), np.full(500, 12.0), 1e-12)
    b = sf.bisect_vec(lambda x: sf.norm_cdf(x) - p, np.full(500, -12.0), np.full(500, 12.0), 1e-12)
    assert np.max(np.abs(a - b)) < 2e-12


# ---- RNG -------------------------------------------------------------------

def test_rng_reproducible_and_independent():
    a = sf.RngStream(5, 1).generator.random(8)
    b = sf.RngStream(5, 1).generator.random(8)
    c = sf.RngStream(5, 2).generator.random(8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    r = sf.RngStream(5, 1)
    assert np.array_equal(r.child("x", 3).generator.random(4), r.child("x", 3).generator.random(4))
    assert not np.array_equal(r.child("long-key-prefix-1").generator.random(4),
                              r.child("long-key-prefix-2").generator.random(4))
    assert len({s.stream_id for s in r.spawn(50)}) == 50


def test_child_does_not_consume_parent():
    r1, r2 = sf.RngStream(9), sf.RngStream(9)
    r1.child("k")
    assert r1.generator.random() == r2.generator.random()


# ---- draws -----------------------------------------------------------------

def test_draw_uniform():
    x = sf.draw("uniform", None, sf.RngStream(1), 100_000)
    assert x.min() >= 0 and x.max() < 1
    assert abs(x.mean() - 0.5) < 3 * x.std() / math.sqrt(x.size)


def test_draw_gamma_shape_one_is_exponential():
    b = 2.5
    x = sf.draw("gamma", {"shape": 1.0, "rate": b}, sf.RngStream(2), 200_000)
    d = stats.kstest(x, lambda z: 1 - np.exp(-b * z)).statistic
    assert d < 1.63 / math.sqrt(x.size)


def test_draw_noncentral_chi2_mean():
    x = sf.draw("noncentral_chi2", {"dof": 1.7, "noncentrality": 0.8}, sf.RngStream(3), 100_000)
    assert abs(x.mean() - 2.5) < 3 * x.std() / math.sqrt(x.size)


@pytest.mark.parametrize("kind,params,cdf", [
    ("uniform", None, lambda x: np.clip(x, 0, 1)),
    ("normal", None, sf.norm_cdf),
    ("exponential", {"rate": 0.7}, lambda x: 1 - np.exp(-0.7 * x)),
    ("gamma", {"shape": 2.3, "rate": 1.5}, lambda x: stats.gamma.cdf(x, 2.3, scale=1 / 1.5)),
    ("noncentral_chi2", {"dof": 3.0, "noncentrality": 1.2}, lambda x: stats.ncx2.cdf(x, 3.0, 1.2)),
])
def test_draw_ks(kind, params, cdf):
    x = sf.draw(kind, params, sf.RngStream(11).child(kind), 200_000)
    assert stats.kstest(x, cdf).statistic < 1.63 / math.sqrt(x.size)


def test_draw_poisson_mean_and_errors():
    x = sf.draw("poisson", {"mean": 3.2}, sf.RngStream(4), 100_000)
    assert abs(x.mean() - 3.2) < 3 * math.sqrt(3.2 / x.size)
    with pytest.raises(ValueError):
        sf.draw("gamma", {"shape": -1.0}, sf.RngStream(0))
    with pytest.raises(ValueError):
        sf.draw("exponential", {"rate": 0.0}, sf.RngStream(0))
    with pytest.raises(ValueError):
        sf.draw("poisson", {"mean": -1.0}, sf.RngStream(0))
    with pytest.raises(ValueError):
        sf.draw("noncentral_chi2", {"dof": 0.0, "noncentrality": 1.0}, sf.RngStream(0))
    with pytest.raises(ValueError):
        sf.draw("cauchy", None, sf.RngStream(0))
