import json
import math

import numpy as np
import pytest

from lazyclock import harness, laws
from lazyclock.harness import EcdfWithAtoms, ValidationReport, ks_distance, ks_threshold, martingale_mean_test
from lazyclock.latent import PwcPath
from lazyclock.specfun import RngStream


def test_thresholds():
    assert ks_threshold(10_000) == pytest.approx(0.0163)
    assert ks_threshold(10_000, 2.0) == pytest.approx(0.0326)
    assert harness.ks2_threshold(100, 100) == pytest.approx(1.63 * math.sqrt(0.02))


def test_ecdf_atoms():
    ec = EcdfWithAtoms.from_samples([0.0, 0.0, 1.0, 2.0, 2.0, 2.0, 3.0])
    assert ec.n == 7
    assert ec.atoms == [(0.0, 2 / 7), (2.0, 3 / 7)]
    assert ec.cdf(2.0) == pytest.approx(6 / 7)
    assert ec.cdf_left(2.0) == pytest.approx(3 / 7)
    with pytest.raises(ValueError):
        EcdfWithAtoms.from_samples([0.0, np.nan])


def test_ks_distance_degenerate_atom():
    law = laws.Law(lambda x: (np.asarray(x) >= 1.0).astype(float), (1.0, 1.0), ((1.0, 1.0),), name="dirac")
    assert ks_distance(np.ones(500), law) == 0.0


def test_ks_distance_detects_shift():
    g = RngStream(1).generator
    x = np.sin(0.5 * np.pi * g.random(20_000)) ** 2
    law = laws.arcsine_law(1.0)
    assert ks_distance(x, law) < ks_threshold(x.size)
    assert ks_distance(x + 1.0, law) > 0.99


def test_ks_distance_sees_missing_atom():
    # continuous samples against a law with an atom at 0 of mass e^{-1}
    g = RngStream(2).generator
    x = g.random(10_000) * 2.0
    d = ks_distance(x, laws.poisson_lazy_law(0.5, 2.0))
    assert d >= math.exp(-1.0) - 0.02


def test_ks_distance_min_samples():
    with pytest.raises(ValueError):
        ks_distance(np.zeros(10), laws.arcsine_law(1.0))


def test_ks_distance_calibration():
    # exact samples from the law: the 1.63/sqrt(N) gate holds at about the 99% level
    law = laws.arcsine_law(1.0)
    n, seeds = 200_000, 100
    ok = 0
    for s in range(seeds):
        x = np.sin(0.5 * np.pi * RngStream(1000 + s).generator.random(n)) ** 2
        ok += ks_distance(x, law) < ks_threshold(n)
    assert ok >= 97


def test_report_invariant_and_json():
    r = ValidationReport("sc", "c", "z", 1.0, 3.0, 10, 7, detail={"x": np.float64(0.5)})
    assert r.passed
    assert not ValidationReport("sc", "c", "z", 3.5, 3.0, 10, 7).passed
    assert ValidationReport("sc", "c", "z", 3.0, 3.0, 10, 7).passed
    d = json.loads(r.to_json())
    assert d["passed"] is True and d["detail"]["x"] == 0.5 and d["seed"] == 7
    assert r.to_json() == r.to_json()


def test_martingale_mean_constant_paths():
    paths = [PwcPath([0.0], [0.3], 1.0)] * 10_000
    rep = martingale_mean_test(paths, [0.25, 0.5, 1.0], 0.3)
    assert rep.passed and rep.statistic == 0.0


def test_martingale_mean_needs_paths():
    with pytest.raises(ValueError):
        martingale_mean_test([PwcPath([0.0], [0.3], 1.0)] * 10, [1.0], 0.3)


def test_proportion_and_mean_reports():
    g = RngStream(3).generator
    hits = g.random(10_000) < 0.3
    assert harness.proportion_report("s", "p", hits, 0.3, 0).passed
    assert not harness.proportion_report("s", "p", hits, 0.35, 0).passed
    x = g.standard_normal(10_000)
    assert harness.mean_report("s", "m", x, 0.0, 0).passed
    assert harness.variance_report("s", "v", x, 1.0, 0).passed
    assert not harness.variance_report("s", "v", x, 1.2, 0).passed


def test_skellam_chi2_pools_tails():
    g = RngStream(4).generator
    z = (g.poisson(1.0, 50_000) - g.poisson(1.0, 50_000)).astype(float)
    stat, dof, p = harness.skellam_chi2(z, 1.0, 1.0)
    assert 2 <= dof <= 16 and p > 0.001


def test_unknown_scenario():
    with pytest.raises(KeyError):
        harness.run_suite("nope")


@pytest.mark.parametrize("name", ["poisson-lazy-clock-law", "poisson-lazy-moments", "skellam", "bridge-lastzero"])
def test_small_suites_pass_and_reproduce(name):
    a = harness.run_suite(name, n_paths=20_000, seed=3)
    b = harness.run_suite(name, n_paths=20_000, seed=3)
    assert [r.to_json() for r in a] == [r.to_json() for r in b]
    assert all(r.passed for r in a), [r.to_json() for r in a if not r.passed]


def test_workers_do_not_change_results():
    names = ["poisson-lazy-clock-law", "skellam"]
    seq = [r.to_json() for nm in names for r in harness.run_suite(nm, n_paths=5000, seed=1)]
    par = harness.SCENARIOS
    assert set(names) <= set(par)
    ctx = harness.SuiteContext(1, 5000 / 200_000)
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(2) as ex:
        out = [r.to_json() for part in ex.map(lambda nm: par[nm](ctx), names) for r in part]
    assert seq == out
