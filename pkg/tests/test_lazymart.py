import math

import numpy as np
import pytest
from scipy import stats

from lazyclock import laws, lazymart
from lazyclock.clocks import GridSpec, JumpClock, sample_poisson_lazy_batch
from lazyclock.harness import ks_distance, ks_threshold, ks_two_sample, martingale_mean_test
from lazyclock.laws import ClockLawParams
from lazyclock.latent import LatentTransition
from lazyclock.specfun import RngStream


def rng(*keys):
    return RngStream(5150).child("test-lazymart", *keys)


PHI = LatentTransition("phi", 0.5, eta=0.25)


def test_empty_clock_constant_path():
    p = lazymart.lazy_compose(PHI, JumpClock(5.0, []), rng())
    assert p(0.0) == 0.5 and p(5.0) == 0.5 and p.jump_times().size == 0


def test_path_changes_only_at_sync_times():
    clk = JumpClock(5.0, [0.4, 1.7, 3.3])
    p = lazymart.lazy_compose(PHI, clk, rng("sync"))
    assert p.z0 == 0.5
    assert np.array_equal(lazymart.sync_times_of(p), clk.sync_times)
    for a, b in ((0.0, 0.39), (0.4, 1.69), (1.7, 3.29), (3.3, 5.0)):
        assert p(a) == p(b)


def test_phi_lazy_marginal_and_atom():
    n = 200_000
    z0, eta, lam, t = 0.5, 0.25, 0.2, 5.0
    clk = sample_poisson_lazy_batch(lam, t, n, rng("clk"))
    pb = lazymart.lazy_compose_batch(LatentTransition("phi", z0, eta=eta), clk, rng("lat"))
    zt = pb.terminal()
    law = laws.lazy_mixed_law(laws.phi_latent_cdf(z0, eta), ClockLawParams("poisson", t, lam=lam), z0, (0.0, 1.0))
    assert ks_distance(zt, law) < ks_threshold(n)
    p = math.exp(-lam * t)
    assert abs(np.mean(zt == z0) - p) < 3 * math.sqrt(p * (1 - p) / n)
    assert martingale_mean_test(pb, [t / 4, t / 2, t], z0).passed
    assert np.all((pb.values > 0) & (pb.values < 1))


def test_range_preservation_doleans():
    clk = sample_poisson_lazy_batch(1.0, 5.0, 5000, rng("dclk"))
    pb = lazymart.lazy_compose_batch(LatentTransition("doleans", 1.0, sigma=0.8), clk, rng("dlat"))
    assert np.all(pb.values > 0)


def test_delay_tightens_with_rate():
    n = 20_000
    t = 5.0
    slow = t - sample_poisson_lazy_batch(0.2, t, n, rng("d02")).terminal()
    fast = t - sample_poisson_lazy_batch(2.0, t, n, rng("d2")).terminal()
    # first-order dominance: the fast delay CDF sits above the slow one everywhere
    xs = np.linspace(0, t, 101)
    Fs = np.searchsorted(np.sort(slow), xs, side="right") / n
    Ff = np.searchsorted(np.sort(fast), xs, side="right") / n
    assert np.all(Ff >= Fs - 0.01)
    assert ks_two_sample(slow, fast) > 0.5


class _Drifted:
    def __init__(self, path, c):
        self.path, self.c = path, c

    def __call__(self, t):
        return self.path(t) + self.c * t


def test_drift_injected_paths_fail():
    clk = sample_poisson_lazy_batch(0.2, 5.0, 20_000, rng("drift-clk"))
    pb = lazymart.lazy_compose_batch(PHI, clk, rng("drift-lat"))
    assert martingale_mean_test(pb, [1.25, 2.5, 5.0], 0.5).passed
    drifted = [_Drifted(p, 0.01) for p in pb.paths()]
    assert not martingale_mean_test(drifted, [1.25, 2.5, 5.0], 0.5).passed


# ---- correlated ----------------------------------------------------------------------

def test_correlated_rho_one_is_zero():
    grid = GridSpec(100, 1.0)
    for rho in (1.0, -1.0):
        pb = lazymart.correlated_lazy_batch(rho, 1.0, grid, 200, rng("r1"))
        assert np.all(pb.values == 0)


def test_correlated_mean_variance():
    n = 20_000
    grid = GridSpec(1000, 1.0)
    rho = 0.5
    z = lazymart.correlated_lazy_batch(rho, 1.0, grid, n, rng("mv")).terminal()
    assert abs(z.mean()) < 3 * z.std() / math.sqrt(n)
    v = (1 - rho ** 2) * 0.5
    se = math.sqrt((np.mean(z ** 4) - v ** 2) / n)
    assert abs(np.mean(z ** 2) - v) < 3 * se


def test_correlated_terminal_equal_in_law():
    n = 20_000
    grid = GridSpec(500, 1.0)
    a = lazymart.correlated_lazy_batch(0.3, 1.0, grid, n, rng("ta")).terminal()
    b = lazymart.correlated_lazy_terminal(0.3, 1.0, grid, n, rng("tb"))
    assert stats.ks_2samp(a, b).pvalue > 0.001


def test_correlated_shares_clock_with_terminal():
    grid = GridSpec(200, 1.0)
    a = lazymart.correlated_lazy_batch(0.3, 1.0, grid, 300, rng("same"))
    b = lazymart.correlated_lazy_terminal(0.3, 1.0, grid, 300, rng("same"))
    # identical clocks: paths that never sync are zero in both
    assert np.array_equal(a.terminal() == 0, b == 0)


def test_correlated_errors():
    with pytest.raises(ValueError):
        lazymart.correlated_lazy_path(1.5, 1.0, GridSpec(10, 1.0), rng())


def test_correlated_single_path_pwc():
    p = lazymart.correlated_lazy_path(0.2, 1.0, GridSpec(200, 1.0), rng("one"))
    assert p(0.0) == 0.0 and p.is_pwc()
