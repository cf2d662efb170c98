"""Monte Carlo validation of the samplers against the analytic laws.

Every scenario draws from streams derived from ``(seed, scenario id)``, so
reports are reproducible bit for bit and independent of execution order.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np
from scipy import stats

from . import clocks, latent, laws, lazymart
from . import specfun as sf
from .clocks import GridSpec
from .latent import LatentTransition, PathBatch, PwcPath
from .laws import CirParams, ClockLawParams, Law
from .specfun import RngStream

KS_COEF = 1.63          # asymptotic KS critical value at alpha ~ 0.01
Z_GATE = 3.0            # mean tests at 3 standard errors
DISC_INFLATE = 2.0      # grid-discretised scenarios
STEPS_PER_UNIT = 2000


def ks_threshold(n: int, inflate: float = 1.0) -> float:
    return inflate * KS_COEF / math.sqrt(n)


def ks2_threshold(n: int, m: int, inflate: float = 1.0) -> float:
    return inflate * KS_COEF * math.sqrt((n + m) / (n * m))


# --------------------------------------------------------------------------
# Empirical CDF and KS distance
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EcdfWithAtoms:
    """Sorted samples; values seen more than once are reported as atoms."""

    values: np.ndarray

    @classmethod
    def from_samples(cls, x) -> "EcdfWithAtoms":
        x = np.sort(np.asarray(x, dtype=float).ravel())
        if np.any(np.isnan(x)):
            raise ValueError("samples contain NaN")
        return cls(x)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def atoms(self) -> list[tuple[float, float]]:
        u, c = np.unique(self.values, return_counts=True)
        rep = c > 1
        return list(zip(u[rep].tolist(), (c[rep] / self.n).tolist()))

    def cdf(self, x):
        return np.searchsorted(self.values, np.asarray(x, dtype=float), side="right") / self.n

    def cdf_left(self, x):
        return np.searchsorted(self.values, np.asarray(x, dtype=float), side="left") / self.n


def ks_distance(samples: Union[EcdfWithAtoms, np.ndarray], law: Law, min_samples: int = 100) -> float:
    """Sup-distance between the empirical and law CDFs.

    Both one-sided limits are compared at every distinct sample value and
    at every atom of the law, which is where the supremum is attained.
    """
    ec = samples if isinstance(samples, EcdfWithAtoms) else EcdfWithAtoms.from_samples(samples)
    if ec.n < min_samples:
        raise ValueError(f"ks_distance needs at least {min_samples} samples, got {ec.n}")
    pts = np.unique(ec.values)
    if law.atoms:
        pts = np.union1d(pts, np.array([loc for loc, _ in law.atoms]))
    F = np.asarray(law.cdf(pts), dtype=float)
    F_left = F - law.atom_mass(pts)
    d_right = np.abs(ec.cdf(pts) - F)
    d_left = np.abs(ec.cdf_left(pts) - F_left)
    return float(max(d_right.max(), d_left.max()))


def ks_two_sample(x, y) -> float:
    return float(stats.ks_2samp(np.asarray(x), np.asarray(y)).statistic)


# --------------------------------------------------------------------------
# Reports
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ValidationReport:
    scenario: str
    check: str
    kind: str
    statistic: float
    threshold: float
    n: int
    seed: int
    passed: bool = field(init=False)
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "statistic", float(self.statistic))
        object.__setattr__(self, "threshold", float(self.threshold))
        object.__setattr__(self, "passed", bool(self.statistic <= self.threshold))

    def to_json(self) -> str:
        d = asdict(self)
        d["detail"] = {k: (float(v) if isinstance(v, (float, np.floating)) else v) for k, v in self.detail.items()}
        return json.dumps(d, sort_keys=True)


def _z(mean, target, se) -> float:
    if se == 0:
        return 0.0 if mean == target else math.inf
    return abs(mean - target) / se


def mean_report(scenario, check, x, target, seed, **detail) -> ValidationReport:
    d = np.asarray(x, dtype=float) - target   # centred first: constant samples give exactly 0
    md = float(d.mean())
    m = md + target
    se = float(d.std(ddof=1) / math.sqrt(d.size))
    return ValidationReport(scenario, check, "z", _z(md, 0.0, se), Z_GATE, d.size, seed,
                            detail={"mean": m, "target": float(target), "se": se, **detail})


def variance_report(scenario, check, x, target, seed, **detail) -> ValidationReport:
    x = np.asarray(x, dtype=float)
    c = x - x.mean()
    v = float(np.mean(c ** 2))
    se = float(math.sqrt(max(np.mean(c ** 4) - v * v, 0.0) / x.size))
    return ValidationReport(scenario, check, "z", _z(v, target, se), Z_GATE, x.size, seed,
                            detail={"variance": v, "target": float(target), "se": se, **detail})


def proportion_report(scenario, check, hits, p, seed, **detail) -> ValidationReport:
    hits = np.asarray(hits, dtype=bool)
    n = hits.size
    f = float(hits.mean())
    se = math.sqrt(p * (1 - p) / n)
    if se == 0:
        se = 1.0 / n
    return ValidationReport(scenario, check, "z", _z(f, p, se), Z_GATE, n, seed,
                            detail={"frequency": f, "target": float(p), "se": se, **detail})


def ks_report(scenario, check, x, law, seed, inflate=1.0, **detail) -> ValidationReport:
    n = int(np.size(x))
    return ValidationReport(scenario, check, "ks", ks_distance(x, law), ks_threshold(n, inflate), n, seed,
                            detail={"inflate": inflate, **detail})


def abs_report(scenario, check, value, target, tol, seed, **detail) -> ValidationReport:
    return ValidationReport(scenario, check, "abs", abs(value - target), tol, 0, seed,
                            detail={"value": float(value), "target": float(target), **detail})


def _values_at(paths, t) -> np.ndarray:
    if isinstance(paths, PathBatch):
        return paths.value_at(t)
    return np.array([p(t) for p in paths], dtype=float)


def martingale_mean_test(paths: Union[PathBatch, Sequence[PwcPath]], times: Iterable[float], z0: float,
                         scenario: str = "martingale", seed: int = 0, min_paths: int = 10_000,
                         check: str = "martingale-mean") -> ValidationReport:
    """Largest z-score of ``mean(Z_t) - z0`` over ``times``."""
    n = paths.n_paths if isinstance(paths, PathBatch) else len(paths)
    if n < min_paths:
        raise ValueError(f"martingale_mean_test needs at least {min_paths} paths")
    worst, means = 0.0, []
    for t in times:
        d = _values_at(paths, t) - z0
        se = float(d.std(ddof=1) / math.sqrt(n))
        worst = max(worst, _z(float(d.mean()), 0.0, se))
        means.append(float(d.mean()) + z0)
    return ValidationReport(scenario, check, "z", worst, Z_GATE, n, seed,
                            detail={"times": [float(t) for t in times], "means": means, "z0": float(z0)})


# --------------------------------------------------------------------------
# Scenarios, one per acceptance criterion
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SuiteContext:
    seed: int
    scale: float = 1.0

    def n(self, default: int) -> int:
        return max(1000, int(round(default * self.scale)))

    def rng(self, scenario: str, *keys) -> RngStream:
        return RngStream(self.seed, 0).child(scenario, *keys)


def _poisson_clock_law(ctx: SuiteContext):
    sc, out = "poisson-lazy-clock-law", []
    for lam in (0.2, 1.5):
        for T in (2.0, 5.0):
            n = ctx.n(200_000)
            th = clocks.sample_poisson_lazy_batch(lam, T, n, ctx.rng(sc, f"{lam}-{T}")).terminal()
            tag = f"lambda={lam},T={T}"
            out.append(ks_report(sc, "ks " + tag, th, laws.poisson_lazy_law(lam, T), ctx.seed))
            out.append(proportion_report(sc, "atom0 " + tag, th == 0.0, math.exp(-lam * T), ctx.seed))
    return out


def _poisson_moments(ctx: SuiteContext):
    sc, out = "poisson-lazy-moments", []
    for lam, T in ((0.2, 5.0), (1.5, 2.0)):
        n = ctx.n(200_000)
        th = clocks.sample_poisson_lazy_batch(lam, T, n, ctx.rng(sc, f"{lam}-{T}")).terminal()
        for k in (1, 2, 3):
            exact = laws.poisson_lazy_moment(k, lam, T)
            quad = sf.integrate(lambda s: s ** k * float(laws.poisson_lazy_pdf(s, lam, T)), 0.0, T,
                                sf.QuadratureSpec(1e-11))
            tag = f"k={k},lambda={lam},T={T}"
            out.append(abs_report(sc, "formula-vs-quadrature " + tag, exact, quad, 1e-9, ctx.seed))
            out.append(mean_report(sc, "sample-moment " + tag, th ** k, exact, ctx.seed))
    return out


def _brownian_clock(ctx: SuiteContext):
    sc, out = "brownian-lazy-clock", []
    T = 1.0
    grid = GridSpec.per_unit(T, STEPS_PER_UNIT)
    n = ctx.n(100_000)
    th = clocks.sample_brownian_lazy_batch(T, grid, n, ctx.rng(sc, "arcsine"), last_only=True).terminal()
    out.append(ks_report(sc, "ks arcsine", th, laws.arcsine_law(T), ctx.seed, DISC_INFLATE))
    for a, b in ((1.0, 0.0), (0.5, 0.2)):
        cb = clocks.sample_brownian_lazy_batch(T, grid, n, ctx.rng(sc, f"affine-{a}-{b}"), a, b, last_only=True)
        th = cb.terminal()
        tag = f"a={a},b={b}"
        out.append(proportion_report(sc, "mass0 " + tag, cb.counts == 0,
                                     laws.affine_lastpassage_mass0(a, b, T), ctx.seed))
        out.append(ks_report(sc, "ks affine " + tag, th, laws.affine_lastpassage_law(a, b, T), ctx.seed,
                             DISC_INFLATE))
    return out


def _bridge(ctx: SuiteContext):
    sc, out = "bridge-lastzero", []
    for x, y, t in ((1.0, 1.0, 1.0), (1.0, -1.0, 1.0), (0.3, 0.2, 0.5)):
        n = ctx.n(200_000)
        u = ctx.rng(sc, f"{x}-{y}-{t}").generator.random(n)
        s = clocks.bridge_lastzero_sample_vec(x, y, t, u)
        s0 = np.where(np.isnan(s), 0.0, s)
        law = laws.bridge_lastzero_law(x, y, t)
        tag = f"x={x},y={y},t={t}"
        # probability integral transform of the hits must give back u
        hit = ~np.isnan(s)
        rt = np.abs(laws.bridge_lastzero_cdf(s[hit], x, y, t) - u[hit]).max() if hit.any() else 0.0
        out.append(ks_report(sc, "ks " + tag, s0, law, ctx.seed))
        out.append(ValidationReport(sc, "round-trip " + tag, "abs", rt, 1e-8, int(hit.sum()), ctx.seed))
    n = ctx.n(200_000)
    u = ctx.rng(sc, "y0").generator.random(n)
    s = clocks.bridge_lastzero_sample_vec(0.7, 0.0, 1.0, u)
    out.append(ValidationReport(sc, "y=0 returns t", "count", float(np.sum(s != 1.0)), 0.0, n, ctx.seed))
    return out


def _bessel(ctx: SuiteContext):
    sc, out = "bessel-lazy-clock", []
    t = 1.0
    for nu in (-0.3, -0.5):
        n = ctx.n(200_000)
        x = clocks.sample_bessel_lazy_marginal(nu, t, ctx.rng(sc, f"nu={nu}"), n)
        out.append(ks_report(sc, f"ks nu={nu}", x, laws.bessel_lazy_law(nu, t), ctx.seed))
        out.append(mean_report(sc, f"mean nu={nu}", x, -nu * t, ctx.seed))
        if nu == -0.5:
            m = ctx.n(20_000)
            grid = GridSpec.per_unit(t, STEPS_PER_UNIT)
            y = clocks.sample_brownian_lazy_batch(t, grid, m, ctx.rng(sc, "arcsine-sampler"), last_only=True).terminal()
            out.append(ValidationReport(sc, "two-sample vs brownian clock", "ks2", ks_two_sample(x, y),
                                        ks2_threshold(n, m, DISC_INFLATE), n + m, ctx.seed))
    return out


def skellam_chi2(z: np.ndarray, lam: float, t: float, kmax: int = 8, min_expected: float = 5.0):
    """Chi-square statistic and p-value of integer samples against the Skellam pmf.

    Bins are ``k = -kmax..kmax`` with the tails pooled into the end bins;
    end bins are merged inwards until their expected count reaches
    ``min_expected``.
    """
    n = z.size
    ks = np.arange(-kmax, kmax + 1)
    p = laws.skellam_pmf(ks, lam, t).astype(float)
    p[0] = float(laws.skellam_law(lam, t).cdf(-kmax))
    p[-1] = 1.0 - float(laws.skellam_law(lam, t).cdf(kmax - 1))
    obs = np.array([np.sum(z == k) for k in ks], dtype=float)
    obs[0] = np.sum(z <= -kmax)
    obs[-1] = np.sum(z >= kmax)
    obs, p = list(obs), list(p)
    while len(p) > 2 and p[0] * n < min_expected:
        head_p, head_o = p.pop(0), obs.pop(0)
        p[0] += head_p
        obs[0] += head_o
    while len(p) > 2 and p[-1] * n < min_expected:
        tail_p, tail_o = p.pop(), obs.pop()
        p[-1] += tail_p
        obs[-1] += tail_o
    obs, exp = np.array(obs), n * np.array(p)
    chi2 = float(np.sum((obs - exp) ** 2 / exp))
    dof = len(p) - 1
    return chi2, dof, float(stats.chi2.sf(chi2, dof))


def _skellam(ctx: SuiteContext):
    sc, out = "skellam", []
    lam, t = 1.0, 1.0
    n = ctx.n(200_000)
    z = latent.skellam_batch(lam, t, n, ctx.rng(sc, "paths")).terminal()
    chi2, dof, pval = skellam_chi2(z, lam, t)
    out.append(ValidationReport(sc, "chi2 k in [-8,8]", "chi2", chi2, float(stats.chi2.ppf(0.99, dof)), n, ctx.seed,
                                detail={"dof": dof, "p_value": pval}))
    law = laws.skellam_law(lam, t)
    out.append(abs_report(sc, "pmf sums to 1", sum(m for _, m in law.atoms), 1.0, 1e-10, ctx.seed))
    out.append(mean_report(sc, "mean", z, 0.0, ctx.seed))
    return out


def _gamma(ctx: SuiteContext):
    sc, out = "gamma-difference", []
    for a, b, t in ((1.0, 2.0, 1.0), (0.7, 2.0, 1.3)):
        tag = f"a={a},b={b},t={t}"
        n = ctx.n(100_000)
        grid = GridSpec.per_unit(t, STEPS_PER_UNIT)
        z = latent.gammadiff_grid(a, b, grid, n, ctx.rng(sc, tag), observe=[grid.n_steps])[:, 0]
        law = laws.gamma_diff_law(a, b, t)
        if a * t == 1.0:
            # at = 1: Laplace law with scale 1/b, closed form
            law = Law(lambda x: np.where(np.asarray(x) < 0, 0.5 * np.exp(b * np.asarray(x)),
                                         1 - 0.5 * np.exp(-b * np.asarray(x))), (-math.inf, math.inf), name="laplace")
        out.append(ks_report(sc, "ks " + tag, z, law, ctx.seed, DISC_INFLATE))
        out.append(abs_report(sc, "normalisation " + tag, laws.gamma_diff_law(a, b, t).total_mass(), 1.0, 1e-7,
                              ctx.seed))
        out.append(mean_report(sc, "mean " + tag, z, 0.0, ctx.seed))
        out.append(variance_report(sc, "variance " + tag, z, 2 * a * t / b ** 2, ctx.seed))
    return out


def _g0_cone(ctx: SuiteContext):
    sc = "g0diff-cone"
    T = 1.0
    grid = GridSpec.per_unit(T, STEPS_PER_UNIT)
    n = ctx.n(10_000)
    pb = latent.g0diff_batch(T, grid, n, ctx.rng(sc, "paths"))
    viol = int(np.sum(np.abs(pb.values) > pb.times))
    z0_bad = int(np.sum(pb.value_at(0.0) != 0.0))
    # also on every grid point: |Z| is constant between syncs while t grows,
    # so a grid violation would show up at the preceding sync time already
    return [ValidationReport(sc, "cone |Z_t| <= t", "count", float(viol + z0_bad), 0.0, n, ctx.seed,
                             detail={"jumps_checked": int(pb.times.size)})]


def _g0_laplace(ctx: SuiteContext):
    sc, out = "g0diff-laplace", []
    u, T = 2.0, 1.0
    grid = GridSpec.per_unit(T, STEPS_PER_UNIT)
    n = ctx.n(200_000)
    z = latent.g0diff_terminal(T, grid, n, ctx.rng(sc, "terminal"))
    out.append(mean_report(sc, "laplace u=2,t=1", np.exp(-u * z), laws.g0diff_laplace(u, T), ctx.seed))
    out.append(ks_report(sc, "ks corrected cdf", z, laws.g0diff_law(T), ctx.seed, DISC_INFLATE))
    return out


FIG3 = {"3a": (0.5, 0.25, 0.2), "3b": (0.5, 0.15, 0.5), "3c": (0.35, 0.15, 0.5), "3d": (0.35, 0.25, 0.05)}
FIG3_TIMES = (0.5, 5.0, 40.0)


def _phi_case(ctx, sc, z0, eta, lam, t, tag):
    n = ctx.n(200_000)
    cb = clocks.sample_poisson_lazy_batch(lam, t, n, ctx.rng(sc, tag, "clock"))
    lt = LatentTransition("phi", z0, eta=eta)
    pb = lazymart.lazy_compose_batch(lt, cb, ctx.rng(sc, tag, "latent"))
    z = pb.terminal()
    law = laws.lazy_mixed_law(laws.phi_latent_cdf(z0, eta), ClockLawParams("poisson", t, lam=lam), z0, (0.0, 1.0))
    return [
        ks_report(sc, "ks " + tag, z, law, ctx.seed),
        proportion_report(sc, "atom z0 " + tag, z == z0, math.exp(-lam * t), ctx.seed),
        martingale_mean_test(pb, (t / 4, t / 2, t), z0, sc, ctx.seed, check="martingale-mean " + tag),
    ]


def _phi_fig2(ctx: SuiteContext):
    return _phi_case(ctx, "phi-lazy-cdf-fig2", 0.5, 0.25, 0.2, 5.0, "z0=0.5,eta=0.25,lambda=0.2,t=5")


def _phi_fig3(ctx: SuiteContext):
    sc, out = "phi-lazy-cdf-fig3", []
    for key, (z0, eta, lam) in FIG3.items():
        for t in FIG3_TIMES:
            out += _phi_case(ctx, sc, z0, eta, lam, t, f"{key}:z0={z0},eta={eta},lambda={lam},t={t}")
    return out


COX_PARAMS = CirParams(0.5, 0.3, 0.2, 0.3)


def _cox(ctx: SuiteContext):
    sc, out = "cox-cir", []
    p = COX_PARAMS
    T = 3.0
    n = ctx.n(200_000)
    grid = GridSpec.per_unit(T, 200)
    lam_int = _cir_cumulative(p, grid, n, ctx.rng(sc, "cir"), (0.0, 1.0, 2.0, 3.0))
    for s, t in ((0.0, 2.0), (1.0, 3.0), (0.0, 3.0)):
        i, j = int(s), int(t)
        out.append(mean_report(sc, f"survival P({s},{t})", np.exp(-(lam_int[:, j] - lam_int[:, i])),
                               float(laws.cir_survival(s, t, p)), ctx.seed))
    t = 5.0
    m = ctx.n(100_000)
    cb = latent.sample_cox_cir_batch(p, t, m, ctx.rng(sc, "cox"))
    clock = ClockLawParams("cox_cir", t, cir=p)
    out.append(ks_report(sc, "ks cox clock theta_t", cb.terminal(), laws.clock_law(clock), ctx.seed, DISC_INFLATE))
    z0, eta = 0.35, 0.25
    pb = lazymart.lazy_compose_batch(LatentTransition("phi", z0, eta=eta), cb, ctx.rng(sc, "latent"))
    law = laws.lazy_mixed_law(laws.phi_latent_cdf(z0, eta), clock, z0, (0.0, 1.0))
    out.append(ks_report(sc, "ks cox lazy cdf", pb.terminal(), law, ctx.seed, DISC_INFLATE,
                         latent="phi", z0=z0, eta=eta, t=t))
    return out


def _cir_cumulative(p, grid, n, rng, at_times):
    """``Lambda`` at ``at_times`` (trapezoid on an exact CIR grid), chunked."""
    idx = np.round(np.asarray(at_times) / grid.step).astype(int)
    out = np.empty((n, idx.size))
    chunk = 1 << 15
    for ci, start in enumerate(range(0, n, chunk)):
        m = min(chunk, n - start)
        lam = latent.cir_grid_batch(p, grid, m, rng.child("chunk", ci))
        cum = np.zeros_like(lam)
        np.cumsum(0.5 * grid.step * (lam[:, 1:] + lam[:, :-1]), axis=1, out=cum[:, 1:])
        out[start:start + m] = cum[:, idx]
    return out


def _correlated(ctx: SuiteContext):
    sc, out = "correlated-lazy", []
    T = 1.0
    grid = GridSpec.per_unit(T, STEPS_PER_UNIT)
    for rho in (0.0, 0.5, 0.9):
        n = ctx.n(100_000)
        z = lazymart.correlated_lazy_terminal(rho, T, grid, n, ctx.rng(sc, f"rho={rho}"))
        out.append(mean_report(sc, f"mean rho={rho}", z, 0.0, ctx.seed))
        out.append(variance_report(sc, f"variance rho={rho}", z, (1 - rho ** 2) * T / 2, ctx.seed))
    return out


SCENARIOS: dict[str, Callable[[SuiteContext], list]] = {
    "poisson-lazy-clock-law": _poisson_clock_law,
    "poisson-lazy-moments": _poisson_moments,
    "brownian-lazy-clock": _brownian_clock,
    "bridge-lastzero": _bridge,
    "bessel-lazy-clock": _bessel,
    "skellam": _skellam,
    "gamma-difference": _gamma,
    "g0diff-cone": _g0_cone,
    "g0diff-laplace": _g0_laplace,
    "phi-lazy-cdf-fig2": _phi_fig2,
    "phi-lazy-cdf-fig3": _phi_fig3,
    "cox-cir": _cox,
    "correlated-lazy": _correlated,
}


def run_suite(name: str, n_paths: Optional[int] = None, seed: int = 0, workers: int = 1) -> list[ValidationReport]:
    """Run scenario ``name`` (or ``"all"``).

    ``n_paths`` rescales every sample size relative to the default 2e5
    paths (floor 1000). Scenarios draw from their own derived streams, so
    the result does not depend on ``workers``.
    """
    if name == "all":
        names = list(SCENARIOS)
    elif name in SCENARIOS:
        names = [name]
    else:
        raise KeyError(f"unknown scenario {name!r}; known: all, {', '.join(SCENARIOS)}")
    ctx = SuiteContext(int(seed), 1.0 if n_paths is None else n_paths / 200_000)
    if workers > 1 and len(names) > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(lambda nm: SCENARIOS[nm](ctx), names))
    else:
        parts = [SCENARIOS[nm](ctx) for nm in names]
    return [r for part in parts for r in part]
