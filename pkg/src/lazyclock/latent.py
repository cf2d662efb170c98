"""Latent martingales with exact transitions and the direct PWC constructions.

Paths are right-continuous step functions. ``PwcPath`` is one path;
``PathBatch`` stores many in CSR form, mirroring ``clocks.ClockBatch``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import clocks
from . import specfun as sf
from .clocks import ClockBatch, GridSpec, JumpClock
from .laws import CirParams
from .specfun import RngStream


# --------------------------------------------------------------------------
# Path data model
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PwcPath:
    """Right-continuous step path: value ``values[i]`` on ``[times[i], times[i+1])``."""

    times: np.ndarray
    values: np.ndarray
    horizon: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        if t.shape != v.shape or t.ndim != 1 or t.size == 0:
            raise ValueError("times and values must be equal-length 1-d arrays")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0) or t[-1] > self.horizon:
            raise ValueError("times must start at 0, increase strictly and stay within the horizon")

    @property
    def z0(self) -> float:
        return float(self.values[0])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.horizon):
            raise ValueError("t outside [0, horizon]")
        out = self.values[np.searchsorted(self.times, t, side="right") - 1]
        return out if out.ndim else float(out)

    def jump_times(self) -> np.ndarray:
        """Times at which the value actually changes."""
        return self.times[1:][np.diff(self.values) != 0]

    def jumps(self) -> np.ndarray:
        d = np.diff(self.values)
        return d[d != 0]

    def is_pwc(self) -> bool:
        """Structural check: the path equals its start plus the sum of its jumps."""
        return bool(np.isclose(self.values[-1], self.values[0] + self.jumps().sum(), rtol=0, atol=1e-9 * (1 + np.abs(self.values).max())))


@dataclass
class PathBatch:
    """Many step paths sharing a horizon; jumps of path ``i`` are
    ``times/values[offsets[i]:offsets[i+1]]`` (value right after each jump)."""

    horizon: float
    z0: np.ndarray
    offsets: np.ndarray
    times: np.ndarray
    values: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.offsets.size - 1

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    def path_ids(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_paths), self.counts)

    def value_at(self, t: float) -> np.ndarray:
        if not 0 <= t <= self.horizon:
            raise ValueError("t outside [0, horizon]")
        n_le = np.bincount(self.path_ids()[self.times <= t], minlength=self.n_paths)
        last = self.offsets[:-1] + n_le - 1
        if self.values.size == 0:
            return np.broadcast_to(self.z0, (self.n_paths,)).astype(float)
        return np.where(n_le > 0, self.values[np.maximum(last, 0)], self.z0)

    def terminal(self) -> np.ndarray:
        return self.value_at(self.horizon)

    def path(self, i: int) -> PwcPath:
        sl = slice(self.offsets[i], self.offsets[i + 1])
        z0 = float(np.broadcast_to(self.z0, (self.n_paths,))[i])
        return PwcPath(np.concatenate([[0.0], self.times[sl]]), np.concatenate([[z0], self.values[sl]]), self.horizon)

    def paths(self) -> list[PwcPath]:
        return [self.path(i) for i in range(self.n_paths)]


def _positions(offsets: np.ndarray) -> np.ndarray:
    """Index of each flat entry within its own path."""
    counts = np.diff(offsets)
    return np.arange(offsets[-1]) - np.repeat(offsets[:-1], counts)


# --------------------------------------------------------------------------
# Latent martingales with exact transitions
# --------------------------------------------------------------------------

LATENT_VARIANTS = ("brownian", "doleans", "phi")


@dataclass(frozen=True)
class LatentTransition:
    """A latent martingale and its current state.

    ``brownian``: ``dZ = sigma dW``; ``doleans``: ``dZ = sigma Z dW``;
    ``phi``: ``Z = Phi(X)`` with ``dX = (eta^2/2) X dt + eta dW``, a
    martingale in ``(0, 1)``.
    """

    variant: str
    state: float
    sigma: float = 1.0
    eta: float = 0.25

    def __post_init__(self):
        if self.variant not in LATENT_VARIANTS:
            raise ValueError(f"unknown latent variant {self.variant!r}")
        if self.variant == "phi" and not 0 < self.state < 1:
            raise ValueError("phi latent state must lie in (0, 1)")
        if self.variant == "doleans" and not self.state > 0:
            raise ValueError("doleans latent state must be positive")
        if self.variant == "phi" and not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.variant != "phi" and not self.sigma >= 0:
            raise ValueError("sigma must be non-negative")

    # Work in a coordinate where each transition is Gaussian.
    def to_internal(self, z):
        if self.variant == "phi":
            return sf.norm_ppf(z)
        if self.variant == "doleans":
            return np.log(z)
        return np.asarray(z, dtype=float)

    def from_internal(self, y):
        if self.variant == "phi":
            return sf.norm_cdf(y)
        if self.variant == "doleans":
            return np.exp(y)
        return y

    def advance_internal(self, y, dt, normals):
        dt = np.asarray(dt, dtype=float)
        if self.variant == "phi":
            e2 = self.eta ** 2
            return y * np.exp(0.5 * e2 * dt) + np.sqrt(np.expm1(e2 * dt)) * normals
        step = self.sigma * np.sqrt(dt) * normals
        if self.variant == "doleans":
            return y + step - 0.5 * self.sigma ** 2 * dt
        return y + step


def transition_sample(lt: LatentTransition, s: float, t: float, rng: RngStream, size=None):
    """Exact draw of ``Z_t`` given ``Z_s = lt.state``."""
    if s > t:
        raise ValueError("transition_sample: need s <= t")
    if s == t:
        return lt.state if size is None else np.full(size, lt.state)
    n = sf.draw("normal", None, rng, size)
    y = lt.advance_internal(lt.to_internal(lt.state), t - s, n)
    out = lt.from_internal(y)
    return float(out) if size is None else out


def latent_on_times(lt: LatentTransition, offsets: np.ndarray, times: np.ndarray, rng: RngStream) -> np.ndarray:
    """Latent values at each path's sorted times by sequential exact transitions."""
    pos = _positions(offsets)
    prev_t = np.where(pos > 0, np.concatenate([[0.0], times[:-1]]), 0.0)
    dt = times - prev_t
    normals = rng.generator.standard_normal(times.size)
    y = np.empty(times.size)
    y0 = float(lt.to_internal(lt.state))
    starts = offsets[:-1]
    counts = np.diff(offsets)
    kmax = int(counts.max()) if counts.size else 0
    for k in range(kmax):
        idx = starts[counts > k] + k
        base = y0 if k == 0 else y[idx - 1]
        y[idx] = lt.advance_internal(base, dt[idx], normals[idx])
    return lt.from_internal(y)


# --------------------------------------------------------------------------
# Autoregressive step martingales
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TwoPointIncrements:
    """``Y_k`` on ``{6a/(pi k)^2, 6b/(pi k)^2}`` with mean zero (needs ``a < 0 < b``).

    Partial sums stay in ``[a, b]`` because ``sum 6/(pi k)^2 = 1``.
    """

    a: float = -1.0
    b: float = 1.0

    def __post_init__(self):
        if not self.a < 0 < self.b:
            raise ValueError("need a < 0 < b")

    def sample(self, k, rng: RngStream):
        k = np.asarray(k, dtype=float)
        scale = 6.0 / (math.pi ** 2 * k ** 2)
        p_low = self.b / (self.b - self.a)
        low = rng.generator.random(k.shape) < p_low
        return np.where(low, self.a, self.b) * scale

    def __call__(self, k, rng):
        return float(self.sample(k, rng))


@dataclass(frozen=True)
class UniformIncrements:
    """``Y_k`` uniform on ``[-6c/(pi k)^2, 6c/(pi k)^2]``; partial sums in ``[-c, c]``."""

    c: float = 1.0

    def sample(self, k, rng: RngStream):
        k = np.asarray(k, dtype=float)
        half = 6.0 * self.c / (math.pi ** 2 * k ** 2)
        return (2.0 * rng.generator.random(k.shape) - 1.0) * half

    def __call__(self, k, rng):
        return float(self.sample(k, rng))


def step_martingale_path(increment_sampler: Callable, jump_times, z0: float, rng: RngStream,
                         horizon: Optional[float] = None) -> PwcPath:
    """``Z_t = z0 + sum_k Y_k 1{tau_k <= t}`` with ``Y_k = increment_sampler(k, rng)``."""
    if isinstance(jump_times, JumpClock):
        taus, T = jump_times.sync_times, jump_times.horizon
    else:
        taus = np.asarray(jump_times, dtype=float)
        T = horizon if horizon is not None else (float(taus[-1]) if taus.size else 0.0)
    if taus.size and (taus[0] <= 0 or np.any(np.diff(taus) <= 0)):
        raise ValueError("jump times must be positive and strictly increasing")
    ys = np.array([increment_sampler(k, rng) for k in range(1, taus.size + 1)], dtype=float)
    vals = z0 + np.cumsum(ys)
    return PwcPath(np.concatenate([[0.0], taus]), np.concatenate([[z0], vals]), T)


def step_martingale_batch(increments, batch: ClockBatch, z0: float, rng: RngStream) -> PathBatch:
    """Vectorised :func:`step_martingale_path` over a batch of jump-time sets."""
    k = _positions(batch.offsets) + 1
    ys = increments.sample(k, rng) if k.size else np.empty(0)
    csum = np.cumsum(ys)
    base = np.repeat(np.concatenate([[0.0], csum])[batch.offsets[:-1]], batch.counts)
    vals = z0 + csum - base
    return PathBatch(batch.horizon, np.full(batch.n_paths, float(z0)), batch.offsets.copy(), batch.times.copy(), vals)


# --------------------------------------------------------------------------
# Differences of subordinators and of Brownian lazy clocks
# --------------------------------------------------------------------------

def skellam_batch(lam: float, T: float, n_paths: int, rng: RngStream) -> PathBatch:
    """``N1 - N2`` for independent rate-``lam`` Poisson processes."""
    if not lam > 0 or not T > 0:
        raise ValueError("lambda and T must be positive")
    g = rng.generator
    c1 = g.poisson(lam * T, n_paths)
    c2 = g.poisson(lam * T, n_paths)
    counts = (c1 + c2).astype(np.int64)
    ids = np.repeat(np.arange(n_paths), counts)
    pos = np.arange(counts.sum()) - np.repeat(np.concatenate([[0], np.cumsum(counts)[:-1]]), counts)
    signs = np.where(pos < np.repeat(c1, counts), 1.0, -1.0)
    times = T * (1.0 - g.random(ids.size))
    order = np.lexsort((times, ids))
    offsets = np.concatenate([[0], np.cumsum(counts)])
    steps = signs[order]
    csum = np.cumsum(steps)
    base = np.repeat(np.concatenate([[0.0], csum])[offsets[:-1]], counts)
    return PathBatch(T, np.zeros(n_paths), offsets, times[order], csum - base)


def skellam_path(lam: float, T: float, rng: RngStream) -> PwcPath:
    return skellam_batch(lam, T, 1, rng).path(0)


def _gamma_check(a, b):
    if not a > 0 or not b > 0:
        raise ValueError("a and b must be positive")


def gammadiff_grid(a: float, b: float, grid: GridSpec, n_paths: int, rng: RngStream,
                   observe: Optional[Sequence[int]] = None) -> np.ndarray:
    """Gamma-difference paths at grid indices ``observe`` (default: all).

    Increments over each cell are exact ``Gamma(a delta, b)`` differences,
    so marginals at grid times are exact. When ``observe`` is given, the
    cells between consecutive observed indices are merged into one
    ``Gamma(a k delta, b)`` draw (gamma additivity): same law, far fewer draws.
    """
    _gamma_check(a, b)
    idx = np.arange(grid.n_steps + 1) if observe is None else np.asarray(observe) % (grid.n_steps + 1)
    if np.any(np.diff(idx) < 0):
        raise ValueError("observe indices must be sorted")
    widths = np.diff(np.concatenate([[0], idx])) * grid.step
    pos = widths > 0
    out = np.zeros((n_paths, idx.size))
    rows = max(1, (1 << 21) // max(1, int(pos.sum())))
    for ci, start in enumerate(range(0, n_paths, rows)):
        m = min(rows, n_paths - start)
        g = rng.child("gamma-chunk", ci).generator
        shape = a * widths[pos]
        inc = (g.standard_gamma(shape, (m, shape.size)) - g.standard_gamma(shape, (m, shape.size))) / b
        z = np.zeros((m, idx.size))
        z[:, pos] = inc
        out[start:start + m] = np.cumsum(z, axis=1)
    return out


def gammadiff_path(a: float, b: float, T: float, grid: GridSpec, rng: RngStream) -> PwcPath:
    z = gammadiff_grid(a, b, grid, 1, rng)[0]
    return PwcPath(grid.times, z, T)


def _last_of(times, mask, start):
    """Running value of the latest masked entry within each path (0 before any)."""
    idx = np.maximum.accumulate(np.where(mask, np.arange(times.size), -1))
    return np.where(idx >= start, times[np.maximum(idx, 0)], 0.0)


def g0diff_batch(T: float, grid: GridSpec, n_paths: int, rng: RngStream) -> PathBatch:
    """``g0(W1) - g0(W2)`` from two independent grid-sampled Brownian lazy clocks."""
    c1 = clocks.sample_brownian_lazy_batch(T, grid, n_paths, rng.child("g0-first"))
    c2 = clocks.sample_brownian_lazy_batch(T, grid, n_paths, rng.child("g0-second"))
    ids = np.concatenate([c1.path_ids(), c2.path_ids()])
    times = np.concatenate([c1.times, c2.times])
    which = np.concatenate([np.zeros(c1.times.size, bool), np.ones(c2.times.size, bool)])
    order = np.lexsort((times, ids))
    ids, times, which = ids[order], times[order], which[order]
    counts = c1.counts + c2.counts
    offsets = np.concatenate([[0], np.cumsum(counts)])
    start = np.repeat(offsets[:-1], counts)
    th1 = _last_of(times, ~which, start)
    th2 = _last_of(times, which, start)
    return PathBatch(T, np.zeros(n_paths), offsets, times, th1 - th2)


def g0diff_path(T: float, grid: GridSpec, rng: RngStream) -> PwcPath:
    return g0diff_batch(T, grid, 1, rng).path(0)


def g0diff_terminal(T: float, grid: GridSpec, n_paths: int, rng: RngStream) -> np.ndarray:
    """``Z_T`` only; same draws as :func:`g0diff_batch`."""
    c1 = clocks.sample_brownian_lazy_batch(T, grid, n_paths, rng.child("g0-first"), last_only=True)
    c2 = clocks.sample_brownian_lazy_batch(T, grid, n_paths, rng.child("g0-second"), last_only=True)
    return c1.terminal() - c2.terminal()


# --------------------------------------------------------------------------
# CIR intensity and Cox jump times
# --------------------------------------------------------------------------

def cir_grid_batch(p: CirParams, grid: GridSpec, n_paths: int, rng: RngStream) -> np.ndarray:
    """Exact CIR values on the grid via scaled non-central chi-square transitions."""
    dt = grid.step
    ekd = math.exp(-p.k * dt)
    c = 2.0 * p.k / (p.sigma ** 2 * (1.0 - ekd))
    lam = np.empty((n_paths, grid.n_steps + 1))
    lam[:, 0] = p.lam0
    for j in range(grid.n_steps):
        nc = 2.0 * c * lam[:, j] * ekd
        lam[:, j + 1] = sf.draw("noncentral_chi2", {"dof": p.dof, "noncentrality": nc}, rng, n_paths) / (2.0 * c)
    return lam


def cir_integrated(p: CirParams, T: float, n_paths: int, rng: RngStream, steps_per_unit: int = 500) -> np.ndarray:
    """``Lambda_T = int_0^T lam`` by the trapezoid rule on an exact CIR grid."""
    grid = GridSpec.per_unit(T, steps_per_unit)
    out = np.empty(n_paths)
    chunk = 1 << 15
    for ci, start in enumerate(range(0, n_paths, chunk)):
        m = min(chunk, n_paths - start)
        lam = cir_grid_batch(p, grid, m, rng.child("cir-int", ci))
        out[start:start + m] = grid.step * (lam[:, 1:-1].sum(axis=1) + 0.5 * (lam[:, 0] + lam[:, -1]))
    return out


def sample_cox_cir_batch(p: CirParams, T: float, n_paths: int, rng: RngStream,
                         steps_per_unit: int = 250) -> ClockBatch:
    """Jump times of a Cox process with CIR intensity, by thinning.

    The intensity is simulated exactly on a grid and linearly interpolated;
    candidates come from a homogeneous process at each path's grid maximum
    and are kept with probability ``lam(t) / max``.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    grid = GridSpec.per_unit(T, steps_per_unit)
    dt = grid.step
    lists_t = []
    chunk = 1 << 14
    for ci, start in enumerate(range(0, n_paths, chunk)):
        m = min(chunk, n_paths - start)
        sub = rng.child("cox-chunk", ci)
        lam = cir_grid_batch(p, grid, m, sub)
        g = sub.generator
        bound = lam.max(axis=1)
        counts = g.poisson(bound * T)
        ids = np.repeat(np.arange(m), counts)
        cand = T * (1.0 - g.random(ids.size))
        cell = np.minimum((cand / dt).astype(np.int64), grid.n_steps - 1)
        frac = cand / dt - cell
        lam_c = lam[ids, cell] * (1.0 - frac) + lam[ids, cell + 1] * frac
        keep = g.random(ids.size) * bound[ids] < lam_c
        ids, cand = ids[keep], cand[keep]
        order = np.lexsort((cand, ids))
        lists_t.append((ids[order] + start, cand[order]))
    ids = np.concatenate([x[0] for x in lists_t]) if lists_t else np.empty(0, np.int64)
    times = np.concatenate([x[1] for x in lists_t]) if lists_t else np.empty(0)
    counts = np.bincount(ids, minlength=n_paths)
    return ClockBatch(T, np.concatenate([[0], np.cumsum(counts)]), times)


def sample_cox_cir(p: CirParams, T: float, rng: RngStream) -> JumpClock:
    return sample_cox_cir_batch(p, T, 1, rng).clock(0)
