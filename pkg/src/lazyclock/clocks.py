"""Lazy clock realisations and their samplers.

A lazy clock is stored by its synchronisation times only: between syncs it
is frozen, and at a sync it jumps to calendar time. The batch samplers hold
many clocks in CSR form (``offsets`` into one flat ``times`` array) so the
Monte Carlo code never loops over paths in Python.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import laws
from . import specfun as sf
from .specfun import RngStream


@dataclass(frozen=True)
class GridSpec:
    n_steps: int
    horizon: float

    def __post_init__(self):
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError("n_steps must be a positive integer")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")

    @property
    def step(self) -> float:
        return self.horizon / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_steps + 1)

    @classmethod
    def per_unit(cls, horizon: float, steps_per_unit: int = 2000) -> "GridSpec":
        return cls(max(1, int(round(steps_per_unit * horizon))), horizon)


@dataclass(frozen=True)
class JumpClock:
    """One lazy clock path on ``[0, horizon]``."""

    horizon: float
    sync_times: np.ndarray

    def __post_init__(self):
        st = np.asarray(self.sync_times, dtype=float)
        object.__setattr__(self, "sync_times", st)
        if st.ndim != 1:
            raise ValueError("sync_times must be one-dimensional")
        if st.size and (st[0] <= 0 or st[-1] > self.horizon or np.any(np.diff(st) <= 0)):
            raise ValueError("sync_times must be strictly increasing in (0, horizon]")

    def __call__(self, t):
        return clock_eval(self, t)

    def __len__(self) -> int:
        return self.sync_times.size


def clock_eval(clock: JumpClock, t):
    """``theta_t``: the last sync time at or before ``t`` (0 if none)."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > clock.horizon):
        raise ValueError("clock_eval: t outside [0, horizon]")
    idx = np.searchsorted(clock.sync_times, t_arr, side="right") - 1
    st = np.concatenate([[0.0], clock.sync_times])
    out = st[idx + 1]
    return out if out.ndim else float(out)


@dataclass
class ClockBatch:
    """Many lazy clocks on a common horizon.

    Path ``i`` owns ``times[offsets[i]:offsets[i+1]]`` (sorted). Grid-based
    clocks also record the grid cell of each sync in ``cells``.
    """

    horizon: float
    offsets: np.ndarray
    times: np.ndarray
    cells: Optional[np.ndarray] = None
    step: Optional[float] = None

    @property
    def n_paths(self) -> int:
        return self.offsets.size - 1

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    def path_ids(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_paths), self.counts)

    def clock(self, i: int) -> JumpClock:
        return JumpClock(self.horizon, self.times[self.offsets[i]:self.offsets[i + 1]].copy())

    def clocks(self) -> list[JumpClock]:
        return [self.clock(i) for i in range(self.n_paths)]

    def eval(self, t: float) -> np.ndarray:
        """``theta_t`` for every path."""
        if not 0 <= t <= self.horizon:
            raise ValueError("t outside [0, horizon]")
        ids = self.path_ids()
        n_le = np.bincount(ids[self.times <= t], minlength=self.n_paths)
        last = self.offsets[:-1] + n_le - 1
        return np.where(n_le > 0, self.times[np.maximum(last, 0)] if self.times.size else 0.0, 0.0)

    def terminal(self) -> np.ndarray:
        return self.eval(self.horizon)

    @classmethod
    def from_lists(cls, horizon: float, lists, cells=None, step=None) -> "ClockBatch":
        counts = np.array([len(x) for x in lists], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        times = np.concatenate([np.asarray(x, float) for x in lists]) if lists else np.empty(0)
        return cls(horizon, offsets, times, cells, step)


def _check_rate(lam, T):
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if not T > 0:
        raise ValueError("horizon must be positive")


# --------------------------------------------------------------------------
# Poisson lazy clock (exact)
# --------------------------------------------------------------------------

def sample_poisson_lazy_batch(lam: float, T: float, n_paths: int, rng: RngStream) -> ClockBatch:
    """Poisson count on ``[0, T]``, then that many sorted uniform times."""
    _check_rate(lam, T)
    g = rng.generator
    counts = g.poisson(lam * T, n_paths).astype(np.int64)
    total = int(counts.sum())
    ids = np.repeat(np.arange(n_paths), counts)
    times = T * (1.0 - g.random(total))
    order = np.lexsort((times, ids))
    offsets = np.concatenate([[0], np.cumsum(counts)])
    return ClockBatch(T, offsets, times[order])


def sample_poisson_lazy(lam: float, T: float, rng: RngStream) -> JumpClock:
    return sample_poisson_lazy_batch(lam, T, 1, rng).clock(0)


# --------------------------------------------------------------------------
# Brownian lazy clock on a grid
# --------------------------------------------------------------------------

def bridge_lastzero_sample_vec(x, y, delta: float, u, tol_rel: float = 1e-12) -> np.ndarray:
    """Last zero of Brownian bridges ``x -> y`` on ``[0, delta]`` by inversion.

    ``u`` are the driving uniforms. Returns ``nan`` where the bridge has no
    zero (``u < F(0)``), ``delta`` where ``y == 0``, otherwise the root of
    ``F(s) = u`` to within ``tol_rel * delta``.
    """
    x, y, u = (np.asarray(v, dtype=float) for v in (x, y, u))
    atom = np.asarray(laws.bridge_lastzero_atom(x, y, delta))
    hit = u >= atom
    out = np.full(np.broadcast(x, y, u).shape, np.nan)
    end = hit & (y == 0)
    out[end] = delta
    solve = hit & (y != 0)
    if np.any(solve):
        xs, ys, us = (np.broadcast_to(v, out.shape)[solve] for v in (x, y, u))
        f = lambda s, i: laws.bridge_lastzero_cdf(s, xs[i], ys[i], delta) - us[i]
        df = lambda s, i: laws.bridge_lastzero_pdf(s, xs[i], ys[i], delta)
        lo = np.zeros(xs.size)
        hi = np.full(xs.size, delta)
        out[solve] = sf.newton_bracketed_vec(f, df, lo, hi, tol_rel * delta)
    return out


def bridge_lastzero_sample(x: float, y: float, delta: float, rng: RngStream) -> Optional[float]:
    """Last zero of one bridge, or ``None`` when it never reaches 0."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    u = rng.generator.random()
    s = float(bridge_lastzero_sample_vec(x, y, delta, u)[()])
    return None if math.isnan(s) else s


def _brownian_chunk(m, grid: GridSpec, a, b, g, last_only):
    n, dt = grid.n_steps, grid.step
    w = np.empty((m, n + 1))
    w[:, 0] = 0.0
    np.cumsum(g.standard_normal((m, n)) * math.sqrt(dt), axis=1, out=w[:, 1:])
    u = g.random((m, n))
    w -= a + b * grid.times[None, :]
    x, y = w[:, :-1], w[:, 1:]
    xy = x * y
    atom = -np.expm1(-(xy + np.abs(xy)) / dt)
    hit = u >= atom
    if last_only:
        any_hit = hit.any(axis=1)
        cell = n - 1 - np.argmax(hit[:, ::-1], axis=1)
        rows = np.nonzero(any_hit)[0]
        cells = cell[rows]
    else:
        rows, cells = np.nonzero(hit)
    s = bridge_lastzero_sample_vec(x[rows, cells], y[rows, cells], dt, u[rows, cells])
    counts = np.bincount(rows, minlength=m)
    return counts, cells * dt + s, cells


def sample_brownian_lazy_batch(T: float, grid: GridSpec, n_paths: int, rng: RngStream,
                               a: float = 0.0, b: float = 0.0, last_only: bool = False) -> ClockBatch:
    """Grid sampler for the last zeros of ``W_s - a - b s``.

    Each grid cell contributes at most one sync time, the last zero inside
    it. With ``last_only`` only the final sync of each path is kept; the
    random draws are identical, so ``terminal()`` agrees with the full run.
    """
    if abs(grid.horizon - T) > 1e-12 * max(T, 1.0):
        raise ValueError("grid horizon must equal T")
    chunk = max(1, (1 << 21) // grid.n_steps)
    all_counts, all_times, all_cells = [], [], []
    for ci, start in enumerate(range(0, n_paths, chunk)):
        m = min(chunk, n_paths - start)
        g = rng.child("bm-chunk", ci).generator
        c, tms, cls = _brownian_chunk(m, grid, a, b, g, last_only)
        all_counts.append(c)
        all_times.append(np.minimum(tms, T))
        all_cells.append(cls)
    counts = np.concatenate(all_counts) if all_counts else np.zeros(0, np.int64)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    return ClockBatch(T, offsets, np.concatenate(all_times) if all_times else np.empty(0),
                      np.concatenate(all_cells) if all_cells else np.empty(0, np.int64), grid.step)


def sample_brownian_lazy(T: float, grid: GridSpec, rng: RngStream, a: float = 0.0, b: float = 0.0) -> JumpClock:
    return sample_brownian_lazy_batch(T, grid, 1, rng, a, b).clock(0)


# --------------------------------------------------------------------------
# Bessel lazy clock: fixed-time marginal only
# --------------------------------------------------------------------------

def sample_bessel_lazy_marginal(nu: float, t: float, rng: RngStream, size=None):
    """``t * G1 / (G1 + G2)`` with ``G1 ~ Gamma(|nu|)``, ``G2 ~ Gamma(1 + nu)``."""
    if not -1.0 < nu < 0.0:
        raise ValueError("nu must lie in (-1, 0)")
    if not t > 0:
        raise ValueError("t must be positive")
    g1 = sf.draw("gamma", {"shape": -nu}, rng, size)
    g2 = sf.draw("gamma", {"shape": 1.0 + nu}, rng, size)
    return t * g1 / (g1 + g2)
