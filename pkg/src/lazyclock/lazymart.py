"""Lazy martingales: a latent martingale read through a lazy clock.

``Z_t = Z~_{theta_t}`` only needs the latent at the sync times, so each
path costs one exact transition per sync and nothing in between.
"""
from __future__ import annotations

import math

import numpy as np

from . import clocks
from .clocks import ClockBatch, GridSpec, JumpClock
from .latent import LatentTransition, PathBatch, PwcPath, latent_on_times
from .specfun import RngStream


def lazy_compose_batch(lt: LatentTransition, batch: ClockBatch, rng: RngStream) -> PathBatch:
    """Latent sampled exactly at every sync time of every clock in ``batch``.

    ``rng`` must be independent of the stream that produced the clocks.
    """
    vals = latent_on_times(lt, batch.offsets, batch.times, rng)
    return PathBatch(batch.horizon, np.full(batch.n_paths, float(lt.state)),
                     batch.offsets.copy(), batch.times.copy(), np.asarray(vals, dtype=float))


def lazy_compose(lt: LatentTransition, clock: JumpClock, rng: RngStream) -> PwcPath:
    batch = ClockBatch(clock.horizon, np.array([0, len(clock)]), clock.sync_times)
    return lazy_compose_batch(lt, batch, rng).path(0)


def sync_times_of(path: PwcPath) -> np.ndarray:
    """Recover the sync times of a lazy-composed path from its value changes.

    Valid when the latent has continuous marginals, so that successive sync
    values differ almost surely.
    """
    return path.jump_times()


# --------------------------------------------------------------------------
# Correlated lazy martingale: sqrt(1 - rho^2) W_perp at the lazy clock of W
# --------------------------------------------------------------------------

def _check_rho(rho):
    if not -1.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [-1, 1]")


def _bridge_at(tau, cells, left, right, dt, normals):
    frac = (tau - cells * dt) / dt
    frac = np.clip(frac, 0.0, 1.0)
    return left + frac * (right - left) + np.sqrt(dt * frac * (1.0 - frac)) * normals


def correlated_lazy_batch(rho: float, T: float, grid: GridSpec, n_paths: int, rng: RngStream) -> PathBatch:
    """Full paths of ``sqrt(1 - rho^2) W_perp(g_t(W))`` on a grid.

    ``W`` and its lazy clock come from ``rng.child("W")`` exactly as in
    :func:`clocks.sample_brownian_lazy_batch`; ``W_perp`` is simulated on
    the same grid and bridged to each sync time.
    """
    _check_rho(rho)
    scale = math.sqrt(max(0.0, 1.0 - rho * rho))
    batch = clocks.sample_brownian_lazy_batch(T, grid, n_paths, rng.child("W"))
    chunk = max(1, (1 << 21) // grid.n_steps)
    vals = np.empty(batch.times.size)
    dt = grid.step
    for ci, start in enumerate(range(0, n_paths, chunk)):
        m = min(chunk, n_paths - start)
        g = rng.child("Wperp-chunk", ci).generator
        wp = np.zeros((m, grid.n_steps + 1))
        np.cumsum(g.standard_normal((m, grid.n_steps)) * math.sqrt(dt), axis=1, out=wp[:, 1:])
        sl = slice(batch.offsets[start], batch.offsets[start + m])
        rows = np.repeat(np.arange(m), batch.counts[start:start + m])
        cells = batch.cells[sl]
        nz = g.standard_normal(rows.size)
        vals[sl] = _bridge_at(batch.times[sl], cells, wp[rows, cells], wp[rows, cells + 1], dt, nz)
    return PathBatch(T, np.zeros(n_paths), batch.offsets.copy(), batch.times.copy(), scale * vals)


def correlated_lazy_path(rho: float, T: float, grid: GridSpec, rng: RngStream) -> PwcPath:
    return correlated_lazy_batch(rho, T, grid, 1, rng).path(0)


def correlated_lazy_terminal(rho: float, T: float, grid: GridSpec, n_paths: int, rng: RngStream) -> np.ndarray:
    """``Z_T`` only: same clock draws, ``W_perp`` drawn just around the last sync.

    Equal in law to the terminal value of :func:`correlated_lazy_batch`.
    """
    _check_rho(rho)
    scale = math.sqrt(max(0.0, 1.0 - rho * rho))
    batch = clocks.sample_brownian_lazy_batch(T, grid, n_paths, rng.child("W"), last_only=True)
    dt = grid.step
    g = rng.child("Wperp-terminal").generator
    k = batch.times.size
    left = np.sqrt(batch.cells * dt) * g.standard_normal(k)
    right = left + math.sqrt(dt) * g.standard_normal(k)
    z = _bridge_at(batch.times, batch.cells, left, right, dt, g.standard_normal(k))
    out = np.zeros(n_paths)
    out[batch.counts > 0] = scale * z
    return out
