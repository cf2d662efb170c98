"""Special functions, quadrature, root finding and random variates.

Everything downstream evaluates through this module so that numerical
conventions (scaled Bessel functions, elliptic parameter ``m``, the graded
quadrature used for mixing integrals) live in exactly one place.
"""
from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy import integrate as _sp_integrate
from scipy import optimize as _sp_optimize
from scipy import special as _sp

MASK64 = (1 << 64) - 1


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


class BracketError(ValueError):
    """The supplied interval does not bracket a sign change."""


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


# --------------------------------------------------------------------------
# Normal distribution
# --------------------------------------------------------------------------

def norm_cdf(x):
    """Standard normal CDF; saturates cleanly at 0 and 1."""
    return _sp.ndtr(x)


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return out if out.ndim else float(out)


def log_norm_cdf(x):
    """``log(norm_cdf(x))`` without underflow in the left tail."""
    return _sp.log_ndtr(x)


def norm_ppf(p):
    return _sp.ndtri(p)


# --------------------------------------------------------------------------
# Bessel and elliptic functions
# --------------------------------------------------------------------------

def bessel_i_scaled(k, x):
    """Return ``exp(-x) * I_k(x)`` for integer order ``k >= 0`` and ``x >= 0``.

    Only the scaled form is exposed; the Skellam pmf needs exactly this
    product and the unscaled value overflows long before ``x = 1e6``.
    """
    x = np.asarray(x, dtype=float)
    k = np.asarray(k)
    if np.any(x < 0):
        raise ValueError("bessel_i_scaled: x must be >= 0")
    if np.any(k < 0) or np.any(k != np.round(k)):
        raise ValueError("bessel_i_scaled: order must be a non-negative integer")
    out = _sp.ive(k.astype(float), x)
    return out if np.ndim(out) else float(out)


def bessel_k(beta, x):
    """Modified Bessel function of the second kind ``K_beta(x)``, ``x > 0``."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("bessel_k: x must be > 0")
    out = _sp.kv(beta, x)
    return out if np.ndim(out) else float(out)


def complete_elliptic_k(m):
    """Complete elliptic integral of the first kind, parameter ``m = k**2``.

    ``K(m) = int_0^{pi/2} dx / sqrt(1 - m sin(x)**2)``. A modulus ``k`` maps
    to ``m = k**2``. Returns ``inf`` once ``m > 1 - 1e-15``.
    """
    m_arr = np.asarray(m, dtype=float)
    if np.any(m_arr >= 1.0) or np.any(m_arr < 0.0):
        raise ValueError("complete_elliptic_k: need 0 <= m < 1")
    out = np.where(m_arr > 1.0 - 1e-15, np.inf, _sp.ellipk(np.minimum(m_arr, 1.0 - 1e-15)))
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------
# Quadrature
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerance settings for :func:`integrate`.

    ``max_depth`` bounds the number of adaptive subintervals.
    """

    abs_tol: float = 1e-10
    max_depth: int = 60

    def __post_init__(self):
        _require(self.abs_tol > 0, "abs_tol must be positive")
        _require(self.max_depth >= 1, "max_depth must be >= 1")


DEFAULT_QUAD = QuadratureSpec()


def integrate(f: Callable[[float], float], a: float, b: float,
              spec: QuadratureSpec = DEFAULT_QUAD, singular: str = "none",
              points=None) -> float:
    """Adaptive Gauss-Kronrod integral of ``f`` over ``[a, b]``.

    ``singular`` in {"none", "left", "right", "both"} applies the substitution
    ``s = a + u**2`` (mirrored at ``b``) so that ``s**-1/2``-type endpoint
    singularities become smooth. Infinite limits are passed straight through.
    Raises :class:`QuadratureError` when the tolerance is not met.
    """
    if a == b:
        return 0.0
    if b < a:
        return -integrate(f, b, a, spec, {"left": "right", "right": "left"}.get(singular, singular), points)
    if singular == "both":
        mid = 0.5 * (a + b)
        return integrate(f, a, mid, spec, "left") + integrate(f, mid, b, spec, "right")
    if singular == "left":
        return _quad(lambda u: 2.0 * u * f(a + u * u), 0.0, math.sqrt(b - a), spec, None)
    if singular == "right":
        return _quad(lambda u: 2.0 * u * f(b - u * u), 0.0, math.sqrt(b - a), spec, None)
    if singular != "none":
        raise ValueError(f"unknown singular mode {singular!r}")
    return _quad(f, a, b, spec, points)


def _quad(f, a, b, spec, points):
    kwargs = {}
    if points is not None and np.isfinite(a) and np.isfinite(b):
        kwargs["points"] = points
    with warnings.catch_warnings():
        warnings.simplefilter("error", _sp_integrate.IntegrationWarning)
        try:
            val, err = _sp_integrate.quad(f, a, b, epsabs=spec.abs_tol, epsrel=1e-14,
                                          limit=spec.max_depth, **kwargs)
        except _sp_integrate.IntegrationWarning as exc:
            raise QuadratureError(str(exc)) from exc
    if not math.isfinite(val):
        raise QuadratureError("non-finite integral")
    return float(val)


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to ``[0, 1]``."""
    if order not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(order)
        _GL_CACHE[order] = (0.5 * (x + 1.0), 0.5 * w)
    return _GL_CACHE[order]


@dataclass(frozen=True)
class GradedRule:
    """Fixed composite rule on ``[lo_cut, hi_cut]``, geometrically graded.

    Panels halve in width toward each graded end, so integrands with
    algebraic or logarithmic endpoint behaviour (and integrands with a
    transition layer whose width shrinks toward the endpoint) are resolved
    at every scale. The pieces ``[a, lo_cut]`` and ``[hi_cut, b]`` are left
    to the caller, who typically knows their mass in closed form.
    """

    nodes: np.ndarray
    weights: np.ndarray
    a: float
    b: float
    lo_cut: float
    hi_cut: float


def graded_rule(a: float, b: float, left: bool = True, right: bool = False,
                levels: int = 40, order: int = 8) -> GradedRule:
    xg, wg = gauss_legendre(order)
    h = b - a
    _require(h > 0, "graded_rule: need b > a")
    edges = [a, b]
    if left and right:
        edges = [a + 0.5 * h * 2.0 ** -j for j in range(levels, -1, -1)]
        edges += [b - 0.5 * h * 2.0 ** -j for j in range(1, levels + 1)]
    elif left:
        edges = [a + h * 2.0 ** -j for j in range(levels, -1, -1)]
    elif right:
        edges = [a] + [b - h * 2.0 ** -j for j in range(1, levels + 1)]
    edges = np.asarray(edges)
    lo, hi = edges[:-1], edges[1:]
    width = hi - lo
    nodes = (lo[:, None] + width[:, None] * xg[None, :]).ravel()
    weights = (width[:, None] * wg[None, :]).ravel()
    return GradedRule(nodes, weights, a, b, float(edges[0]), float(edges[-1]))


# --------------------------------------------------------------------------
# Root finding
# --------------------------------------------------------------------------

def find_root(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-12) -> float:
    """Brent root of ``f`` on ``[lo, hi]`` located to within ``tol``."""
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return float(lo)
    if fhi == 0.0:
        return float(hi)
    if flo * fhi > 0:
        raise BracketError(f"no sign change on [{lo}, {hi}]")
    return float(_sp_optimize.brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500))


def bisect_vec(f: Callable[[np.ndarray], np.ndarray], lo, hi, tol) -> np.ndarray:
    """Vectorised bisection for many independent monotone root problems.

    ``f`` must be increasing on each ``[lo_i, hi_i]`` with ``f(lo_i) <= 0 <=
    f(hi_i)``. Iterates until every bracket is narrower than ``tol`` (scalar
    or per-element) and returns the bracket midpoints.
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    tol = np.broadcast_to(np.asarray(tol, dtype=float), lo.shape)
    width = np.max(hi - lo) if lo.size else 0.0
    n_iter = int(np.ceil(np.log2(max(width / max(np.min(tol), 1e-300), 1.0)))) + 1 if lo.size else 0
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        pos = f(mid) >= 0
        hi = np.where(pos, mid, hi)
        lo = np.where(pos, lo, mid)
    return 0.5 * (lo + hi)


def newton_bracketed_vec(f, df, lo, hi, tol, max_iter: int = 200) -> np.ndarray:
    """Safeguarded Newton for many increasing root problems at once.

    Each element keeps a sign-change bracket ``[lo, hi]``; Newton steps that
    leave it fall back to bisection. On return every bracket is narrower than
    ``tol`` and the midpoint is reported, as with :func:`bisect_vec`.
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    tol = np.broadcast_to(np.asarray(tol, dtype=float), lo.shape).copy()
    x = 0.5 * (lo + hi)
    active = np.nonzero(hi - lo > tol)[0]
    for _ in range(max_iter):
        if active.size == 0:
            break
        xa, la, ha, ta = x[active], lo[active], hi[active], tol[active]
        fx = f(xa, active)
        pos = fx >= 0
        ha = np.where(pos, xa, ha)
        la = np.where(pos, la, xa)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            xn = xa - fx / df(xa, active)
        finite = np.isfinite(xn)
        # once Newton has converged, pinch the bracket around the iterate
        near = finite & (np.abs(xn - xa) < 0.25 * ta)
        xn = np.where(near, np.clip(xn, la, ha), xn)
        bad = ~finite | (~near & ((xn <= la) | (xn >= ha)))
        xn = np.where(bad, 0.5 * (la + ha), xn)
        if np.any(near):
            idx = np.nonzero(near)[0]
            pl = np.maximum(xn[idx] - 0.5 * ta[idx], la[idx])
            ph = np.minimum(xn[idx] + 0.5 * ta[idx], ha[idx])
            fl = f(pl, active[idx])
            fh = f(ph, active[idx])
            ok = (fl <= 0) & (fh >= 0)
            la[idx] = np.where(ok, pl, la[idx])
            ha[idx] = np.where(ok, ph, ha[idx])
        x[active], lo[active], hi[active] = xn, la, ha
        done = ha - la <= ta
        x[active[done]] = 0.5 * (la[done] + ha[done])
        active = active[~done]
    if active.size:
        x[active] = bisect_vec(lambda s: f(s, active), lo[active], hi[active], tol[active])
    return x


# --------------------------------------------------------------------------
# Random streams and variates
# --------------------------------------------------------------------------

def _mix64(*words: int) -> int:
    ss = np.random.SeedSequence([w & MASK64 for w in words])
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return (int(hi) << 32) | int(lo)


@dataclass
class RngStream:
    """Seedable, splittable random source backed by a Philox generator.

    The generator key is derived by hashing ``(seed, stream_id)``, so the same
    pair always replays the same sequence on every platform, and distinct
    stream ids give unrelated sequences. ``child`` derives sub-streams
    without consuming draws from the parent.
    """

    seed: int
    stream_id: int = 0
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.seed = int(self.seed) & MASK64
        self.stream_id = int(self.stream_id) & MASK64
        ss = np.random.SeedSequence([self.seed, self.stream_id])
        self.generator = np.random.Generator(np.random.Philox(ss))

    def child(self, *keys: int | str) -> "RngStream":
        words = [_key_word(k) for k in keys]
        return RngStream(self.seed, _mix64(self.stream_id, *words))

    def spawn(self, n: int) -> list["RngStream"]:
        return [self.child(i) for i in range(n)]


def _key_word(key: int | str) -> int:
    if isinstance(key, str):
        return int.from_bytes(hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest(), "little")
    return int(key)


DRAW_KINDS = ("uniform", "normal", "exponential", "gamma", "poisson", "noncentral_chi2")


def draw(kind: str, params: Mapping[str, float] | None, rng: RngStream, size=None):
    """Draw variates of ``kind`` with ``params`` from ``rng``.

    Parameterisations: ``exponential(rate)``, ``gamma(shape, rate)``,
    ``poisson(mean)``, ``noncentral_chi2(dof, noncentrality)``.
    """
    p = dict(params or {})
    g = rng.generator
    if kind == "uniform":
        return g.random(size)
    if kind == "normal":
        return g.standard_normal(size)
    if kind == "exponential":
        rate = p.get("rate", 1.0)
        if not rate > 0:
            raise ValueError("exponential: rate must be > 0")
        return g.standard_exponential(size) / rate
    if kind == "gamma":
        shape, rate = p["shape"], p.get("rate", 1.0)
        if np.any(np.asarray(shape) <= 0) or not rate > 0:
            raise ValueError("gamma: shape and rate must be > 0")
        return g.standard_gamma(shape, size) / rate
    if kind == "poisson":
        mean = np.asarray(p["mean"])
        if np.any(mean < 0):
            raise ValueError("poisson: mean must be >= 0")
        return g.poisson(mean, size)
    if kind == "noncentral_chi2":
        dof, nc = p["dof"], np.asarray(p["noncentrality"])
        if not dof > 0 or np.any(nc < 0):
            raise ValueError("noncentral_chi2: dof > 0 and noncentrality >= 0 required")
        return g.noncentral_chisquare(dof, nc, size)
    raise ValueError(f"unknown draw kind {kind!r}")
