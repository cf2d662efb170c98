"""Closed-form laws: lazy clock marginals, PWC martingale marginals, mixtures.

Every CDF here is vectorised (arrays in, arrays out; scalars in, float out)
because the harness evaluates them at every Monte Carlo sample point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import special as _sp

from . import specfun as sf

Array = np.ndarray


def _ret(x):
    x = np.asarray(x)
    return x if x.ndim else float(x)


def _pos(name: str, val: float) -> None:
    if not (val > 0 and math.isfinite(val)):
        raise ValueError(f"{name} must be positive, got {val}")


def _nonneg(name: str, val: float) -> None:
    if not (val >= 0 and math.isfinite(val)):
        raise ValueError(f"{name} must be non-negative, got {val}")


@dataclass(frozen=True)
class Law:
    """A one-dimensional law: CDF plus explicit point masses.

    ``singular_ends`` flags integrable density singularities at the support
    ends; mixing integrals use it to pick where to grade their quadrature.
    """

    cdf: Callable
    support: tuple[float, float]
    atoms: tuple[tuple[float, float], ...] = ()
    pdf: Optional[Callable] = None
    moment: Optional[Callable[[int], float]] = None
    singular_ends: tuple[bool, bool] = (False, False)
    name: str = ""
    interior_singular: tuple[float, ...] = ()

    def atom_mass(self, x) -> Array:
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for loc, mass in self.atoms:
            out = out + np.where(x == loc, mass, 0.0)
        return out

    def cdf_left(self, x):
        """``P(X < x)``."""
        return _ret(np.asarray(self.cdf(x)) - self.atom_mass(x))

    def continuous_mass(self) -> float:
        """Mass of the absolutely continuous part: the pdf integral when a pdf
        is known, otherwise ``F(hi) - F(lo-)`` minus the atoms."""
        lo, hi = self.support
        if self.pdf is None:
            return float(self.cdf(hi)) - float(self.cdf_left(lo)) - sum(m for _, m in self.atoms)
        pdf = self.pdf
        cuts = [lo, *sorted(self.interior_singular), hi]
        flags = [self.singular_ends[0], *([True] * len(self.interior_singular)), self.singular_ends[1]]
        mode = {(False, False): "none", (True, False): "left", (False, True): "right", (True, True): "both"}
        spec = sf.QuadratureSpec(1e-12, 400)
        return sum(sf.integrate(lambda s: float(pdf(s)), cuts[i], cuts[i + 1], spec, mode[flags[i], flags[i + 1]])
                   for i in range(len(cuts) - 1))

    def total_mass(self) -> float:
        return sum(m for _, m in self.atoms) + self.continuous_mass()


def _cumulative_pdf(pdf: Callable, x: Array, step: float, near_zero: Callable[[float], float]) -> Array:
    """``int_0^x pdf`` for many ``x >= 0`` by cumulative Gauss-Legendre.

    Knots are the sorted query points merged with a base grid of spacing
    ``step``; each cell gets an 8-point rule except the first, which is
    geometrically graded toward 0. ``near_zero(eps)`` returns the mass of
    ``[0, eps]`` for the tiny leftover below the graded cells.
    """
    x = np.asarray(x, dtype=float)
    flat = x.ravel()
    if flat.size == 0:
        return x.copy()
    xmax = float(flat.max())
    if xmax <= 0:
        return np.zeros_like(x)
    base = np.arange(step, xmax + step, step)
    knots = np.unique(np.concatenate([flat[flat > 0], base[base < xmax]]))
    first = knots[0]
    rule = sf.graded_rule(0.0, first, left=True, levels=45, order=8)
    head = float(np.dot(rule.weights, pdf(rule.nodes))) + near_zero(rule.lo_cut)
    xg, wg = sf.gauss_legendre(8)
    lo, hi = knots[:-1], knots[1:]
    cells = np.empty(lo.size)
    chunk = 1 << 16
    for i in range(0, lo.size, chunk):
        l, h = lo[i:i + chunk], hi[i:i + chunk]
        nodes = l[:, None] + (h - l)[:, None] * xg[None, :]
        cells[i:i + chunk] = (h - l) * (pdf(nodes) @ wg)
    cum = np.concatenate([[head], head + np.cumsum(cells)])
    idx = np.searchsorted(knots, flat)
    out = np.where(flat > 0, cum[np.minimum(idx, knots.size - 1)], 0.0)
    return out.reshape(x.shape)


# --------------------------------------------------------------------------
# Skellam (difference of two Poisson processes)
# --------------------------------------------------------------------------

def skellam_pmf(k, lam: float, t: float):
    """``P(N1_t - N2_t = k) = exp(-2 lam t) I_|k|(2 lam t)``."""
    _pos("lambda", lam)
    _nonneg("t", t)
    k = np.abs(np.asarray(k))
    return sf.bessel_i_scaled(k, 2.0 * lam * t)


def skellam_law(lam: float, t: float, tail: float = 1e-17) -> Law:
    _pos("lambda", lam)
    _nonneg("t", t)
    mu = 2.0 * lam * t
    kmax = int(mu + 12.0 * math.sqrt(mu + 1.0) + 20.0)
    ks = np.arange(-kmax, kmax + 1)
    pmf = skellam_pmf(ks, lam, t)
    keep = pmf > tail
    ks, pmf = ks[keep], pmf[keep]
    cum = np.cumsum(pmf)

    def cdf(z):
        z = np.asarray(z, dtype=float)
        idx = np.searchsorted(ks, np.floor(z), side="right") - 1
        return _ret(np.where(idx >= 0, cum[np.maximum(idx, 0)], 0.0))

    def moment(k: int) -> float:
        return float(np.sum(pmf * ks.astype(float) ** k))

    atoms = tuple((float(k), float(p)) for k, p in zip(ks, pmf))
    return Law(cdf, (float(ks[0]), float(ks[-1])), atoms, None, moment, name="skellam")


# --------------------------------------------------------------------------
# Difference of two Gamma processes
# --------------------------------------------------------------------------

def _gamma_diff_check(a, b, t):
    _pos("a", a)
    _pos("b", b)
    _pos("t", t)


def gamma_diff_pdf(z, a: float, b: float, t: float):
    """Density of ``gamma1_t - gamma2_t`` for Gamma processes with shape rate
    ``a`` per unit time and rate ``b``.

    At ``z = 0`` the value is the continuous limit when ``a t > 1/2`` and
    ``inf`` otherwise.
    """
    _gamma_diff_check(a, b, t)
    at = a * t
    nu = 0.5 - at
    z = np.abs(np.asarray(z, dtype=float))
    x = b * z
    with np.errstate(divide="ignore", invalid="ignore"):
        logc = math.log(b) - 0.5 * math.log(math.pi) - _sp.gammaln(at)
        logf = logc + (at - 0.5) * np.log(0.5 * x) + np.log(_sp.kve(nu, x)) - x
        out = np.exp(logf)
    if at > 0.5:
        f0 = b * math.exp(_sp.gammaln(at - 0.5) - _sp.gammaln(at)) / (2.0 * math.sqrt(math.pi))
    else:
        f0 = math.inf
    out = np.where(z == 0, f0, out)
    return _ret(out)


def gamma_diff_cdf(z, a: float, b: float, t: float):
    _gamma_diff_check(a, b, t)
    z = np.asarray(z, dtype=float)
    at = a * t
    pdf = lambda w: gamma_diff_pdf(w, a, b, t)

    def near_zero(eps):
        f = float(pdf(eps))
        return eps * f / min(1.0, 2.0 * at)

    half = _cumulative_pdf(pdf, np.abs(z), 0.25 / b, near_zero)
    return _ret(0.5 + np.sign(z) * np.minimum(half, 0.5))


def gamma_diff_law(a: float, b: float, t: float) -> Law:
    _gamma_diff_check(a, b, t)
    at = a * t

    def cumulant(n: int) -> float:
        return 0.0 if n % 2 else 2.0 * at * math.factorial(n - 1) / b ** n

    def moment(k: int) -> float:
        m = [1.0]
        for n in range(1, k + 1):
            m.append(sum(math.comb(n - 1, j - 1) * cumulant(j) * m[n - j] for j in range(1, n + 1)))
        return m[k]

    return Law(lambda z: gamma_diff_cdf(z, a, b, t), (-math.inf, math.inf), (),
               lambda z: gamma_diff_pdf(z, a, b, t), moment, name="gamma-diff")


# --------------------------------------------------------------------------
# Poisson lazy clock
# --------------------------------------------------------------------------

def poisson_lazy_cdf(s, lam: float, t: float):
    """CDF of the last Poisson jump time before ``t`` (0 if none)."""
    _pos("lambda", lam)
    _nonneg("t", t)
    s = np.asarray(s, dtype=float)
    inside = np.exp(-lam * (t - np.clip(s, 0.0, t)))
    return _ret(np.where(s < 0, 0.0, np.where(s >= t, 1.0, inside)))


def poisson_lazy_pdf(s, lam: float, t: float):
    s = np.asarray(s, dtype=float)
    return _ret(np.where((s > 0) & (s <= t), lam * np.exp(-lam * (t - s)), 0.0))


def poisson_lazy_moment(k: int, lam: float, t: float) -> float:
    if k < 1 or int(k) != k:
        raise ValueError("moment order must be a positive integer")
    _pos("lambda", lam)
    _nonneg("t", t)
    if t == 0:
        return 0.0
    k = int(k)
    fk = math.factorial(k)
    total = fk / (-lam) ** k * (-math.expm1(-lam * t))
    for i in range(k):
        total += (-1) ** i * t ** (k - i) * fk / (lam ** i * math.factorial(k - i))
    return total


def poisson_lazy_law(lam: float, t: float) -> Law:
    _pos("lambda", lam)
    _nonneg("t", t)
    return Law(lambda s: poisson_lazy_cdf(s, lam, t), (0.0, t), ((0.0, math.exp(-lam * t)),),
               lambda s: poisson_lazy_pdf(s, lam, t), lambda k: poisson_lazy_moment(k, lam, t),
               name="poisson-lazy")


# --------------------------------------------------------------------------
# Brownian lazy clocks: arcsine and affine barrier
# --------------------------------------------------------------------------

def _check_in(s, lo, hi, name):
    s = np.asarray(s, dtype=float)
    if np.any(s < lo) or np.any(s > hi):
        raise ValueError(f"{name}: argument outside [{lo}, {hi}]")
    return s


def arcsine_pdf(s, t: float):
    _pos("t", t)
    s = _check_in(s, 0.0, t, "arcsine_pdf")
    with np.errstate(divide="ignore"):
        return _ret(1.0 / (math.pi * np.sqrt(s * (t - s))))


def arcsine_cdf(s, t: float):
    _pos("t", t)
    s = _check_in(s, 0.0, t, "arcsine_cdf")
    return _ret(2.0 / math.pi * np.arcsin(np.sqrt(s / t)))


def arcsine_law(t: float) -> Law:
    _pos("t", t)

    def cdf(s):
        s = np.clip(np.asarray(s, dtype=float), 0.0, t)
        return arcsine_cdf(s, t)

    def moment(k: int) -> float:
        return math.exp(_sp.gammaln(k + 0.5) - _sp.gammaln(k + 1.0)) / math.sqrt(math.pi) * t ** k

    return Law(cdf, (0.0, t), (), lambda s: arcsine_pdf(s, t), moment, (True, True), "arcsine")


def affine_lastpassage_mass0(a: float, b: float, t: float) -> float:
    """``P(W_s != a + b s for all s in (0, t])``; ``a < 0`` via ``W -> -W``."""
    _pos("t", t)
    if a < 0:
        a, b = -a, -b
    rt = math.sqrt(t)
    return float(sf.norm_cdf((a + b * t) / rt) - math.exp(-2.0 * a * b) * sf.norm_cdf((-a + b * t) / rt))


def affine_lastpassage_pdf(s, a: float, b: float, t: float):
    """Density of the last time ``W`` meets the line ``a + b s`` before ``t``."""
    _pos("t", t)
    s = _check_in(s, 0.0, t, "affine_lastpassage_pdf")
    with np.errstate(divide="ignore", invalid="ignore"):
        rs, rr = np.sqrt(s), np.sqrt(t - s)
        head = sf.norm_pdf((a + b * s) / rs) / rs
        tail = 2.0 / rr * sf.norm_pdf(b * rr) + 2.0 * b * sf.norm_cdf(b * rr) - b
        out = head * tail
    out = np.where(s == 0, 0.0 if a != 0 else np.inf, out)
    out = np.where(s == t, np.inf, out)
    return _ret(out)


def _affine_moment_integrand(k, a, b, t):
    c = 0.5 * b * b

    def inner(v):
        # int_0^v exp(-c w) w^-1/2 dw
        if c == 0:
            return 2.0 * math.sqrt(v)
        return math.sqrt(math.pi / c) * math.erf(math.sqrt(c * v))

    def f(s):
        if s <= 0:
            return 0.0 if a != 0 else math.inf
        g = ((k - 0.5) * s ** (k - 1.5) + 0.5 * a * a * s ** (k - 2.5)) * math.exp(-a * a / (2.0 * s))
        return g * math.exp(-c * s) * inner(t - s)

    return f


def affine_lastpassage_moment(k: int, a: float, b: float, t: float) -> float:
    """``E[g^k]`` for the affine-barrier last passage time (the atom at 0
    contributes nothing).

    The inner ``du`` integral of the double-integral representation is done
    in closed form, leaving one adaptive quadrature in ``s``.
    """
    if k < 1 or int(k) != k:
        raise ValueError("moment order must be a positive integer")
    _pos("t", t)
    if a == 0:
        c = 0.5 * b * b
        coef = math.exp(_sp.gammaln(k + 0.5) - _sp.gammaln(k)) / math.sqrt(math.pi)
        integ = sf.integrate(lambda u: u ** (k - 1) * math.exp(-c * u), 0.0, t, sf.QuadratureSpec(1e-13, 200))
        return coef * integ
    f = _affine_moment_integrand(int(k), a, b, t)
    val = sf.integrate(f, 0.0, t, sf.QuadratureSpec(1e-12, 400), singular="right")
    return math.exp(-a * b) / math.pi * val


def affine_lastpassage_cdf(s, a: float, b: float, t: float):
    """Mass at 0 plus the density integrated with ``u = t sin(phi)**2``."""
    _pos("t", t)
    s = np.clip(np.asarray(s, dtype=float), 0.0, t)
    m0 = affine_lastpassage_mass0(a, b, t)
    phi_s = np.arcsin(np.sqrt(s / t))
    xg, wg = sf.gauss_legendre(48)
    flat = phi_s.ravel()
    phis = flat[:, None] * xg[None, :]
    u = t * np.sin(phis) ** 2
    rs, rr = np.sqrt(t) * np.sin(phis), np.sqrt(t) * np.cos(phis)
    with np.errstate(divide="ignore", invalid="ignore"):
        head = np.where(rs > 0, sf.norm_pdf((a + b * u) / np.where(rs > 0, rs, 1.0)), 0.0)
        # pdf * du = head/rs * (2/rr phi(b rr) + ...) * 2 rs rr dphi
        tail = 2.0 * sf.norm_pdf(b * rr) + (2.0 * b * sf.norm_cdf(b * rr) - b) * rr
        integrand = 2.0 * head * tail
    cont = (integrand @ wg) * flat
    out = m0 + cont.reshape(s.shape)
    return _ret(np.where(s >= t, 1.0, np.minimum(out, 1.0)))


def affine_lastpassage_law(a: float, b: float, t: float) -> Law:
    _pos("t", t)
    m0 = affine_lastpassage_mass0(a, b, t)
    atoms = ((0.0, m0),) if m0 > 0 else ()
    return Law(lambda s: affine_lastpassage_cdf(s, a, b, t), (0.0, t), atoms,
               lambda s: affine_lastpassage_pdf(s, a, b, t),
               lambda k: affine_lastpassage_moment(k, a, b, t), (a == 0, True), "affine-lastpassage")


# --------------------------------------------------------------------------
# Bessel lazy clock (generalised arcsine)
# --------------------------------------------------------------------------

def _check_nu(nu):
    if not (-1.0 < nu < 0.0):
        raise ValueError("Bessel index nu must lie in (-1, 0)")


def bessel_lazy_pdf(s, nu: float, t: float):
    _check_nu(nu)
    _pos("t", t)
    s = _check_in(s, 0.0, t, "bessel_lazy_pdf")
    lognorm = _sp.gammaln(-nu) + _sp.gammaln(1.0 + nu)
    with np.errstate(divide="ignore"):
        return _ret(np.exp(nu * np.log(t - s) - (1.0 + nu) * np.log(s) - lognorm))


def bessel_lazy_cdf(s, nu: float, t: float):
    _check_nu(nu)
    _pos("t", t)
    s = np.clip(np.asarray(s, dtype=float), 0.0, t)
    return _ret(_sp.betainc(-nu, 1.0 + nu, s / t))


def bessel_lazy_moment(k: int, nu: float, t: float) -> float:
    _check_nu(nu)
    if k < 1 or int(k) != k:
        raise ValueError("moment order must be a positive integer")
    return math.exp(_sp.gammaln(k - nu) - _sp.gammaln(k + 1.0) - _sp.gammaln(-nu)) * t ** k


def bessel_lazy_law(nu: float, t: float) -> Law:
    _check_nu(nu)
    _pos("t", t)
    return Law(lambda s: bessel_lazy_cdf(s, nu, t), (0.0, t), (),
               lambda s: bessel_lazy_pdf(s, nu, t), lambda k: bessel_lazy_moment(k, nu, t),
               (True, True), "bessel-lazy")


# --------------------------------------------------------------------------
# Last zero of a Brownian bridge
# --------------------------------------------------------------------------

def bridge_lastzero_atom(x, y, t):
    """``P(bridge from x to y over [0, t] never hits 0)``."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    xy = x * y
    return _ret(-np.expm1(-(xy + np.abs(xy)) / t))


def bridge_lastzero_cdf(s, x, y, t: float):
    """CDF of the last zero of a Brownian bridge from ``x`` to ``y`` on ``[0, t]``.

    Broadcasts over ``s``, ``x`` and ``y``. Endpoints use their limits; the
    exponential prefactors are folded into ``log Phi`` so nothing overflows
    when ``|x y| / t`` is large.
    """
    _pos("t", t)
    s = np.asarray(s, dtype=float)
    if np.any(s < 0) or np.any(s > t):
        raise ValueError("bridge_lastzero_cdf: s outside [0, t]")
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    ax, ay = np.abs(x), np.abs(y)
    c = ax * ay / t
    ss = np.clip(s, 1e-300, t * (1 - 1e-16))
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha = ax * np.sqrt((t - ss) / (ss * t))
        beta = ay * np.sqrt(ss / (t * (t - ss)))
        lp = sf.log_norm_cdf(-alpha - beta)
        lm = sf.log_norm_cdf(alpha - beta)
    same = x * y >= 0
    # same sign: exp(-xy/t) (e^{c} P+ + e^{-c} P-) = P+ + e^{-2c} P-
    # opposite:  = e^{2c} P+ + P-
    s_term = np.where(same, np.exp(lp) + np.exp(lm - 2.0 * c), np.exp(lp + 2.0 * c) + np.exp(lm))
    out = 1.0 - s_term
    atom = -np.expm1(-(x * y + ax * ay) / t)
    out = np.where(s <= 0, atom, out)
    out = np.where(s >= t, 1.0, out)
    # y == 0: the bridge ends on the level, so the last zero is t
    out = np.where((ay == 0) & (s < t), 0.0, out)
    return _ret(np.clip(out, 0.0, 1.0))


def bridge_lastzero_pdf(s, x, y, t: float):
    """Density on ``(0, t)`` for ``y != 0``."""
    s = np.asarray(s, dtype=float)
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    ay = np.abs(y)
    with np.errstate(divide="ignore", invalid="ignore"):
        logf = (np.log(ay) + 0.5 * math.log(t) - 0.5 * math.log(2 * math.pi) + (y - x) ** 2 / (2 * t)
                - 0.5 * np.log(s) - 1.5 * np.log(t - s) - x * x / (2 * s) - y * y / (2 * (t - s)))
        return _ret(np.where((s > 0) & (s < t), np.exp(logf), 0.0))


def bridge_lastzero_law(x: float, y: float, t: float) -> Law:
    _pos("t", t)
    if y == 0:
        return Law(lambda s: bridge_lastzero_cdf(np.clip(s, 0, t), x, y, t), (0.0, t), ((t, 1.0),),
                   name="bridge-lastzero")
    atom = float(bridge_lastzero_atom(x, y, t))
    atoms = ((0.0, atom),) if atom > 0 else ()
    return Law(lambda s: bridge_lastzero_cdf(np.clip(s, 0, t), x, y, t), (0.0, t), atoms,
               lambda s: bridge_lastzero_pdf(s, x, y, t), name="bridge-lastzero")


# --------------------------------------------------------------------------
# Difference of two independent arcsine lazy clocks
# --------------------------------------------------------------------------

def g0diff_laplace(u: float, t: float) -> float:
    """``E[exp(-u Z_t)]`` by the power series in ``(u t / 4)**2``."""
    _pos("t", t)
    q = (u * t / 4.0) ** 2
    term, total, k = 1.0, 1.0, 0
    while True:
        term *= q * (2 * k + 1) * (2 * k + 2) / float(k + 1) ** 4
        total += term
        k += 1
        if term < 1e-16 * total or k > 100000:
            return total


def g0diff_pdf(z, t: float):
    """``(2 / (pi^2 t)) K(1 - z^2/t^2)`` on ``0 < |z| <= t``."""
    _pos("t", t)
    z = np.abs(np.asarray(z, dtype=float))
    r2 = np.minimum(z / t, 1.0) ** 2
    # ellipkm1 takes 1 - m directly, so tiny |z| keeps its log growth
    with np.errstate(divide="ignore"):
        val = 2.0 / (math.pi ** 2 * t) * _sp.ellipkm1(r2)
    return _ret(np.where(z > t, 0.0, np.where(z == 0, np.inf, val)))


_G0_RULE = sf.graded_rule(0.0, 0.5 * math.pi, left=False, right=True, levels=44, order=10)


def g0diff_cdf(z, t: float):
    """CDF of ``g0(W1)_t - g0(W2)_t`` on ``[-t, t]``.

    Evaluates ``1/2 + sign(z) (2/pi^2) int_0^{pi/2} asinh(|z| tan x / t) / sin x dx``,
    obtained by integrating the elliptic density in ``z``; the integrand has
    only a logarithmic singularity at ``pi/2``.
    """
    _pos("t", t)
    z = np.asarray(z, dtype=float)
    flat = np.clip(np.abs(z).ravel() / t, 0.0, 1.0)
    x = _G0_RULE.nodes
    tanx, sinx = np.tan(x), np.sin(x)
    eps = 0.5 * math.pi - _G0_RULE.hi_cut
    out = np.empty(flat.size)
    chunk = 4096
    for i in range(0, flat.size, chunk):
        r = flat[i:i + chunk, None]
        vals = np.arcsinh(r * tanx[None, :]) / sinx[None, :]
        rr = flat[i:i + chunk]
        with np.errstate(divide="ignore", invalid="ignore"):
            tail = np.where(rr > 0, eps * (np.log(2.0 * rr / eps) + 1.0), 0.0)
        out[i:i + chunk] = vals @ _G0_RULE.weights + tail
    half = 2.0 / math.pi ** 2 * out.reshape(z.shape)
    res = 0.5 + np.sign(z) * half
    res = np.where(z >= t, 1.0, np.where(z <= -t, 0.0, res))
    return _ret(np.clip(res, 0.0, 1.0))


def g0diff_law(t: float) -> Law:
    _pos("t", t)

    arc = arcsine_law(t).moment

    def moment(k: int) -> float:
        mom = lambda j: 1.0 if j == 0 else arc(j)
        return sum(math.comb(k, j) * mom(j) * (-1) ** (k - j) * mom(k - j) for j in range(k + 1))

    return Law(lambda z: g0diff_cdf(z, t), (-t, t), (), lambda z: g0diff_pdf(z, t), moment,
               (False, False), "g0diff", interior_singular=(0.0,))


# --------------------------------------------------------------------------
# Phi-martingale marginal
# --------------------------------------------------------------------------

def phimart_cdf(z, z0: float, eta: float, u):
    """CDF at ``z`` of ``Phi(X_u)`` where ``X`` starts at ``Phi^{-1}(z0)`` and
    ``X_u ~ N(X_0 exp(eta^2 u / 2), exp(eta^2 u) - 1)``.

    Broadcasts over ``z`` and ``u``; ``u = 0`` is the step at ``z0``.
    """
    if not (0.0 < z0 < 1.0):
        raise ValueError("z0 must lie in (0, 1)")
    _pos("eta", eta)
    z = np.asarray(z, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ValueError("phimart_cdf: u must be >= 0")
    x0 = float(sf.norm_ppf(z0))
    with np.errstate(divide="ignore", invalid="ignore"):
        xz = sf.norm_ppf(np.clip(z, 0.0, 1.0))
        sd = np.sqrt(np.expm1(eta * eta * u))
        arg = (xz - x0 * np.exp(0.5 * eta * eta * u)) / sd
        val = sf.norm_cdf(arg)
    step = np.where(z >= z0, 1.0, 0.0)
    val = np.where(u > 0, val, step)
    val = np.where(z <= 0, 0.0, np.where(z >= 1, 1.0, val))
    return _ret(val)


def phimart_law(z0: float, eta: float, u: float) -> Law:
    if u == 0:
        return Law(lambda z: phimart_cdf(z, z0, eta, 0.0), (0.0, 1.0), ((z0, 1.0),), name="phimart")
    return Law(lambda z: phimart_cdf(z, z0, eta, u), (0.0, 1.0), (), name="phimart")


# --------------------------------------------------------------------------
# CIR intensity: survival P(s, t) = E[exp(-(Lambda_t - Lambda_s))]
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CirParams:
    """``d lam = k (theta - lam) dt + sigma sqrt(lam) dW``, ``lam(0) = lam0``."""

    k: float
    theta: float
    sigma: float
    lam0: float

    def __post_init__(self):
        for name in ("k", "theta", "sigma", "lam0"):
            _pos(name, getattr(self, name))

    @property
    def dof(self) -> float:
        return 4.0 * self.k * self.theta / self.sigma ** 2

    def mean(self, s):
        return self.theta + (self.lam0 - self.theta) * np.exp(-self.k * np.asarray(s, dtype=float))


def cir_affine_coeffs(tau, p: CirParams):
    """``(log A(tau), B(tau))`` with ``E[exp(-int_0^tau lam) | lam_0 = x] = A exp(-B x)``."""
    tau = np.asarray(tau, dtype=float)
    g = math.sqrt(p.k ** 2 + 2.0 * p.sigma ** 2)
    em1 = np.expm1(g * tau)
    den = (g + p.k) * em1 + 2.0 * g
    B = 2.0 * em1 / den
    logA = (2.0 * p.k * p.theta / p.sigma ** 2) * (math.log(2.0 * g) + 0.5 * (p.k + g) * tau - np.log(den))
    return logA, B


def noncentral_chi2_cf(v, dof: float, nc: float):
    """Characteristic function ``E[exp(i v X)]`` of a non-central chi-square."""
    v = np.asarray(v, dtype=complex)
    return (1.0 - 2j * v) ** (-0.5 * dof) * np.exp(nc * 1j * v / (1.0 - 2j * v))


def _cir_marginal_scale(s, p: CirParams):
    # lam_s = r_s h_s with r_s ~ ncchi2(dof, m_s / h_s); h_s = sigma^2 (1 - e^{-ks}) / (4k)
    s = np.asarray(s, dtype=float)
    h = p.sigma ** 2 * (-np.expm1(-p.k * s)) / (4.0 * p.k)
    m = p.lam0 * np.exp(-p.k * s)
    return h, m


def cir_log_laplace(s, b, p: CirParams):
    """``log E[exp(-b lam_s)]`` for the unconditional CIR marginal at ``s``."""
    h, m = _cir_marginal_scale(s, p)
    b = np.asarray(b, dtype=float)
    D = 1.0 + 2.0 * b * h
    return -0.5 * p.dof * np.log1p(2.0 * b * h) - m * b / D


def _cir_check(s, t):
    s, t = np.asarray(s, dtype=float), np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(s > t + 1e-15):
        raise ValueError("cir_survival: need 0 <= s <= t")
    return s, t


def cir_survival(s, t, p: CirParams):
    s, t = _cir_check(s, t)
    logA, B = cir_affine_coeffs(t - s, p)
    return _ret(np.exp(logA + cir_log_laplace(s, B, p)))


def cir_survival_ds(s, t, p: CirParams):
    """``d/ds P(s, t)``: product rule on the affine form, FD where non-finite."""
    s, t = _cir_check(s, t)
    tau = t - s
    logA, B = cir_affine_coeffs(tau, p)
    h, m = _cir_marginal_scale(s, p)
    D = 1.0 + 2.0 * B * h
    dB = 1.0 - p.k * B - 0.5 * p.sigma ** 2 * B * B
    dh = 0.25 * p.sigma ** 2 * np.exp(-p.k * s)
    dlog = (p.k * p.theta * B + (p.dof * h / D + m / D ** 2) * dB
            + (-p.dof * B / D + 2.0 * m * B * B / D ** 2) * dh + p.k * m * B / D)
    P = np.exp(logA + cir_log_laplace(s, B, p))
    out = P * dlog
    bad = ~np.isfinite(out)
    if np.any(bad):
        step = 1e-5 * np.maximum(t, 1e-300)
        lo = np.clip(s - step, 0.0, t)
        hi = np.clip(s + step, 0.0, t)
        fd = (cir_survival(hi, t, p) - cir_survival(lo, t, p)) / (hi - lo)
        out = np.where(bad, fd, out)
    return _ret(out)


# --------------------------------------------------------------------------
# Lazy clock laws and the lazy martingale mixture
# --------------------------------------------------------------------------

CLOCK_VARIANTS = ("poisson", "inhomogeneous", "cox_cir", "arcsine", "affine_barrier", "bessel")


@dataclass(frozen=True)
class ClockLawParams:
    """Which lazy clock, with its parameters, observed at horizon ``t``.

    ``cum_hazard`` is ``Lambda(u)`` for the inhomogeneous clock; ``intensity``
    (its derivative) is optional and recovered by central differences when
    absent.
    """

    variant: str
    t: float
    lam: Optional[float] = None
    cum_hazard: Optional[Callable] = None
    intensity: Optional[Callable] = None
    cir: Optional[CirParams] = None
    a: float = 0.0
    b: float = 0.0
    nu: Optional[float] = None

    def __post_init__(self):
        if self.variant not in CLOCK_VARIANTS:
            raise ValueError(f"unknown clock variant {self.variant!r}")
        _nonneg("t", self.t)
        if self.variant == "poisson":
            _pos("lambda", self.lam if self.lam is not None else -1.0)
        elif self.variant == "inhomogeneous":
            if self.cum_hazard is None:
                raise ValueError("inhomogeneous clock needs cum_hazard")
            if abs(float(self.cum_hazard(0.0))) > 1e-14:
                raise ValueError("cum_hazard(0) must be 0")
        elif self.variant == "cox_cir":
            if self.cir is None:
                raise ValueError("cox_cir clock needs CirParams")
        elif self.variant == "bessel":
            _check_nu(self.nu if self.nu is not None else 1.0)


def clock_law(p: ClockLawParams) -> Law:
    """Marginal law of the lazy clock ``theta_t``."""
    t = p.t
    if p.variant == "poisson":
        return poisson_lazy_law(p.lam, t)
    if p.variant == "arcsine":
        return arcsine_law(t)
    if p.variant == "affine_barrier":
        return affine_lastpassage_law(p.a, p.b, t)
    if p.variant == "bessel":
        return bessel_lazy_law(p.nu, t)
    if p.variant == "inhomogeneous":
        Lam = p.cum_hazard
        lam_fn = p.intensity
        if lam_fn is None:
            def lam_fn(u, _L=Lam, _h=1e-6 * max(t, 1e-12)):
                u = np.asarray(u, dtype=float)
                lo = np.maximum(u - _h, 0.0)
                return (_L(u + _h) - _L(lo)) / (u + _h - lo)
        Lt = float(Lam(t))

        def cdf(s):
            s = np.asarray(s, dtype=float)
            v = np.exp(-(Lt - Lam(np.clip(s, 0.0, t))))
            return _ret(np.where(s < 0, 0.0, np.where(s >= t, 1.0, v)))

        def pdf(s):
            s = np.asarray(s, dtype=float)
            return _ret(lam_fn(s) * np.exp(-(Lt - Lam(s))))

        return Law(cdf, (0.0, t), ((0.0, math.exp(-Lt)),), pdf, name="inhomogeneous-lazy")
    if p.variant == "cox_cir":
        c = p.cir

        def cdf(s):
            s = np.asarray(s, dtype=float)
            v = cir_survival(np.clip(s, 0.0, t), t, c)
            return _ret(np.where(s < 0, 0.0, np.where(s >= t, 1.0, v)))

        def pdf(s):
            return cir_survival_ds(np.clip(np.asarray(s, dtype=float), 0.0, t), t, c)

        return Law(cdf, (0.0, t), ((0.0, float(cir_survival(0.0, t, c))),), pdf, name="cox-cir-lazy")
    raise AssertionError(p.variant)


LatentCdf = Callable[[Array, Array], Array]


def lazy_mixed_cdf(z, latent_cdf: LatentCdf, clock, z0: float, levels: int = 40, order: int = 8):
    """``P(Z_t <= z)`` for ``Z_t = Ztilde_{theta_t}`` with ``theta`` independent.

    ``latent_cdf(u, z)`` is the CDF of the latent martingale at time ``u``
    and must broadcast. ``clock`` is a :class:`ClockLawParams` or a clock
    :class:`Law` on ``[0, t]``. The atom of the clock at 0 contributes
    ``mass * 1{z0 <= z}``; the continuous part is integrated with a graded
    Gauss-Legendre rule whose end cells take their mass from the clock CDF.
    """
    law = clock_law(clock) if isinstance(clock, ClockLawParams) else clock
    t = law.support[1]
    z = np.asarray(z, dtype=float)
    flat = z.ravel()
    step = (flat >= z0).astype(float)
    out = np.zeros(flat.size)
    for loc, mass in law.atoms:
        if loc == 0.0:
            out += mass * step
        else:
            out += mass * np.asarray(latent_cdf(np.full(1, loc), flat[:, None]))[:, 0]
    if t > 0 and law.pdf is not None:
        rule = sf.graded_rule(0.0, t, left=True, right=law.singular_ends[1], levels=levels, order=order)
        w = rule.weights * np.asarray(law.pdf(rule.nodes), dtype=float)
        m_lo = float(law.cdf(rule.lo_cut)) - float(law.cdf(0.0))
        m_hi = float(law.cdf_left(t)) - float(law.cdf(rule.hi_cut)) if rule.hi_cut < t else 0.0
        nodes = np.concatenate([rule.nodes, [0.5 * rule.lo_cut, 0.5 * (rule.hi_cut + t)]])
        w = np.concatenate([w, [max(m_lo, 0.0), max(m_hi, 0.0)]])
        chunk = max(1, (1 << 21) // nodes.size)
        for i in range(0, flat.size, chunk):
            vals = np.asarray(latent_cdf(nodes[None, :], flat[i:i + chunk, None]), dtype=float)
            out[i:i + chunk] += vals @ w
    return _ret(np.clip(out, 0.0, 1.0).reshape(z.shape))


def lazy_mixed_law(latent_cdf: LatentCdf, clock, z0: float, support=(-math.inf, math.inf)) -> Law:
    law = clock_law(clock) if isinstance(clock, ClockLawParams) else clock
    atom0 = sum(m for loc, m in law.atoms if loc == 0.0)
    atoms = ((z0, atom0),) if atom0 > 0 else ()
    return Law(lambda z: lazy_mixed_cdf(z, latent_cdf, law, z0), support, atoms, name="lazy-mixed")


def phi_latent_cdf(z0: float, eta: float) -> LatentCdf:
    return lambda u, z: phimart_cdf(z, z0, eta, u)
