"""APP versus exact observables of the coherently driven one-band model.

Two routes are provided. :func:`series_moments` sums the truncated double
series in |alpha| directly (usable while the Bessel arguments stay moderate).
:func:`closed_form_error_terms` gives the leading (and next) order of the APP
error in the quadrature variance through Bessel-function closed forms, which is
what is evaluated at physical photon numbers.
"""

from __future__ import annotations

import cmath
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import gammaln, logsumexp

from . import oneband
from .observables import VACUUM_VARIANCE
from .phase_space import (
    DrivingState,
    FieldMoments,
    QuadratureGrid,
    _prepare,
    _weighted,
    _apply,
)
from .specfun import a_mu, log_binomial, UnsupportedOrderError

__all__ = [
    "AppMomentSeries",
    "TruncationError",
    "VarianceErrorRow",
    "SERIES_MAX_ARGUMENT",
    "app_power_moment",
    "series_moments",
    "series_error_terms",
    "error_polynomial",
    "closed_form_error_terms",
    "variance_error",
    "variance_error_extremes",
    "sweep_error_vs_L",
    "loglog_slope",
    "wigner_app",
    "wigner_map",
    "wigner_window",
    "map_integral",
]

# direct summation is trusted up to this g~|alpha|
SERIES_MAX_ARGUMENT = 10.0
_CONVERGENCE = 1e-12
_M_CAP = 512


class TruncationError(ArithmeticError):
    def __init__(self, message, tail):
        super().__init__(message)
        self.tail = tail


# --- direct series ----------------------------------------------------------


def app_power_moment(k: int, alpha_abs: float) -> float:
    """int Q_alpha(beta) |beta|^{2k} d^2beta = sum_q C(k,q) k!/q! |alpha|^{2q}.

    Finite form of the coherent-state Husimi average of |beta|^{2k}.
    """
    if k < 0 or int(k) != k:
        raise ValueError("k must be a nonnegative integer")
    x = float(alpha_abs) ** 2
    q = np.arange(k + 1)
    terms = np.exp(log_binomial(k, q) + gammaln(k + 1.0) - gammaln(q + 1.0)) * x**q
    return math.fsum(terms)


@dataclass(frozen=True)
class AppMomentSeries:
    n: int
    m_max: int
    adag_a: float
    a2: complex
    a: complex
    adag_a_exact: float
    a2_exact: complex
    a_exact: complex
    G_n: float
    converged: bool
    tail: float
    condition: float

    def app_moments(self) -> FieldMoments:
        """APP side as FieldMoments (the fourth moment is not summed here)."""
        return FieldMoments(a=self.a, a2=self.a2, n=self.adag_a, n2_normal=math.nan)

    def exact_moments(self) -> FieldMoments:
        return FieldMoments(a=self.a_exact, a2=self.a2_exact, n=self.adag_a_exact, n2_normal=math.nan)

    @property
    def relative_spectrum_error(self):
        return (self.adag_a - self.adag_a_exact) / self.adag_a_exact


def _log_weights(n, smax, mmax, log_alpha):
    """ln of the q-sums multiplying D_{m1} D_{m2} (or D_m), APP and exact.

    Index s = m1 + m2 for the two-D sums, m for <a>. ``log_alpha`` = -inf at 0.
    """
    zero = not math.isfinite(log_alpha)

    def qsum(top, shift, log_prefac, base_power):
        q = np.arange(top + 1, dtype=float)
        logs = log_binomial(top, q) + log_prefac - gammaln(q + shift + 1.0)
        if zero:
            return logs[0] if base_power == 0 else -math.inf
        return float(logsumexp(logs + (2.0 * q + base_power) * log_alpha))

    def power(p):
        return 0.0 if p == 0 else (-math.inf if zero else p * log_alpha)

    P = np.array([qsum(s + n, 0, gammaln(s + n + 1.0), 0) for s in range(smax + 1)])
    Q = np.array([qsum(s, 2 * n, gammaln(s + 2 * n + 1.0), 2 * n) for s in range(smax + 1)])
    R = np.array([qsum(m, n, gammaln(m + n + 1.0), n) for m in range(mmax + 1)])
    E2 = np.array([power(2 * (s + n)) for s in range(smax + 1)])
    E1 = np.array([power(2 * m + n) for m in range(mmax + 1)])
    return P, Q, R, E2, E1


def _pair_terms(logD, sD, logW):
    m = np.arange(logD.size)
    s = m[:, None] + m[None, :]
    with np.errstate(invalid="ignore"):
        logT = logD[:, None] + logD[None, :] + logW[s]
    T = np.where(np.isfinite(logT), np.exp(np.where(np.isfinite(logT), logT, 0.0)), 0.0)
    return sD[:, None] * sD[None, :] * T


def _single_terms(logD, sD, logW):
    with np.errstate(invalid="ignore"):
        logT = logD + logW
    return sD * np.where(np.isfinite(logT), np.exp(np.where(np.isfinite(logT), logT, 0.0)), 0.0)


def _tail_pair(T):
    return float(np.abs(T[-1, :]).sum() + np.abs(T[:-1, -1]).sum())


def _summed(terms, tail):
    total = math.fsum(terms.ravel())
    absum = math.fsum(np.abs(terms).ravel())
    rel = 0.0 if tail == 0 else (math.inf if total == 0 else tail / abs(total))
    cond = 1.0 if absum == 0 else (math.inf if total == 0 else absum / abs(total))
    return total, rel, cond


def _series_at(crystal, laser, n, m_max, G):
    logD, sD = oneband.taylor_coeffs_log(crystal, laser, n, m_max)
    A = laser.alpha_abs
    log_alpha = math.log(A) if A > 0 else -math.inf
    P, Q, R, E2, E1 = _log_weights(n, 2 * m_max, m_max, log_alpha)
    out = {}
    stats = []
    for key, w in (("adag_a", P), ("a2", Q), ("adag_a_exact", E2), ("a2_exact", E2)):
        T = _pair_terms(logD, sD, w)
        total, rel, cond = _summed(T, _tail_pair(T))
        out[key] = total
        stats.append((rel, cond))
    for key, w in (("a", R), ("a_exact", E1)):
        T = _single_terms(logD, sD, w)
        total, rel, cond = _summed(T, float(abs(T[-1])))
        out[key] = total
        stats.append((rel, cond))
    tail = max(r for r, _ in stats)
    cond = max(c for _, c in stats)
    ph1 = cmath.exp(1j * n * laser.phi_alpha)
    ph2 = ph1 * ph1
    return AppMomentSeries(
        n=n,
        m_max=m_max,
        adag_a=G * G * out["adag_a"],
        a2=G * G * ph2 * out["a2"],
        a=G * ph1 * out["a"],
        adag_a_exact=G * G * out["adag_a_exact"],
        a2_exact=G * G * ph2 * out["a2_exact"],
        a_exact=G * ph1 * out["a_exact"],
        G_n=G,
        converged=tail <= _CONVERGENCE,
        tail=tail,
        condition=cond,
    )


def _check_series_regime(crystal, laser):
    gx = oneband.gtilde(crystal, laser) * laser.alpha_abs
    if gx > SERIES_MAX_ARGUMENT:
        raise ValueError(
            f"g~|alpha| = {gx:.3g} > {SERIES_MAX_ARGUMENT}; use closed_form_error_terms instead"
        )
    return gx


def _resolve_G(crystal, laser, n, G_n, current=None):
    if G_n is None:
        return oneband.renormalize(crystal, laser, n, current=current)
    if G_n < 0:
        raise ValueError("G_n must be >= 0")
    return float(G_n)


def series_moments(crystal, laser, n, m_max=None, G_n=None, current=None) -> AppMomentSeries:
    """Truncated double sums for <a+a>, <a^2>, <a> on both APP and exact sides.

    With ``m_max=None`` the truncation is doubled until the last included
    terms fall below 1e-12 of the sums. ``G_n=None`` renormalizes against the
    pulse simulation.
    """
    n = oneband._check_odd(n)
    gx = _check_series_regime(crystal, laser)
    G = _resolve_G(crystal, laser, n, G_n, current)
    if m_max is not None:
        if m_max < 0:
            raise ValueError("m_max must be >= 0")
        res = _series_at(crystal, laser, n, int(m_max), G)
        if not res.converged:
            raise TruncationError(
                f"series not converged at m_max={m_max}: relative tail {res.tail:.2e}", res.tail
            )
        return res
    m = max(8, int(math.ceil(crystal.l_max * gx)) + 8)
    while True:
        res = _series_at(crystal, laser, n, m, G)
        if res.converged:
            return res
        if m >= _M_CAP:
            raise TruncationError(
                f"series not converged at m_max={m}: relative tail {res.tail:.2e}", res.tail
            )
        m = min(2 * m, _M_CAP)


def series_error_terms(crystal, laser, n, order=1, m_max=60, G_n=None):
    """Order-``order`` part of <a+a> - |<a>|^2 and <a^2> - <a>^2 by direct summation.

    Picks, for every (m1, m2), the q-terms of the APP sums that sit ``order``
    powers of |alpha|^2 below the top, using the factorial forms directly.
    """
    n = oneband._check_odd(n)
    _check_series_regime(crystal, laser)
    G = _resolve_G(crystal, laser, n, G_n)
    k = int(order)
    logD, sD = oneband.taylor_coeffs_log(crystal, laser, n, m_max)
    A = laser.alpha_abs
    if A <= 0:
        raise ValueError("|alpha| must be positive")
    la = math.log(A)
    m = np.arange(m_max + 1)

    def coef_pair_n(M):  # C(M,k) M!/(M-k)!
        return np.where(M >= k, np.exp(log_binomial(M, np.minimum(k, M)) + gammaln(M + 1.0) - gammaln(np.maximum(M - k, 0) + 1.0)), 0.0)

    def coef_pair_a2(s):  # C(s,k) (s+2n)!/(s-k+2n)!
        return np.where(s >= k, np.exp(log_binomial(s, np.minimum(k, s)) + gammaln(s + 2 * n + 1.0) - gammaln(np.maximum(s - k, 0) + 2 * n + 1.0)), 0.0)

    def coef_single(mm, j):  # C(m,j) (m+n)!/(m-j+n)!
        return np.where(mm >= j, np.exp(log_binomial(mm, np.minimum(j, mm)) + gammaln(mm + n + 1.0) - gammaln(np.maximum(mm - j, 0) + n + 1.0)), 0.0)

    s = m[:, None] + m[None, :]
    base = logD[:, None] + logD[None, :] + (2.0 * (s + n) - 2.0 * k) * la
    DD = sD[:, None] * sD[None, :] * np.where(np.isfinite(base), np.exp(np.where(np.isfinite(base), base, 0.0)), 0.0)
    prod = np.zeros_like(DD)
    for j in range(k + 1):
        prod += coef_single(m, j)[:, None] * coef_single(m, k - j)[None, :]
    wn = coef_pair_n(s + n) - prod
    wa = coef_pair_a2(s) - prod
    dn = G * G * math.fsum((DD * wn).ravel())
    da = G * G * cmath.exp(2j * n * laser.phi_alpha) * math.fsum((DD * wa).ravel())
    return dn, da


# --- closed forms -----------------------------------------------------------

# bivariate polynomials in (m1, m2) as {(i, j): Fraction}


def _pmul(p, q):
    out = {}
    for (a, b), c in p.items():
        for (d, e), f in q.items():
            key = (a + d, b + e)
            out[key] = out.get(key, 0) + c * f
    return {k: v for k, v in out.items() if v != 0}


def _padd(p, q, scale=1):
    out = dict(p)
    for key, v in q.items():
        out[key] = out.get(key, 0) + scale * v
    return {k: v for k, v in out.items() if v != 0}


def _falling(p, k):
    """(p)_k = p (p-1) ... (p-k+1)."""
    out = {(0, 0): Fraction(1)}
    for i in range(k):
        out = _pmul(out, _padd(p, {(0, 0): Fraction(-i)}))
    return out


def error_polynomial(n: int, order: int):
    """Coefficient polynomials of the order-k APP error, as {(mu, nu): Fraction}.

    Returned pair (for <a+a> - |<a>|^2, for <a^2> - <a>^2); the (m1, m2) term of
    each error sum at |alpha|^{2(m1+m2+n-k)} is D_m1 D_m2 times the polynomial.
    """
    k = int(order)
    if k < 1:
        raise ValueError("order must be >= 1")
    m1 = {(1, 0): Fraction(1)}
    m2 = {(0, 1): Fraction(1)}
    kfac = Fraction(math.factorial(k))
    M = _padd(_padd(m1, m2), {(0, 0): Fraction(n)})
    s = _padd(m1, m2)
    top_n = {key: v / kfac for key, v in _pmul(_falling(M, k), _falling(M, k)).items()}
    s2n = _padd(s, {(0, 0): Fraction(2 * n)})
    top_a2 = {key: v / kfac for key, v in _pmul(_falling(s, k), _falling(s2n, k)).items()}

    def single(var, j):
        shifted = _padd(var, {(0, 0): Fraction(n)})
        jf = Fraction(math.factorial(j))
        return {key: v / jf for key, v in _pmul(_falling(var, j), _falling(shifted, j)).items()}

    prod = {}
    for j in range(k + 1):
        prod = _padd(prod, _pmul(single(m1, j), single(m2, k - j)))
    return _padd(top_n, prod, -1), _padd(top_a2, prod, -1)


def _abar(crystal, laser, n, mu_max):
    C = oneband.c_coefficients(crystal)
    x = oneband.gtilde(crystal, laser) * laser.alpha_abs * crystal.orders()
    return [float(np.dot(C, a_mu(n, mu, x))) for mu in range(mu_max + 1)]


def closed_form_error_terms(crystal, laser, n, G_n=None, order=1, current=None):
    """(delta_n, delta_a2) at one order in 1/|alpha|^2 from Bessel closed forms.

    delta_n approximates <a+a> - |<a>|^2 and delta_a2 approximates <a^2> - <a>^2
    (APP side; both vanish exactly for the emitted coherent state).
    """
    n = oneband._check_odd(n)
    if not laser.alpha_abs > 0:
        raise ValueError("|alpha| must be positive")
    G = _resolve_G(crystal, laser, n, G_n, current)
    pn, pa = error_polynomial(n, order)
    deg = max(max(i, j) for i, j in list(pn) + list(pa))
    if deg > 3:
        raise UnsupportedOrderError(f"order {order} needs A_(n,mu) with mu = {deg} > 3")
    A = _abar(crystal, laser, n, deg)
    scale = G * G / laser.alpha_abs ** (2 * order)

    def contract(p):
        return math.fsum(float(c) * A[i] * A[j] for (i, j), c in p.items())

    dn = scale * contract(pn)
    da = scale * cmath.exp(2j * n * laser.phi_alpha) * contract(pa)
    return dn, da


def variance_error(crystal, laser, n, theta, G_n=None, order=1):
    """<dX^2(theta)>_APP - 1/4 at the given order: (1/4)[2 dn + 2 Re(e^{-2i theta} da)]."""
    dn, da = closed_form_error_terms(crystal, laser, n, G_n=G_n, order=order)
    return 0.25 * (2.0 * dn + 2.0 * (cmath.exp(-2j * theta) * da).real)


def variance_error_extremes(dn, da):
    """(err_max, err_min, theta_max, theta_min) of the absolute variance error."""
    mag = abs(da)
    theta_max = math.fmod(0.5 * cmath.phase(da) + math.pi, math.pi) if mag > 0 else 0.0
    theta_min = math.fmod(theta_max + 0.5 * math.pi, math.pi)
    return 0.5 * (dn + mag), 0.5 * (dn - mag), theta_max, theta_min


@dataclass(frozen=True)
class VarianceErrorRow:
    """Variance errors relative to the exact value 1/4."""

    L: int
    err_max: float
    err_min: float
    theta_max: float
    theta_min: float
    err_second_order: float


def _row(crystal_template, laser, n, L):
    crystal = replace(crystal_template, L=L)
    G = oneband.renormalize(crystal, laser, n)
    dn, da = closed_form_error_terms(crystal, laser, n, G_n=G, order=1)
    emax, emin, tmax, tmin = variance_error_extremes(dn, da)
    dn2, da2 = closed_form_error_terms(crystal, laser, n, G_n=G, order=2)
    # max over theta of |(1/4)(2 dn2 + 2 Re(e^{-2i theta} da2))|
    second = 0.5 * (abs(dn2) + abs(da2))
    return VarianceErrorRow(
        L=L,
        err_max=emax / VACUUM_VARIANCE,
        err_min=emin / VACUUM_VARIANCE,
        theta_max=tmax,
        theta_min=tmin,
        err_second_order=second / VACUUM_VARIANCE,
    )


def sweep_error_vs_L(crystal_template, laser, n, L_values: Sequence[int], threads=None):
    """Sweep of the APP variance error over system size, ordered by L."""
    Ls = [int(L) for L in L_values]
    if any(L < 2 or L % 2 for L in Ls):
        raise ValueError("L values must be even integers >= 2")
    if any(b <= a for a, b in zip(Ls, Ls[1:])):
        raise ValueError("L values must be strictly ascending")
    n = oneband._check_odd(n)
    if threads is None or threads <= 1 or len(Ls) <= 1:
        return [_row(crystal_template, laser, n, L) for L in Ls]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda L: _row(crystal_template, laser, n, L), Ls))


def loglog_slope(x, y):
    """Least-squares slope of log y against log x; None for fewer than two points."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        return None
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive data")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


# --- Wigner function ---------------------------------------------------------


def _map_nodes(state, gamma_map, grid):
    grid, mass = _prepare(state, grid)
    beta, wq = _weighted(state, grid)
    g = beta if gamma_map is None else _apply(gamma_map, beta)
    return g, wq, mass


def wigner_app(state: DrivingState, gamma_map: Callable | None, alpha, grid: QuadratureGrid | None = None) -> float:
    """W(alpha) = (2/pi) int Q(beta) exp(-2|alpha - gamma(beta)|^2) d^2beta."""
    g, wq, _ = _map_nodes(state, gamma_map, grid)
    alpha = complex(alpha)
    return float(2.0 / math.pi * np.sum(wq * np.exp(-2.0 * np.abs(alpha - g) ** 2)))


@dataclass(frozen=True)
class WignerMap:
    re: np.ndarray
    im: np.ndarray
    W: np.ndarray  # W[i, j] at re[i] + 1j*im[j]
    outside_mass: float = field(default=0.0)

    @property
    def integral(self):
        return map_integral(self.re, self.im, self.W)


def wigner_window(state, gamma_map=None, grid=None, pad=4.0):
    """Square window (center, half_width) holding the image of the Q-grid under gamma."""
    g, wq, _ = _map_nodes(state, gamma_map, grid)
    keep = wq > 1e-16 * wq.max()
    g = g[keep]
    center = complex(0.5 * (g.real.max() + g.real.min()), 0.5 * (g.imag.max() + g.imag.min()))
    half = max(g.real.max() - g.real.min(), g.imag.max() - g.imag.min()) / 2.0 + pad
    return center, half


def wigner_map(state, gamma_map=None, re_axis=None, im_axis=None, grid=None, points=64) -> WignerMap:
    """W on the rectangular window re_axis x im_axis (auto-sized if omitted)."""
    g, wq, mass = _map_nodes(state, gamma_map, grid)
    if re_axis is None or im_axis is None:
        center, half = wigner_window(state, gamma_map, grid)
        if re_axis is None:
            re_axis = np.linspace(center.real - half, center.real + half, points)
        if im_axis is None:
            im_axis = np.linspace(center.imag - half, center.imag + half, points)
    re_axis = np.asarray(re_axis, dtype=float)
    im_axis = np.asarray(im_axis, dtype=float)
    # exp(-2|alpha - g|^2) factorizes into real and imaginary parts
    Ex = np.exp(-2.0 * (re_axis[:, None] - g.real[None, :]) ** 2)
    Ey = np.exp(-2.0 * (im_axis[:, None] - g.imag[None, :]) ** 2)
    W = 2.0 / math.pi * (Ex * wq[None, :]) @ Ey.T
    return WignerMap(re=re_axis, im=im_axis, W=W, outside_mass=mass)


def map_integral(re_axis, im_axis, W) -> float:
    """Trapezoidal integral of a gridded map over the rectangle."""
    return float(trapezoid(trapezoid(W, im_axis, axis=1), re_axis))
