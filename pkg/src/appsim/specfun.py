"""Special-function kernel.

Integer-order Bessel functions J_n and I_n (Miller's downward recurrence with a
power-series path at small argument), log-factorial helpers, and the two
auxiliary families used by the one-band moment sums:

    S_{i,j}(x)   = x^{-i} d^j/dx^j (e^x x^{i+j})
    A_{n,mu}(x)  = sum_m (-1)^m m^mu / (m! (m+n)!) (x/2)^(2m+n)

Everything here is a pure function of its arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

__all__ = [
    "SeriesTolerance",
    "SeriesConvergenceError",
    "UnsupportedOrderError",
    "DEFAULT_TOLERANCE",
    "log_factorial",
    "log_binomial",
    "bessel_j",
    "bessel_j_orders",
    "bessel_i",
    "bessel_i_scaled",
    "s_func_finite",
    "log_s_func_finite",
    "s_func_series",
    "a_mu",
    "a_mu_series",
]


@dataclass(frozen=True)
class SeriesTolerance:
    """Stopping rule for the infinite series in this module."""

    rel_tol: float = 1e-14
    max_terms: int = 500

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ValueError(f"rel_tol must be positive, got {self.rel_tol}")
        if self.max_terms < 1:
            raise ValueError(f"max_terms must be >= 1, got {self.max_terms}")


DEFAULT_TOLERANCE = SeriesTolerance()


class SeriesConvergenceError(ArithmeticError):
    """A series did not reach its tolerance within ``max_terms`` terms."""


class UnsupportedOrderError(ValueError):
    """Requested an A_{n,mu} order without a closed form."""


# below this |x| the power series is used; terms decrease monotonically there
_SERIES_CUTOFF = 2.0
_RESCALE = 1e250


def log_factorial(n):
    """ln(n!) through the log-gamma function; accepts arrays."""
    return gammaln(np.asarray(n, dtype=float) + 1.0)


def log_binomial(n, k):
    """ln C(n, k) for 0 <= k <= n."""
    n = np.asarray(n, dtype=float)
    k = np.asarray(k, dtype=float)
    return gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)


def _check_order(n):
    if int(n) != n or n < 0:
        raise ValueError(f"order must be a nonnegative integer, got {n!r}")
    return int(n)


def _as_finite_array(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def _start_order(nmax, xmax):
    # even start order well above both the requested order and the argument
    m = max(nmax, int(math.ceil(xmax)))
    start = m + 30 + int(math.ceil(8.0 * math.sqrt(m + 1.0)))
    return start + (start % 2)


def _j_series(n, x):
    """Power series for J_n on |x| <= _SERIES_CUTOFF (x may be an array)."""
    x = np.asarray(x, dtype=float)
    h = 0.5 * x
    h2 = h * h
    term = np.ones_like(x)
    total = np.ones_like(x)
    for m in range(1, 60):
        term = term * (-h2) / (m * (m + n))
        total = total + term
        if np.all(np.abs(term) <= 1e-17 * np.abs(total)):
            break
    # leading factor (x/2)^n / n!, built in log space to avoid overflow in n!
    with np.errstate(divide="ignore"):
        lead = np.exp(n * np.log(np.abs(h)) - gammaln(n + 1.0)) if n else np.ones_like(x)
    if n % 2:
        lead = lead * np.sign(x)
    return lead * total


def _j_miller(nmax, x):
    """J_0..J_nmax at positive x by normalized downward recurrence.

    Returns an array of shape (nmax + 1,) + x.shape.
    """
    start = _start_order(nmax, float(np.max(x)))
    out = np.zeros((nmax + 1,) + x.shape)
    nxt = np.zeros_like(x)
    cur = np.full_like(x, 1e-30)
    norm = np.zeros_like(x)
    inv_x = 1.0 / x
    for k in range(start, 0, -1):
        if k <= nmax:
            out[k] = cur
        if k % 2 == 0:
            norm += 2.0 * cur
        prev = 2.0 * k * inv_x * cur - nxt
        nxt, cur = cur, prev
        big = np.abs(cur) > _RESCALE
        if np.any(big):
            scale = np.where(big, 1.0 / _RESCALE, 1.0)
            cur = cur * scale
            nxt = nxt * scale
            norm = norm * scale
            out *= scale
    out[0] = cur
    norm += cur
    return out / norm


def bessel_j_orders(nmax, x):
    """J_0(x) .. J_nmax(x) in one pass; shape (nmax + 1,) + shape(x)."""
    nmax = _check_order(nmax)
    x = _as_finite_array(x)
    flat = x.reshape(-1)
    ax = np.abs(flat)
    out = np.empty((nmax + 1, flat.size))
    small = ax <= _SERIES_CUTOFF
    if np.any(small):
        for k in range(nmax + 1):
            out[k, small] = _j_series(k, flat[small])
    large = ~small
    if np.any(large):
        vals = _j_miller(nmax, ax[large])
        odd = np.arange(nmax + 1) % 2 == 1
        neg = flat[large] < 0
        vals[np.ix_(odd, neg)] *= -1.0
        out[:, large] = vals
    return out.reshape((nmax + 1,) + x.shape)


def bessel_j(n, x):
    """Bessel function of the first kind J_n(x) for integer n >= 0.

    Accurate to ~1e-13 relative away from zeros of J_n for n <= 50 and
    |x| <= 100; scalar in, scalar out.
    """
    n = _check_order(n)
    x = _as_finite_array(x)
    val = bessel_j_orders(n, x)[n]
    return float(val) if val.ndim == 0 else val


def _i_series_scaled(n, x):
    """e^{-x} I_n(x) from the power series (x >= 0, moderate)."""
    h = 0.5 * x
    h2 = h * h
    term = np.ones_like(x)
    total = np.ones_like(x)
    for m in range(1, 80):
        term = term * h2 / (m * (m + n))
        total = total + term
        if np.all(term <= 1e-17 * total):
            break
    with np.errstate(divide="ignore"):
        loglead = (n * np.log(h) if n else 0.0) - gammaln(n + 1.0) - x
    return np.exp(loglead) * total


def _i_miller_scaled(nmax, x):
    """e^{-x} I_n(x), n = 0..nmax, by downward recurrence normalized with
    I_0 + 2 sum_k I_k = e^x (all terms positive)."""
    xmax = float(np.max(x))
    start = max(nmax, int(math.ceil(xmax))) + 30 + int(math.ceil(math.sqrt(90.0 * (xmax + 1.0))))
    out = np.zeros((nmax + 1,) + x.shape)
    nxt = np.zeros_like(x)
    cur = np.full_like(x, 1e-30)
    norm = np.zeros_like(x)
    inv_x = 1.0 / x
    for k in range(start, 0, -1):
        if k <= nmax:
            out[k] = cur
        norm += 2.0 * cur
        prev = 2.0 * k * inv_x * cur + nxt
        nxt, cur = cur, prev
        big = cur > _RESCALE
        if np.any(big):
            scale = np.where(big, 1.0 / _RESCALE, 1.0)
            cur = cur * scale
            nxt = nxt * scale
            norm = norm * scale
            out *= scale
    out[0] = cur
    norm += cur
    return out / norm


def bessel_i_scaled(n, x):
    """Exponentially scaled modified Bessel function e^{-x} I_n(x), x >= 0."""
    n = _check_order(n)
    x = _as_finite_array(x)
    if np.any(x < 0):
        raise ValueError("bessel_i is defined here for x >= 0 only")
    flat = np.atleast_1d(x)
    val = np.empty_like(flat)
    small = flat <= _SERIES_CUTOFF
    if np.any(small):
        val[small] = _i_series_scaled(n, flat[small])
    if np.any(~small):
        val[~small] = _i_miller_scaled(n, flat[~small])[n]
    val = val.reshape(x.shape)
    return float(val) if val.ndim == 0 else val


def bessel_i(n, x):
    """Modified Bessel function I_n(x), x >= 0. Overflows past x ~ 709; use
    :func:`bessel_i_scaled` there."""
    scaled = bessel_i_scaled(n, x)
    with np.errstate(over="ignore"):
        val = np.asarray(scaled) * np.exp(np.asarray(x, dtype=float))
    return float(val) if val.ndim == 0 else val


def _check_sfunc_args(i, j, x):
    i = _check_order(i)
    j = _check_order(j)
    if not math.isfinite(x):
        raise ValueError("x must be finite")
    if x < 0:
        raise ValueError(f"S_(i,j)(x) needs x >= 0, got {x}")
    return i, j, float(x)


def log_s_func_finite(i, j, x):
    """ln S_{i,j}(x) from the finite Leibniz form (all terms positive)."""
    i, j, x = _check_sfunc_args(i, j, x)
    q = np.arange(j + 1, dtype=float)
    logs = log_binomial(j, q) + gammaln(i + j + 1.0) - gammaln(i + q + 1.0)
    if x == 0.0:
        return float(logs[0])
    return float(x + logsumexp(logs + q * math.log(x)))


def s_func_finite(i, j, x):
    """S_{i,j}(x) = e^x sum_{q<=j} C(j,q) (i+j)!/(i+q)! x^q."""
    return math.exp(log_s_func_finite(i, j, x))


def s_func_series(i, j, x, tol: SeriesTolerance = DEFAULT_TOLERANCE):
    """S_{i,j}(x) from its Taylor series sum_l (l+i+j)!/(l+i)! x^l/l!."""
    i, j, x = _check_sfunc_args(i, j, x)
    term = math.exp(gammaln(i + j + 1.0) - gammaln(i + 1.0))
    total = term
    for l in range(tol.max_terms):
        term *= x * (l + i + j + 1) / ((l + i + 1) * (l + 1))
        total += term
        # ratio < 1 guarantees the remaining tail is geometric-bounded
        ratio = x * (l + i + j + 2) / ((l + i + 2) * (l + 2))
        if ratio < 1 and term <= tol.rel_tol * total * (1 - ratio):
            return total
    raise SeriesConvergenceError(
        f"S_({i},{j})({x}) series not converged after {tol.max_terms} terms"
    )


def a_mu(n, mu, x):
    """A_{n,mu}(x) in closed form through Bessel functions, mu in 0..3.

    A_{n,0} = J_n
    A_{n,1} = -(x/2) J_{n+1}
    A_{n,2} = (x^2 J_{n+2} - 2x J_{n+1}) / 4
    A_{n,3} = (-x^3 J_{n+3} + 6x^2 J_{n+2} - 4x J_{n+1}) / 8
    """
    n = _check_order(n)
    if mu not in (0, 1, 2, 3):
        raise UnsupportedOrderError(f"A_(n,mu) closed form available for mu <= 3, got {mu}")
    x = _as_finite_array(x)
    flat = np.atleast_1d(x)
    J = bessel_j_orders(n + mu, flat)
    if mu == 0:
        val = J[n]
    elif mu == 1:
        val = -0.5 * flat * J[n + 1]
    elif mu == 2:
        val = 0.25 * (flat**2 * J[n + 2] - 2.0 * flat * J[n + 1])
    else:
        val = 0.125 * (-(flat**3) * J[n + 3] + 6.0 * flat**2 * J[n + 2] - 4.0 * flat * J[n + 1])
    val = val.reshape(x.shape)
    return float(val) if val.ndim == 0 else val


def a_mu_series(n, mu, x, tol: SeriesTolerance = DEFAULT_TOLERANCE):
    """A_{n,mu}(x) summed from its defining series (scalar x, modest |x|)."""
    n = _check_order(n)
    mu = _check_order(mu)
    x = float(x)
    if x == 0.0:
        return 1.0 if (n == 0 and mu == 0) else 0.0
    h = 0.5 * x
    # (x/2)^n / n! by repeated multiplication keeps the terms correctly rounded
    base = 1.0
    for k in range(1, n + 1):
        base *= h / k
    h2 = h * h
    terms = [base if mu == 0 else 0.0]
    scale = abs(base)
    for m in range(1, tol.max_terms):
        base *= -h2 / (m * (m + n))
        terms.append(base * float(m) ** mu)
        scale = max(scale, abs(terms[-1]))
        # past the peak term the remainder is bounded by the current term
        if m > abs(h) + mu and abs(terms[-1]) <= 1e-3 * tol.rel_tol * scale:
            return math.fsum(terms)
    raise SeriesConvergenceError(f"A_({n},{mu})({x}) series not converged")
