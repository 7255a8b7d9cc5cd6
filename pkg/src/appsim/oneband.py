"""One-dimensional single-band solid driven by a coherent laser.

Band structure E(q) = sum_l b_l cos(a l q), geometric constants C_l, the
finite-pulse intraband current, its windowed Fourier integral, and the
closed-form Bessel-series harmonic amplitudes

    gamma_n = G_n sum_l C_l J_n(l g~ |alpha|) e^{i n phi_alpha},   g~ = 2 a g0 / sqrt(omega_L).

G_n is fixed by matching the closed form to the finite-pulse simulation.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import gammaln

from .specfun import bessel_j_orders

__all__ = [
    "Crystal",
    "LaserConfig",
    "HarmonicAmplitude",
    "RenormalizationError",
    "ZNO_B",
    "zno_crystal",
    "zno_laser",
    "c_coefficients",
    "gtilde",
    "current_timeseries",
    "gamma_numeric",
    "bessel_sum",
    "gamma_analytic",
    "renormalize",
    "harmonic_amplitude",
    "taylor_coeffs",
    "taylor_coeffs_log",
    "oneband_gamma_map",
]

# ZnO along Gamma-M, atomic units
ZNO_A = 5.32
ZNO_B = (-0.0814, -0.0024, -0.0048, -0.0003, -0.0009)
ZNO_G0 = 4e-8
ZNO_OMEGA = 0.005
ZNO_PHOTONS = 7.35e11


class RenormalizationError(ArithmeticError):
    """The closed-form Bessel sum vanishes, so G_n cannot be matched."""


@dataclass(frozen=True)
class Crystal:
    """Lattice constant ``a``, band coefficients ``b`` (b_1..b_lmax), ``L`` sites."""

    a: float
    b: tuple
    L: int

    def __post_init__(self):
        object.__setattr__(self, "b", tuple(float(v) for v in self.b))
        if not self.a > 0:
            raise ValueError("lattice constant must be positive")
        if len(self.b) < 1:
            raise ValueError("need at least one band coefficient")
        if int(self.L) != self.L or self.L < 2 or self.L % 2:
            raise ValueError(f"site count L must be an even integer >= 2, got {self.L}")
        object.__setattr__(self, "L", int(self.L))

    @property
    def l_max(self):
        return len(self.b)

    def orders(self):
        return np.arange(1, self.l_max + 1)

    def momentum_indices(self):
        """Integer labels k with q_k = 2 pi k / (L a), k = -L/2 .. L/2 - 1."""
        return np.arange(-self.L // 2, self.L // 2)

    def energy(self, q):
        q = np.asarray(q, dtype=float)
        l = self.orders().reshape((-1,) + (1,) * q.ndim)
        b = np.asarray(self.b).reshape(l.shape)
        return np.sum(b * np.cos(self.a * l * q), axis=0)

    def occupied_indices(self):
        """The L/2 lowest-energy momentum labels; ties go to the more negative k."""
        k = self.momentum_indices()
        # cos is even, so E(k) == E(-k) bitwise when built from the integer label
        energy = self.energy(2.0 * math.pi * k / (self.L * self.a))
        order = np.lexsort((k, energy))
        return np.sort(k[order[: self.L // 2]])

    def occupied_momenta(self):
        return 2.0 * math.pi * self.occupied_indices() / (self.L * self.a)


@dataclass(frozen=True)
class LaserConfig:
    g0: float
    omega_L: float
    alpha_abs: float
    phi_alpha: float = 0.0
    n_cycles: int = 20
    samples_per_cycle: int = 512
    envelope: str = "sin2"

    def __post_init__(self):
        if not self.g0 >= 0:
            raise ValueError("g0 must be >= 0")
        if not self.omega_L > 0:
            raise ValueError("omega_L must be positive")
        if not self.alpha_abs >= 0:
            raise ValueError("alpha_abs must be >= 0")
        if self.n_cycles < 1:
            raise ValueError("n_cycles must be >= 1")
        if self.samples_per_cycle < 64:
            raise ValueError("samples_per_cycle must be >= 64")
        if self.envelope not in ("sin2", "flat"):
            raise ValueError(f"envelope must be 'sin2' or 'flat', got {self.envelope!r}")

    @property
    def duration(self):
        return 2.0 * math.pi * self.n_cycles / self.omega_L

    @property
    def photon_number(self):
        return self.alpha_abs**2

    def with_alpha(self, alpha_abs, phi_alpha=None):
        phi = self.phi_alpha if phi_alpha is None else phi_alpha
        return replace(self, alpha_abs=float(alpha_abs), phi_alpha=float(phi))


@dataclass(frozen=True)
class HarmonicAmplitude:
    n: int
    gamma: complex
    G_n: float


def zno_crystal(L=100) -> Crystal:
    return Crystal(a=ZNO_A, b=ZNO_B, L=L)


def zno_laser(**overrides) -> LaserConfig:
    """20-cycle sin^2 pulse carrying 7.35e11 photons (alpha = sqrt of that)."""
    params = dict(g0=ZNO_G0, omega_L=ZNO_OMEGA, alpha_abs=math.sqrt(ZNO_PHOTONS))
    params.update(overrides)
    return LaserConfig(**params)


def c_coefficients(crystal: Crystal) -> np.ndarray:
    """C_l = l b_l sum_{q occupied} cos(a l q), l = 1..l_max."""
    k = crystal.occupied_indices()
    l = crystal.orders()
    # a l q = 2 pi l k / L
    phase = 2.0 * math.pi * np.outer(l, k) / crystal.L
    return l * np.asarray(crystal.b) * np.cos(phase).sum(axis=1)


def gtilde(crystal: Crystal, laser: LaserConfig) -> float:
    return 2.0 * crystal.a * laser.g0 / math.sqrt(laser.omega_L)


def _envelope(laser, t):
    if laser.envelope == "flat":
        return np.ones_like(t)
    return np.sin(0.5 * laser.omega_L * t / laser.n_cycles) ** 2


def time_grid(laser: LaserConfig) -> np.ndarray:
    n = laser.n_cycles * laser.samples_per_cycle
    return np.linspace(0.0, laser.duration, n + 1)


def current_timeseries(crystal: Crystal, laser: LaserConfig):
    """Sampled intraband current j(t) = -2a sum_l C_l sin[a l A(t)] over the pulse.

    A(t) = (2 g0 |alpha| / sqrt(omega_L)) env(t) cos(omega_L t - phi_alpha).
    Returns ``(t, j)`` arrays.
    """
    t = time_grid(laser)
    amp = gtilde(crystal, laser) * laser.alpha_abs  # a * A0
    drive = amp * _envelope(laser, t) * np.cos(laser.omega_L * t - laser.phi_alpha)
    C = c_coefficients(crystal)
    j = -2.0 * crystal.a * (C[:, None] * np.sin(crystal.orders()[:, None] * drive[None, :])).sum(axis=0)
    if laser.envelope == "sin2":
        j[0] = 0.0
        j[-1] = 0.0
    return t, j


def gamma_numeric(crystal: Crystal, laser: LaserConfig, omega, current=None):
    """gamma(omega) = -i (g0/sqrt(omega)) int_0^T j(t) e^{i omega t} dt (trapezoidal).

    ``omega`` may be a scalar or an array; ``current`` reuses a precomputed
    ``(t, j)`` pair.
    """
    om = np.asarray(omega, dtype=float)
    if np.any(om <= 0):
        raise ValueError("omega must be positive")
    t, j = current if current is not None else current_timeseries(crystal, laser)
    dt = t[1] - t[0]
    w = np.full_like(t, dt)
    w[0] = w[-1] = 0.5 * dt
    wj = w * j
    flat = om.reshape(-1)
    out = np.empty(flat.size, dtype=complex)
    chunk = max(1, 2_000_000 // t.size)
    for s in range(0, flat.size, chunk):
        o = flat[s : s + chunk]
        out[s : s + chunk] = np.exp(1j * np.outer(o, t)) @ wj
    out *= -1j * laser.g0 / np.sqrt(flat)
    out = out.reshape(om.shape)
    return complex(out) if out.ndim == 0 else out


def bessel_sum(crystal: Crystal, laser: LaserConfig, n: int, alpha_abs=None):
    """sum_l C_l J_n(l g~ |alpha|); ``alpha_abs`` may be an array."""
    x = laser.alpha_abs if alpha_abs is None else alpha_abs
    x = np.asarray(x, dtype=float)
    C = c_coefficients(crystal)
    l = crystal.orders().reshape((-1,) + (1,) * x.ndim)
    J = bessel_j_orders(n, gtilde(crystal, laser) * l * x[None, ...])[n]
    val = np.tensordot(C, J, axes=(0, 0))
    return float(val) if val.ndim == 0 else val


def _check_odd(n):
    if int(n) != n or n < 1 or n % 2 == 0:
        raise ValueError(f"harmonic order must be an odd positive integer, got {n!r}")
    return int(n)


def gamma_analytic(crystal: Crystal, laser: LaserConfig, n: int, G_n: float) -> complex:
    """Closed-form coherent amplitude of odd harmonic n."""
    n = _check_odd(n)
    return G_n * bessel_sum(crystal, laser, n) * cmath.exp(1j * n * laser.phi_alpha)


def renormalize(crystal: Crystal, laser: LaserConfig, n: int, current=None) -> float:
    """G_n = |gamma_numeric(n omega_L)| / |sum_l C_l J_n(l g~ |alpha|)|."""
    n = _check_odd(n)
    denom = bessel_sum(crystal, laser, n)
    C = c_coefficients(crystal)
    x = gtilde(crystal, laser) * laser.alpha_abs * crystal.orders()
    J = bessel_j_orders(n + 1, x)
    # neighbouring orders set the size of the sum away from a zero crossing
    scale = float(np.sum(np.abs(C) * (np.abs(J[n - 1]) + np.abs(J[n + 1]))))
    if denom == 0 or abs(denom) <= 1e-12 * scale:
        raise RenormalizationError(
            f"sum_l C_l J_{n}(l g~|alpha|) = {denom:.3e} vanishes; G_{n} is undefined"
        )
    num = abs(gamma_numeric(crystal, laser, n * laser.omega_L, current=current))
    return num / abs(denom)


def harmonic_amplitude(crystal: Crystal, laser: LaserConfig, n: int, current=None) -> HarmonicAmplitude:
    G = renormalize(crystal, laser, n, current=current)
    return HarmonicAmplitude(n=n, gamma=gamma_analytic(crystal, laser, n, G), G_n=G)


def taylor_coeffs_log(crystal: Crystal, laser: LaserConfig, n: int, m_max: int):
    """ln|D_m| and sign(D_m) for m = 0..m_max, where

    D_m = sum_l (-1)^m C_l (g~/2)^(2m+n) l^(2m+n) / (m! (m+n)!).
    """
    if m_max < 0:
        raise ValueError("m_max must be >= 0")
    C = c_coefficients(crystal)
    l = crystal.orders().astype(float)
    keep = C != 0
    m = np.arange(m_max + 1)
    p = 2 * m + n
    logabs = np.full(m_max + 1, -np.inf)
    sign = np.zeros(m_max + 1)
    g = gtilde(crystal, laser)
    if not np.any(keep) or g == 0:
        return logabs, sign
    C, l = C[keep], l[keep]
    lref = l.max()
    # sum_l C_l l^p = lref^p * sum_l C_l (l/lref)^p keeps the powers bounded
    S = (C[None, :] * (l[None, :] / lref) ** p[:, None]).sum(axis=1)
    nz = S != 0
    with np.errstate(divide="ignore"):
        logabs = np.where(
            nz,
            np.log(np.abs(S)) + p * math.log(lref) + p * math.log(0.5 * g) - gammaln(m + 1.0) - gammaln(m + n + 1.0),
            -np.inf,
        )
    sign = np.sign(S) * np.where(m % 2 == 0, 1.0, -1.0)
    return logabs, sign


def taylor_coeffs(crystal: Crystal, laser: LaserConfig, n: int, m_max: int) -> np.ndarray:
    """D_0..D_{m_max} as floats (may underflow to 0 for tiny couplings)."""
    logabs, sign = taylor_coeffs_log(crystal, laser, n, m_max)
    return sign * np.exp(logabs)


def oneband_gamma_map(crystal: Crystal, laser: LaserConfig, n: int, G_n: float):
    """beta -> gamma_n^beta = G_n sum_l C_l J_n(l g~ |beta|) e^{i n arg beta}."""
    n = _check_odd(n)

    def gamma_map(beta):
        beta = np.asarray(beta, dtype=complex)
        phase = np.exp(1j * n * np.angle(beta))
        return G_n * bessel_sum(crystal, laser, n, np.abs(beta)) * phase

    return gamma_map
