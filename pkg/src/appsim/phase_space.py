"""Driving-field states, Husimi functions and phase-plane quadrature.

Each state family knows its Husimi function Q(beta) = <beta|rho|beta>/pi and its
exact normally ordered moments. :func:`integrate_q` evaluates
``int d^2 beta Q(beta) f(beta)`` on a tensor Gauss-Legendre grid, which is the
engine behind every APP expectation value.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.special import gammaln, gammainccinv, gammaincc, ndtr

__all__ = [
    "Coherent",
    "Fock",
    "SqueezedVacuum",
    "DisplacedSqueezed",
    "Thermal",
    "DrivingState",
    "FieldMoments",
    "QuadratureGrid",
    "QuadResult",
    "CoverageWarning",
    "MAX_GRID_CENTER",
    "husimi",
    "log_husimi",
    "exact_moments",
    "antinormal_fourth",
    "default_grid",
    "outside_mass_bound",
    "integrate_q",
    "app_moments",
    "state_to_dict",
    "state_from_dict",
]

# grid integration is only trusted for moderate displacements
MAX_GRID_CENTER = 50.0
COVERAGE_LIMIT = 1e-10
_LOG_PI = math.log(math.pi)


class CoverageWarning(RuntimeWarning):
    """The quadrature window leaves a noticeable part of Q outside."""


@dataclass(frozen=True)
class FieldMoments:
    """Normally ordered single-mode moments <a>, <a^2>, <a+a>, <a+a+aa>."""

    a: complex
    a2: complex
    n: float
    n2_normal: float

    def as_dict(self):
        return {
            "a": [self.a.real, self.a.imag],
            "a2": [self.a2.real, self.a2.imag],
            "n": self.n,
            "n2_normal": self.n2_normal,
        }


def antinormal_fourth(m: FieldMoments) -> float:
    """<a a a+ a+> from normally ordered moments."""
    return m.n2_normal + 4.0 * m.n + 2.0


def _sq_stats(r, phi):
    s, c = math.sinh(r), math.cosh(r)
    return s * s, -complex(math.cos(phi), math.sin(phi)) * s * c


@dataclass(frozen=True)
class Coherent:
    alpha: complex = 0j

    def __post_init__(self):
        object.__setattr__(self, "alpha", complex(self.alpha))
        if not (math.isfinite(self.alpha.real) and math.isfinite(self.alpha.imag)):
            raise ValueError("alpha must be finite")

    def log_q(self, beta):
        return -np.abs(beta - self.alpha) ** 2 - _LOG_PI

    def moments(self):
        al = self.alpha
        n = abs(al) ** 2
        return FieldMoments(a=al, a2=al * al, n=n, n2_normal=n * n)


@dataclass(frozen=True)
class Fock:
    n: int = 0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 0:
            raise ValueError(f"Fock number must be a nonnegative integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))

    def log_q(self, beta):
        r2 = np.abs(beta) ** 2
        with np.errstate(divide="ignore"):
            log_r2 = np.log(r2)
        if self.n == 0:
            log_r2 = np.zeros_like(r2)
        return self.n * log_r2 - r2 - gammaln(self.n + 1.0) - _LOG_PI

    def moments(self):
        n = float(self.n)
        return FieldMoments(a=0j, a2=0j, n=n, n2_normal=n * (n - 1.0))


@dataclass(frozen=True)
class SqueezedVacuum:
    """S(xi)|0> with xi = r e^{i phi_s}; <a^2> = -e^{i phi_s} sinh r cosh r."""

    r: float = 0.0
    phi_s: float = 0.0

    def __post_init__(self):
        if not (self.r >= 0 and math.isfinite(self.r)):
            raise ValueError(f"squeezing r must be finite and >= 0, got {self.r}")

    def log_q(self, beta):
        t = math.tanh(self.r)
        rot = complex(math.cos(self.phi_s), math.sin(self.phi_s))
        return (
            -np.abs(beta) ** 2
            - t * np.real(rot * np.conj(beta) ** 2)
            - math.log(math.cosh(self.r))
            - _LOG_PI
        )

    def moments(self):
        s2, a2 = _sq_stats(self.r, self.phi_s)
        return FieldMoments(a=0j, a2=a2, n=s2, n2_normal=3.0 * s2 * s2 + s2)


@dataclass(frozen=True)
class DisplacedSqueezed:
    """D(alpha) S(xi)|0>."""

    alpha: complex = 0j
    r: float = 0.0
    phi_s: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "alpha", complex(self.alpha))
        if not (self.r >= 0 and math.isfinite(self.r)):
            raise ValueError(f"squeezing r must be finite and >= 0, got {self.r}")

    def log_q(self, beta):
        return SqueezedVacuum(self.r, self.phi_s).log_q(beta - self.alpha)

    def moments(self):
        al = self.alpha
        s2, b2 = _sq_stats(self.r, self.phi_s)
        na = abs(al) ** 2
        # a = alpha + b with b Gaussian and zero-mean, so odd b-moments vanish
        n2 = na * na + 2.0 * (al.conjugate() ** 2 * b2).real + 4.0 * na * s2 + 3.0 * s2 * s2 + s2
        return FieldMoments(a=al, a2=al * al + b2, n=na + s2, n2_normal=n2)


@dataclass(frozen=True)
class Thermal:
    nbar: float = 0.0

    def __post_init__(self):
        if not (self.nbar >= 0 and math.isfinite(self.nbar)):
            raise ValueError(f"nbar must be finite and >= 0, got {self.nbar}")

    def log_q(self, beta):
        w = self.nbar + 1.0
        return -np.abs(beta) ** 2 / w - math.log(w) - _LOG_PI

    def moments(self):
        nb = float(self.nbar)
        return FieldMoments(a=0j, a2=0j, n=nb, n2_normal=2.0 * nb * nb)


DrivingState = Union[Coherent, Fock, SqueezedVacuum, DisplacedSqueezed, Thermal]
_GAUSSIAN = (Coherent, SqueezedVacuum, DisplacedSqueezed, Thermal)


def log_husimi(state: DrivingState, beta):
    """ln Q(beta); finite everywhere except at beta = 0 for Fock n >= 1."""
    val = state.log_q(np.asarray(beta, dtype=complex))
    return float(val) if np.ndim(val) == 0 else val


def husimi(state: DrivingState, beta):
    """Husimi function Q(beta), normalized to unit area over the plane."""
    val = np.exp(state.log_q(np.asarray(beta, dtype=complex)))
    return float(val) if np.ndim(val) == 0 else val


def exact_moments(state: DrivingState) -> FieldMoments:
    return state.moments()


# --- quadrature -----------------------------------------------------------


@dataclass(frozen=True)
class QuadratureGrid:
    """Square window [center +- half_width]^2 with nodes_per_axis GL nodes."""

    center: complex = 0j
    half_width: float = 6.0
    nodes_per_axis: int = 120

    def __post_init__(self):
        object.__setattr__(self, "center", complex(self.center))
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")
        if self.nodes_per_axis < 2:
            raise ValueError("nodes_per_axis must be >= 2")

    def nodes(self, nodes_per_axis=None):
        """Flattened complex nodes and weights (weights include the area)."""
        m = nodes_per_axis or self.nodes_per_axis
        x, w = np.polynomial.legendre.leggauss(m)
        x = x * self.half_width
        w = w * self.half_width
        re = self.center.real + x
        im = self.center.imag + x
        beta = re[:, None] + 1j * im[None, :]
        weights = w[:, None] * w[None, :]
        return beta.ravel(), weights.ravel()


@dataclass(frozen=True)
class QuadResult:
    value: complex
    error_estimate: float
    outside_mass: float

    @property
    def covered(self):
        return self.outside_mass <= COVERAGE_LIMIT


def _q_axis_stats(state):
    """Mean of Q and standard deviations of its Re/Im marginals."""
    m = state.moments()
    din = m.n - abs(m.a) ** 2
    c = m.a2 - m.a * m.a
    # marginal variance of Q along the quadrature angle theta is <dX^2> + 1/4
    var_x = 0.5 + 0.5 * din + 0.5 * c.real
    var_y = 0.5 + 0.5 * din - 0.5 * c.real
    var_min = 0.5 + 0.5 * (din - abs(c))
    return m.a, math.sqrt(var_x), math.sqrt(var_y), math.sqrt(var_min)


def outside_mass_bound(state: DrivingState, grid: QuadratureGrid) -> float:
    """Upper bound on the Q mass outside the grid window."""
    lo = grid.center - grid.half_width * (1 + 1j)
    hi = grid.center + grid.half_width * (1 + 1j)
    if isinstance(state, _GAUSSIAN):
        mu, sx, sy, _ = _q_axis_stats(state)
        tail = 0.0
        for mean, sd, a, b in ((mu.real, sx, lo.real, hi.real), (mu.imag, sy, lo.imag, hi.imag)):
            tail += ndtr((a - mean) / sd) + ndtr((mean - b) / sd)
        return float(min(tail, 1.0))
    # Fock: the window contains the disk of radius rho about the origin
    rho = grid.half_width - max(abs(grid.center.real), abs(grid.center.imag))
    if rho <= 0:
        return 1.0
    return float(gammaincc(state.n + 1.0, rho * rho))


def default_grid(state: DrivingState, nodes_per_axis=None) -> QuadratureGrid:
    """Window holding all but ~1e-14 of Q, with nodes resolving its narrowest feature."""
    if isinstance(state, _GAUSSIAN):
        mu, sx, sy, smin = _q_axis_stats(state)
        center = mu
        half = 8.0 * max(sx, sy)
    else:
        center = 0j
        half = math.sqrt(gammainccinv(state.n + 1.0, 1e-14))
        smin = 0.5
    if abs(center) > MAX_GRID_CENTER:
        raise ValueError(
            f"|center| = {abs(center):.3g} exceeds {MAX_GRID_CENTER}; use the closed-form paths"
        )
    if nodes_per_axis is None:
        nodes_per_axis = max(120, int(math.ceil(2.2 * half / smin)))
    return QuadratureGrid(center=center, half_width=half, nodes_per_axis=nodes_per_axis)


def _prepare(state, grid):
    if grid is None:
        grid = default_grid(state)
    if abs(grid.center) > MAX_GRID_CENTER:
        raise ValueError(f"grid center beyond {MAX_GRID_CENTER}; use the closed-form paths")
    mass = outside_mass_bound(state, grid)
    if mass > COVERAGE_LIMIT:
        warnings.warn(
            f"quadrature window misses up to {mass:.2e} of the Husimi mass",
            CoverageWarning,
            stacklevel=3,
        )
    return grid, mass


def _weighted(state, grid, m=None):
    beta, w = grid.nodes(m)
    return beta, w * np.exp(state.log_q(beta))


def _apply(f, beta):
    return np.broadcast_to(np.asarray(f(beta), dtype=complex), beta.shape)


def integrate_q(
    state: DrivingState,
    f: Callable,
    grid: QuadratureGrid | None = None,
    estimate_error: bool = True,
) -> QuadResult:
    """int d^2 beta Q(beta) f(beta) on a tensor Gauss-Legendre grid.

    ``f`` receives a 1-D complex array of nodes and must return values of the
    same shape (or a scalar). The error estimate is the difference to a rule
    with three quarters of the nodes.
    """
    grid, mass = _prepare(state, grid)
    beta, wq = _weighted(state, grid)
    value = complex(np.sum(wq * _apply(f, beta)))
    err = 0.0
    if estimate_error:
        coarse = max(2, (3 * grid.nodes_per_axis) // 4)
        beta_c, wq_c = _weighted(state, grid, coarse)
        err = abs(value - complex(np.sum(wq_c * _apply(f, beta_c))))
    return QuadResult(value=value, error_estimate=err, outside_mass=mass)


def app_moments(
    state: DrivingState,
    grid: QuadratureGrid | None = None,
    gamma_map: Callable | None = None,
) -> FieldMoments:
    """APP moments int Q |g|^2, int Q g^2, int Q g, int Q |g|^4 with g = gamma_map(beta).

    The identity map (default) gives the driving field itself.
    """
    grid, _ = _prepare(state, grid)
    beta, wq = _weighted(state, grid)
    g = beta if gamma_map is None else _apply(gamma_map, beta)
    g2abs = np.abs(g) ** 2
    return FieldMoments(
        a=complex(np.sum(wq * g)),
        a2=complex(np.sum(wq * g * g)),
        n=float(np.sum(wq * g2abs)),
        n2_normal=float(np.sum(wq * g2abs * g2abs)),
    )


# --- serialization ----------------------------------------------------------

_KINDS = {
    "coherent": Coherent,
    "fock": Fock,
    "squeezed_vacuum": SqueezedVacuum,
    "displaced_squeezed": DisplacedSqueezed,
    "thermal": Thermal,
}


def _complex_field(value, name):
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ValueError(f"{name} must be [re, im]")
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, (int, float)):
        return complex(value)
    raise ValueError(f"{name} must be a number or [re, im], got {value!r}")


def state_from_dict(d: dict) -> DrivingState:
    """Build a state from a config table such as ``{kind = "fock", n = 2}``."""
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in _KINDS:
        raise ValueError(f"state kind must be one of {sorted(_KINDS)}, got {kind!r}")
    if "alpha" in d:
        d["alpha"] = _complex_field(d["alpha"], "alpha")
    cls = _KINDS[kind]
    allowed = set(cls.__dataclass_fields__)
    unknown = set(d) - allowed
    if unknown:
        raise ValueError(f"unknown field(s) for {kind} state: {sorted(unknown)}")
    return cls(**d)


def state_to_dict(state: DrivingState) -> dict:
    kind = next(k for k, v in _KINDS.items() if isinstance(state, v))
    out = {"kind": kind}
    for name in state.__dataclass_fields__:
        val = getattr(state, name)
        out[name] = [val.real, val.imag] if isinstance(val, complex) else val
    return out
