"""Quadrature variance, its extremes over angle, and g2(0) from field moments."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

from .phase_space import FieldMoments

__all__ = [
    "VarianceProfile",
    "InconsistentMomentsError",
    "UndefinedStatisticsError",
    "quadrature_variance",
    "min_max_variance",
    "g2",
]

VACUUM_VARIANCE = 0.25


class InconsistentMomentsError(ValueError):
    """Moments that give a nonpositive quadrature variance."""


class UndefinedStatisticsError(ValueError):
    """g2 requested for a mode with zero mean photon number."""


@dataclass(frozen=True)
class VarianceProfile:
    theta_min: float
    theta_max: float
    var_min: float
    var_max: float
    degenerate: bool = False


def _fluctuations(m: FieldMoments):
    return m.n - abs(m.a) ** 2, m.a2 - m.a * m.a


def quadrature_variance(m: FieldMoments, theta: float) -> float:
    """<dX^2(theta)> for X(theta) = (a e^{-i theta} + a+ e^{i theta}) / 2."""
    din, c = _fluctuations(m)
    var = 0.25 * (1.0 + 2.0 * din + 2.0 * (cmath.exp(-2j * theta) * c).real)
    if not var > 0:
        raise InconsistentMomentsError(f"quadrature variance {var} <= 0 at theta={theta}")
    return var


def _canonical(theta):
    t = math.fmod(theta, math.pi)
    if t < 0:
        t += math.pi
    return 0.0 if t >= math.pi else t


def min_max_variance(m: FieldMoments, rel_tol: float = 1e-14) -> VarianceProfile:
    """Extremes of the quadrature variance over theta in [0, pi).

    When <a^2> - <a>^2 vanishes (up to ``rel_tol`` of the photon-number scale)
    every angle is an extremum; both angles are reported as 0 and the profile
    is flagged degenerate.
    """
    din, c = _fluctuations(m)
    mag = abs(c)
    var_min = 0.25 + 0.5 * (din - mag)
    var_max = 0.25 + 0.5 * (din + mag)
    if mag <= rel_tol * max(1.0, abs(m.n), abs(m.a2)):
        return VarianceProfile(0.0, 0.0, var_min, var_max, degenerate=True)
    # e^{-2i theta} c + c.c. = 2|c| cos(arg c - 2 theta)
    theta_max = _canonical(0.5 * cmath.phase(c))
    theta_min = _canonical(theta_max + 0.5 * math.pi)
    return VarianceProfile(theta_min, theta_max, var_min, var_max)


def g2(m: FieldMoments) -> float:
    """Equal-time second-order coherence <a+a+aa> / <a+a>^2."""
    if m.n == 0:
        raise UndefinedStatisticsError("g2 undefined for a mode with <a+a> = 0")
    return m.n2_normal / (m.n * m.n)
