import math

import numpy as np
from hypothesis import strategies as st

from appsim import oneband
from appsim import phase_space as ps


def random_state(rng, alpha_max=5.0, r_max=1.5, n_max=20, nbar_max=5.0):
    kind = int(rng.integers(0, 5))
    phase = lambda: float(rng.uniform(0, 2 * math.pi))
    amp = lambda: alpha_max * math.sqrt(rng.uniform()) * complex(math.cos(t := phase()), math.sin(t))
    if kind == 0:
        return ps.Coherent(amp())
    if kind == 1:
        return ps.Fock(int(rng.integers(0, n_max + 1)))
    if kind == 2:
        return ps.SqueezedVacuum(float(rng.uniform(0, r_max)), phase())
    if kind == 3:
        return ps.DisplacedSqueezed(amp(), float(rng.uniform(0, r_max)), phase())
    return ps.Thermal(float(rng.uniform(0, nbar_max)))


def random_oneband_map(rng, n=None):
    """One-band gamma map with O(1) amplitudes over |beta| <~ 5."""
    lmax = int(rng.integers(1, 6))
    b = tuple(-float(v) for v in rng.uniform(0.001, 0.1, lmax))
    crystal = oneband.Crystal(a=float(rng.uniform(2, 8)), b=b, L=2 * int(rng.integers(1, 60)))
    n = int(rng.choice([1, 3, 5])) if n is None else n
    gt = float(rng.uniform(0.05, 1.0))
    omega = 0.005
    laser = oneband.LaserConfig(g0=gt * math.sqrt(omega) / (2 * crystal.a), omega_L=omega, alpha_abs=1.0)
    scale = float(np.sum(np.abs(oneband.c_coefficients(crystal)))) or 1.0
    G = float(rng.uniform(0.5, 3.0)) / scale
    return oneband.oneband_gamma_map(crystal, laser, n, G)


@st.composite
def driving_states(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    return random_state(np.random.default_rng(seed))
