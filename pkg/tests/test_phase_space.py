import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm
from scipy.special import gammaln

from appsim import phase_space as ps

DIM = 120


def ladder(dim=DIM):
    return np.diag(np.sqrt(np.arange(1, dim)), 1).astype(complex)


def fock_vector_state(alpha=0j, r=0.0, phi=0.0, dim=DIM):
    """D(alpha) S(xi) |0> in a truncated Fock basis, xi = r e^{i phi}."""
    a = ladder(dim)
    ad = a.conj().T
    xi = r * np.exp(1j * phi)
    S = expm(0.5 * (np.conj(xi) * a @ a - xi * ad @ ad))
    D = expm(alpha * ad - np.conj(alpha) * a)
    vac = np.zeros(dim, complex)
    vac[0] = 1.0
    return D @ S @ vac


def coherent_overlap(beta, dim=DIM):
    """Components <beta|n>."""
    n = np.arange(dim)
    logmag = -0.5 * abs(beta) ** 2 - 0.5 * gammaln(n + 1.0)
    with np.errstate(divide="ignore"):
        return np.exp(logmag) * np.conj(beta) ** n


def basis_moments(rho):
    a = ladder(rho.shape[0])
    ad = a.conj().T
    ev = lambda op: np.trace(rho @ op)
    return ps.FieldMoments(
        a=complex(ev(a)), a2=complex(ev(a @ a)), n=float(ev(ad @ a).real), n2_normal=float(ev(ad @ ad @ a @ a).real)
    )


def basis_husimi(rho, beta):
    v = coherent_overlap(beta, rho.shape[0])
    return float(np.real(v @ rho @ v.conj())) / math.pi


def thermal_rho(nbar, dim=DIM):
    n = np.arange(dim)
    p = (nbar / (nbar + 1.0)) ** n / (nbar + 1.0)
    return np.diag(p).astype(complex)


CASES = [
    (ps.Coherent(1.2 - 0.7j), lambda: fock_vector_state(1.2 - 0.7j)),
    (ps.SqueezedVacuum(0.8, 0.0), lambda: fock_vector_state(0, 0.8, 0.0)),
    (ps.SqueezedVacuum(0.6, 1.1), lambda: fock_vector_state(0, 0.6, 1.1)),
    (ps.DisplacedSqueezed(0.9 + 0.4j, 0.5, 2.0), lambda: fock_vector_state(0.9 + 0.4j, 0.5, 2.0)),
]


@pytest.mark.parametrize("state,vec", CASES)
def test_pure_state_moments_and_husimi_match_fock_basis(state, vec):
    psi = vec()
    rho = np.outer(psi, psi.conj())
    ref = basis_moments(rho)
    m = ps.exact_moments(state)
    assert m.a == pytest.approx(ref.a, abs=1e-10)
    assert m.a2 == pytest.approx(ref.a2, abs=1e-10)
    assert m.n == pytest.approx(ref.n, abs=1e-10)
    assert m.n2_normal == pytest.approx(ref.n2_normal, abs=1e-9)
    for beta in (0j, 0.5 + 0.5j, -1.1 + 0.3j, 1.7 - 0.9j):
        assert ps.husimi(state, beta) == pytest.approx(basis_husimi(rho, beta), rel=1e-9, abs=1e-14)


def test_thermal_and_fock_match_fock_basis():
    rho = thermal_rho(1.3)
    ref = basis_moments(rho)
    m = ps.exact_moments(ps.Thermal(1.3))
    assert m.n == pytest.approx(ref.n, rel=1e-10)
    assert m.n2_normal == pytest.approx(ref.n2_normal, rel=1e-10)
    for beta in (0j, 0.8 - 1.2j):
        assert ps.husimi(ps.Thermal(1.3), beta) == pytest.approx(basis_husimi(rho, beta), rel=1e-10)
    rho = np.zeros((DIM, DIM), complex)
    rho[3, 3] = 1.0
    for beta in (0.2j, 1.5 + 0.5j):
        assert ps.husimi(ps.Fock(3), beta) == pytest.approx(basis_husimi(rho, beta), rel=1e-10)
    assert ps.exact_moments(ps.Fock(3)).n2_normal == pytest.approx(basis_moments(rho).n2_normal)


def test_squeezed_vacuum_moment_convention():
    r, phi = 0.7, 0.4
    m = ps.exact_moments(ps.SqueezedVacuum(r, phi))
    assert m.n == pytest.approx(math.sinh(r) ** 2)
    assert m.a2 == pytest.approx(-np.exp(1j * phi) * math.sinh(r) * math.cosh(r))


ALL_STATES = [
    ps.Coherent(0j),
    ps.Coherent(2.5 + 1j),
    ps.Fock(0),
    ps.Fock(1),
    ps.Fock(12),
    ps.Fock(100),
    ps.SqueezedVacuum(1.2, 0.5),
    ps.DisplacedSqueezed(-3 + 2j, 1.5, 2.5),
    ps.Thermal(0.0),
    ps.Thermal(5.0),
]


@pytest.mark.parametrize("state", ALL_STATES, ids=repr)
def test_husimi_normalized(state):
    res = ps.integrate_q(state, lambda b: np.ones_like(b))
    assert res.value.real == pytest.approx(1.0, abs=1e-12)
    assert res.covered
    assert res.error_estimate < 1e-10


@pytest.mark.parametrize("state", ALL_STATES, ids=repr)
def test_app_moment_identities(state):
    ex = ps.exact_moments(state)
    app = ps.app_moments(state)
    assert app.n - ex.n == pytest.approx(1.0, abs=1e-9)
    assert abs(app.a - ex.a) < 1e-9 * max(1, abs(ex.a))
    assert abs(app.a2 - ex.a2) < 1e-9 * max(1, abs(ex.a2))
    assert app.n2_normal == pytest.approx(ps.antinormal_fourth(ex), rel=1e-9)


def test_gamma_map_default_is_identity():
    st_ = ps.Coherent(0.8j)
    assert ps.app_moments(st_) == ps.app_moments(st_, gamma_map=lambda b: b)


def test_custom_grid_and_coverage_warning():
    narrow = ps.QuadratureGrid(center=0j, half_width=1.0, nodes_per_axis=40)
    with pytest.warns(ps.CoverageWarning):
        res = ps.integrate_q(ps.Coherent(0j), lambda b: 1.0, grid=narrow)
    assert not res.covered
    assert res.value.real < 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ps.integrate_q(ps.Coherent(0j), lambda b: 1.0)


def test_outside_mass_bound_is_an_upper_bound():
    state = ps.Fock(4)
    for half in (2.0, 3.0, 4.0):
        grid = ps.QuadratureGrid(0j, half, 160)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ps.CoverageWarning)
            inside = ps.integrate_q(state, lambda b: 1.0, grid=grid, estimate_error=False).value.real
        assert 1.0 - inside <= ps.outside_mass_bound(state, grid) + 1e-12


def test_far_center_rejected():
    with pytest.raises(ValueError):
        ps.default_grid(ps.Coherent(100.0))


@pytest.mark.parametrize(
    "bad",
    [lambda: ps.Fock(-1), lambda: ps.Fock(1.5), lambda: ps.SqueezedVacuum(-0.1), lambda: ps.Thermal(-1.0),
     lambda: ps.QuadratureGrid(0j, -1.0), lambda: ps.Coherent(complex("nan"))],
)
def test_invalid_parameters(bad):
    with pytest.raises(ValueError):
        bad()


@pytest.mark.parametrize("state", ALL_STATES, ids=repr)
def test_state_dict_roundtrip(state):
    assert ps.state_from_dict(ps.state_to_dict(state)) == state


def test_state_from_dict_errors():
    with pytest.raises(ValueError):
        ps.state_from_dict({"kind": "cat"})
    with pytest.raises(ValueError):
        ps.state_from_dict({"kind": "fock", "n": 1, "r": 2})
    with pytest.raises(ValueError):
        ps.state_from_dict({"kind": "coherent", "alpha": [1, 2, 3]})


@settings(max_examples=25, deadline=None)
@given(
    re=st.floats(-3, 3), im=st.floats(-3, 3), r=st.floats(0, 1.2), phi=st.floats(0, 2 * math.pi)
)
def test_q_marginal_variance_exceeds_exact_by_quarter(re, im, r, phi):
    state = ps.DisplacedSqueezed(complex(re, im), r, phi)
    ex = ps.exact_moments(state)
    theta = 0.3
    x = lambda b: (b * np.exp(-1j * theta)).real
    mean = ps.integrate_q(state, x, estimate_error=False).value.real
    var = ps.integrate_q(state, lambda b: (x(b) - mean) ** 2, estimate_error=False).value.real
    c = ex.a2 - ex.a**2
    exact_var = 0.25 * (1 + 2 * (ex.n - abs(ex.a) ** 2) + 2 * (np.exp(-2j * theta) * c).real)
    assert var == pytest.approx(exact_var + 0.25, rel=1e-9)
