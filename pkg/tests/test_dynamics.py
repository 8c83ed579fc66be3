import numpy as np
import pytest
from scipy.integrate import trapezoid
import scipy.linalg

from dampedmodes import PhaseVector, eigenmodes, evolve, expand, green_eigensum, green_frequency, integrate_direct
from dampedmodes.core import companion_matrix, evolution_operator
from dampedmodes.dynamics import (
    MAX_STEPS,
    NearPoleWarning,
    NegativeTimeWarning,
    SingularFrequencyError,
    default_dt,
    energy,
    evolve_many,
)
from dampedmodes.models import build_end_damped_chain, build_pair_example, build_single
from dampedmodes.core import DampedModesError
from systems import random_state, random_system


def test_expand_mode_gives_unit_vector():
    basis = eigenmodes(build_pair_example(0.5))
    assert np.allclose(expand(basis[3].vector, basis), np.eye(4)[3], atol=1e-12)


def test_expand_round_trip_random():
    rng = np.random.default_rng(0)
    basis = eigenmodes(random_system(rng, 8))
    phi = random_state(rng, 16)
    assert np.linalg.norm(basis.vectors @ expand(phi, basis) - phi) <= 1e-9 * np.linalg.norm(phi)


def test_expand_single_against_linear_solve():
    basis = eigenmodes(build_single(2.0, 1.0))
    phi = np.array([1.0, 0.0])
    assert np.allclose(expand(phi, basis), np.linalg.solve(basis.vectors, phi), atol=1e-12)


def test_evolve_identity_and_phase_vector():
    basis = eigenmodes(build_pair_example(0.5))
    pv = PhaseVector([1.0, -0.5], [0.2, 0.0])
    out = evolve(pv, basis, 0.0)
    assert isinstance(out, PhaseVector)
    assert np.allclose(out.vector, pv.vector, atol=1e-9)


def test_evolve_single_textbook_solution():
    k, gamma = 5.0, 1.0
    om = np.sqrt(k - gamma**2)
    basis = eigenmodes(build_single(k, gamma))
    for t in [0.3, 1.7, 4.0]:
        q = evolve(np.array([1.0, 0.0]), basis, t)[0]
        assert q == pytest.approx(np.exp(-gamma * t) * (np.cos(om * t) + gamma / om * np.sin(om * t)), abs=1e-12)


def test_evolve_negative_time_warns():
    basis = eigenmodes(build_single(2.0, 1.0))
    with pytest.warns(NegativeTimeWarning):
        evolve(np.array([1.0, 0.0]), basis, -1.0)


def test_semigroup():
    rng = np.random.default_rng(1)
    basis = eigenmodes(random_system(rng, 5))
    phi = random_state(rng, 10)
    a = evolve(evolve(phi, basis, 0.7), basis, 1.6)
    assert np.allclose(a, evolve(phi, basis, 2.3), atol=1e-9)


def test_real_initial_data_stays_real():
    rng = np.random.default_rng(2)
    basis = eigenmodes(random_system(rng, 4))
    states = evolve_many(random_state(rng, 8, real=True), basis, np.linspace(0, 5, 7))
    assert np.max(np.abs(states.imag)) < 1e-12


def test_eigen_vs_rk4_pair_example():
    sys = build_pair_example(0.5)
    basis = eigenmodes(sys)
    phi = np.array([1.0, -0.3, 0.2, 0.5])
    times, states = integrate_direct(sys, phi, 10.0, n_out=21)
    assert np.max(np.abs(states - evolve_many(phi, basis, times))) <= 1e-6


def test_eigen_vs_rk4_end_damped_chain():
    sys = build_end_damped_chain(20, 1.0, 0.5)
    rng = np.random.default_rng(3)
    phi = random_state(rng, 40, real=True)
    out = integrate_direct(sys, phi, 5.0)
    assert np.max(np.abs(out - evolve(phi, eigenmodes(sys), 5.0))) <= 1e-6


def test_rk4_fourth_order():
    sys = build_pair_example(0.5)
    basis = eigenmodes(sys)
    phi = np.array([1.0, 0.0, 0.0, 0.0])
    exact = evolve(phi, basis, 3.0)
    e1 = np.max(np.abs(integrate_direct(sys, phi, 3.0, dt=0.02) - exact))
    e2 = np.max(np.abs(integrate_direct(sys, phi, 3.0, dt=0.01) - exact))
    assert 13 < e1 / e2 < 19


def test_conservative_energy_conservation():
    sys = build_single(3.0, 0.0)
    phi = np.array([1.0, 0.5])
    out = integrate_direct(sys, phi, 100.0, dt=1e-3)
    assert abs(energy(out, sys) - energy(phi, sys)) <= 1e-8


def test_energy_non_increasing_with_damping():
    rng = np.random.default_rng(4)
    sys = random_system(rng, 4)
    _, states = integrate_direct(sys, random_state(rng, 8, real=True), 10.0, n_out=400)
    e = np.array([energy(s, sys) for s in states])
    assert np.all(np.diff(e) <= 1e-12 * e[0])


def test_integrate_direct_guards():
    sys = build_single(2.0, 1.0)
    with pytest.raises(DampedModesError):
        integrate_direct(sys, np.array([1.0, 0.0]), 1.0, dt=0.1 / MAX_STEPS)
    with pytest.raises(ValueError):
        integrate_direct(sys, np.array([1.0, 0.0]), 1.0, dt=-1.0)
    assert np.allclose(integrate_direct(sys, np.array([1.0, 0.0]), 0.0), [1.0, 0.0])
    assert default_dt(sys) > 0


def test_green_defining_identity():
    rng = np.random.default_rng(5)
    sys = random_system(rng, 6)
    w = 0.3 + 0.1j
    g = green_frequency(sys, w).blocks
    h = evolution_operator(sys)
    assert np.max(np.abs((h - w * np.eye(12)) @ g + 1j * np.eye(12))) < 1e-12


def test_green_static_response():
    g = green_frequency(build_single(2.0, 1.0), 0.0)
    # the coordinate response to a force is M^-1 = 1/k
    assert g.qp[0, 0] == pytest.approx(0.5)
    assert g.qq[0, 0] == pytest.approx(1.0)


def test_green_qp_block_is_symmetric_inverse():
    rng = np.random.default_rng(6)
    sys = random_system(rng, 5)
    w = 0.7 - 0.2j
    g = green_frequency(sys, w)
    m = -(w**2) * np.eye(5) - 1j * w * sys.gamma_matrix + sys.k_matrix
    assert np.allclose(g.qp, np.linalg.inv(m), atol=1e-12)
    assert np.max(np.abs(g.qp - g.qp.T)) < 1e-10


def test_green_routes_agree():
    rng = np.random.default_rng(7)
    for _ in range(3):
        sys = random_system(rng, int(rng.integers(1, 17)))
        basis = eigenmodes(sys)
        for w in rng.normal(size=20) * 2 + 1j * rng.normal(size=20):
            a = green_frequency(sys, w).blocks
            b = green_eigensum(basis, w).blocks
            assert np.max(np.abs(a - b)) <= 1e-8 * max(1.0, np.abs(a).max())


def test_green_singular_and_near_pole():
    sys = build_single(2.0, 1.0)
    with pytest.raises(SingularFrequencyError):
        green_frequency(sys, 1 - 1j)
    basis = eigenmodes(sys)
    with pytest.warns(NearPoleWarning):
        green_eigensum(basis, 1 - 1j + 1e-8)


def test_green_residue():
    basis = eigenmodes(build_pair_example(0.5))
    h = 1e-4
    for j, m in enumerate(basis.modes):
        expected = 1j * np.outer(m.vector, basis.metric @ m.vector)
        # the symmetric average cancels the O(h) background from the other poles
        est = 0.5 * sum(s * h * green_eigensum(basis, m.omega + s * h).blocks for s in (1, -1))
        assert np.max(np.abs(est - expected)) <= 1e-6


def test_fourier_inversion():
    sys = build_pair_example(0.5)
    basis = eigenmodes(sys)
    n2 = sys.dim
    h = evolution_operator(sys)
    eye = np.eye(n2)
    t = 1.0
    cutoff = 50 * np.max(np.abs(basis.omegas))
    x = np.arange(-cutoff, cutoff, 0.005)
    w = x + 0.1j
    # G(w) = i (w - H)^-1 behaves as i/w + iH/w^2; subtract transforms known in closed form
    d, v = np.linalg.eig(h)
    vinv = np.linalg.inv(v)
    gw = np.einsum("ij,wj,jk->wik", v, 1j / (w[:, None] - d[None, :]), vinv)
    asym = (1j / (w + 1j))[:, None, None] * eye + (1j / (w + 1j) ** 2)[:, None, None] * (h + 1j * eye)
    integrand = (gw - asym) * np.exp(-1j * w * t)[:, None, None]
    numeric = trapezoid(integrand, x, axis=0) / (2 * np.pi)
    g_t = numeric + np.exp(-t) * eye - 1j * t * np.exp(-t) * (h + 1j * eye)
    exact = scipy.linalg.expm(companion_matrix(sys) * t)
    phi = np.array([1.0, -0.5, 0.3, 0.0])
    assert np.max(np.abs(g_t @ phi - evolve(phi, basis, t))) <= 1e-4
    assert np.max(np.abs(g_t - exact)) <= 1e-4
