import numpy as np
import pytest

from dampedmodes import CriticalSystemError, OscillatorSystem, eigenmodes
from dampedmodes.core import evolution_operator
from dampedmodes.models import (
    build_crossing_example,
    build_pair_example,
    crossing_coupling,
    crossing_perturbation,
)
from dampedmodes.perturb import (
    CrossingBlock,
    NearDegenerateError,
    Perturbation,
    coupling_matrix,
    crossing_block,
    crossing_locus,
    degenerate_block,
    diagonalize_complex_symmetric,
    exact_shift,
    hyperbola_invariant,
    matrix_element,
    rspt_shift,
)
from systems import random_system

E1 = Perturbation(np.diag([1.0, 0.0]))


@pytest.fixture(scope="module")
def pair():
    return eigenmodes(build_pair_example(0.5))


def test_perturbation_validation():
    with pytest.raises(ValueError):
        Perturbation(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        Perturbation(np.ones((2, 3)))
    base = build_pair_example(0.5)
    with pytest.raises(ValueError, match="damping"):
        Perturbation.between(base, build_pair_example(0.6))
    dk = Perturbation.between(base, base.with_k(base.k_matrix + 0.1 * np.eye(2)), epsilon=0.1)
    assert np.allclose(dk.delta_k, np.eye(2))


def test_matrix_elements(pair):
    rng = np.random.default_rng(0)
    a = rng.normal(size=(2, 2))
    dk = Perturbation(a + a.T)
    c = coupling_matrix(pair, dk)
    assert np.allclose(c, c.T, atol=1e-14)
    for j in range(4):
        assert matrix_element(pair, E1, j, j) == pytest.approx(pair[j].f[0] ** 2)
    with pytest.raises(IndexError):
        matrix_element(pair, E1, 0, 9)


def test_conservative_elements_are_real():
    basis = eigenmodes(build_pair_example(0.0))
    dk = Perturbation(np.array([[0.3, 0.2], [0.2, -0.1]]))
    # modes with w > 0 have real f
    pos = [j for j, m in enumerate(basis.modes) if m.omega.real > 0]
    c = coupling_matrix(basis, dk)[np.ix_(pos, pos)]
    assert np.max(np.abs(c.imag)) < 1e-14


def test_null_perturbation(pair):
    r = rspt_shift(pair, Perturbation(np.zeros((2, 2))), 1)
    assert r.first == 0 and r.second == 0 and not np.any(r.delta_f)


def test_rspt_cubic_residual(pair):
    w0 = pair[1].omega
    unit = rspt_shift(pair, E1, 1)
    eps = np.logspace(-4, -2, 5)
    res = []
    for e in eps:
        exact = exact_shift(pair.system, E1, w0, e, w0 + e * unit.first)
        res.append(abs(exact - e * unit.first - e**2 * unit.second))
    slope = np.polyfit(np.log(eps), np.log(res), 1)[0]
    assert slope >= 2.9


def test_second_order_uses_squares_not_moduli(pair):
    # negative control: |c|^2 in place of c^2 leaves an O(eps^2) residual
    w0 = pair[1].omega
    c = coupling_matrix(pair, E1)
    w = pair.omegas
    others = [k for k in range(4) if k != 1]
    wrong = np.sum(np.abs(c[others, 1]) ** 2 / (w0 - w[others]))
    unit = rspt_shift(pair, E1, 1)
    eps = np.logspace(-3, -2, 4)
    res = [abs(exact_shift(pair.system, E1, w0, e, w0) - e * unit.first - e**2 * wrong) for e in eps]
    assert np.polyfit(np.log(eps), np.log(res), 1)[0] < 2.2


def test_normalization_independent_first_order(pair):
    rng = np.random.default_rng(1)
    g = pair.metric
    for j, m in enumerate(pair.modes):
        z = complex(rng.normal(), rng.normal())
        f = z * m.vector
        d_w2 = 2 * m.omega * (f[:2] @ E1.delta_k @ f[:2]) / (f @ g @ f)
        # delta(w^2) = 2 w delta(w) at first order
        assert d_w2 == pytest.approx(2 * m.omega * rspt_shift(pair, E1, j).first, abs=1e-12)


def test_eigenvector_shift(pair):
    w0 = pair[1].omega
    v0 = pair[1].vector
    unit = rspt_shift(pair, E1, 1)
    errs = []
    eps = [1e-3, 1e-4]
    for e in eps:
        h = evolution_operator(E1.apply(pair.system, e))
        dw = e * unit.first + e**2 * unit.second
        r = (h - (w0 + dw) * np.eye(4)) @ (v0 + e * unit.delta_vector)
        errs.append(np.linalg.norm(r))
    assert errs[0] / errs[1] > 50  # O(eps^2)


def test_apply_uses_epsilon(pair):
    dk = Perturbation(np.eye(2), epsilon=0.25)
    assert np.allclose(dk.apply(pair.system).k_matrix, pair.system.k_matrix + 0.25 * np.eye(2))
    assert rspt_shift(pair, dk, 0).first == pytest.approx(0.25 * matrix_element(pair, Perturbation(np.eye(2)), 0, 0))


def test_crossing_modes_accepted_as_level_crossing():
    basis = eigenmodes(build_crossing_example(0.0))
    group = [j for j, w in enumerate(basis.omegas) if abs(w - (1 - 1j)) < 1e-6]
    assert len(group) == 2
    for j in group:
        assert abs(basis[j].vector @ basis.metric @ basis[j].vector - 1) < 1e-10


def test_near_degenerate_raises_with_group():
    basis = eigenmodes(build_crossing_example(0.0))
    dk = Perturbation(crossing_perturbation(0.3, 0.2))
    j = int(np.argmin(np.abs(basis.omegas - (1 - 1j))))
    with pytest.raises(NearDegenerateError) as info:
        rspt_shift(basis, dk, j)
    assert len(info.value.group) == 2


def test_degenerate_block_then_rspt():
    basis = eigenmodes(build_crossing_example(0.0))
    dk = Perturbation(crossing_perturbation(0.3, 0.2))
    group = [j for j, w in enumerate(basis.omegas) if abs(w - (1 - 1j)) < 1e-6]
    rotated, shifts = degenerate_block(basis, dk, group)
    g = rotated.metric
    v = rotated.vectors
    assert np.max(np.abs(v.T @ g @ v - np.eye(6))) < 1e-9
    c = coupling_matrix(rotated, dk)
    assert abs(c[group[0], group[1]]) < 1e-12
    k = crossing_coupling(0.3, 0.2)
    assert np.allclose(sorted(shifts, key=lambda z: z.real), sorted([k, -k], key=lambda z: z.real), atol=1e-12)
    first = [rspt_shift(rotated, dk, j) for j in group]
    rev, _ = degenerate_block(basis, dk, group[::-1])
    second = [rspt_shift(rev, dk, j) for j in group]
    a = sorted((r.first + r.second for r in first), key=lambda z: z.real)
    b = sorted((r.first + r.second for r in second), key=lambda z: z.real)
    assert np.allclose(a, b, atol=1e-8)


def test_degenerate_block_diagonal_is_identity():
    basis = eigenmodes(build_crossing_example(0.0))
    group = [j for j, w in enumerate(basis.omegas) if abs(w - (1 - 1j)) < 1e-6]
    f = basis.coords[:, group]
    # a perturbation diagonal in the group leaves the modes alone
    dk = Perturbation(np.diag([1.0, 0.0, 0.0]))
    assert abs(f[:, 0] @ dk.delta_k @ f[:, 1]) < 1e-12
    rotated, _ = degenerate_block(basis, dk, group)
    for j in group:
        assert np.allclose(np.abs(rotated[j].vector), np.abs(basis[j].vector), atol=1e-12)


def test_degenerate_block_rejects_critical_group():
    sys = OscillatorSystem([[4.0]], [[4.0]])
    from dampedmodes import NumericsPolicy

    basis = eigenmodes(sys, NumericsPolicy(allow_critical=True))
    with pytest.raises(CriticalSystemError):
        degenerate_block(basis, Perturbation(np.eye(1)), [0, 1])


def test_complex_jacobi():
    rng = np.random.default_rng(2)
    for m in (2, 3, 5):
        b = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
        b = b + b.T
        d, q = diagonalize_complex_symmetric(b)
        assert np.allclose(q.T @ q, np.eye(m), atol=1e-10)
        assert np.allclose(q.T @ b @ q, np.diag(d), atol=1e-10)


def test_crossing_coupling_matches_prediction():
    basis = eigenmodes(build_crossing_example(0.0))
    group = [j for j, w in enumerate(basis.omegas) if abs(w - (1 - 1j)) < 1e-6]
    rng = np.random.default_rng(3)
    for _ in range(3):
        mu12, mu13 = rng.normal(size=2)
        dk = Perturbation(crossing_perturbation(mu12, mu13))
        block = crossing_block(basis, dk, *group)
        assert abs(block.delta) < 1e-8
        # the pair's coupling is fixed up to the overall sign of one mode
        k = crossing_coupling(mu12, mu13)
        assert min(abs(block.coupling - k), abs(block.coupling + k)) < 1e-10


def test_locus_real_coupling_repels():
    pairs = crossing_locus(CrossingBlock(0.5, 1.0), np.linspace(-1, 1, 9))
    for a, b in pairs:
        assert abs(a.imag) < 1e-15 and abs(b.imag) < 1e-15
    assert crossing_locus(CrossingBlock(0.5, 1.0), [0.0])[0] == (0.5, -0.5)


def test_locus_width_attraction():
    # a width splitting with real coupling: widths approach as eps grows, frequencies split
    block = CrossingBlock(0.5j, 1.0)
    (a0, b0), (a1, b1) = crossing_locus(block, [0.0, 0.4])
    assert abs(a1.imag - b1.imag) < abs(a0.imag - b0.imag)
    (a2, b2), = crossing_locus(block, [0.8])
    assert abs(a2.imag - b2.imag) < 1e-15 and abs(a2.real - b2.real) > 0


def test_hyperbola_invariant_constant():
    block = CrossingBlock(0.3 + 0.1j, 0.7 - 0.4j, center=1 - 1j)
    vals = [hyperbola_invariant(w, block) for pair in crossing_locus(block, np.linspace(-2, 2, 11)) for w in pair]
    assert np.ptp(vals) < 1e-12
