"""Rayleigh-Schroedinger perturbation theory for complex eigenvalues.

Only stiffness perturbations ``K -> K + eps dK`` are supported: they leave
the bilinear map untouched, so the textbook formulas carry over with the
inner product replaced by the bilinear map.  Matrix elements are
``(dK)_kj = f_k . dK . f_j`` and are squared, not modulus-squared, at second
order.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg

from .core import (
    CriticalSystemError,
    DampedModesError,
    Mode,
    ModeBasis,
    NumericsPolicy,
    OscillatorSystem,
    companion_matrix,
)


class NearDegenerateError(DampedModesError):
    """A small denominator in RSPT; ``group`` lists the near-degenerate modes."""

    def __init__(self, message, group=()):
        super().__init__(message)
        self.group = tuple(group)


@dataclass(frozen=True)
class Perturbation:
    """Stiffness perturbation ``eps * delta_k`` with ``delta_k`` real symmetric."""

    delta_k: np.ndarray
    epsilon: float = 1.0

    def __post_init__(self):
        dk = np.asarray(self.delta_k, dtype=float)
        if dk.ndim != 2 or dk.shape[0] != dk.shape[1]:
            raise ValueError(f"delta_k must be square, got {dk.shape}")
        scale = max(np.max(np.abs(dk)), 1e-300) if dk.size else 1.0
        if np.max(np.abs(dk - dk.T)) > 1e-12 * scale:
            raise ValueError("delta_k must be symmetric")
        dk = 0.5 * (dk + dk.T)
        dk.setflags(write=False)
        object.__setattr__(self, "delta_k", dk)
        object.__setattr__(self, "epsilon", float(self.epsilon))

    @classmethod
    def between(cls, base: OscillatorSystem, perturbed: OscillatorSystem, epsilon: float = 1.0):
        """The perturbation taking ``base`` to ``perturbed``; damping changes are rejected."""
        if not np.allclose(base.gamma_matrix, perturbed.gamma_matrix, rtol=0, atol=1e-14):
            raise ValueError(
                "damping perturbations change the bilinear map and are not supported; "
                "only stiffness perturbations are allowed"
            )
        return cls((perturbed.k_matrix - base.k_matrix) / epsilon, epsilon)

    def apply(self, sys: OscillatorSystem, epsilon: float | None = None) -> OscillatorSystem:
        eps = self.epsilon if epsilon is None else epsilon
        return sys.with_k(sys.k_matrix + eps * self.delta_k)


@dataclass(frozen=True)
class CrossingBlock:
    """Two-mode block ``diag(delta, -delta) + eps [[0, k], [k, 0]]`` about ``center``."""

    delta: complex
    coupling: complex
    center: complex = 0j


class RsptShift(NamedTuple):
    first: complex
    second: complex
    delta_f: np.ndarray
    delta_vector: np.ndarray


def _check_index(basis, *idx):
    for j in idx:
        if not -len(basis) <= j < len(basis):
            raise IndexError(f"mode index {j} out of range for {len(basis)} modes")


def coupling_matrix(basis: ModeBasis, dk: Perturbation) -> np.ndarray:
    """All ``(dK)_kj = f_k . dK . f_j`` (no conjugation), as a matrix."""
    f = basis.coords
    return f.T @ dk.delta_k @ f


def matrix_element(basis: ModeBasis, dk: Perturbation, k: int, j: int) -> complex:
    """``(f_k, dH f_j) = f_k . dK . f_j``."""
    _check_index(basis, k, j)
    return complex(basis[k].f @ dk.delta_k @ basis[j].f)


def _gap(basis, policy):
    return policy.gap_tol * max(1.0, float(np.max(np.abs(basis.omegas))))


def rspt_shift(basis: ModeBasis, dk: Perturbation, j: int, policy: NumericsPolicy | None = None) -> RsptShift:
    """First- and second-order eigenvalue shifts and first-order eigenvector shift of mode ``j``.

    ``first = eps (dK)_jj``, ``second = eps^2 sum_k (dK)_kj^2 / (w_j - w_k)``.
    Modes degenerate with ``j`` are skipped only when their coupling to ``j``
    vanishes (as after :func:`degenerate_block`); otherwise
    :class:`NearDegenerateError` is raised.
    """
    policy = policy or NumericsPolicy()
    _check_index(basis, j)
    basis.require_noncritical()
    eps = dk.epsilon
    w = basis.omegas
    c = coupling_matrix(basis, dk)
    gap = _gap(basis, policy)
    cscale = max(1.0, float(np.max(np.abs(c))))
    near = [k for k in range(len(w)) if k != j and abs(w[j] - w[k]) <= gap]
    blocking = [k for k in near if abs(c[k, j]) > 1e-12 * cscale]
    if blocking:
        group = sorted({j, *[k for k in range(len(w)) if abs(w[j] - w[k]) <= 1e3 * gap]})
        raise NearDegenerateError(
            f"mode {j} is near-degenerate with modes {blocking}; diagonalize the block first", group
        )
    others = [k for k in range(len(w)) if k != j and k not in near]
    denom = w[j] - w[others]
    ckj = c[others, j]
    first = eps * c[j, j]
    second = eps**2 * np.sum(ckj**2 / denom)
    coeff = eps * ckj / denom
    dvec = basis.vectors[:, others] @ coeff
    return RsptShift(complex(first), complex(second), dvec[: basis.n], dvec)


def _complex_rotation(a, b, d):
    """Complex-orthogonal ``[[c, -s], [s, c]]`` that zeroes the off-diagonal of ``[[a, b], [b, d]]``."""
    if b == 0:
        return 1.0 + 0j, 0j
    if abs(a - d) >= abs(2 * b):
        t = 2 * b / (a - d)
        if abs(t * t + 1) < 1e-12:
            raise CriticalSystemError("defective coupling block: no complex-orthogonal diagonalization")
        theta = 0.5 * np.arctan(t)
    else:
        t = (a - d) / (2 * b)
        if abs(t * t + 1) < 1e-12:
            raise CriticalSystemError("defective coupling block: no complex-orthogonal diagonalization")
        theta = 0.5 * (np.pi / 2 - np.arctan(t))
    return np.cos(theta), np.sin(theta)


def diagonalize_complex_symmetric(b: np.ndarray, tol: float = 1e-14, max_sweeps: int = 60):
    """Return ``(d, q)`` with ``q^T q = I`` and ``q^T b q = diag(d)``.

    One closed-form rotation for 2 x 2 blocks, cyclic Jacobi sweeps otherwise.
    """
    b = np.array(b, dtype=complex)
    m = b.shape[0]
    q = np.eye(m, dtype=complex)
    norm = max(np.max(np.abs(b)), 1e-300)
    for _ in range(max_sweeps):
        off = np.max(np.abs(b - np.diag(np.diag(b))))
        if off <= tol * norm:
            return np.diag(b).copy(), q
        for p in range(m - 1):
            for r in range(p + 1, m):
                c, s = _complex_rotation(b[p, p], b[p, r], b[r, r])
                rot = np.eye(m, dtype=complex)
                rot[p, p] = rot[r, r] = c
                rot[p, r] = -s
                rot[r, p] = s
                b = rot.T @ b @ rot
                q = q @ rot
    raise DampedModesError("complex Jacobi sweeps did not converge")


def degenerate_block(basis: ModeBasis, dk: Perturbation, group: Sequence[int],
                     policy: NumericsPolicy | None = None):
    """Rotate a (near-)degenerate group so ``dK`` has no intra-block coupling.

    Returns ``(rotated_basis, shifts)``; ``shifts`` are the first-order
    eigenvalue shifts ``eps * d_a`` of the rotated modes, in group order.  The
    transformation is complex-orthogonal, so ``(f_a, f_b) = delta_ab`` is kept.
    """
    policy = policy or NumericsPolicy()
    group = list(group)
    _check_index(basis, *group)
    if len(set(group)) != len(group):
        raise ValueError("group contains repeated indices")
    w = basis.omegas[group]
    span = 1e3 * _gap(basis, policy)
    if np.max(np.abs(w[:, None] - w[None, :])) > span:
        raise ValueError(f"modes {group} are not mutually near-degenerate")
    u = basis.vectors[:, group]
    gram = u.T @ basis.metric @ u
    sv = np.linalg.svd(gram, compute_uv=False)
    if sv[-1] < policy.crit_tol * max(1.0, sv[0]):
        raise CriticalSystemError("group is critical (merged eigenvectors)", w)
    if np.max(np.abs(np.diag(gram) - 1)) > 1e-6:
        raise ValueError("group modes are not normalized to (f, f) = 1")
    f = u[: basis.n]
    block = f.T @ dk.delta_k @ f
    d, q = diagonalize_complex_symmetric(block)
    rotated = u @ q
    modes = list(basis.modes)
    for pos, j in enumerate(group):
        old = basis[j]
        modes[j] = Mode(old.omega, rotated[:, pos], old.n, old.self_product, old.critical)
    return basis.with_modes(modes), dk.epsilon * d


def crossing_block(basis: ModeBasis, dk: Perturbation, a: int, b: int) -> CrossingBlock:
    """Two-mode block for modes ``a`` and ``b``: half splitting, coupling and mean eigenvalue."""
    wa, wb = basis[a].omega, basis[b].omega
    return CrossingBlock(0.5 * (wa - wb), matrix_element(basis, dk, a, b), 0.5 * (wa + wb))


def hyperbola_invariant(omega: complex, block: CrossingBlock) -> float:
    """``Im[((w - center) / k)^2]``; constant along the locus as ``eps`` runs through the reals."""
    z = (omega - block.center) / block.coupling
    return float((z * z).imag)


def crossing_locus(block: CrossingBlock, eps_values) -> list[tuple[complex, complex]]:
    """Eigenvalue pairs ``center +- sqrt(delta^2 + (eps k)^2)`` for each ``eps``.

    For real ``eps`` the locus lies on an orthogonal hyperbola whose
    asymptotes point along ``k`` and ``i k``; this is checked on return.
    """
    out = []
    inv0 = hyperbola_invariant(block.center + block.delta, block) if block.coupling != 0 else 0.0
    for eps in eps_values:
        r = np.sqrt(block.delta**2 + (eps * block.coupling) ** 2 + 0j)
        pair = (complex(block.center + r), complex(block.center - r))
        if block.coupling != 0:
            scale = max(1.0, abs(inv0), abs(eps) ** 2)
            for w in pair:
                if abs(hyperbola_invariant(w, block) - inv0) > 1e-9 * scale:
                    raise DampedModesError("locus left its hyperbola")
        out.append(pair)
    return out


def polish_eigenvalue(sys: OscillatorSystem, omega: complex, iterations: int = 3) -> complex:
    """Newton steps on ``det M(w)`` using ``J'/J = tr(M^-1 M')``."""
    k, g = sys.k_matrix, sys.gamma_matrix
    eye = np.eye(sys.n)
    for _ in range(iterations):
        m = -(omega**2) * eye - 1j * omega * g + k
        dm = -2 * omega * eye - 1j * g
        try:
            tr = np.trace(np.linalg.solve(m, dm))
        except np.linalg.LinAlgError:
            break
        if tr == 0 or not np.isfinite(tr):
            break
        step = 1.0 / tr
        omega = omega - step
        if abs(step) <= 1e-16 * max(1.0, abs(omega)):
            break
    return complex(omega)


def exact_shift(sys: OscillatorSystem, dk: Perturbation, omega0: complex, epsilon: float,
                guess: complex | None = None) -> complex:
    """Exact ``w(eps) - w0`` for the root of the perturbed system nearest ``guess``."""
    perturbed = dk.apply(sys, epsilon)
    roots = 1j * scipy.linalg.eigvals(companion_matrix(perturbed))
    target = omega0 if guess is None else guess
    w = roots[np.argmin(np.abs(roots - target))]
    return polish_eigenvalue(perturbed, w) - omega0
