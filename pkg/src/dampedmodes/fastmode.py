"""Adiabatic elimination of one light oscillator.

The slow oscillators obey ``d_t^2 phi + Gamma d_t phi + K phi = -A phi_f`` and
the light one ``(eps d_t^2 + gamma d_t + kappa) phi_f = -A . phi``.  As
``eps -> 0`` its momentum drops out, ``d_t phi_f = -c phi_f - B . phi`` with
``c = kappa / gamma`` and ``B = A / gamma``, leaving a phase space
``(phi; phi_hat; phi_f)`` of odd dimension 2N + 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize

from .core import (
    DampedModesError,
    DimensionError,
    ModeBasis,
    NumericsPolicy,
    OscillatorSystem,
    as_vector,
    companion_matrix,
)
from .spectral import solve_modes


class MatchingError(DampedModesError):
    """Eigenvalues of the full and constrained systems cannot be paired unambiguously."""


@dataclass(frozen=True)
class ConstrainedSystem:
    base: OscillatorSystem
    coupling_a: np.ndarray
    kappa: float
    gamma_fast: float

    @property
    def c(self) -> float:
        return self.kappa / self.gamma_fast

    @property
    def coupling_b(self) -> np.ndarray:
        return self.coupling_a / self.gamma_fast

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def dim(self) -> int:
        return 2 * self.base.n + 1

    @property
    def coord_idx(self) -> np.ndarray:
        """Indices of the coordinates ``phi(1..N)`` and ``phi_f`` in a state vector."""
        return np.append(np.arange(self.n), 2 * self.n)


def build_constrained(base: OscillatorSystem, a, kappa: float, gamma: float) -> ConstrainedSystem:
    """Constrained system with ``B = A / gamma`` derived, never supplied."""
    if not gamma > 0:
        raise ValueError("gamma of the light oscillator must be positive")
    a = np.array(a, dtype=float).reshape(-1)
    if a.size != base.n:
        raise DimensionError(f"coupling A needs {base.n} entries, got {a.size}")
    if not np.isfinite(kappa) or not np.all(np.isfinite(a)):
        raise ValueError("A and kappa must be finite")
    a.setflags(write=False)
    return ConstrainedSystem(base, a, float(kappa), float(gamma))


def build_open_string_constrained(n: int, length_a: float, v=None) -> ConstrainedSystem:
    """String of N slow sites plus a massless end site carrying the outgoing-wave condition.

    ``Delta = a / (N + 1)``, ``A = -Delta^-2 e_N``, ``c = gamma = Delta^-1``.
    """
    delta = length_a / (n + 1)
    k = delta**-2
    vv = np.zeros(n) if v is None else np.broadcast_to(np.asarray(v, dtype=float), (n,))
    km = np.diag(2 * k + vv) - k * np.eye(n, k=1) - k * np.eye(n, k=-1)
    base = OscillatorSystem(km, np.zeros((n, n)))
    a = np.zeros(n)
    a[-1] = -k
    gamma = 1.0 / delta
    return build_constrained(base, a, kappa=gamma * gamma, gamma=gamma)


def constrained_generator(cs: ConstrainedSystem) -> np.ndarray:
    """Real ``A`` with ``d_t phi = A phi``: ``[[0, I, 0], [-K, -Gamma, -A], [-B^T, 0, -c]]``."""
    n = cs.n
    out = np.zeros((cs.dim, cs.dim))
    out[:n, n : 2 * n] = np.eye(n)
    out[n : 2 * n, :n] = -cs.base.k_matrix
    out[n : 2 * n, n : 2 * n] = -cs.base.gamma_matrix
    out[n : 2 * n, 2 * n] = -cs.coupling_a
    out[2 * n, :n] = -cs.coupling_b
    out[2 * n, 2 * n] = -cs.c
    return out


def constrained_evolution_operator(cs: ConstrainedSystem) -> np.ndarray:
    """``H = i A``, so that ``i d_t phi = H phi``."""
    return 1j * constrained_generator(cs)


def constrained_metric(cs: ConstrainedSystem) -> np.ndarray:
    """``g = i [[Gamma, I, 0], [I, 0, 0], [0, 0, gamma]]``."""
    n = cs.n
    g = np.zeros((cs.dim, cs.dim), dtype=complex)
    g[:n, :n] = cs.base.gamma_matrix
    g[:n, n : 2 * n] = np.eye(n)
    g[n : 2 * n, :n] = np.eye(n)
    g[2 * n, 2 * n] = cs.gamma_fast
    return 1j * g


def constrained_lowered_operator(cs: ConstrainedSystem) -> np.ndarray:
    """``g H = [[K, 0, A], [0, -I, 0], [A^T, 0, c gamma]]``, symmetric because ``B = A / gamma``."""
    return (constrained_metric(cs) @ constrained_evolution_operator(cs)).real


def constrained_bilinear(psi, phi, cs: ConstrainedSystem) -> complex:
    """``i [psi . phi_hat + psi_hat . phi + psi Gamma phi + gamma psi_f phi_f]``."""
    p = as_vector(psi, cs.dim)
    q = as_vector(phi, cs.dim)
    return complex(p @ constrained_metric(cs) @ q)


def stiffness_block(cs: ConstrainedSystem) -> np.ndarray:
    """``[[K, A], [A^T, c gamma]]``, whose positivity decides stability."""
    n = cs.n
    out = np.zeros((n + 1, n + 1))
    out[:n, :n] = cs.base.k_matrix
    out[:n, n] = cs.coupling_a
    out[n, :n] = cs.coupling_a
    out[n, n] = cs.c * cs.gamma_fast
    return out


def stability_check(cs: ConstrainedSystem) -> tuple[bool, float]:
    """``(stable, det)`` where stability needs ``det [[K, A], [A^T, c gamma]] > 0`` and ``c > 0``.

    Assumes ``K > 0``; by Sylvester's criterion positivity of the full block
    then reduces to the sign of its determinant.
    """
    try:
        scipy.linalg.cholesky(cs.base.k_matrix)
    except scipy.linalg.LinAlgError as exc:
        raise ValueError("stability_check requires a positive-definite slow K") from exc
    det = float(np.linalg.det(stiffness_block(cs)))
    return bool(det > 0 and cs.c > 0), det


def energy_form(phi, cs: ConstrainedSystem) -> float:
    """``(phi_hat . phi_hat + x . Kbig . x) / 2`` with ``x = (phi, phi_f)``; non-increasing when stable."""
    v = as_vector(phi, cs.dim).real
    n = cs.n
    x = np.append(v[:n], v[2 * n])
    p = v[n : 2 * n]
    return 0.5 * float(p @ p + x @ stiffness_block(cs) @ x)


def constrained_eigenmodes(cs: ConstrainedSystem, policy: NumericsPolicy | None = None) -> ModeBasis:
    """All 2N + 1 modes, normalized under the constrained bilinear map.

    The odd dimension forces at least one unpaired mode on the imaginary axis.
    """
    policy = policy or cs.base.policy
    return solve_modes(constrained_generator(cs), constrained_metric(cs), cs.n, cs, policy, cs.coord_idx)


def full_light_mass_system(cs: ConstrainedSystem, epsilon_mass: float) -> OscillatorSystem:
    """The N + 1 oscillator system with light mass ``eps``, rescaled to unit masses.

    With ``phi_f -> sqrt(eps) phi_f``: ``K = [[K, A/sqrt(eps)], [A^T/sqrt(eps), kappa/eps]]``
    and ``Gamma = diag(Gamma, gamma/eps)``.
    """
    if not epsilon_mass > 0:
        raise ValueError("epsilon_mass must be positive")
    n = cs.n
    root = np.sqrt(epsilon_mass)
    k = np.zeros((n + 1, n + 1))
    k[:n, :n] = cs.base.k_matrix
    k[:n, n] = k[n, :n] = cs.coupling_a / root
    k[n, n] = cs.kappa / epsilon_mass
    g = np.zeros((n + 1, n + 1))
    g[:n, :n] = cs.base.gamma_matrix
    g[n, n] = cs.gamma_fast / epsilon_mass
    return OscillatorSystem(k, g, policy=cs.base.policy)


def _eigenvalues(generator):
    return 1j * scipy.linalg.eigvals(generator)


def fast_eigenvalue(cs: ConstrainedSystem, epsilon_mass: float) -> complex:
    """The eigenvalue discarded by the reduction, close to ``-i gamma / eps``."""
    w = _eigenvalues(companion_matrix(full_light_mass_system(cs, epsilon_mass)))
    return complex(w[np.argmax(np.abs(w))])


def validate_adiabatic(cs: ConstrainedSystem, epsilon_mass: float) -> float:
    """Largest eigenvalue discrepancy between the full light-mass and constrained systems.

    The full spectrum minus its fastest eigenvalue is matched one-to-one to
    the constrained one by minimum total distance; any pair further apart
    than half the smallest constrained gap raises :class:`MatchingError`.
    """
    if epsilon_mass > 1e-3:
        raise ValueError("validate_adiabatic needs epsilon_mass <= 1e-3")
    slow = _eigenvalues(constrained_generator(cs))
    full = _eigenvalues(companion_matrix(full_light_mass_system(cs, epsilon_mass)))
    full = np.delete(full, np.argmax(np.abs(full)))
    cost = np.abs(slow[:, None] - full[None, :])
    rows, cols = scipy.optimize.linear_sum_assignment(cost)
    dist = cost[rows, cols]
    gaps = np.abs(slow[:, None] - slow[None, :])
    np.fill_diagonal(gaps, np.inf)
    threshold = 0.5 * float(np.min(gaps))
    if np.any(dist > threshold):
        raise MatchingError(
            f"eigenvalue match {float(np.max(dist)):.3g} exceeds half the minimum gap {threshold:.3g}"
        )
    return float(np.max(dist))
