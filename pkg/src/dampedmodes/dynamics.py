"""Initial-value evolution and frequency-domain Green's functions.

Two routes are provided for each quantity so they can check one another:
eigen-expansion against fourth-order Runge-Kutta in time, and the modal sum
against an N x N inversion in frequency.  The transform convention is
``G(w) = int_0^inf G(t) exp(i w t) dt``, which puts all poles in the lower
half plane for a stable system.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import (
    DampedModesError,
    ModeBasis,
    OscillatorSystem,
    PhaseVector,
    VectorLike,
    as_vector,
    companion_matrix,
)

MAX_STEPS = 100_000_000


class NegativeTimeWarning(UserWarning):
    pass


class NearPoleWarning(UserWarning):
    pass


class SingularFrequencyError(DampedModesError):
    pass


@dataclass(frozen=True)
class GreenEvaluation:
    """``G(w)`` as a 2N x 2N matrix with N x N blocks QQ, QP, PQ, PP."""

    omega: complex
    blocks: np.ndarray

    @property
    def n(self) -> int:
        return self.blocks.shape[0] // 2

    @property
    def qq(self):
        return self.blocks[: self.n, : self.n]

    @property
    def qp(self):
        return self.blocks[: self.n, self.n :]

    @property
    def pq(self):
        return self.blocks[self.n :, : self.n]

    @property
    def pp(self):
        return self.blocks[self.n :, self.n :]


def _wrap(v, like):
    if isinstance(like, PhaseVector):
        return PhaseVector.from_vector(v)
    return v


def expand(phi0: VectorLike, basis: ModeBasis) -> np.ndarray:
    """Mode coefficients ``a_j = (f_j, phi0)``; ``sum_j a_j f_j`` reproduces ``phi0``."""
    basis.require_noncritical()
    v = as_vector(phi0, basis.dim)
    return basis.vectors.T @ (basis.metric @ v)


def evolve(phi0: VectorLike, basis: ModeBasis, t: float):
    """``phi(t) = sum_j a_j exp(-i w_j t) f_j``.

    Negative ``t`` is allowed (the expansion continues analytically) but
    warns, since damped modes then grow.
    """
    if t < 0:
        warnings.warn("evolving to negative time: damped modes grow", NegativeTimeWarning, stacklevel=2)
    a = expand(phi0, basis)
    v = basis.vectors @ (a * np.exp(-1j * basis.omegas * t))
    return _wrap(v, phi0)


def evolve_many(phi0: VectorLike, basis: ModeBasis, times) -> np.ndarray:
    """States at each of ``times`` as rows of a ``len(times) x dim`` array."""
    a = expand(phi0, basis)
    times = np.asarray(times, dtype=float)
    phases = np.exp(-1j * np.outer(times, basis.omegas))
    return (phases * a) @ basis.vectors.T


def default_dt(sys) -> float:
    """``0.01 / max|w|`` with ``max|w|`` bounded by Gershgorin discs of the generator.

    ``sys`` is an :class:`OscillatorSystem` or a generator matrix.
    """
    a = companion_matrix(sys) if isinstance(sys, OscillatorSystem) else np.asarray(sys)
    bound = float(np.max(np.sum(np.abs(a), axis=1)))
    return 0.01 / max(bound, 1e-12)


def _rk4_step_matrix(a, h):
    ha = h * a
    eye = np.eye(a.shape[0])
    # RK4 applied to a linear system is exactly this Taylor polynomial
    return eye + ha @ (eye + ha @ (eye / 2 + ha @ (eye / 6 + ha / 24)))


def integrate_linear(generator: np.ndarray, phi0: VectorLike, t1: float, dt: float, n_out: int | None = None):
    """Classic RK4 on ``d_t phi = A phi`` for any real generator ``A``.

    The step is shrunk so that an integer number of steps lands on ``t1``.
    With ``n_out`` the states at ``n_out`` evenly spaced times are returned as
    ``(times, states)``; otherwise only the final state.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t1 < 0:
        raise ValueError("t1 must be non-negative")
    a = np.asarray(generator)
    v = as_vector(phi0, a.shape[0]).copy()
    steps = math.ceil(t1 / dt - 1e-12) if t1 > 0 else 0
    if steps > MAX_STEPS:
        raise DampedModesError(f"{steps} steps exceeds the limit of {MAX_STEPS}")
    if n_out is None:
        if steps:
            p = _rk4_step_matrix(a, t1 / steps)
            for _ in range(steps):
                v = p @ v
        return _wrap(v, phi0)

    if n_out < 2:
        raise ValueError("n_out must be at least 2")
    # refine so every output time is a step boundary
    per = max(1, math.ceil(steps / (n_out - 1)))
    times = np.linspace(0.0, t1, n_out)
    out = np.empty((n_out, a.shape[0]), dtype=complex)
    out[0] = v
    p = _rk4_step_matrix(a, (t1 / (n_out - 1)) / per)
    for i in range(1, n_out):
        for _ in range(per):
            v = p @ v
        out[i] = v
    return times, out


def integrate_direct(sys: OscillatorSystem, phi0: VectorLike, t1: float, dt: float | None = None,
                     n_out: int | None = None):
    """RK4 on ``d_t phi = A phi`` with ``A = [[0, I], [-K, -Gamma]]``; see :func:`integrate_linear`."""
    if dt is None:
        dt = default_dt(sys)
    return integrate_linear(companion_matrix(sys), phi0, t1, dt, n_out)


def energy(phi: VectorLike, sys: OscillatorSystem) -> float:
    """``E = (phi_hat . phi_hat + phi . K . phi) / 2`` for real states."""
    v = as_vector(phi, sys.dim).real
    q, p = v[: sys.n], v[sys.n :]
    return 0.5 * float(p @ p + q @ sys.k_matrix @ q)


def green_frequency(sys: OscillatorSystem, omega: complex) -> GreenEvaluation:
    """``G(w) = M^-1 [[Gamma - i w, I], [-K, -i w]]`` with ``M = -w^2 - i w Gamma + K``.

    Only the N x N matrix ``M`` is factorized.  ``G`` solves
    ``(H - w) G = -i I``.
    """
    n = sys.n
    eye = np.eye(n)
    m = -(omega**2) * eye - 1j * omega * sys.gamma_matrix + sys.k_matrix
    rhs = np.block([[sys.gamma_matrix - 1j * omega * eye, eye], [-sys.k_matrix, -1j * omega * eye]])
    rhs = rhs.astype(complex)
    if np.linalg.cond(m) > 1e14:
        raise SingularFrequencyError(f"omega = {omega} is (numerically) an eigenvalue")
    top = np.linalg.solve(m, rhs[:n])
    bottom = np.linalg.solve(m, rhs[n:])
    return GreenEvaluation(complex(omega), np.vstack([top, bottom]))


def green_eigensum(basis: ModeBasis, omega: complex) -> GreenEvaluation:
    """``G(w) = sum_j f_j [i / (w - w_j)] (f_j, .)``.

    The covariant row ``(f_j, .)`` is the conjugated dual ``(D f_j)^*``.
    """
    basis.require_noncritical()
    w = basis.omegas
    dist = np.min(np.abs(omega - w))
    if dist < 1e-6:
        warnings.warn(f"omega within {dist:.2e} of a pole", NearPoleWarning, stacklevel=2)
    u = basis.vectors
    duals = np.conj(basis.metric @ u)
    rows = duals.conj().T
    blocks = (u * (1j / (omega - w))) @ rows
    return GreenEvaluation(complex(omega), blocks)
