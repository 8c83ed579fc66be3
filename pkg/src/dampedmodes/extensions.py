"""Nonlinear mode coupling, thermal correlation spectra and the commutator check.

The nonlinear system is
``d_t^2 phi + Gamma d_t phi + K phi + lambda(a, b, c) phi(b) phi(c) = 0``.
Projecting onto the modes gives
``(d_t + i w_j) a^j = -i lambda_jkl a^k a^l`` with
``lambda_jkl = lambda(a, b, c) f_j(a) f_k(b) f_l(c)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import DampedModesError, ModeBasis, OscillatorSystem, PhaseVector, VectorLike, as_vector
from .dynamics import NearPoleWarning, expand, green_frequency


class NonlinearityWarning(UserWarning):
    pass


class BlowUpError(DampedModesError):
    pass


@dataclass(frozen=True)
class NonlinearCoupling:
    """Quadratic force ``lambda(a, b, c)``, symmetric in its last two slots."""

    lambda_raw: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lambda_raw, dtype=float)
        if lam.ndim != 3 or not lam.shape[0] == lam.shape[1] == lam.shape[2]:
            raise ValueError(f"lambda must be N x N x N, got {lam.shape}")
        scale = max(float(np.max(np.abs(lam))), 1e-300) if lam.size else 1.0
        if np.max(np.abs(lam - lam.transpose(0, 2, 1)), initial=0.0) > 1e-12 * scale:
            raise ValueError("lambda(a, b, c) must be symmetric in (b, c)")
        lam = 0.5 * (lam + lam.transpose(0, 2, 1))
        lam.setflags(write=False)
        object.__setattr__(self, "lambda_raw", lam)

    @property
    def n(self) -> int:
        return self.lambda_raw.shape[0]

    @classmethod
    def zeros(cls, n: int):
        return cls(np.zeros((n, n, n)))

    @classmethod
    def rank_one(cls, u, scale: float = 1.0):
        u = np.asarray(u, dtype=float)
        return cls(scale * np.einsum("a,b,c->abc", u, u, u))

    def force(self, q: np.ndarray) -> np.ndarray:
        return np.einsum("abc,b,c->a", self.lambda_raw, q, q)


def mode_coupling_coefficients(basis: ModeBasis, nl: NonlinearCoupling) -> np.ndarray:
    """``lambda_jkl`` for all 2N modes, by triple contraction with the mode coordinates."""
    basis.require_noncritical()
    if nl.n != basis.n:
        raise ValueError(f"coupling has N = {nl.n}, basis has N = {basis.n}")
    f = basis.coords
    return np.einsum("abc,aj,bk,cl->jkl", nl.lambda_raw, f, f, f, optimize=True)


def _amplitude_rhs(omegas, lam):
    def rhs(a):
        return -1j * omegas * a - 1j * np.einsum("jkl,k,l->j", lam, a, a)

    return rhs


def _rk4(rhs, y, t1, dt, guard=None):
    if dt <= 0:
        raise ValueError("dt must be positive")
    steps = math.ceil(t1 / dt - 1e-12) if t1 > 0 else 0
    if steps == 0:
        return y
    h = t1 / steps
    for _ in range(steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        if guard is not None:
            guard(y)
    return y


def evolve_amplitudes(basis: ModeBasis, nl: NonlinearCoupling, a0, t1: float, dt: float = 1e-3) -> np.ndarray:
    """Integrate the 2N amplitude equations with RK4 from ``a0`` to ``t1``."""
    lam = mode_coupling_coefficients(basis, nl)
    a0 = np.asarray(a0, dtype=complex)
    norm0 = max(float(np.linalg.norm(a0)), 1e-300)
    if np.max(np.abs(lam), initial=0.0) * norm0 * t1 > 1:
        warnings.warn("nonlinearity is not small over this time span", NonlinearityWarning, stacklevel=2)

    def guard(a):
        if not np.all(np.isfinite(a)) or np.linalg.norm(a) > 1e6 * norm0:
            raise BlowUpError("mode amplitudes blew up (|a| > 1e6 |a(0)|)")

    return _rk4(_amplitude_rhs(basis.omegas, lam), a0, t1, dt, guard)


def evolve_nonlinear(basis: ModeBasis, nl: NonlinearCoupling, phi0: VectorLike, t1: float, dt: float = 1e-3):
    """``phi(t1) = sum_j a^j(t1) f_j`` with ``a^j(0) = (f_j, phi0)``."""
    a = evolve_amplitudes(basis, nl, expand(phi0, basis), t1, dt)
    v = basis.vectors @ a
    return PhaseVector.from_vector(v) if isinstance(phi0, PhaseVector) else v


def integrate_nonlinear_direct(sys: OscillatorSystem, nl: NonlinearCoupling, phi0: VectorLike, t1: float,
                               dt: float = 1e-3) -> np.ndarray:
    """RK4 on the second-order equations in phase-space form; independent of the modes."""
    n = sys.n
    k, g = sys.k_matrix, sys.gamma_matrix

    def rhs(y):
        q, p = y[:n], y[n:]
        return np.concatenate([p, -k @ q - g @ p - nl.force(q)])

    y0 = as_vector(phi0, sys.dim).real.astype(float)
    return _rk4(rhs, y0, t1, dt)


def picard_amplitudes(basis: ModeBasis, nl: NonlinearCoupling, a0, t: float) -> np.ndarray:
    """First-order-in-lambda solution of the amplitude equations at time ``t``."""
    lam = mode_coupling_coefficients(basis, nl)
    w = basis.omegas
    a0 = np.asarray(a0, dtype=complex)
    # detuning w_k + w_l - w_j for every (j, k, l)
    detune = w[None, :, None] + w[None, None, :] - w[:, None, None]
    small = np.abs(detune * t) < 1e-8
    safe = np.where(small, 1.0, detune)
    integral = np.where(small, t, (np.exp(-1j * safe * t) - 1) / (-1j * safe))
    corr = -1j * np.einsum("jkl,k,l,jkl->j", lam, a0, a0, integral)
    return np.exp(-1j * w * t) * (a0 + corr)


def commutator_matrix(basis: ModeBasis) -> np.ndarray:
    """``Delta^jk = (w_j + w_k^*) sum_a f_j(a) f_k(a)^*`` over all 2N modes."""
    basis.require_noncritical()
    w = basis.omegas
    f = basis.coords
    return (w[:, None] + np.conj(w)[None, :]) * (f.T @ np.conj(f))


def commutator_signature(basis: ModeBasis) -> np.ndarray:
    """``diag(sgn Re w_j)``, the undamped value of ``Delta``.

    Positive-frequency modes give ``+1``; their partners ``f_-j = i f_j^*``
    give ``-1`` because ``a^-j`` is proportional to ``(a^j)^dagger``.
    """
    return np.diag(np.sign(basis.omegas.real))


def commutator_deviation(basis: ModeBasis) -> float:
    """``max |Delta - diag(sgn Re w)|``, of order Gamma."""
    return float(np.max(np.abs(commutator_matrix(basis) - commutator_signature(basis))))


@dataclass(frozen=True)
class NoiseModel:
    """Thermal noise at temperature ``T`` (units with hbar = k_B = 1)."""

    temperature: float
    classical: bool = False

    def __post_init__(self):
        if not (self.temperature > 0 and math.isfinite(self.temperature)):
            raise ValueError("temperature must be positive and finite")

    def prefactor(self, omega: float) -> float:
        """``2w / (1 - exp(-w/T))``, or ``2T`` in the classical case; ``2T`` at ``w = 0``."""
        t = self.temperature
        if self.classical or omega == 0:
            return 2.0 * t
        return float(-2.0 * omega / math.expm1(-omega / t))


def noise_spectrum(sys: OscillatorSystem, noise: NoiseModel, omega: float) -> np.ndarray:
    """Fluctuation-dissipation noise ``<eta eta>(w) = prefactor(w) Gamma``."""
    return noise.prefactor(float(omega)) * sys.gamma_matrix


def _response_factor(noise, omega):
    # prefactor / w, kept finite at w = 0
    return noise.prefactor(omega) / omega if omega != 0 else math.nan


def _check_site(basis, *sites):
    for s in sites:
        if not 0 <= s < basis.n:
            raise IndexError(f"site {s} out of range for N = {basis.n}")


def correlation_spectrum(basis: ModeBasis, noise: NoiseModel, alpha: int, beta: int, omega: float) -> complex:
    """``F(a, b, w) = [prefactor(w) / w] i sum_j w f_j(a) f_j(b) / (w^2 - w_j^2)``, summed over all 2N modes."""
    basis.require_noncritical()
    _check_site(basis, alpha, beta)
    omega = float(omega)
    w = basis.omegas
    dist = np.min(np.abs(omega - w))
    if dist < 1e-6:
        warnings.warn(f"omega within {dist:.2e} of a pole", NearPoleWarning, stacklevel=2)
    f = basis.coords
    total = np.sum(omega * f[alpha] * f[beta] / (omega**2 - w**2))
    return complex(1j * _response_factor(noise, omega) * total)


def correlation_spectrum_green(sys: OscillatorSystem, noise: NoiseModel, alpha: int, beta: int,
                               omega: float) -> float:
    """Same quantity from the response function: ``[prefactor(w) / w] Im G^QP(a, b, w)``."""
    omega = float(omega)
    g = green_frequency(sys, omega)
    return float(_response_factor(noise, omega) * g.qp[alpha, beta].imag)


def matsubara_frequencies(temperature: float, m_max: int) -> np.ndarray:
    """Poles ``2 m pi i T`` of the thermal prefactor for ``m = -m_max..m_max``, excluding ``m = 0``."""
    m = np.arange(-m_max, m_max + 1)
    m = m[m != 0]
    return 2j * np.pi * temperature * m
