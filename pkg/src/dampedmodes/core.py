"""Problem definition, phase-space vectors and the bilinear map.

The equations of motion are

    d_t^2 phi + Gamma d_t phi + K phi = 0

with symmetric ``K`` (force constants) and ``Gamma`` (damping).  In first-order
form the state is the 2N-vector ``(phi, phi_hat)`` of coordinates and momenta
and evolves as ``d_t phi = -i H phi``.  ``H`` is not Hermitian, but it is
symmetric under the non-conjugating bilinear map

    (psi, phi) = i [psi . phi_hat + psi_hat . phi + psi . Gamma phi]

which plays the role the inner product plays for conservative systems.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Union

import numpy as np


class DampedModesError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(DampedModesError, ValueError):
    pass


class CriticalSystemError(DampedModesError):
    """Raised when eigenvectors merge and a self-product ``(f, f)`` vanishes.

    ``cluster`` holds the offending eigenvalues.
    """

    def __init__(self, message, cluster=()):
        super().__init__(message)
        self.cluster = tuple(complex(w) for w in cluster)


class AsymmetryWarning(UserWarning):
    pass


class GainWarning(UserWarning):
    """Damping matrix is indefinite, i.e. the model contains gain."""


@dataclass(frozen=True)
class NumericsPolicy:
    """Tolerances shared by all modules.

    Relative tolerances are scaled by ``max(1, |omega|)`` or the relevant
    matrix norm at the point of use.
    """

    sym_warn_tol: float = 1e-12
    sym_error_tol: float = 1e-6
    eig_tol: float = 1e-9
    zero_mode_tol: float = 1e-10
    pair_tol: float = 1e-8
    cluster_tol: float = 1e-6
    crit_tol: float = 1e-8
    gap_tol: float = 1e-6
    param_tol: float = 1e-6
    allow_critical: bool = False

    def replace(self, **changes) -> "NumericsPolicy":
        unknown = set(changes) - set(self.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown numerics fields: {sorted(unknown)}")
        values = {name: getattr(self, name) for name in self.__dataclass_fields__}
        values.update(changes)
        return NumericsPolicy(**values)


DEFAULT_POLICY = NumericsPolicy()


def _frozen(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


def _symmetrized(name, m, policy):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    scale = np.max(np.abs(m)) if m.size else 0.0
    asym = np.max(np.abs(m - m.T)) if m.size else 0.0
    if scale > 0 and asym > policy.sym_error_tol * scale:
        raise ValueError(f"{name} is not symmetric (relative asymmetry {asym / scale:.3e})")
    if scale > 0 and asym > policy.sym_warn_tol * scale:
        warnings.warn(
            f"{name} symmetrized (relative asymmetry {asym / scale:.3e})",
            AsymmetryWarning,
            stacklevel=4,
        )
    return 0.5 * (m + m.T)


@dataclass(frozen=True)
class OscillatorSystem:
    """N coupled oscillators with stiffness ``k_matrix`` and damping ``gamma_matrix``.

    Both matrices are symmetrized on construction.  Asymmetry above
    ``policy.sym_error_tol`` (relative) is an error.  An indefinite damping
    matrix is accepted with a :class:`GainWarning` and ``gain`` set to True.
    With ``require_stable=True`` a stiffness matrix that is not positive
    definite raises ``ValueError``.
    """

    k_matrix: np.ndarray
    gamma_matrix: np.ndarray
    require_stable: bool = False
    policy: NumericsPolicy = field(default=DEFAULT_POLICY, repr=False, compare=False)
    gain: bool = field(init=False, default=False)

    def __post_init__(self):
        k = _symmetrized("k_matrix", self.k_matrix, self.policy)
        g = _symmetrized("gamma_matrix", self.gamma_matrix, self.policy)
        if k.shape != g.shape:
            raise DimensionError(f"k_matrix {k.shape} and gamma_matrix {g.shape} differ in shape")
        if k.shape[0] < 1:
            raise DimensionError("system needs at least one oscillator")
        if self.require_stable:
            try:
                np.linalg.cholesky(k)
            except np.linalg.LinAlgError:
                raise ValueError("k_matrix is not positive definite") from None
        gain = False
        gscale = np.max(np.abs(g))
        if gscale > 0 and np.linalg.eigvalsh(g)[0] < -1e-12 * gscale:
            warnings.warn("gamma_matrix is indefinite (gain medium)", GainWarning, stacklevel=3)
            gain = True
        object.__setattr__(self, "k_matrix", _frozen(k))
        object.__setattr__(self, "gamma_matrix", _frozen(g))
        object.__setattr__(self, "gain", gain)

    @property
    def n(self) -> int:
        return self.k_matrix.shape[0]

    @property
    def dim(self) -> int:
        return 2 * self.n

    def with_gamma(self, gamma_matrix) -> "OscillatorSystem":
        return OscillatorSystem(self.k_matrix, gamma_matrix, policy=self.policy)

    def with_k(self, k_matrix) -> "OscillatorSystem":
        return OscillatorSystem(k_matrix, self.gamma_matrix, policy=self.policy)


@dataclass(frozen=True)
class PhaseVector:
    """A state ``(phi, phi_hat)`` with N complex coordinates and N momenta."""

    coords: np.ndarray
    momenta: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.coords, dtype=complex).ravel()
        p = np.asarray(self.momenta, dtype=complex).ravel()
        if q.shape != p.shape:
            raise DimensionError(f"coords ({q.size}) and momenta ({p.size}) differ in length")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ValueError("phase vector has non-finite components")
        object.__setattr__(self, "coords", _frozen(q))
        object.__setattr__(self, "momenta", _frozen(p))

    @property
    def n(self) -> int:
        return self.coords.size

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.coords, self.momenta])

    @classmethod
    def from_vector(cls, v) -> "PhaseVector":
        v = np.asarray(v, dtype=complex).ravel()
        if v.size % 2:
            raise DimensionError(f"phase vector length {v.size} is odd")
        n = v.size // 2
        return cls(v[:n], v[n:])

    @classmethod
    def zeros(cls, n: int) -> "PhaseVector":
        return cls(np.zeros(n), np.zeros(n))


VectorLike = Union[PhaseVector, np.ndarray]


def as_vector(phi: VectorLike, dim: int | None = None) -> np.ndarray:
    """Return ``phi`` as a flat complex array, checking its length."""
    v = phi.vector if isinstance(phi, PhaseVector) else np.asarray(phi, dtype=complex).ravel()
    if dim is not None and v.size != dim:
        raise DimensionError(f"expected a vector of length {dim}, got {v.size}")
    return v


@dataclass(frozen=True)
class Mode:
    """One eigenmode: eigenvalue ``omega`` and its full phase-space vector.

    For an ordinary system the vector is ``(f, -i omega f)``; the constrained
    odd-dimensional systems append one extra coordinate.  ``self_product`` is
    ``(f, f)`` evaluated with the coordinate part scaled to unit 2-norm, before
    normalization.
    """

    omega: complex
    vector: np.ndarray
    n: int
    self_product: complex
    critical: bool = False

    @property
    def f(self) -> np.ndarray:
        return self.vector[: self.n]

    @property
    def momenta(self) -> np.ndarray:
        return self.vector[self.n : 2 * self.n]


@dataclass(frozen=True)
class SumRuleReport:
    r1: float
    r2: float
    r3: float
    r4: float

    def max(self) -> float:
        return max(self.r1, self.r2, self.r3, self.r4)


@dataclass(frozen=True)
class BasisResiduals:
    orthonormality: float
    pairing: float
    eigen_residual: float
    sum_rules: SumRuleReport | None = None


@dataclass(frozen=True)
class ModeBasis:
    """Ordered eigenbasis of an evolution operator.

    Modes are ordered by ascending ``|Im omega|``; within equal damping by
    ascending ``|Re omega|``, with the negative-frequency partner first so
    conjugate pairs are adjacent.  ``metric`` is the covariant metric of the
    bilinear map the modes are normalized under.
    """

    modes: tuple
    system: object
    metric: np.ndarray
    residuals: BasisResiduals | None = None

    def __len__(self):
        return len(self.modes)

    def __getitem__(self, j) -> Mode:
        return self.modes[j]

    @property
    def n(self) -> int:
        return self.modes[0].n

    @property
    def dim(self) -> int:
        return self.metric.shape[0]

    @property
    def omegas(self) -> np.ndarray:
        return np.array([m.omega for m in self.modes], dtype=complex)

    @property
    def vectors(self) -> np.ndarray:
        """Mode vectors as the columns of a ``dim x len(modes)`` matrix."""
        return np.column_stack([m.vector for m in self.modes])

    @property
    def coords(self) -> np.ndarray:
        """Coordinate parts ``f_j`` as the columns of an ``N x len(modes)`` matrix."""
        return np.column_stack([m.f for m in self.modes])

    @property
    def critical(self) -> bool:
        return any(m.critical for m in self.modes)

    def require_noncritical(self):
        if self.critical:
            crit = [m.omega for m in self.modes if m.critical]
            raise CriticalSystemError("basis contains critical modes", crit)

    def with_modes(self, modes) -> "ModeBasis":
        return ModeBasis(tuple(modes), self.system, self.metric, None)


def inner_product(psi: VectorLike, phi: VectorLike) -> complex:
    """Standard (conjugating) inner product ``<psi|phi>``."""
    a = as_vector(psi)
    b = as_vector(phi, a.size)
    return complex(np.vdot(a, b))


def metric(sys: OscillatorSystem) -> tuple[np.ndarray, np.ndarray]:
    """Covariant metric ``g = i[[Gamma, I], [I, 0]]`` and its inverse."""
    n = sys.n
    eye = np.eye(n)
    zero = np.zeros((n, n))
    g = 1j * np.block([[sys.gamma_matrix, eye], [eye, zero]])
    g_inv = -1j * np.block([[zero, eye], [eye, -sys.gamma_matrix]])
    return g, g_inv


def bilinear_map(psi: VectorLike, phi: VectorLike, sys: OscillatorSystem) -> complex:
    """The symmetric, non-conjugating bilinear map ``(psi, phi)``."""
    a = as_vector(psi, sys.dim)
    b = as_vector(phi, sys.dim)
    n = sys.n
    q1, p1 = a[:n], a[n:]
    q2, p2 = b[:n], b[n:]
    return complex(1j * (q1 @ p2 + p1 @ q2 + q1 @ (sys.gamma_matrix @ q2)))


def dual(phi: VectorLike, sys: OscillatorSystem) -> np.ndarray:
    """Dual vector ``D phi = (g phi)^*``, so that ``<D phi|psi> = (phi, psi)``.

    For a normalized eigenvector this is the corresponding left eigenvector.
    """
    g, _ = metric(sys)
    return np.conj(g @ as_vector(phi, sys.dim))


def evolution_operator(sys: OscillatorSystem) -> np.ndarray:
    """``H = i[[0, I], [-K, -Gamma]]`` with ``d_t phi = -i H phi``."""
    n = sys.n
    return 1j * np.block([[np.zeros((n, n)), np.eye(n)], [-sys.k_matrix, -sys.gamma_matrix]])


def companion_matrix(sys: OscillatorSystem) -> np.ndarray:
    """Real generator ``A = -i H``; its eigenvalues ``s`` give ``omega = i s``."""
    n = sys.n
    return np.block([[np.zeros((n, n)), np.eye(n)], [-sys.k_matrix, -sys.gamma_matrix]])


def lowered_operator(sys: OscillatorSystem) -> np.ndarray:
    """``g H = [[K, 0], [0, -I]]``; independent of the damping."""
    n = sys.n
    return np.block([[sys.k_matrix, np.zeros((n, n))], [np.zeros((n, n)), -np.eye(n)]]).astype(complex)


def lagrangian_form(phi: VectorLike, sys: OscillatorSystem) -> complex:
    """``(phi, H phi) = -phi_hat.phi_hat + phi.K.phi``, i.e. minus twice the Lagrangian."""
    v = as_vector(phi, sys.dim)
    q, p = v[: sys.n], v[sys.n :]
    return complex(-(p @ p) + q @ (sys.k_matrix @ q))


def rayleigh_quotient(phi: VectorLike, sys: OscillatorSystem) -> complex:
    """Stationary quotient ``(phi, H phi) / (phi, phi)``; equals ``omega_j`` at a mode.

    Raises ``CriticalSystemError`` when ``(phi, phi)`` vanishes relative to
    ``|phi|^2``, which signals a (near-)critical direction.
    """
    v = as_vector(phi, sys.dim)
    den = bilinear_map(v, v, sys)
    if abs(den) <= 1e-12 * np.vdot(v, v).real:
        raise CriticalSystemError(f"(phi, phi) = {den:.3e} vanishes; quotient undefined")
    return lagrangian_form(v, sys) / den
