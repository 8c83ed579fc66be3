"""Builders for the standard example systems and the 1-d shooting machinery.

Chains have unit masses at sites ``alpha = 1..N`` tied to their neighbours by
springs ``k`` and to their rest positions by ``V(alpha)``.  In the continuum
scaling ``k Delta^2 = 1`` they discretize ``[d_t^2 + Gamma(x) d_t - d_x^2 + V(x)] phi = 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import DampedModesError, OscillatorSystem

BOUNDARIES = ("fixed", "free", "outgoing")
RESCALE_EVERY = 32


def build_single(k: float, gamma: float) -> OscillatorSystem:
    """One oscillator, ``K = k`` and ``Gamma = 2 gamma``: ``w = +-sqrt(k - gamma^2) - i gamma``."""
    if k <= 0:
        raise ValueError("k must be positive")
    return OscillatorSystem([[k]], [[2.0 * gamma]])


def build_pair_example(gamma: float) -> OscillatorSystem:
    """``K = [[4, -2], [-2, 4]]``, ``Gamma = diag(4 gamma, 2 gamma)``.

    Critical at ``gamma ~ 0.8599`` and ``gamma ~ 2.1031``.
    """
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    return OscillatorSystem([[4.0, -2.0], [-2.0, 4.0]], np.diag([4.0 * gamma, 2.0 * gamma]))


def build_crossing_example(delta: float) -> OscillatorSystem:
    """Three oscillators with a level crossing at ``w = 1 - i`` when ``delta = 0``.

    ``K`` and ``Gamma`` do not commute; ``delta`` detunes the first oscillator.
    """
    k = np.array([[2.0 + 4.0 * delta, 0.0, 0.0], [0.0, 2.0, 2.0], [0.0, 2.0, 6.0]])
    return OscillatorSystem(k, np.diag([2.0, 1.0, 4.0]))


def crossing_perturbation(mu12: float, mu13: float) -> np.ndarray:
    return np.array([[0.0, mu12, mu13], [mu12, 0.0, 0.0], [mu13, 0.0, 0.0]])


def crossing_coupling(mu12: float, mu13: float) -> complex:
    """Predicted block coupling ``sqrt(2) [mu12/2 - mu13 (1 + i)/4]`` at the crossing."""
    return math.sqrt(2.0) * (mu12 / 2 - mu13 * (1 + 1j) / 4)


def _site_values(v, n, name):
    if v is None:
        return np.zeros(n)
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValueError(f"{name} must be a scalar or have length {n}, got shape {arr.shape}")
    return arr.copy()


@dataclass(frozen=True)
class ChainSpec:
    """Nearest-neighbour chain.

    ``damping`` holds the diagonal ``Gamma(alpha)``.  A ``free`` end drops the
    spring to the wall (``K(N, N) = k + V(N)``); an ``outgoing`` right end is a
    free end plus the damper ``sqrt(k)`` that absorbs waves leaving the chain
    (``gamma = 1/Delta`` in the continuum scaling).
    """

    n: int
    spring_k: float = 1.0
    onsite_v: np.ndarray | None = None
    damping: np.ndarray | None = None
    delta: float = 1.0
    boundary: tuple = ("fixed", "fixed")

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("chain needs at least one site")
        left, right = self.boundary
        if left not in ("fixed", "free") or right not in BOUNDARIES:
            raise ValueError(f"bad boundary {self.boundary}; 'outgoing' is only allowed on the right")
        object.__setattr__(self, "onsite_v", _site_values(self.onsite_v, self.n, "onsite_v"))
        object.__setattr__(self, "damping", _site_values(self.damping, self.n, "damping"))
        if not np.all(np.isfinite(self.damping)) or not np.all(np.isfinite(self.onsite_v)):
            raise ValueError("chain parameters must be finite")

    @property
    def sites(self) -> np.ndarray:
        return self.delta * np.arange(1, self.n + 1)

    def bands(self):
        """``(K diagonal, K off-diagonal, Gamma diagonal)`` without forming dense matrices."""
        n, k = self.n, self.spring_k
        kd = 2 * k + self.onsite_v
        gd = self.damping.copy()
        left, right = self.boundary
        if left == "free":
            kd[0] -= k
        if right in ("free", "outgoing"):
            kd[-1] -= k
        if right == "outgoing":
            gd[-1] += math.sqrt(k)
        return kd, np.full(n - 1, -float(k)), gd, np.zeros(n - 1)

    def to_system(self) -> OscillatorSystem:
        n, k = self.n, self.spring_k
        km = np.diag(2 * k + self.onsite_v) - k * np.eye(n, k=1) - k * np.eye(n, k=-1)
        gam = np.diag(self.damping)
        left, right = self.boundary
        if left == "free":
            km[0, 0] -= k
        if right in ("free", "outgoing"):
            km[-1, -1] -= k
        if right == "outgoing":
            gam[-1, -1] += math.sqrt(k)
        return OscillatorSystem(km, gam)


def uniform_chain_spec(n: int, k: float, gamma: float, v=None) -> ChainSpec:
    return ChainSpec(n, k, v, np.full(n, 2.0 * gamma))


def build_uniform_chain(n: int, k: float, gamma: float, v=None) -> OscillatorSystem:
    """Fixed-fixed chain with uniform damping ``Gamma = 2 gamma I``.

    ``K`` and ``Gamma`` commute, so ``w_j = -i gamma +- sqrt(Omega_j^2 - gamma^2)``
    with the undamped eigenvectors.
    """
    return uniform_chain_spec(n, k, gamma, v).to_system()


def phonon_frequencies(n: int, k: float) -> np.ndarray:
    """Undamped ``Omega_j = sqrt(2k (1 - cos(j pi / (N+1))))`` of the V = 0 chain, j = 1..N."""
    j = np.arange(1, n + 1)
    return np.sqrt(2 * k * (1 - np.cos(j * np.pi / (n + 1))))


def end_damped_chain_spec(n: int, k: float, gamma: float, v=None) -> ChainSpec:
    damp = np.zeros(n)
    damp[-1] = gamma
    return ChainSpec(n, k, v, damp, boundary=("fixed", "free"))


def build_end_damped_chain(n: int, k: float, gamma: float, v=None) -> OscillatorSystem:
    """Chain fixed on the left, free on the right, damped only at the last mass."""
    return end_damped_chain_spec(n, k, gamma, v).to_system()


def end_damped_asymptote(j: int, gamma: float, k: float) -> complex:
    """Large-N limit of ``N w_j / sqrt(k)`` for the V = 0 end-damped chain (``gamma != sqrt(k)``)."""
    r = gamma / math.sqrt(k)
    if r < 1:
        return (j + 0.5) * math.pi - 1j * math.atanh(r)
    if r > 1:
        return j * math.pi - 1j * math.atanh(1 / r)
    raise ValueError("the asymptotic form diverges at gamma = sqrt(k)")


def open_string_spec(n: int, length_a: float, v=None) -> ChainSpec:
    delta = length_a / n
    return ChainSpec(n, delta**-2, v, np.zeros(n), delta=delta, boundary=("fixed", "outgoing"))


def build_open_string(n: int, length_a: float, v=None) -> OscillatorSystem:
    """String on ``[0, a]`` radiating into a free half-line at ``x = a``.

    With ``Delta = a/n`` the outgoing-wave condition turns the last site into
    an end-damped chain with ``k = Delta^-2`` and ``gamma = Delta^-1``.
    """
    return open_string_spec(n, length_a, v).to_system()


def dsl_spec(v_fn: Callable, gamma_fn: Callable, length_a: float, n: int) -> ChainSpec:
    delta = length_a / (n + 1)
    x = delta * np.arange(1, n + 1)
    v = np.array([float(v_fn(xi)) for xi in x])
    gam = np.array([float(gamma_fn(xi)) for xi in x])
    return ChainSpec(n, delta**-2, v, gam, delta=delta)


def build_dsl(v_fn: Callable, gamma_fn: Callable, length_a: float, n: int) -> OscillatorSystem:
    """Discretized ``[-w^2 - i w Gamma(x) - d_x^2 + V(x)] f = 0`` with ``f(0) = f(a) = 0``."""
    return dsl_spec(v_fn, gamma_fn, length_a, n).to_system()


@dataclass(frozen=True)
class ShootingSolution:
    """One-sided solutions of a tridiagonal chain at frequency ``omega``.

    ``left`` satisfies the left boundary condition, ``right`` the right one.
    Both are stored as mantissas with per-site natural-log scales
    (``left[a] * exp(left_log[a])`` is the actual value) because one of them
    grows exponentially when ``Im omega`` is large.  ``profile`` holds the
    Wronskian evaluated at every bond, all equal up to rounding.
    """

    omega: complex
    left: np.ndarray
    right: np.ndarray
    left_log: np.ndarray
    right_log: np.ndarray
    wronskian: complex
    wronskian_log: float = 0.0
    profile: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    @property
    def left_values(self) -> np.ndarray:
        return self.left * np.exp(self.left_log)

    @property
    def right_values(self) -> np.ndarray:
        return self.right * np.exp(self.right_log)

    @property
    def value(self) -> complex:
        """The Wronskian ``J(omega)`` itself."""
        return complex(self.wronskian * math.exp(self.wronskian_log))

    def green(self) -> np.ndarray:
        """``G(x, y) = f(x) g(y) / J`` for ``x <= y``, symmetric; equals ``M(omega)^-1``."""
        lo = np.minimum.outer(np.arange(len(self.left)), np.arange(len(self.left)))
        hi = np.maximum.outer(np.arange(len(self.left)), np.arange(len(self.left)))
        logs = self.left_log[lo] + self.right_log[hi] - self.wronskian_log
        return self.left[lo] * self.right[hi] * np.exp(logs) / self.wronskian


def _bands(chain):
    if isinstance(chain, ChainSpec):
        return chain.bands()
    k, g = chain.k_matrix, chain.gamma_matrix
    if chain.n > 2 and max(np.abs(np.triu(k, 2)).max(), np.abs(np.triu(g, 2)).max()) > 0:
        raise ValueError("shooting requires a tridiagonal (nearest-neighbour) system")
    return np.diag(k), np.diag(k, 1), np.diag(g), np.diag(g, 1)


def _tridiagonal(chain, omega: complex):
    """Diagonal and off-diagonal of ``M(w) = K - w^2 - i w Gamma``."""
    kd, ko, gd, go = _bands(chain)
    diag = kd - omega**2 - 1j * omega * gd
    off = ko - 1j * omega * go
    if np.any(off == 0):
        raise ValueError("chain is disconnected (zero nearest-neighbour coupling)")
    return diag.astype(complex), off.astype(complex)


def wronskian(chain, omega: complex) -> ShootingSolution:
    """Shoot from both ends of a chain and form the discrete Wronskian.

    ``chain`` is a :class:`ChainSpec` or any tridiagonal ``OscillatorSystem``.
    With ``e_a = M(a, a+1)`` the bond coupling of ``M(w) = K - w^2 - i w Gamma``,
    ``J = -e_a [f(a+1) g(a) - f(a) g(a+1)]`` is the same for every bond and
    vanishes exactly at the eigenvalues.  ``f(1) = g(N) = 1``.
    """
    omega = complex(omega)
    d, e = _tridiagonal(chain, omega)
    n = len(d)

    f = np.zeros(n, dtype=complex)
    lf = np.zeros(n)
    f[0] = 1.0
    prev, cur, scale = 0j, 1.0 + 0j, 0.0
    for a in range(n - 1):
        before = e[a - 1] * prev if a > 0 else 0j
        nxt = -(before + d[a] * cur) / e[a]
        prev, cur = cur, nxt
        if (a + 2) % RESCALE_EVERY == 0:
            s = max(abs(prev), abs(cur))
            if s > 0:
                prev, cur = prev / s, cur / s
                scale += math.log(s)
        f[a + 1], lf[a + 1] = cur, scale

    g = np.zeros(n, dtype=complex)
    lg = np.zeros(n)
    g[-1] = 1.0
    prev, cur, scale = 0j, 1.0 + 0j, 0.0
    for a in range(n - 1, 0, -1):
        after = e[a] * prev if a < n - 1 else 0j
        nxt = -(d[a] * cur + after) / e[a - 1]
        prev, cur = cur, nxt
        if (n - a + 1) % RESCALE_EVERY == 0:
            s = max(abs(prev), abs(cur))
            if s > 0:
                prev, cur = prev / s, cur / s
                scale += math.log(s)
        g[a - 1], lg[a - 1] = cur, scale

    # reference scale: the product at the first site
    ref = lf[0] + lg[0]

    def val(x, lx, y, ly):
        return x * y * np.exp(lx + ly - ref)

    profile = np.empty(n + 1, dtype=complex)
    # left wall: J = f(1) [d_1 g(1) + e_1 g(2)]
    profile[0] = val(f[0], lf[0], d[0] * g[0], lg[0])
    if n > 1:
        profile[0] += val(f[0], lf[0], e[0] * g[1], lg[1])
    for a in range(n - 1):
        profile[a + 1] = -e[a] * (val(f[a + 1], lf[a + 1], g[a], lg[a]) - val(f[a], lf[a], g[a + 1], lg[a + 1]))
    # right wall: J = [e_{N-1} f(N-1) + d_N f(N)] g(N)
    profile[n] = val(d[-1] * f[-1], lf[-1], g[-1], lg[-1])
    if n > 1:
        profile[n] += val(e[-2] * f[-2], lf[-2], g[-1], lg[-1])
    jm = profile[n // 2]
    return ShootingSolution(omega, f, g, lf, lg, complex(jm), float(ref), profile)


def log_derivative(chain, omega: complex) -> complex:
    """``J'(w) / J(w)`` from the shooting Green's function, without differencing.

    ``J = det M / prod(-e_a)``, so ``J'/J = tr(M^-1 M') - sum e_a' / e_a``.
    """
    omega = complex(omega)
    sol = wronskian(chain, omega)
    _, e = _tridiagonal(chain, omega)
    _, _, gd, go = _bands(chain)
    dm_diag = -2 * omega - 1j * gd
    dm_off = -1j * go
    ref = sol.wronskian_log
    gd = sol.left * sol.right * np.exp(sol.left_log + sol.right_log - ref) / sol.wronskian
    g_off = sol.left[:-1] * sol.right[1:] * np.exp(sol.left_log[:-1] + sol.right_log[1:] - ref) / sol.wronskian
    return complex(np.sum(gd * dm_diag) + 2 * np.sum(g_off * dm_off) - np.sum(dm_off / e))


def shooting_roots(chain, guesses: Sequence[complex], tol: float = 1e-13, max_iter: int = 60) -> np.ndarray:
    """Refine eigenvalue guesses by Newton iteration on the Wronskian.

    Iteration stops once the step is below ``tol`` relative, or once it stops
    shrinking (rounding noise in ``J`` has been reached).
    """
    out = []
    for w in guesses:
        w = complex(w)
        last = math.inf
        for it in range(max_iter):
            step = 1.0 / log_derivative(chain, w)
            if not np.isfinite(step):
                break
            w = w - step
            size = abs(step)
            if size <= tol * max(1.0, abs(w)) or (it > 2 and size > 0.5 * last and size < 1e-8 * max(1.0, abs(w))):
                break
            last = size
        else:
            raise DampedModesError(f"shooting did not converge from guess {w}")
        out.append(w)
    return np.array(out)
