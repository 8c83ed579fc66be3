"""Eigenmodes of damped oscillator systems under the bilinear map.

The quadratic eigenproblem ``[-w^2 - i w Gamma + K] f = 0`` is solved through
the real companion matrix ``A = [[0, I], [-K, -Gamma]]`` (``w = i s`` for each
eigenvalue ``s`` of ``A``).  Modes are then normalized to ``(f_j, f_j) = 1``,
conjugate partners are rebuilt as ``f_-j = i f_j^*`` and the basis is ordered
deterministically.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .core import (
    BasisResiduals,
    CriticalSystemError,
    DampedModesError,
    Mode,
    ModeBasis,
    NumericsPolicy,
    OscillatorSystem,
    SumRuleReport,
    companion_matrix,
    evolution_operator,
    metric,
)


class IncompleteBasisError(DampedModesError):
    pass


class PairingError(DampedModesError):
    pass


@dataclass(frozen=True)
class CharacteristicEvaluation:
    omega: complex
    value: complex


def _scale(w):
    return max(1.0, abs(w))


def _bilinear(u, v, g):
    return u @ (g @ v)


def _unit_coords(v, coord_idx):
    c = np.linalg.norm(v[coord_idx])
    if c <= 1e-300:
        c = np.linalg.norm(v)
    return v / c


def _fix_phase(v, coord_idx):
    # largest coordinate component gets its argument in (-pi/2, pi/2]
    c = v[coord_idx]
    mags = np.abs(c)
    if mags.max() == 0:
        c = v
        mags = np.abs(v)
    lead = c[np.flatnonzero(mags >= (1 - 1e-9) * mags.max())[0]]
    if lead.real < 0 or (lead.real == 0 and lead.imag < 0):
        return -v
    return v


def _normalize(v, g, coord_idx):
    p = _bilinear(v, v, g)
    return _fix_phase(v / np.sqrt(p + 0j), coord_idx)


def _clusters(idx, omega, tol):
    """Group indices whose eigenvalues lie within ``tol * max(1, |w|)`` (single linkage)."""
    idx = sorted(idx, key=lambda i: (omega[i].real, omega[i].imag))
    groups = []
    for i in idx:
        for grp in groups:
            if any(abs(omega[i] - omega[j]) <= tol * _scale(omega[j]) for j in grp):
                grp.append(i)
                break
        else:
            groups.append([i])
    return groups


def _bilinear_gram_schmidt(vectors, g, crit):
    """Orthonormalize under the (non-conjugating) bilinear map.

    Used at level crossings, where any basis of the degenerate eigenspace is
    valid.  Pivots on the largest self-product; if all self-products vanish
    while the Gram matrix is regular, a pair is combined first.
    """
    work = [np.array(v, dtype=complex) for v in vectors]
    out = []
    while work:
        for u in out:
            work = [w - _bilinear(u, w, g) * u for w in work]
        selfp = np.array([abs(_bilinear(w, w, g)) for w in work])
        best = int(np.argmax(selfp))
        if selfp[best] < crit:
            if len(work) < 2:
                raise CriticalSystemError("level-crossing block is singular under the bilinear map")
            cross = np.abs([[_bilinear(a, b, g) for b in work] for a in work])
            np.fill_diagonal(cross, 0)
            a, b = np.unravel_index(np.argmax(cross), cross.shape)
            work[a] = work[a] + work[b]
            best = a
        w = work.pop(best)
        out.append(w / np.sqrt(_bilinear(w, w, g) + 0j))
    return out


def solve_modes(generator, g, n, system, policy: NumericsPolicy, coord_idx=None) -> ModeBasis:
    """Eigenbasis of the real generator ``A`` (``d_t phi = A phi``) normalized under metric ``g``.

    Shared by ordinary and constrained (odd-dimensional) systems.  ``n`` is
    the number of leading coordinate components reported as ``Mode.f``;
    ``coord_idx`` selects the components used for unit-norm scaling before
    the criticality test (defaults to the first ``n``).
    """
    generator = np.asarray(generator, dtype=float)
    dim = generator.shape[0]
    if coord_idx is None:
        coord_idx = np.arange(n)
    s, vecs = scipy.linalg.eig(generator)
    omega = 1j * s
    vecs = np.column_stack([_unit_coords(vecs[:, i], coord_idx) for i in range(dim)])

    tol0 = [policy.zero_mode_tol * _scale(w) for w in omega]
    pos = [i for i in range(dim) if omega[i].real > tol0[i]]
    neg = [i for i in range(dim) if omega[i].real < -tol0[i]]
    zero = [i for i in range(dim) if abs(omega[i].real) <= tol0[i]]
    if len(pos) != len(neg):
        raise PairingError(f"{len(pos)} positive-frequency modes but {len(neg)} negative ones")

    normalized = {}
    selfp = {i: complex(_bilinear(vecs[:, i], vecs[:, i], g)) for i in range(dim)}
    critical = set()
    for group in _clusters(pos, omega, policy.cluster_tol) + _clusters(zero, omega, policy.cluster_tol):
        block = vecs[:, group]
        gram = block.T @ g @ block
        if len(group) == 1:
            singular = abs(gram[0, 0]) < policy.crit_tol
        else:
            sv = np.linalg.svd(gram, compute_uv=False)
            singular = sv[-1] < policy.crit_tol * max(1.0, sv[0])
        if singular:
            critical.update(group)
            continue
        spread = max(abs(omega[a] - omega[b]) for a in group for b in group)
        if len(group) > 1 and spread <= policy.pair_tol * _scale(omega[group[0]]):
            ortho = _bilinear_gram_schmidt([block[:, k] for k in range(len(group))], g, policy.crit_tol)
            w0 = np.mean(omega[group])
            for i, v in zip(group, ortho):
                omega[i] = w0
                normalized[i] = _fix_phase(v, coord_idx)
        else:
            for i in group:
                if abs(selfp[i]) < policy.crit_tol:
                    critical.add(i)
                else:
                    normalized[i] = _normalize(vecs[:, i], g, coord_idx)

    if critical and not policy.allow_critical:
        cluster = sorted((omega[i] for i in critical), key=lambda w: (w.real, w.imag))
        raise CriticalSystemError(
            "critical point: (f, f) vanishes for eigenvalues "
            + ", ".join(f"{w.real + 0.0:.6g}{w.imag + 0.0:+.6g}i" for w in cluster),
            cluster,
        )

    # (omega, vector, self_product, critical, pair_id)
    entries = []
    free_neg = list(neg)
    for pid, i in enumerate(sorted(pos, key=lambda i: (omega[i].real, omega[i].imag))):
        target = -np.conj(omega[i])
        j = min(free_neg, key=lambda k: abs(omega[k] - target))
        if abs(omega[j] - target) > policy.pair_tol * _scale(omega[i]):
            raise PairingError(f"no conjugate partner for omega = {omega[i]:.6g}")
        free_neg.remove(j)
        if i in critical:
            entries.append((omega[i], vecs[:, i], selfp[i], True, pid))
            entries.append((target, 1j * np.conj(vecs[:, i]), selfp[j], True, pid))
            continue
        v = normalized[i]
        for sigma in (1.0, -1.0):
            partner = sigma * 1j * np.conj(v)
            if abs(_bilinear(partner, partner, g) - 1) <= 1e-6:
                break
        else:
            raise PairingError(f"partner of omega = {omega[i]:.6g} cannot be normalized")
        entries.append((omega[i], v, selfp[i], False, pid))
        entries.append((target, partner, selfp[j], False, pid))
    for pid, i in enumerate(zero, start=len(pos)):
        w = complex(0.0, omega[i].imag)
        if i in critical:
            entries.append((w, vecs[:, i], selfp[i], True, pid))
        else:
            entries.append((w, normalized[i], selfp[i], False, pid))

    entries = _ordered(entries, policy.pair_tol)
    modes = tuple(
        Mode(omega=complex(w), vector=np.asarray(v, dtype=complex), n=n, self_product=complex(p), critical=c)
        for w, v, p, c, _ in entries
    )
    basis = ModeBasis(modes, system, g)
    return _with_residuals(basis, generator)


def _ordered(entries, tol):
    """Ascending |Im w|, then ascending |Re w|, partners adjacent (negative first)."""

    def cmp(a, b):
        ia, ib = abs(a[0].imag), abs(b[0].imag)
        if abs(ia - ib) > tol * max(1.0, ia, ib):
            return -1 if ia < ib else 1
        ra, rb = abs(a[0].real), abs(b[0].real)
        if a[4] != b[4] and abs(ra - rb) > tol * max(1.0, ra, rb):
            return -1 if ra < rb else 1
        if a[4] != b[4]:
            return -1 if a[4] < b[4] else 1
        return -1 if a[0].real < b[0].real else (1 if a[0].real > b[0].real else 0)

    # exact pre-sort gives the tolerant comparison a deterministic starting order
    entries = sorted(entries, key=lambda e: (abs(e[0].imag), abs(e[0].real), e[4], e[0].real))
    return sorted(entries, key=functools.cmp_to_key(cmp))


def _with_residuals(basis: ModeBasis, generator) -> ModeBasis:
    good = [m for m in basis.modes if not m.critical]
    ortho = 0.0
    if good:
        v = np.column_stack([m.vector for m in good])
        gram = v.T @ basis.metric @ v
        ortho = float(np.max(np.abs(gram - np.eye(len(good)))))
    omegas = basis.omegas
    pairing = 0.0
    for w in omegas:
        pairing = max(pairing, float(np.min(np.abs(omegas + np.conj(w)))))
    anorm = np.linalg.norm(generator, 2)
    eig_res = 0.0
    for m in basis.modes:
        r = generator @ m.vector - (-1j * m.omega) * m.vector
        eig_res = max(eig_res, float(np.linalg.norm(r) / (anorm * np.linalg.norm(m.vector))))
    sr = None
    if isinstance(basis.system, OscillatorSystem) and not basis.critical:
        sr = sum_rules(basis)
    return ModeBasis(basis.modes, basis.system, basis.metric, BasisResiduals(ortho, pairing, eig_res, sr))


def eigenmodes(sys: OscillatorSystem, policy: NumericsPolicy | None = None) -> ModeBasis:
    """All 2N modes of ``sys``, normalized to ``(f_j, f_k) = delta_jk``.

    Raises :class:`CriticalSystemError` if a mode's self-product vanishes,
    unless ``policy.allow_critical`` is set, in which case such modes are
    returned flagged and unnormalized.
    """
    policy = policy or sys.policy
    g, _ = metric(sys)
    return solve_modes(companion_matrix(sys), g, sys.n, sys, policy)


def characteristic(sys: OscillatorSystem, omega: complex) -> complex:
    """``J(omega) = det(H - omega)``; a degree-2N polynomial vanishing at the eigenvalues."""
    h = evolution_operator(sys)
    return complex(np.linalg.det(h - omega * np.eye(sys.dim)))


def sum_rules(basis: ModeBasis) -> SumRuleReport:
    """Max-entry residuals of the four completeness sum rules.

    With ``F`` the matrix of coordinate parts and ``W = diag(omega)``:
    ``F F^T = 0``, ``F W F^T = I``, ``F F^T Gamma = 0`` and
    ``F W^2 F^T + i F W F^T Gamma = 0``.
    """
    sys = basis.system
    if len(basis) != sys.dim:
        raise IncompleteBasisError(f"basis has {len(basis)} modes, expected {sys.dim}")
    basis.require_noncritical()
    f = basis.coords
    w = basis.omegas
    gam = sys.gamma_matrix
    s0 = f @ f.T
    s1 = (f * w) @ f.T
    s2 = (f * w**2) @ f.T
    r1 = np.max(np.abs(s0))
    r2 = np.max(np.abs(s1 - np.eye(sys.n)))
    r3 = np.max(np.abs(s0 @ gam))
    r4 = np.max(np.abs(s2 + 1j * s1 @ gam))
    return SumRuleReport(float(r1), float(r2), float(r3), float(r4))


def orthonormality_residual(basis: ModeBasis) -> float:
    """``max |(f_j, f_k) - delta_jk|`` over non-critical modes."""
    good = [m.vector for m in basis.modes if not m.critical]
    if not good:
        return 0.0
    v = np.column_stack(good)
    return float(np.max(np.abs(v.T @ basis.metric @ v - np.eye(len(good)))))


def self_products(sys: OscillatorSystem) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and ``(f_j, f_j)`` with each ``f_j`` scaled to unit 2-norm."""
    g, _ = metric(sys)
    s, vecs = scipy.linalg.eig(companion_matrix(sys))
    n = sys.n
    out = np.empty(len(s), dtype=complex)
    for i in range(len(s)):
        v = _unit_coords(vecs[:, i], np.arange(n))
        out[i] = _bilinear(v, v, g)
    return 1j * s, out


def _zero_mode_count(sys, policy):
    w = 1j * scipy.linalg.eigvals(companion_matrix(sys))
    return int(sum(abs(x.real) <= policy.zero_mode_tol * _scale(x) for x in w))


def _min_self_product(sys):
    return float(np.min(np.abs(self_products(sys)[1])))


def criticality_scan(
    builder: Callable[[float], OscillatorSystem],
    param_range: Sequence,
    policy: NumericsPolicy | None = None,
) -> list[float]:
    """Parameter values in ``(lo, hi)`` at which the family becomes critical.

    ``param_range`` is ``(lo, hi, steps)``.  On the grid, a change in the
    number of zero modes (a conjugate pair merging onto the imaginary axis)
    brackets a critical point, which is bisected to ``policy.param_tol``.
    Interior local minima of ``min_j |(f_j, f_j)|`` away from such brackets
    are refined by golden-section search and kept when the refined minimum
    falls below ``10 * sqrt(param_tol)``.
    """
    policy = policy or NumericsPolicy()
    lo, hi, steps = param_range
    steps = int(steps)
    grid = np.linspace(lo, hi, steps + 1)
    counts = [_zero_mode_count(builder(p), policy) for p in grid]
    mins = [_min_self_product(builder(p)) for p in grid]

    found = []
    bracketed = set()
    for i in range(steps):
        if counts[i] == counts[i + 1]:
            continue
        a, b = grid[i], grid[i + 1]
        ca = counts[i]
        while b - a > policy.param_tol:
            m = 0.5 * (a + b)
            if _zero_mode_count(builder(m), policy) == ca:
                a = m
            else:
                b = m
        found.append(0.5 * (a + b))
        bracketed.update((i, i + 1))

    invphi = (np.sqrt(5) - 1) / 2
    for i in range(1, steps):
        if i in bracketed or not (mins[i] < mins[i - 1] and mins[i] <= mins[i + 1]):
            continue
        a, b = grid[i - 1], grid[i + 1]
        c, d = b - invphi * (b - a), a + invphi * (b - a)
        fc, fd = _min_self_product(builder(c)), _min_self_product(builder(d))
        while b - a > policy.param_tol:
            if fc < fd:
                b, d, fd = d, c, fc
                c = b - invphi * (b - a)
                fc = _min_self_product(builder(c))
            else:
                a, c, fc = c, d, fd
                d = a + invphi * (b - a)
                fd = _min_self_product(builder(d))
        p = 0.5 * (a + b)
        if _min_self_product(builder(p)) < 10 * np.sqrt(policy.param_tol):
            found.append(p)
    return sorted(float(p) for p in found)
