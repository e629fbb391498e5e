"""Quantum spectrum, ground-state gaussian and eigenfunctions.

Every level is E = sum_j nu_j (n_j + 1/2).  A level is real exactly when the
occupations agree inside every conjugate mode pair.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .core import (
    ChainSpec,
    ModeSet,
    _coupling_entries,
    decoupling_transform,
    normal_modes,
    principal_sqrt_array,
    uniform_mode_frequencies,
)
from .errors import CombinatorialOverflow, DegenerateModes, DimensionMismatch

REALITY_TOL = 1e-10
GROUPING_TOL = 1e-9
LEVEL_CAP = 10**6
MAX_HERMITE_ORDER = 20

OccupationVector = tuple[int, ...]


@dataclass(frozen=True)
class EnergyLevel:
    occ: OccupationVector
    energy: complex
    is_real: bool
    degeneracy_key: float


@dataclass(frozen=True)
class GaussianGroundState:
    """psi_0(x) = exp(-1/2 x^T A x) with A the principal square root of M."""

    a_matrix: np.ndarray
    energy: complex


@dataclass(frozen=True)
class EigenfunctionSample:
    spec: ChainSpec
    occ: OccupationVector
    points: np.ndarray
    values: np.ndarray


class PTResidual(NamedTuple):
    residual: float
    sign: int


def _check_occ(occ: Sequence[int], n: int) -> OccupationVector:
    occ = tuple(int(k) for k in occ)
    if len(occ) != n:
        raise DimensionMismatch(f"occupation has {len(occ)} entries, expected {n}")
    if any(k < 0 for k in occ):
        raise DimensionMismatch(f"occupations must be nonnegative: {occ}")
    return occ


def occupations_balanced(modes: ModeSet, occ: Sequence[int]) -> bool:
    """True when occupations agree within every conjugate pair."""
    return all(occ[p.a] == occ[p.b] for p in modes.pairs)


def _group_key(re: float) -> float:
    return round(re / GROUPING_TOL) * GROUPING_TOL


def ground_state_energy(spec: ChainSpec, modes: ModeSet | None = None) -> complex:
    if modes is None:
        # uniform chains have closed-form modes; skip the eigensolve
        modes = (uniform_mode_frequencies(spec.n, spec.gamma) if spec.uniform()
                 else normal_modes(spec))
    return complex(0.5 * np.sum(modes.nu))


def level_energy(spec: ChainSpec, occ: Sequence[int],
                 modes: ModeSet | None = None) -> EnergyLevel:
    modes = normal_modes(spec) if modes is None else modes
    occ = _check_occ(occ, spec.n)
    energy = complex(np.dot(np.asarray(occ) + 0.5, modes.nu))
    return EnergyLevel(occ, energy, occupations_balanced(modes, occ),
                       _group_key(energy.real))


def _compositions(n: int, max_quanta: int) -> np.ndarray:
    """All length-n nonnegative integer vectors with sum <= max_quanta."""
    count = math.comb(max_quanta + n, n)
    bars = np.fromiter(
        itertools.chain.from_iterable(itertools.combinations(range(max_quanta + n), n)),
        dtype=np.int64, count=count * n).reshape(count, n)
    occ = np.empty_like(bars)
    occ[:, 0] = bars[:, 0]
    occ[:, 1:] = np.diff(bars, axis=1) - 1
    return occ


def enumerate_levels(spec: ChainSpec, max_quanta: int, cap: int = LEVEL_CAP,
                     modes: ModeSet | None = None) -> list[EnergyLevel]:
    """Every level with total quanta <= max_quanta, sorted by (Re E, Im E)."""
    if max_quanta < 0:
        raise ValueError("max_quanta must be >= 0")
    count = math.comb(max_quanta + spec.n, spec.n)
    if count > cap:
        raise CombinatorialOverflow(f"{count} levels exceed the cap of {cap}")
    modes = normal_modes(spec) if modes is None else modes
    occ = _compositions(spec.n, max_quanta)
    energies = (occ + 0.5) @ modes.nu
    balanced = np.ones(count, dtype=bool)
    for p in modes.pairs:
        balanced &= occ[:, p.a] == occ[:, p.b]
    keys = np.round(energies.real / GROUPING_TOL) * GROUPING_TOL
    order = np.lexsort(tuple(occ[:, ::-1].T) + (energies.imag, keys))
    return [EnergyLevel(tuple(int(k) for k in occ[i]), complex(energies[i]),
                        bool(balanced[i]), float(keys[i]))
            for i in order]


def _denman_beavers(m: np.ndarray, tol: float = 1e-15, max_iter: int = 100) -> np.ndarray:
    y = m.astype(complex)
    z = np.eye(len(m), dtype=complex)
    for _ in range(max_iter):
        y_inv = np.linalg.inv(y)
        y_next = 0.5 * (y + np.linalg.inv(z))
        z = 0.5 * (z + y_inv)
        if np.max(np.abs(y_next - y)) <= tol * np.max(np.abs(y_next)):
            return y_next
        y = y_next
    raise DegenerateModes("matrix square-root iteration did not converge")


def principal_matrix_sqrt(m: np.ndarray, spec: ChainSpec | None = None,
                          modes: ModeSet | None = None) -> np.ndarray:
    """Principal square root of the coupling matrix.

    Uses V diag(nu) V^T when the complex-orthogonal mode matrix is well
    conditioned, otherwise Denman-Beavers iteration.
    """
    a = None
    if spec is not None:
        modes = normal_modes(spec) if modes is None else modes
        try:
            v = decoupling_transform(spec, modes)
            a = (v * modes.nu) @ v.T
        except DegenerateModes:
            a = None
        if a is not None and np.max(np.abs(a @ a - m)) > 1e-10 * max(1.0, np.max(np.abs(m))):
            a = None
    if a is None:
        a = _denman_beavers(m)
    return 0.5 * (a + a.T)


def ground_state_gaussian(spec: ChainSpec, modes: ModeSet | None = None) -> GaussianGroundState:
    m = _coupling_entries(spec.omega_sq, spec.gamma)
    a = principal_matrix_sqrt(m, spec, modes)
    return GaussianGroundState(a, complex(0.5 * np.trace(a)))


def hermite(k: int, z) -> np.ndarray:
    """Physicists' Hermite polynomial H_k at complex ``z`` by forward recurrence."""
    if k < 0 or k > MAX_HERMITE_ORDER:
        raise ValueError(f"Hermite order must be in [0, {MAX_HERMITE_ORDER}], got {k}")
    z = np.asarray(z, dtype=complex)
    h_prev, h = np.zeros_like(z), np.ones_like(z)
    for j in range(k):
        h_prev, h = h, 2.0 * z * h - 2.0 * j * h_prev
    return h


def _evaluate(points: np.ndarray, occ: OccupationVector, nu: np.ndarray,
              v: np.ndarray) -> np.ndarray:
    q = points @ v
    root = principal_sqrt_array(nu)
    values = np.exp(-0.5 * (q * q) @ nu)
    for k, nk in enumerate(occ):
        if nk:
            values = values * hermite(nk, root[k] * q[:, k])
    return values


def eigenfunction_evaluate(spec: ChainSpec, occ: Sequence[int], points,
                           modes: ModeSet | None = None) -> EigenfunctionSample:
    """Unnormalised eigenfunction prod_j H_{n_j}(sqrt(nu_j) q_j) exp(-nu_j q_j^2 / 2)
    with mode coordinates q = V^T x."""
    modes = normal_modes(spec) if modes is None else modes
    occ = _check_occ(occ, spec.n)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != spec.n:
        raise DimensionMismatch(f"points have dimension {points.shape[1]}, expected {spec.n}")
    v = decoupling_transform(spec, modes)
    return EigenfunctionSample(spec, occ, points, _evaluate(points, occ, modes.nu, v))


def odd_sites(n: int) -> list[int]:
    """Zero-based indices of sites 1, 3, 5, ... (one-based numbering)."""
    return list(range(0, n, 2))


def even_sites(n: int) -> list[int]:
    return list(range(1, n, 2))


def partial_pt_residual(sample: EigenfunctionSample, flip_set: Sequence[int]) -> PTResidual:
    """Deviation of psi from an eigenfunction of (P_flip T).

    Returns max_x |conj(psi(flip x)) - s psi(x)| / max|psi|, minimised over
    s in {+1, -1}, together with the minimising s.  ``flip_set`` holds
    zero-based coordinate indices.
    """
    flipped = sample.points.copy()
    flipped[:, list(flip_set)] *= -1.0
    other = eigenfunction_evaluate(sample.spec, sample.occ, flipped).values
    scale = np.max(np.abs(sample.values))
    best = None
    for s in (1, -1):
        r = float(np.max(np.abs(np.conj(other) - s * sample.values)) / scale)
        if best is None or r < best.residual:
            best = PTResidual(r, s)
    return best
