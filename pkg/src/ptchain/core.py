"""Chain model, coupling matrix and normal-mode frequencies.

The chain Hamiltonian is

    H = 1/2 sum_j (p_j^2 + omega_j^2 x_j^2) + i*gamma sum_j x_j x_{j+1}

so the potential is 1/2 x^T M x with M tridiagonal and complex symmetric:
diagonal omega_j^2, off-diagonals i*gamma.  The squared normal-mode
frequencies nu_j^2 are the eigenvalues of M, i.e. the roots of the
characteristic polynomial p(lam) = det(lam*I - M), which has real
coefficients because (i*gamma)^2 = -gamma^2.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence, Union

import numpy as np

from .errors import DegenerateModes, InvalidSpec, RootSolveFailure

DEFAULT_BRANCH_TOL = 1e-8


@dataclass(frozen=True)
class ChainSpec:
    """A chain of ``n`` oscillators with squared natural frequencies
    ``omega_sq`` and nearest-neighbour coupling ``i*gamma``."""

    n: int
    omega_sq: tuple[float, ...]
    gamma: float

    def __post_init__(self):
        if isinstance(self.n, bool) or int(self.n) != self.n:
            raise InvalidSpec(f"n must be an integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        if self.n < 2:
            raise InvalidSpec(f"n must be >= 2, got {self.n}")
        try:
            omega_sq = tuple(float(w) for w in self.omega_sq)
        except (TypeError, ValueError) as exc:
            raise InvalidSpec(f"omega_sq must be a list of reals: {exc}") from None
        if len(omega_sq) != self.n:
            raise InvalidSpec(
                f"omega_sq has {len(omega_sq)} entries, expected n={self.n}")
        for j, w in enumerate(omega_sq):
            if not math.isfinite(w) or w <= 0.0:
                raise InvalidSpec(f"omega_sq[{j}] must be finite and > 0, got {w}")
        object.__setattr__(self, "omega_sq", omega_sq)
        gamma = float(self.gamma)
        if not math.isfinite(gamma):
            raise InvalidSpec(f"gamma must be finite, got {gamma}")
        object.__setattr__(self, "gamma", gamma)

    @classmethod
    def uniform_chain(cls, n: int, gamma: float) -> "ChainSpec":
        return cls(n, (1.0,) * int(n), gamma)

    def uniform(self) -> bool:
        """True when every natural frequency equals one."""
        return all(w == 1.0 for w in self.omega_sq)


@dataclass(frozen=True)
class CouplingMatrix:
    entries: np.ndarray
    structure: str = "tridiagonal"

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


class ConjugatePair(NamedTuple):
    """Modes ``a`` and ``b`` with nu[b] == conj(nu[a]); ``a`` has Im > 0."""

    a: int
    b: int


class RealSingleton(NamedTuple):
    index: int


PairDescriptor = Union[ConjugatePair, RealSingleton]


@dataclass(frozen=True)
class ModeSet:
    """Decoupled normal-mode frequencies.

    ``nu_sq`` are the eigenvalues of the coupling matrix, ``nu`` their
    principal square roots.  ``pairing`` covers every index exactly once.
    """

    nu_sq: np.ndarray
    nu: np.ndarray
    pairing: tuple[PairDescriptor, ...]
    branch_tol: float = DEFAULT_BRANCH_TOL

    def __len__(self):
        return len(self.nu)

    @property
    def pairs(self) -> list[ConjugatePair]:
        return [p for p in self.pairing if isinstance(p, ConjugatePair)]

    @property
    def singletons(self) -> list[int]:
        return [p.index for p in self.pairing if isinstance(p, RealSingleton)]

    def all_real(self) -> bool:
        return not self.pairs


def principal_sqrt(z: complex) -> complex:
    """Square root with Re(w) > 0, or Re(w) == 0 and Im(w) >= 0."""
    w = cmath.sqrt(complex(z))
    if w.real == 0.0 and w.imag < 0.0:
        w = -w
    return w


def principal_sqrt_array(z) -> np.ndarray:
    w = np.sqrt(np.asarray(z, dtype=complex))
    flip = (w.real == 0.0) & (w.imag < 0.0)
    return np.where(flip, -w, w)


def _coupling_entries(omega_sq: Sequence[float], gamma: float) -> np.ndarray:
    n = len(omega_sq)
    m = np.zeros((n, n), dtype=complex)
    m[np.arange(n), np.arange(n)] = omega_sq
    off = np.arange(n - 1)
    m[off, off + 1] = 1j * gamma
    m[off + 1, off] = 1j * gamma
    return m


def build_coupling_matrix(spec: ChainSpec) -> CouplingMatrix:
    """Tridiagonal complex-symmetric matrix with diagonal omega_j^2 and
    off-diagonal i*gamma."""
    entries = _coupling_entries(spec.omega_sq, spec.gamma)
    entries.flags.writeable = False
    return CouplingMatrix(entries)


def _charpoly_coeffs(omega_sq: Sequence[float], gamma: float) -> np.ndarray:
    g2 = float(gamma) ** 2
    p_prev = np.zeros(1)
    p = np.ones(1)
    for a in omega_sq:
        nxt = np.polymul([1.0, -float(a)], p)
        nxt[2:] += g2 * p_prev
        p_prev, p = p, nxt
    return p


def characteristic_polynomial(spec: ChainSpec) -> np.ndarray:
    """Coefficients of det(lam*I - M), highest power first (monic, real).

    Built from the three-term recurrence
    p_k = (lam - omega_k^2) p_{k-1} + gamma^2 p_{k-2},  p_0 = 1, p_{-1} = 0.
    """
    return _charpoly_coeffs(spec.omega_sq, spec.gamma)


def characteristic_values(omega_sq: Sequence[float], gamma: float, lam):
    """Evaluate p, p' and p'' at ``lam`` by running the recurrence directly.

    This avoids the expanded coefficients, which lose accuracy quickly as
    the degree grows.
    """
    lam = np.asarray(lam)
    g2 = float(gamma) ** 2
    zero = np.zeros_like(lam, dtype=np.result_type(lam, float))
    p_prev, p = zero, zero + 1.0
    d_prev, d = zero, zero
    s_prev, s = zero, zero
    for a in omega_sq:
        u = lam - a
        p_new = u * p + g2 * p_prev
        d_new = p + u * d + g2 * d_prev
        s_new = 2.0 * d + u * s + g2 * s_prev
        p_prev, p = p, p_new
        d_prev, d = d, d_new
        s_prev, s = s, s_new
    return p, d, s


def uniform_mode_frequencies(n: int, gamma: float,
                             branch_tol: float = DEFAULT_BRANCH_TOL) -> ModeSet:
    """Closed-form modes of the uniform chain, nu_j^2 = 1 + 2i*gamma*cos(j*pi/(n+1)).

    Index order is j = 1..n; mode j pairs with mode n+1-j.
    """
    n = int(n)
    if n < 2:
        raise InvalidSpec(f"n must be >= 2, got {n}")
    half = n // 2
    c = np.cos(np.arange(1, half + 1) * np.pi / (n + 1))
    cos_all = np.zeros(n)
    cos_all[:half] = c
    cos_all[n - half:] = -c[::-1]
    nu_sq = 1.0 + 2j * gamma * cos_all
    nu = principal_sqrt_array(nu_sq)
    nu[n - half:] = np.conj(nu[:half][::-1])
    pairing: list[PairDescriptor] = []
    for j in range(half):
        k = n - 1 - j
        if gamma == 0.0:
            pairing.extend([RealSingleton(j), RealSingleton(k)])
        elif nu[j].imag > 0:
            pairing.append(ConjugatePair(j, k))
        else:
            pairing.append(ConjugatePair(k, j))
    if n % 2:
        pairing.append(RealSingleton(half))
    pairing.sort(key=lambda d: min(d))
    return ModeSet(nu_sq, nu, tuple(pairing), branch_tol)


def _pair_roots(lam: np.ndarray, branch_tol: float) -> ModeSet:
    """Greedy conjugate matching, exact symmetrisation and canonical ordering."""
    lam = np.asarray(lam, dtype=complex).copy()
    nu = principal_sqrt_array(lam)
    n = len(lam)
    scale = branch_tol * (1.0 + np.abs(nu))
    unmatched = set(range(n))
    raw_pairs = []
    for a in sorted(range(n), key=lambda k: (-nu[k].imag, k)):
        if a not in unmatched or nu[a].imag <= scale[a]:
            continue
        unmatched.discard(a)
        candidates = np.array(sorted(b for b in unmatched if nu[b].imag < 0), dtype=int)
        if not len(candidates):
            raise RootSolveFailure(f"no conjugate partner for nu_sq={lam[a]}")
        b = int(candidates[np.argmin(np.abs(nu[a] - np.conj(nu[candidates])))])
        if abs(nu[a] - np.conj(nu[b])) > scale[a]:
            raise RootSolveFailure(
                f"conjugate structure lost: {lam[a]} vs {lam[b]}")
        unmatched.discard(b)
        raw_pairs.append((a, b))
    for k in unmatched:
        if abs(nu[k].imag) > scale[k]:
            raise RootSolveFailure(f"unpaired complex root nu_sq={lam[k]}")

    for a, b in raw_pairs:
        mean = 0.5 * (lam[a] + np.conj(lam[b]))
        lam[a], lam[b] = mean, np.conj(mean)
    for k in unmatched:
        lam[k] = lam[k].real
    nu = principal_sqrt_array(lam)
    for a, b in raw_pairs:
        nu[b] = np.conj(nu[a])

    order = np.lexsort((-nu.imag, -nu.real))
    rank = np.empty(n, dtype=int)
    rank[order] = np.arange(n)
    pairing: list[PairDescriptor] = [ConjugatePair(rank[a], rank[b]) for a, b in raw_pairs]
    pairing += [RealSingleton(rank[k]) for k in unmatched]
    pairing = [type(d)(*(int(i) for i in d)) for d in pairing]
    pairing.sort(key=lambda d: min(d))
    return ModeSet(lam[order], nu[order], tuple(pairing), branch_tol)


def _companion_roots(coeffs: np.ndarray) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=float)
    n = len(coeffs) - 1
    comp = np.zeros((n, n))
    comp[0, :] = -coeffs[1:] / coeffs[0]
    comp[np.arange(1, n), np.arange(n - 1)] = 1.0
    return np.linalg.eigvals(comp)


def general_mode_frequencies(spec: ChainSpec, branch_tol: float = DEFAULT_BRANCH_TOL,
                             method: str = "matrix") -> ModeSet:
    """Normal modes of an arbitrary chain from the roots of the characteristic
    polynomial.

    ``method="matrix"`` (default) runs Hessenberg QR on the tridiagonal
    matrix itself, whose characteristic polynomial is exactly p(lam);
    ``method="companion"`` uses the companion matrix of the expanded
    coefficients and is only reliable for small n.

    Modes are ordered by Re(nu) descending, then Im(nu) descending.
    """
    try:
        if method == "matrix":
            lam = np.linalg.eigvals(_coupling_entries(spec.omega_sq, spec.gamma))
        elif method == "companion":
            lam = _companion_roots(characteristic_polynomial(spec))
        else:
            raise ValueError(f"unknown root method {method!r}")
    except np.linalg.LinAlgError as exc:
        raise RootSolveFailure(str(exc)) from exc
    if not np.all(np.isfinite(lam)):
        raise RootSolveFailure("non-finite roots")
    return _pair_roots(lam, branch_tol)


def normal_modes(spec: ChainSpec, branch_tol: float = DEFAULT_BRANCH_TOL) -> ModeSet:
    return general_mode_frequencies(spec, branch_tol)


def _sine_transform(n: int) -> np.ndarray:
    jk = np.outer(np.arange(1, n + 1), np.arange(1, n + 1))
    return np.sqrt(2.0 / (n + 1)) * np.sin(jk * np.pi / (n + 1))


def _match_columns(targets: np.ndarray, values: np.ndarray) -> list[int]:
    """For each target pick a distinct index of ``values`` by nearest distance."""
    dist = np.abs(targets[:, None] - values[None, :])
    chosen = [-1] * len(targets)
    used = set()
    for flat in np.argsort(dist, axis=None, kind="stable"):
        i, j = divmod(int(flat), len(values))
        if chosen[i] < 0 and j not in used:
            chosen[i] = j
            used.add(j)
    return chosen


def _fix_sign(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v) > 1e-8 * np.max(np.abs(v))))
    lead = v[k]
    if lead.real < -1e-12 * abs(lead) or (abs(lead.real) <= 1e-12 * abs(lead) and lead.imag < 0):
        return -v
    return v


def decoupling_transform(spec: ChainSpec, modes: ModeSet | None = None) -> np.ndarray:
    """Complex-orthogonal V (V^T V = I) with M = V diag(nu^2) V^T.

    Column k belongs to mode k of ``modes``.  Uniform chains use the real
    sine transform.  Raises DegenerateModes when two nu^2 coincide, since a
    complex-orthogonal diagonalisation need not exist there.
    """
    if modes is None:
        modes = general_mode_frequencies(spec)
    lam = modes.nu_sq
    n = spec.n
    sep = np.abs(lam[:, None] - lam[None, :])
    np.fill_diagonal(sep, np.inf)
    tol = modes.branch_tol * (1.0 + np.abs(lam))
    if np.any(sep <= tol[:, None]):
        i, j = np.argwhere(sep <= tol[:, None])[0]
        raise DegenerateModes(f"modes {i} and {j} coincide: nu^2={lam[i]}")
    m = _coupling_entries(spec.omega_sq, spec.gamma)

    if spec.uniform():
        s = _sine_transform(n)
        closed = 1.0 + 2j * spec.gamma * np.cos(np.arange(1, n + 1) * np.pi / (n + 1))
        v = s[:, _match_columns(lam, closed)].astype(complex)
    else:
        w, vecs = np.linalg.eig(m)
        v = vecs[:, _match_columns(lam, w)]
        for k in range(n):
            col = v[:, k]
            norm = col @ col
            if abs(norm) < 1e-10 * np.vdot(col, col).real:
                raise DegenerateModes(f"mode {k} is quasi-null (v^T v ~ 0)")
            v[:, k] = _fix_sign(col / principal_sqrt(norm))

    if (np.max(np.abs(v.T @ v - np.eye(n))) > 1e-10
            or np.max(np.abs(v.T @ m @ v - np.diag(lam))) > 1e-9):
        raise DegenerateModes("mode matrix too ill-conditioned near an exceptional point")
    return v
