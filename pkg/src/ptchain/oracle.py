"""Brute-force check of the analytic spectrum by truncated Fock-space diagonalisation.

Each site uses the eigenbasis of 1/2 p^2 + 1/2 x^2, truncated at ``cutoff``
quanta.  Single-site operators (x, x^2, p^2) use exact ladder-algebra matrix
elements, so truncation only enters through the finite basis, never through
products of truncated matrices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .core import ChainSpec
from .errors import DimensionCap, EigensolveFailure, MatchingAmbiguous
from .spectrum import enumerate_levels

DIMENSION_CAP = 20_000


@dataclass(frozen=True)
class FockBasisSpec:
    cutoff: int
    n_sites: int
    cap: int = DIMENSION_CAP

    @property
    def dimension(self) -> int:
        return (self.cutoff + 1) ** self.n_sites


@dataclass(frozen=True)
class SpectralComparison:
    analytic: np.ndarray
    numeric: np.ndarray
    distances: np.ndarray
    cutoff: int
    occupations: tuple[tuple[int, ...], ...] = ()

    @property
    def max_distance(self) -> float:
        return float(np.max(self.distances)) if len(self.distances) else 0.0

    def to_dict(self) -> dict:
        pair = lambda z: [float(z.real), float(z.imag)]  # noqa: E731
        return {
            "cutoff": self.cutoff,
            "analytic": [pair(z) for z in self.analytic],
            "numeric": [pair(z) for z in self.numeric],
            "distances": [float(d) for d in self.distances],
            "occupations": [list(o) for o in self.occupations],
            "max_distance": self.max_distance,
        }

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")


def position_matrix(cutoff: int) -> np.ndarray:
    """<m|x|n> = sqrt(n/2) delta_{m,n-1} + sqrt((n+1)/2) delta_{m,n+1}."""
    off = np.sqrt(np.arange(1, cutoff + 1) / 2.0)
    return np.diag(off, 1) + np.diag(off, -1)


def _second_moments(cutoff: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact <m|x^2|n> and <m|p^2|n> in the truncated basis."""
    n = np.arange(cutoff + 1)
    diag = n + 0.5
    off = 0.5 * np.sqrt((n[:-2] + 1.0) * (n[:-2] + 2.0))
    x2 = np.diag(diag) + np.diag(off, 2) + np.diag(off, -2)
    p2 = np.diag(diag) - np.diag(off, 2) - np.diag(off, -2)
    return x2, p2


def _embed(op: np.ndarray, site: int, n_sites: int, dim: int) -> sparse.csr_matrix:
    out = sparse.identity(1, format="csr")
    for k in range(n_sites):
        out = sparse.kron(out, op if k == site else sparse.identity(dim), format="csr")
    return out


def build_fock_hamiltonian(spec: ChainSpec, basis: FockBasisSpec) -> np.ndarray:
    """Dense H_N in the product Fock basis (complex symmetric)."""
    if basis.n_sites != spec.n:
        raise ValueError(f"basis has {basis.n_sites} sites, spec has {spec.n}")
    if basis.cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    if basis.dimension > basis.cap:
        raise DimensionCap(f"Fock dimension {basis.dimension} exceeds cap {basis.cap}")
    d = basis.cutoff + 1
    x = position_matrix(basis.cutoff)
    x2, p2 = _second_moments(basis.cutoff)
    number = np.diag(np.arange(d) + 0.5)
    # assembled sparse to keep memory low, returned dense for the eigensolver
    h = sparse.csr_matrix((basis.dimension, basis.dimension), dtype=complex)
    for j, w2 in enumerate(spec.omega_sq):
        site = number if w2 == 1.0 else 0.5 * p2 + 0.5 * w2 * x2
        h = h + _embed(site, j, spec.n, d)
    if spec.gamma != 0.0:
        xs = [_embed(x, j, spec.n, d) for j in range(spec.n)]
        for j in range(spec.n - 1):
            h = h + 1j * spec.gamma * (xs[j] @ xs[j + 1])
    return h.toarray()


def fock_trace(spec: ChainSpec, basis: FockBasisSpec) -> float:
    """Exact trace: coupling terms are off-diagonal, each site contributes
    (1 + omega^2)/2 (n + 1/2) per basis state of the other sites."""
    d = basis.cutoff + 1
    per_site = np.sum(np.arange(d) + 0.5)
    return float(sum(0.5 * (1.0 + w2) * per_site * d ** (spec.n - 1) for w2 in spec.omega_sq))


def fock_eigenvalues(spec: ChainSpec, basis: FockBasisSpec) -> np.ndarray:
    """All eigenvalues, via LAPACK's Hessenberg reduction + shifted QR."""
    h = build_fock_hamiltonian(spec, basis)
    try:
        ev = np.linalg.eigvals(h)
    except np.linalg.LinAlgError as exc:
        raise EigensolveFailure(str(exc)) from exc
    if not np.all(np.isfinite(ev)):
        raise EigensolveFailure("non-finite eigenvalues")
    return ev


def match_levels(analytic: np.ndarray, numeric: np.ndarray,
                 ambiguity: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Greedy injective matching by ascending distance.

    Returns (numeric index per analytic level, distances).  Raises
    MatchingAmbiguous when a numeric eigenvalue lies within ``ambiguity``
    of the match distance to a second, distinct analytic level.
    """
    dist = np.abs(analytic[:, None] - numeric[None, :])
    order = np.argsort(dist, axis=None, kind="stable")
    chosen = np.full(len(analytic), -1)
    used = np.zeros(len(numeric), dtype=bool)
    remaining = len(analytic)
    for flat in order:
        i, j = divmod(int(flat), len(numeric))
        if chosen[i] < 0 and not used[j]:
            chosen[i] = j
            used[j] = True
            remaining -= 1
            if remaining == 0:
                break
    distances = dist[np.arange(len(analytic)), chosen]
    if ambiguity is None:
        distinct = np.unique(np.round(analytic, 9))
        gaps = np.abs(distinct[:, None] - distinct[None, :])
        gaps[gaps == 0] = np.inf
        ambiguity = 0.1 * float(np.min(gaps)) if len(distinct) > 1 else np.inf
    for i, j in enumerate(chosen):
        rivals = np.abs(analytic - analytic[i]) > 1e-9
        if np.any(rivals & (dist[:, j] < distances[i] + ambiguity) & (dist[:, j] < ambiguity)):
            raise MatchingAmbiguous(
                f"numeric eigenvalue {numeric[j]} is claimed by more than one analytic level")
    return chosen, distances


def fock_spectrum_check(spec: ChainSpec, basis: FockBasisSpec,
                        max_quanta: int | None = None) -> SpectralComparison:
    """Compare E = sum nu_j (n_j + 1/2) for sum n_j <= max_quanta (default
    cutoff // 4) against the eigenvalues of the truncated Hamiltonian."""
    max_quanta = basis.cutoff // 4 if max_quanta is None else max_quanta
    levels = enumerate_levels(spec, max_quanta)
    analytic = np.array([lv.energy for lv in levels])
    numeric = fock_eigenvalues(spec, basis)
    chosen, distances = match_levels(analytic, numeric)
    return SpectralComparison(analytic, numeric[chosen], distances, basis.cutoff,
                              tuple(lv.occ for lv in levels))
