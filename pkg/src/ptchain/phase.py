"""Unbroken / exceptional / broken classification and parameter-grid scans.

A parameter point is *unbroken* when every squared mode frequency is real,
positive and simple, *exceptional* when the spectrum is real but two modes
coalesce, and *broken* otherwise.

The closed-form classifiers for two, three and four oscillators work on
numpy arrays so that whole grids are classified in a few vector operations.
"""

from __future__ import annotations

import enum
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import ChainSpec, _coupling_entries, characteristic_values, general_mode_frequencies
from .errors import GridTooLarge, InvalidSpec
from .io import fmt, write_csv

DEFAULT_TOL = 1e-9
MAX_CELLS = 10**7
CHUNK = 1 << 15


class Phase(enum.IntEnum):
    UNBROKEN = 0
    EXCEPTIONAL = 1
    BROKEN = 2


@dataclass(frozen=True)
class PhaseClass:
    """Phase of one parameter point.

    ``witness`` is the index of a complex nu^2 for BROKEN and the coalescing
    pair for EXCEPTIONAL; the closed-form classifiers leave it as None.
    """

    variant: Phase
    witness: int | tuple[int, int] | None = None


# -- closed forms ------------------------------------------------------------

def _n2_codes(wx2, wy2, gamma, tol):
    wx2, wy2, gamma = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (wx2, wy2, gamma)))
    diff = np.abs(wx2 - wy2)
    g2 = 2.0 * np.abs(gamma)
    disc = np.sqrt(np.maximum(diff * diff - g2 * g2, 0.0))
    positive = 0.5 * (wx2 + wy2 - disc) > 0.0
    codes = np.full(diff.shape, Phase.BROKEN, dtype=np.int8)
    codes[(diff > g2 + tol) & positive] = Phase.UNBROKEN
    codes[np.abs(diff - g2) <= tol] = Phase.EXCEPTIONAL
    return codes


def classify_phase_n2(omega_x_sq: float, omega_y_sq: float, gamma: float,
                      tol: float = DEFAULT_TOL) -> PhaseClass:
    """Two oscillators: the spectrum is real iff |wx^2 - wy^2| >= 2|gamma|."""
    return PhaseClass(Phase(int(_n2_codes(omega_x_sq, omega_y_sq, gamma, tol))))


def cubic_coefficients(wx2, wy2, wz2, gamma):
    """(s1, s2, s3) of f(lam) = lam^3 - s1 lam^2 + s2 lam - s3."""
    g2 = np.asarray(gamma, dtype=float) ** 2
    s1 = wx2 + wy2 + wz2
    s2 = wx2 * wy2 + wx2 * wz2 + wy2 * wz2 + 2.0 * g2
    s3 = wx2 * wy2 * wz2 + (wx2 + wz2) * g2
    return s1, s2, s3


def _cubic_codes(wx2, wy2, wz2, gamma, tol):
    wx2, wy2, wz2, gamma = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (wx2, wy2, wz2, gamma)))
    s1, s2, s3 = cubic_coefficients(wx2, wy2, wz2, gamma)

    def f(lam):
        return ((lam - s1) * lam + s2) * lam - s3

    # discriminant of lam^3 + b lam^2 + c lam + d with b=-s1, c=s2, d=-s3
    b, c, d = -s1, s2, -s3
    disc = 18 * b * c * d - 4 * b**3 * d + b * b * c * c - 4 * c**3 - 27 * d * d
    crit = s1 * s1 - 3.0 * s2
    root = np.sqrt(np.maximum(crit, 0.0))
    lam_max = (s1 - root) / 3.0
    lam_min = (s1 + root) / 3.0
    unbroken = ((crit > 0) & (f(0.0) < 0) & (lam_max > 0) & (lam_min > 0)
                & (f(lam_max) > 0) & (f(lam_min) < 0))
    codes = np.where(unbroken, Phase.UNBROKEN, Phase.BROKEN).astype(np.int8)
    codes[np.abs(disc) <= tol] = Phase.EXCEPTIONAL
    return codes


def cubic_criteria_n3(omega_sq: Sequence[float], gamma: float,
                      tol: float = DEFAULT_TOL) -> PhaseClass:
    """Three oscillators, from the extrema of the characteristic cubic.

    Unbroken iff f(0) < 0, both extrema lie at positive lam, the local
    maximum is positive and the local minimum negative.  Exceptional when
    the discriminant is within ``tol`` of zero.
    """
    wx2, wy2, wz2 = omega_sq
    return PhaseClass(Phase(int(_cubic_codes(wx2, wy2, wz2, gamma, tol))))


def quartic_coefficients(wx2, wy2, wz2, ww2, gamma):
    """(a, b, c, d) of f(lam) = lam^4 - a lam^3 + b lam^2 - c lam + d."""
    g2 = np.asarray(gamma, dtype=float) ** 2
    a = wx2 + wy2 + wz2 + ww2
    b = wx2 * wy2 + wx2 * wz2 + wx2 * ww2 + wy2 * wz2 + wy2 * ww2 + wz2 * ww2 + 3 * g2
    c = (wx2 * wy2 * wz2 + wx2 * wy2 * ww2 + wx2 * wz2 * ww2 + wy2 * wz2 * ww2
         + 2 * g2 * wx2 + 2 * g2 * ww2 + g2 * wy2 + g2 * wz2)
    d = wx2 * wy2 * wz2 * ww2 + g2 * wx2 * wy2 + g2 * wx2 * ww2 + g2 * wz2 * ww2 + g2 * g2
    return a, b, c, d


def _cubic_critical_points(a, b, c):
    """Sorted real roots of f'(lam) = 4 lam^3 - 3a lam^2 + 2b lam - c.

    Returns (roots, three_real); roots are NaN where only one is real.
    Trigonometric form for three real roots.
    """
    B, C, D = -0.75 * a, 0.5 * b, -0.25 * c
    p = C - B * B / 3.0
    q = 2.0 * B**3 / 27.0 - B * C / 3.0 + D
    shift = -B / 3.0
    scale = np.maximum(np.abs(B), 1.0)
    three_real = 4.0 * p**3 + 27.0 * q * q <= 1e-14 * scale**6
    with np.errstate(invalid="ignore", divide="ignore"):
        m = 2.0 * np.sqrt(np.maximum(-p / 3.0, 0.0))
        arg = np.where(m > 0, 3.0 * q / np.where(m > 0, p * m, 1.0), 0.0)
        theta = np.arccos(np.clip(arg, -1.0, 1.0)) / 3.0
    roots = np.stack([shift + m * np.cos(theta - 2.0 * np.pi * k / 3.0) for k in range(3)], axis=-1)
    roots = np.sort(roots, axis=-1)
    roots[~three_real] = np.nan
    return roots, three_real


def _quartic_codes(wx2, wy2, wz2, ww2, gamma, tol):
    wx2, wy2, wz2, ww2, gamma = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (wx2, wy2, wz2, ww2, gamma)))
    a, b, c, d = quartic_coefficients(wx2, wy2, wz2, ww2, gamma)

    def f(lam):
        return (((lam - a) * lam + b) * lam - c) * lam + d

    crit, three_real = _cubic_critical_points(a, b, c)
    with np.errstate(invalid="ignore"):
        f1, f2, f3 = (f(crit[..., k]) for k in range(3))
        positive = (d > tol) & (crit[..., 0] > 0)
        strong = three_real & positive & (f1 < -tol) & (f2 > tol) & (f3 < -tol)
        weak = three_real & positive & (f1 <= tol) & (f2 >= -tol) & (f3 <= tol)
    codes = np.full(a.shape, Phase.BROKEN, dtype=np.int8)
    codes[weak] = Phase.EXCEPTIONAL
    codes[strong] = Phase.UNBROKEN
    return codes


def quartic_criteria_n4(omega_sq: Sequence[float], gamma: float,
                        tol: float = DEFAULT_TOL) -> PhaseClass:
    """Four oscillators: unbroken iff f(0) > 0, f' has three positive roots,
    both local minima are negative and the local maximum positive."""
    wx2, wy2, wz2, ww2 = omega_sq
    return PhaseClass(Phase(int(_quartic_codes(wx2, wy2, wz2, ww2, gamma, tol))))


# -- generic -----------------------------------------------------------------

def _clusters(lam: np.ndarray, radius: np.ndarray) -> list[list[int]]:
    parent = list(range(len(lam)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(lam)):
        for j in range(i + 1, len(lam)):
            if abs(lam[i] - lam[j]) <= max(radius[i], radius[j]):
                parent[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for i in range(len(lam)):
        groups.setdefault(find(i), []).append(i)
    return sorted(groups.values())


def local_half_separation_sq(omega_sq, gamma, center: float) -> float:
    """Squared half-distance between the two roots of p nearest ``center``.

    From the local quadratic model p + p' t + p''/2 t^2 = 0 at the real
    point ``center``: positive for two real roots, negative for a complex
    pair.  Unlike the roots themselves this quantity is computed to full
    precision near a double root and is linear in the parameter distance
    to the exceptional point.
    """
    p, dp, d2p = characteristic_values(omega_sq, gamma, float(center))
    if d2p == 0.0:
        return 0.0
    return float((dp * dp - 2.0 * p * d2p) / (d2p * d2p))


def _classify_roots(lam: np.ndarray, omega_sq, gamma, tol: float) -> PhaseClass:
    radius = 1e-3 * (1.0 + np.abs(lam))
    complex_witness = None
    degenerate_witness = None
    for group in _clusters(lam, radius):
        if len(group) == 1:
            k = group[0]
            if abs(lam[k].imag) > tol:
                if complex_witness is None:
                    complex_witness = k
            elif lam[k].real <= 0:
                complex_witness = k if complex_witness is None else complex_witness
            continue
        center = np.mean(lam[group])
        if abs(center.imag) > radius[group[0]]:
            complex_witness = group[0] if complex_witness is None else complex_witness
            continue
        if len(group) == 2:
            half_sq = local_half_separation_sq(omega_sq, gamma, center.real)
            if half_sq < -tol:
                complex_witness = group[0] if complex_witness is None else complex_witness
            elif half_sq <= tol and degenerate_witness is None:
                degenerate_witness = (group[0], group[1])
        else:
            diameter = max(abs(lam[i] - lam[j]) for i in group for j in group)
            if diameter <= 4.0 * math.sqrt(tol) * (1.0 + abs(center)):
                if degenerate_witness is None:
                    degenerate_witness = (group[0], group[1])
            else:
                for k in group:
                    if abs(lam[k].imag) > tol and complex_witness is None:
                        complex_witness = k
    if complex_witness is not None:
        return PhaseClass(Phase.BROKEN, int(complex_witness))
    if degenerate_witness is not None:
        return PhaseClass(Phase.EXCEPTIONAL, tuple(int(i) for i in degenerate_witness))
    return PhaseClass(Phase.UNBROKEN)


def classify_phase(spec: ChainSpec, tol: float = DEFAULT_TOL) -> PhaseClass:
    """Generic classifier: are all nu^2 real, positive and simple?

    Isolated roots are tested on |Im nu^2| <= tol.  Clusters of nearby roots
    are resolved with the local quadratic model of the characteristic
    polynomial; the pair is exceptional when its squared half-separation is
    within ``tol`` of zero.
    """
    modes = general_mode_frequencies(spec)
    return _classify_roots(modes.nu_sq, spec.omega_sq, spec.gamma, tol)


# -- grid scans --------------------------------------------------------------

_SITE_LETTERS = {"x": 1, "y": 2, "z": 3, "w": 4}


@dataclass(frozen=True)
class Axis:
    """One scanned parameter.

    ``name`` is ``gamma``, ``w<k>`` / ``w<letter>`` for the natural frequency
    omega_k of site k (letters x, y, z, w are sites 1-4), or the same with a
    ``sq`` suffix for omega_k^2.  Samples are ``count`` evenly spaced values
    including both ends.
    """

    name: str
    start: float
    stop: float
    count: int

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.count)

    def target(self) -> tuple[str, int | None]:
        """('gamma', None), ('omega', site) or ('omega_sq', site); zero-based site."""
        if self.name == "gamma":
            return "gamma", None
        body = self.name
        kind = "omega"
        if body.endswith("sq"):
            body, kind = body[:-2], "omega_sq"
        if not body.startswith("w") or len(body) < 2:
            raise InvalidSpec(f"unknown axis {self.name!r}")
        site = body[1:]
        if site in _SITE_LETTERS:
            return kind, _SITE_LETTERS[site] - 1
        if site.isdigit() and int(site) >= 1:
            return kind, int(site) - 1
        raise InvalidSpec(f"unknown axis {self.name!r}")

    @classmethod
    def parse(cls, text: str) -> "Axis":
        """``name:start:stop:count``; start/stop may be fractions like 1/12."""
        from .io import parse_real
        parts = text.split(":")
        if len(parts) != 4:
            raise InvalidSpec(f"axis must be name:start:stop:count, got {text!r}")
        try:
            return cls(parts[0].strip(), parse_real(parts[1]), parse_real(parts[2]),
                       int(parts[3]))
        except ValueError as exc:
            raise InvalidSpec(f"bad axis {text!r}: {exc}") from None


@dataclass(frozen=True)
class GridRequest:
    n: int
    axes: tuple[Axis, ...]
    omega_sq: tuple[float, ...]
    gamma: float
    tol: float = DEFAULT_TOL

    def validate(self) -> list[str]:
        problems = []
        if self.n < 2:
            problems.append("n must be >= 2")
        if len(self.omega_sq) != self.n:
            problems.append(f"omega_sq has {len(self.omega_sq)} entries, expected {self.n}")
        if not 1 <= len(self.axes) <= 3:
            problems.append("a scan needs 1 to 3 axes")
        seen = set()
        for ax in self.axes:
            try:
                kind, site = ax.target()
            except InvalidSpec as exc:
                problems.append(str(exc))
                continue
            if site is not None and site >= self.n:
                problems.append(f"axis {ax.name} refers to site {site + 1} > n")
            if (kind == "gamma", site) in seen:
                problems.append(f"axis for {ax.name} given twice")
            seen.add((kind == "gamma", site))
            if not (ax.count >= 2 and ax.start < ax.stop):
                problems.append(f"axis {ax.name} needs start < stop and count >= 2")
        return problems

    def n_cells(self) -> int:
        return math.prod(ax.count for ax in self.axes)


@dataclass(frozen=True)
class PhaseGrid:
    """Classified grid; ``cells[i, j, ...]`` belongs to axis samples i, j, ..."""

    axes: tuple[Axis, ...]
    cells: np.ndarray
    fixed: dict = field(default_factory=dict)

    def rows(self):
        grids = [ax.values() for ax in self.axes]
        for idx in np.ndindex(*self.cells.shape):
            yield [fmt(grids[k][i]) for k, i in enumerate(idx)] + [str(int(self.cells[idx]))]

    def to_csv(self, path) -> None:
        write_csv(path, [ax.name for ax in self.axes] + ["class"], self.rows())

    def to_dict(self) -> dict:
        return {
            "axes": [{"name": ax.name, "start": ax.start, "stop": ax.stop, "count": ax.count}
                     for ax in self.axes],
            "fixed": self.fixed,
            "codes": {"0": "unbroken", "1": "exceptional", "2": "broken"},
            "cells": [int(c) for c in self.cells.ravel()],
        }

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")


def _cell_parameters(request: GridRequest, flat: np.ndarray):
    shape = tuple(ax.count for ax in request.axes)
    idx = np.unravel_index(flat, shape)
    omega_sq = np.tile(np.asarray(request.omega_sq, dtype=float), (len(flat), 1))
    gamma = np.full(len(flat), float(request.gamma))
    for ax, i in zip(request.axes, idx):
        vals = ax.values()[i]
        kind, site = ax.target()
        if kind == "gamma":
            gamma = vals
        elif kind == "omega":
            omega_sq[:, site] = vals * vals
        else:
            omega_sq[:, site] = vals
    return omega_sq, gamma


def _classify_chunk(request: GridRequest, flat: np.ndarray) -> np.ndarray:
    omega_sq, gamma = _cell_parameters(request, flat)
    tol = request.tol
    if request.n == 2:
        return _n2_codes(omega_sq[:, 0], omega_sq[:, 1], gamma, tol)
    if request.n == 3:
        return _cubic_codes(omega_sq[:, 0], omega_sq[:, 1], omega_sq[:, 2], gamma, tol)
    if request.n == 4:
        return _quartic_codes(*(omega_sq[:, k] for k in range(4)), gamma, tol)
    mats = np.zeros((len(flat), request.n, request.n), dtype=complex)
    diag = np.arange(request.n)
    mats[:, diag, diag] = omega_sq
    mats[:, diag[:-1], diag[1:]] = 1j * gamma[:, None]
    mats[:, diag[1:], diag[:-1]] = 1j * gamma[:, None]
    roots = np.linalg.eigvals(mats)
    out = np.empty(len(flat), dtype=np.int8)
    for k in range(len(flat)):
        out[k] = _classify_roots(roots[k], omega_sq[k], gamma[k], tol).variant
    return out


def scan_phase_diagram(request: GridRequest, threads: int = 1) -> PhaseGrid:
    """Classify every grid cell with the cheapest applicable classifier.

    Cells are processed in fixed chunks; ``threads`` > 1 evaluates chunks
    concurrently, and results are stored by position so the output does not
    depend on scheduling.  Cells where some omega^2 <= 0 fall outside the
    physical chain and are classified by the same root criteria (they are
    never unbroken when a root is nonpositive).
    """
    problems = request.validate()
    if problems:
        raise InvalidSpec("; ".join(problems))
    total = request.n_cells()
    if total > MAX_CELLS:
        raise GridTooLarge(f"{total} cells exceed the cap of {MAX_CELLS}")
    starts = range(0, total, CHUNK)
    chunks = [np.arange(s, min(s + CHUNK, total)) for s in starts]
    if threads and threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: _classify_chunk(request, c), chunks))
    else:
        parts = [_classify_chunk(request, c) for c in chunks]
    cells = np.concatenate(parts).reshape(tuple(ax.count for ax in request.axes))
    fixed = {"n": request.n, "omega_sq": list(request.omega_sq), "gamma": request.gamma,
             "tol": request.tol}
    return PhaseGrid(tuple(request.axes), cells, fixed)
