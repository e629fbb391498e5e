"""Complexified classical dynamics of the chain.

Hamilton's equations give x'' = -M x with complex x.  Each normal mode
q_j = (V^T x)_j evolves as c+ exp(i nu_j t) + c- exp(-i nu_j t): bounded
when nu_j is real, exponentially growing on one branch when it is complex,
and secular (linear in t) at an exceptional point where V does not exist.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from .core import ChainSpec, ModeSet, _coupling_entries, decoupling_transform, normal_modes
from .errors import (
    DimensionMismatch,
    InsufficientData,
    NoCrossings,
    StepTooLarge,
    UndersampledRecord,
)
from .io import complex_cells, complex_header, fmt, write_csv
from .phase import Phase, classify_phase

BOUNDED_DRIFT = 1e-8
GROWING_DRIFT = 1e-6


@dataclass(frozen=True)
class ClassicalState:
    t: float
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=complex)
        v = np.asarray(self.v, dtype=complex)
        if x.shape != v.shape or x.ndim != 1:
            raise DimensionMismatch(f"x and v must be equal-length vectors, got {x.shape} and {v.shape}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "t", float(self.t))


def _check_dim(spec: ChainSpec, state: ClassicalState):
    if len(state.x) != spec.n:
        raise DimensionMismatch(f"state has {len(state.x)} coordinates, spec has n={spec.n}")


def equations_of_motion(spec: ChainSpec, state: ClassicalState) -> np.ndarray:
    """Accelerations a_j = -omega_j^2 x_j - i gamma (x_{j-1} + x_{j+1})."""
    _check_dim(spec, state)
    x = state.x
    a = -np.asarray(spec.omega_sq) * x
    a[1:] -= 1j * spec.gamma * x[:-1]
    a[:-1] -= 1j * spec.gamma * x[1:]
    return a


def complex_energy(m: np.ndarray, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """H = 1/2 v.v + 1/2 x.M.x without conjugation (conserved exactly)."""
    return 0.5 * np.sum(v * v, axis=-1) + 0.5 * np.einsum("...i,ij,...j->...", x, m, x)


def _energy_scale(m_abs: np.ndarray, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    ax, av = np.abs(x), np.abs(v)
    return 0.5 * np.sum(av * av, axis=-1) + 0.5 * np.einsum("...i,ij,...j->...", ax, m_abs, ax)


@dataclass(frozen=True)
class TrajectoryRecord:
    """Uniformly sampled trajectory; row k of ``x``/``v`` is the state at ``times[k]``."""

    spec: ChainSpec
    init: ClassicalState
    times: np.ndarray
    x: np.ndarray
    v: np.ndarray
    energy: np.ndarray
    dt: float
    dt_out: float
    bounded_contract: bool = True

    @property
    def states(self) -> list[ClassicalState]:
        return [ClassicalState(t, x, v) for t, x, v in zip(self.times, self.x, self.v)]

    def energy_drift(self) -> np.ndarray:
        """Drift as contracted by :func:`integrate`.

        Bounded runs: |H - H0| / (1 + |H0|).  Otherwise |H| itself stays
        constant while |x| grows, so the drift is normalised by the running
        maximum of the non-cancelling energy scale 1/2|v|^2 + 1/2|x||M||x|.
        """
        h0 = self.energy[0]
        if self.bounded_contract:
            return np.abs(self.energy - h0) / (1.0 + abs(h0))
        m_abs = np.abs(_coupling_entries(self.spec.omega_sq, self.spec.gamma))
        scale = np.maximum.accumulate(_energy_scale(m_abs, self.x, self.v))
        return np.abs(self.energy - h0) / (1.0 + scale)

    def to_csv(self, path) -> None:
        n = self.spec.n
        header = ["t"]
        for j in range(n):
            header += complex_header(f"x{j + 1}")
        for j in range(n):
            header += complex_header(f"v{j + 1}")
        header += complex_header("H")
        rows = []
        for k, t in enumerate(self.times):
            row = [fmt(t)]
            for z in self.x[k]:
                row += complex_cells(z)
            for z in self.v[k]:
                row += complex_cells(z)
            rows.append(row + complex_cells(self.energy[k]))
        write_csv(path, header, rows)

    def to_dict(self) -> dict:
        pair = lambda z: [float(z.real), float(z.imag)]  # noqa: E731
        return {
            "spec": {"n": self.spec.n, "omega_sq": list(self.spec.omega_sq),
                     "gamma": self.spec.gamma},
            "dt": self.dt,
            "dt_out": self.dt_out,
            "t": [float(t) for t in self.times],
            "x": [[pair(z) for z in row] for row in self.x],
            "v": [[pair(z) for z in row] for row in self.v],
            "H": [pair(z) for z in self.energy],
        }

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")


def rk4_step(f: Callable[[float, np.ndarray], np.ndarray], t: float, y: np.ndarray,
             h: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step."""
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def first_order_matrix(spec: ChainSpec) -> np.ndarray:
    """A with d/dt (x, v) = A (x, v)."""
    n = spec.n
    a = np.zeros((2 * n, 2 * n), dtype=complex)
    a[:n, n:] = np.eye(n)
    a[n:, :n] = -_coupling_entries(spec.omega_sq, spec.gamma)
    return a


def rk4_propagator(spec: ChainSpec, h: float) -> np.ndarray:
    """Matrix of one RK4 step for the linear system y' = A y.

    For a linear autonomous system the four stages collapse to
    I + hA + (hA)^2/2 + (hA)^3/6 + (hA)^4/24.
    """
    ha = h * first_order_matrix(spec)
    out = np.eye(len(ha), dtype=complex)
    term = out
    for k in range(1, 5):
        term = term @ ha / k
        out = out + term
    return out


def integrate(spec: ChainSpec, init: ClassicalState, dt: float, t_end: float,
              dt_out: float | None = None) -> TrajectoryRecord:
    """Fixed-step RK4 from ``init.t`` to ``init.t + t_end``, sampled every ``dt_out``.

    ``dt`` is shrunk if needed so that it divides ``dt_out``.  Raises
    StepTooLarge as soon as the energy drift exceeds ten times its contract.
    """
    _check_dim(spec, init)
    dt_out = dt if dt_out is None else dt_out
    if not (dt > 0 and t_end > 0 and dt_out >= dt * (1 - 1e-12)):
        raise ValueError("need dt > 0, t_end > 0 and dt_out >= dt")
    n_sub = max(1, math.ceil(dt_out / dt - 1e-9))
    h = dt_out / n_sub
    n_out = int(round(t_end / dt_out))
    if n_out < 1:
        raise ValueError("t_end shorter than one output interval")

    step = np.linalg.matrix_power(rk4_propagator(spec, h), n_sub)
    m = _coupling_entries(spec.omega_sq, spec.gamma)
    m_abs = np.abs(m)
    bounded = normal_modes(spec).all_real()
    limit = 10.0 * (BOUNDED_DRIFT if bounded else GROWING_DRIFT)

    n = spec.n
    ys = np.empty((n_out + 1, 2 * n), dtype=complex)
    ys[0, :n], ys[0, n:] = init.x, init.v
    h0 = complex_energy(m, init.x, init.v)
    running_scale = float(_energy_scale(m_abs, init.x, init.v))
    for k in range(1, n_out + 1):
        ys[k] = step @ ys[k - 1]
        x, v = ys[k, :n], ys[k, n:]
        err = abs(complex_energy(m, x, v) - h0)
        if bounded:
            drift = err / (1.0 + abs(h0))
        else:
            running_scale = max(running_scale, float(_energy_scale(m_abs, x, v)))
            drift = err / (1.0 + running_scale)
        if not np.isfinite(drift) or drift > limit:
            raise StepTooLarge(
                f"energy drift {drift:.3e} exceeds {limit:.1e} at t={init.t + k * dt_out:.6g}; "
                f"reduce dt (currently {h:.3g})")
    times = init.t + dt_out * np.arange(n_out + 1)
    xs, vs = ys[:, :n].copy(), ys[:, n:].copy()
    return TrajectoryRecord(spec, init, times, xs, vs, complex_energy(m, xs, vs),
                            h, dt_out, bounded)


@dataclass(frozen=True)
class ModeAmplitudes:
    """q_j(t) = c_plus[j] exp(i nu_j t) + c_minus[j] exp(-i nu_j t), x = V q."""

    spec: ChainSpec
    modes: ModeSet
    transform: np.ndarray
    c_plus: np.ndarray
    c_minus: np.ndarray
    t0: float = 0.0

    def evaluate(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Positions and velocities at times ``t``, shape (len(t), n)."""
        tau = np.atleast_1d(np.asarray(t, dtype=float)) - self.t0
        nu = self.modes.nu
        fwd = self.c_plus * np.exp(1j * np.outer(tau, nu))
        bwd = self.c_minus * np.exp(-1j * np.outer(tau, nu))
        q = fwd + bwd
        qd = 1j * nu * (fwd - bwd)
        return q @ self.transform.T, qd @ self.transform.T


def mode_decompose(spec: ChainSpec, init: ClassicalState) -> ModeAmplitudes:
    """Exact solution through the normal modes; refuses at exceptional points."""
    _check_dim(spec, init)
    modes = normal_modes(spec)
    v = decoupling_transform(spec, modes)
    q0 = v.T @ init.x
    qd0 = v.T @ init.v
    ratio = 1j * qd0 / modes.nu
    return ModeAmplitudes(spec, modes, v, 0.5 * (q0 - ratio), 0.5 * (q0 + ratio), init.t)


class Motion(enum.Enum):
    BOUNDED = "bounded"
    GROWING = "growing"
    DECAYING = "decaying"
    SECULAR = "secular"


@dataclass(frozen=True)
class TrajectoryClass:
    kind: Motion
    rate: float | None = None
    interval: tuple[float, float] | None = None


@dataclass(frozen=True)
class GrowthFit:
    rate: float
    interval: tuple[float, float]
    window: float
    n_windows: int


def fit_growth_rate(record: TrajectoryRecord, t_min: float | None = None,
                    t_max: float | None = None, window: float | None = None) -> GrowthFit:
    """Least-squares slope of log(max |x|) over consecutive windows.

    The default window is one period of the slowest mode; at least ten
    windows are required.  The interval is the 95% confidence interval of
    the slope.
    """
    t = record.times
    t_min = t[0] if t_min is None else t_min
    t_max = t[-1] if t_max is None else t_max
    if window is None:
        slowest = float(np.min(np.abs(normal_modes(record.spec).nu.real)))
        window = 2.0 * math.pi / slowest
    n_windows = int((t_max - t_min) / window + 1e-9)
    if n_windows < 10:
        raise InsufficientData(
            f"need at least 10 windows of {window:.3g}, have {t_max - t_min:.3g} time units")
    radius = np.linalg.norm(record.x, axis=1)
    centers, peaks = [], []
    for k in range(n_windows):
        lo = t_min + k * window
        sel = (t >= lo) & (t < lo + window)
        if not np.any(sel):
            raise InsufficientData("record too sparse for the fit window")
        centers.append(lo + 0.5 * window)
        peaks.append(np.log(np.max(radius[sel])))
    fit = stats.linregress(centers, peaks)
    half = stats.t.ppf(0.975, n_windows - 2) * fit.stderr
    return GrowthFit(float(fit.slope), (float(fit.slope - half), float(fit.slope + half)),
                     window, n_windows)


def classify_trajectory(obj: TrajectoryRecord | ModeAmplitudes, rate_floor: float = 0.02,
                        tol: float = 1e-9, excitation: float = 1e-12) -> TrajectoryClass:
    """Bounded, growing, decaying or secular motion.

    From amplitudes the answer is exact: the rate is the largest |Im nu|
    over excited branches that grow.  From a record the log of the windowed
    peak radius is fitted; motion counts as bounded when the fitted slope is
    not distinguishable from zero beyond ``rate_floor``.
    """
    if isinstance(obj, ModeAmplitudes):
        nu = obj.modes.nu
        grow, decay = [], []
        for j, w in enumerate(nu):
            if abs(w.imag) <= tol:
                continue
            plus_excited = abs(obj.c_plus[j]) > excitation
            minus_excited = abs(obj.c_minus[j]) > excitation
            # c+ exp(i nu t) grows when Im nu < 0, c- exp(-i nu t) when Im nu > 0
            grows = minus_excited if w.imag > 0 else plus_excited
            decays = plus_excited if w.imag > 0 else minus_excited
            if grows:
                grow.append(abs(w.imag))
            if decays:
                decay.append(abs(w.imag))
        if grow:
            return TrajectoryClass(Motion.GROWING, max(grow))
        if decay:
            return TrajectoryClass(Motion.DECAYING, max(decay))
        return TrajectoryClass(Motion.BOUNDED, 0.0)

    if classify_phase(obj.spec, tol).variant == Phase.EXCEPTIONAL:
        return TrajectoryClass(Motion.SECULAR)
    fit = fit_growth_rate(obj)
    lo, hi = fit.interval
    if lo > rate_floor:
        return TrajectoryClass(Motion.GROWING, fit.rate, fit.interval)
    if hi < -rate_floor:
        return TrajectoryClass(Motion.DECAYING, -fit.rate, fit.interval)
    return TrajectoryClass(Motion.BOUNDED, fit.rate, fit.interval)


# -- Poincare sections -------------------------------------------------------

_PARTS = {"re": np.real, "im": np.imag}


@dataclass(frozen=True)
class SectionConfig:
    """Section part(x_coord) = level crossed in ``direction`` (+1 ascending).

    ``projection`` names the two plotted quantities as (kind, index, part)
    with kind "x" or "v"; indices are zero-based.
    """

    coord: int = 1
    part: str = "re"
    level: float = 0.0
    direction: int = 1
    projection: tuple[tuple[str, int, str], tuple[str, int, str]] = (("x", 0, "re"), ("v", 0, "re"))

    def labels(self) -> list[str]:
        return [f"{p}_{k}{i + 1}" for k, i, p in self.projection]


@dataclass(frozen=True)
class PoincareSection:
    config: SectionConfig
    times: np.ndarray
    points: np.ndarray
    order: int = 3

    def to_csv(self, path) -> None:
        rows = ([fmt(t), fmt(p[0]), fmt(p[1])] for t, p in zip(self.times, self.points))
        write_csv(path, ["t"] + self.config.labels(), rows)

    def to_dict(self) -> dict:
        return {"config": {"coord": self.config.coord, "part": self.config.part,
                           "level": self.config.level, "direction": self.config.direction,
                           "projection": [list(p) for p in self.config.projection]},
                "order": self.order,
                "t": [float(t) for t in self.times],
                "points": [[float(a), float(b)] for a, b in self.points]}

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")


def _hermite_basis(s):
    s2, s3 = s * s, s * s * s
    return 2 * s3 - 3 * s2 + 1, s3 - 2 * s2 + s, -2 * s3 + 3 * s2, s3 - s2


def _hermite(y0, y1, d0, d1, h, s):
    h00, h10, h01, h11 = _hermite_basis(s)
    return h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1


def poincare_section(record: TrajectoryRecord,
                     config: SectionConfig = SectionConfig()) -> PoincareSection:
    """Crossings of the section, refined by cubic Hermite interpolation.

    The section function and the projected quantities are interpolated with
    their exact time derivatives (velocities, and accelerations from the
    equations of motion).
    """
    if config.part not in _PARTS or config.direction not in (1, -1):
        raise ValueError("part must be 're' or 'im' and direction +1 or -1")
    n = record.spec.n
    if not 0 <= config.coord < n:
        raise DimensionMismatch(f"section coordinate {config.coord} out of range")
    fastest = float(np.max(np.abs(normal_modes(record.spec).nu)))
    if record.dt_out * fastest > math.pi / 4:
        raise UndersampledRecord(
            f"dt_out={record.dt_out:.3g} too coarse for mode frequency {fastest:.3g}")
    part = _PARTS[config.part]
    m = _coupling_entries(record.spec.omega_sq, record.spec.gamma)
    acc = -record.x @ m.T

    g = part(record.x[:, config.coord]) - config.level
    dg = part(record.v[:, config.coord])
    t = record.times
    sign = config.direction
    hits = np.nonzero((sign * g[:-1] < 0) & (sign * g[1:] >= 0))[0]
    times, points = [], []
    for i in hits:
        h = t[i + 1] - t[i]
        g0, g1, d0, d1 = g[i], g[i + 1], dg[i] * h, dg[i + 1] * h
        # cubic in s from the Hermite form, highest power first
        coeffs = [2 * g0 + d0 - 2 * g1 + d1, -3 * g0 - 2 * d0 + 3 * g1 - d1, d0, g0]
        roots = np.roots(coeffs) if abs(coeffs[0]) > 0 else np.roots(coeffs[1:])
        inside = sorted(r.real for r in roots
                        if abs(r.imag) < 1e-9 and -1e-12 <= r.real <= 1 + 1e-12)
        if len(inside) != 1:
            raise UndersampledRecord(f"{len(inside)} section crossings between t={t[i]:.6g} and {t[i + 1]:.6g}")
        s = min(max(inside[0], 0.0), 1.0)
        times.append(t[i] + s * h)
        point = []
        for kind, j, p in config.projection:
            if kind == "x":
                val = _hermite(record.x[i, j], record.x[i + 1, j], record.v[i, j], record.v[i + 1, j], h, s)
            elif kind == "v":
                val = _hermite(record.v[i, j], record.v[i + 1, j], acc[i, j], acc[i + 1, j], h, s)
            else:
                raise ValueError(f"projection kind must be 'x' or 'v', got {kind!r}")
            point.append(_PARTS[p](val))
        points.append(point)
    if not points:
        raise NoCrossings("trajectory never crosses the section")
    return PoincareSection(config, np.asarray(times), np.asarray(points, dtype=float))
