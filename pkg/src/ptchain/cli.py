"""Batch front-end.

Every subcommand writes one artifact (CSV or JSON) plus a sidecar manifest
``<output>.manifest.json``.  Settings come from an optional JSON config file;
command-line flags override it.  On failure a JSON error object goes to
stderr and the exit code is 2 (configuration), 3 (numerics) or 4 (resource cap).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import __version__
from .classical import ClassicalState, SectionConfig, integrate, poincare_section
from .core import ChainSpec, normal_modes
from .errors import ConfigParse, PTChainError
from .io import complex_cells, complex_header, fmt, parse_complex, parse_real, write_csv
from .oracle import FockBasisSpec, fock_spectrum_check
from .phase import Axis, GridRequest, classify_phase, scan_phase_diagram
from .spectrum import eigenfunction_evaluate, enumerate_levels

COMMANDS = ("spectrum", "eigenfunction", "phase-point", "phase-scan",
            "trajectory", "poincare", "oracle-check")
FORMATS = ("csv", "json")
_SITE_FLAGS = {"x": 0, "y": 1, "z": 2, "w": 3}


@dataclass
class RunConfig:
    command: str
    n: int = 2
    omega_sq: list[float] | None = None
    gamma: float = 0.0
    max_quanta: int = 10
    occ: list[int] | None = None
    extent: float = 3.0
    samples: int = 21
    axes: list[str] = field(default_factory=list)
    init: list[complex] | None = None
    dt: float = 0.01
    t_end: float = 100.0
    dt_out: float = 0.1
    section_coord: int = 2
    section_part: str = "re"
    section_level: float = 0.0
    section_direction: int = 1
    cutoff: int = 30
    output: str | None = None
    format: str = "csv"
    threads: int = 0
    seed: int = 0

    def spec(self) -> ChainSpec:
        return ChainSpec(self.n, tuple(self.omega_sq or (1.0,) * self.n), self.gamma)

    def echo(self) -> dict:
        out = dataclasses.asdict(self)
        if self.init is not None:
            out["init"] = [[z.real, z.imag] for z in self.init]
        return out


def _finite(x) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)


def validate(config: RunConfig) -> list[str]:
    """Every problem with ``config``; empty iff ``run`` would start."""
    d = []
    c = config
    if c.command not in COMMANDS:
        d.append(f"unknown command {c.command!r}")
    if not isinstance(c.n, int) or c.n < 2:
        d.append("n must be >= 2")
        return d
    if c.omega_sq is not None:
        if len(c.omega_sq) != c.n:
            d.append(f"omega_sq has {len(c.omega_sq)} entries, expected n={c.n}")
        elif any(not _finite(w) or w <= 0 for w in c.omega_sq):
            d.append("every omega_sq entry must be finite and > 0")
    if not _finite(c.gamma):
        d.append("gamma must be finite")
    if c.format not in FORMATS:
        d.append(f"format must be one of {', '.join(FORMATS)}")
    if c.threads < 0:
        d.append("threads must be >= 0")
    if c.command == "spectrum" and c.max_quanta < 0:
        d.append("max_quanta must be >= 0")
    if c.command == "eigenfunction":
        if c.occ is None or len(c.occ) != c.n:
            d.append(f"occ needs {c.n} occupation numbers")
        elif any(k < 0 for k in c.occ):
            d.append("occupations must be >= 0")
        if not (_finite(c.extent) and c.extent > 0):
            d.append("extent must be > 0")
        if c.samples < 1:
            d.append("samples must be >= 1")
    if c.command == "phase-scan":
        if not c.axes:
            d.append("phase-scan needs --axes")
        else:
            try:
                axes = tuple(Axis.parse(a) for a in c.axes)
                d.extend(GridRequest(c.n, axes, tuple(c.omega_sq or (1.0,) * c.n),
                                     c.gamma).validate())
            except PTChainError as exc:
                d.append(str(exc))
    if c.command in ("trajectory", "poincare"):
        if c.init is None or len(c.init) != 2 * c.n:
            d.append(f"init needs 2n = {2 * c.n} complex values (x_1..x_n, v_1..v_n)")
        if not (_finite(c.dt) and c.dt > 0):
            d.append("dt must be > 0")
        if not (_finite(c.t_end) and c.t_end > 0):
            d.append("t_end must be > 0")
        if not (_finite(c.dt_out) and c.dt_out >= c.dt > 0):
            d.append("dt_out must be >= dt")
    if c.command == "poincare":
        if not 1 <= c.section_coord <= c.n:
            d.append(f"section_coord must be in 1..{c.n}")
        if c.section_part not in ("re", "im"):
            d.append("section_part must be re or im")
        if c.section_direction not in (1, -1):
            d.append("section_direction must be 1 or -1")
    if c.command == "oracle-check":
        if c.cutoff < 1:
            d.append("cutoff must be >= 1")
    return d


# -- commands ----------------------------------------------------------------

def _write(config: RunConfig, header: Sequence[str], rows: list[list[str]], payload: dict):
    if config.format == "csv":
        if config.output is None:
            out = sys.stdout
            out.write(",".join(header) + "\n")
            out.writelines(",".join(r) + "\n" for r in rows)
        else:
            write_csv(config.output, header, rows)
    else:
        text = json.dumps(payload, sort_keys=True) + "\n"
        if config.output is None:
            sys.stdout.write(text)
        else:
            with open(config.output, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)


def _cmd_spectrum(c: RunConfig) -> dict:
    spec = c.spec()
    levels = enumerate_levels(spec, c.max_quanta)
    header = [f"n{j + 1}" for j in range(spec.n)] + complex_header("E") + ["real"]
    rows = [[str(k) for k in lv.occ] + complex_cells(lv.energy) + [str(int(lv.is_real))]
            for lv in levels]
    payload = {"levels": [{"occ": list(lv.occ), "E": [lv.energy.real, lv.energy.imag],
                           "real": lv.is_real} for lv in levels]}
    _write(c, header, rows, payload)
    return {"levels": len(levels)}


def _cmd_eigenfunction(c: RunConfig) -> dict:
    spec = c.spec()
    axis = np.linspace(-c.extent, c.extent, c.samples)
    points = np.stack(np.meshgrid(*([axis] * spec.n), indexing="ij"), -1).reshape(-1, spec.n)
    sample = eigenfunction_evaluate(spec, c.occ, points)
    header = [f"x{j + 1}" for j in range(spec.n)] + complex_header("psi")
    rows = [[fmt(v) for v in p] + complex_cells(z) for p, z in zip(points, sample.values)]
    payload = {"occ": list(sample.occ), "points": points.tolist(),
               "psi": [[z.real, z.imag] for z in sample.values]}
    _write(c, header, rows, payload)
    return {"points": len(points)}


def _cmd_phase_point(c: RunConfig) -> dict:
    spec = c.spec()
    pc = classify_phase(spec)
    modes = normal_modes(spec)
    header = ["phase"] + [h for j in range(spec.n) for h in complex_header(f"nu{j + 1}")]
    rows = [[pc.variant.name.lower()] + [s for z in modes.nu for s in complex_cells(z)]]
    payload = {"phase": pc.variant.name.lower(),
               "nu": [[z.real, z.imag] for z in modes.nu]}
    _write(c, header, rows, payload)
    return {"phase": pc.variant.name.lower()}


def _cmd_phase_scan(c: RunConfig) -> dict:
    axes = tuple(Axis.parse(a) for a in c.axes)
    request = GridRequest(c.n, axes, tuple(c.omega_sq or (1.0,) * c.n), c.gamma)
    grid = scan_phase_diagram(request, threads=c.threads or os.cpu_count() or 1)
    header = [ax.name for ax in axes] + ["class"]
    _write(c, header, list(grid.rows()), grid.to_dict())
    return {"cells": int(grid.cells.size)}


def _trajectory(c: RunConfig):
    spec = c.spec()
    init = ClassicalState(0.0, c.init[:c.n], c.init[c.n:])
    return integrate(spec, init, c.dt, c.t_end, c.dt_out)


def _cmd_trajectory(c: RunConfig) -> dict:
    rec = _trajectory(c)
    n = rec.spec.n
    header = (["t"] + [h for j in range(n) for h in complex_header(f"x{j + 1}")]
              + [h for j in range(n) for h in complex_header(f"v{j + 1}")]
              + complex_header("H"))
    rows = [[fmt(t)] + [s for z in x for s in complex_cells(z)]
            + [s for z in v for s in complex_cells(z)] + complex_cells(h)
            for t, x, v, h in zip(rec.times, rec.x, rec.v, rec.energy)]
    _write(c, header, rows, rec.to_dict())
    return {"samples": len(rec.times), "max_drift": float(np.max(rec.energy_drift()))}


def _cmd_poincare(c: RunConfig) -> dict:
    rec = _trajectory(c)
    cfg = SectionConfig(coord=c.section_coord - 1, part=c.section_part,
                        level=c.section_level, direction=c.section_direction)
    sec = poincare_section(rec, cfg)
    rows = [[fmt(t), fmt(p[0]), fmt(p[1])] for t, p in zip(sec.times, sec.points)]
    _write(c, ["t"] + cfg.labels(), rows, sec.to_dict())
    return {"points": len(sec.times)}


def _cmd_oracle(c: RunConfig) -> dict:
    spec = c.spec()
    comp = fock_spectrum_check(spec, FockBasisSpec(c.cutoff, spec.n))
    header = ([f"n{j + 1}" for j in range(spec.n)] + complex_header("analytic")
              + complex_header("numeric") + ["distance"])
    rows = [[str(k) for k in occ] + complex_cells(a) + complex_cells(b) + [fmt(dd)]
            for occ, a, b, dd in zip(comp.occupations, comp.analytic, comp.numeric,
                                     comp.distances)]
    _write(c, header, rows, comp.to_dict())
    return {"max_distance": comp.max_distance}


_DISPATCH = {
    "spectrum": _cmd_spectrum,
    "eigenfunction": _cmd_eigenfunction,
    "phase-point": _cmd_phase_point,
    "phase-scan": _cmd_phase_scan,
    "trajectory": _cmd_trajectory,
    "poincare": _cmd_poincare,
    "oracle-check": _cmd_oracle,
}


def run(config: RunConfig) -> int:
    """Execute ``config``; returns the process exit code."""
    problems = validate(config)
    if problems:
        raise ConfigParse("; ".join(problems))
    start = time.perf_counter()
    summary = _DISPATCH[config.command](config)
    if config.output is not None:
        manifest = {"config": config.echo(), "version": __version__,
                    "summary": summary, "wall_time_s": time.perf_counter() - start}
        with open(config.output + ".manifest.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(manifest, fh, sort_keys=True, indent=1)
            fh.write("\n")
    return 0


# -- argument parsing --------------------------------------------------------

def _real_list(text: str) -> list[float]:
    return [parse_real(s) for s in str(text).split(",") if s.strip()]


def _int_list(text: str) -> list[int]:
    return [int(s) for s in str(text).split(",") if s.strip()]


def _complex_list(text: str) -> list[complex]:
    return [parse_complex(s) for s in str(text).split(",") if s.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ptchain", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON file of settings; flags override it")
    p.add_argument("--n", type=int)
    p.add_argument("--omega-sq", help="comma-separated omega_j^2, fractions allowed")
    for letter in _SITE_FLAGS:
        p.add_argument(f"--omega-{letter}-sq", help=argparse.SUPPRESS)
    p.add_argument("--gamma")
    p.add_argument("--max-quanta", type=int)
    p.add_argument("--occ", help="comma-separated occupation numbers")
    p.add_argument("--extent", help="eigenfunction grid spans [-extent, extent]")
    p.add_argument("--samples", type=int, help="eigenfunction grid points per axis")
    p.add_argument("--axes", help="comma-separated name:start:stop:count")
    p.add_argument("--init", help="2n complex values x_1..x_n,v_1..v_n")
    p.add_argument("--dt")
    p.add_argument("--t-end")
    p.add_argument("--dt-out")
    p.add_argument("--section-coord", type=int, help="1-based site of the section coordinate")
    p.add_argument("--section-part", choices=("re", "im"))
    p.add_argument("--section-level")
    p.add_argument("--section-direction", type=int, choices=(1, -1))
    p.add_argument("--cutoff", type=int)
    p.add_argument("--output")
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--threads", type=int)
    p.add_argument("--seed", type=int)
    return p


def _coerce(key: str, value: Any) -> Any:
    """Normalise a config-file or flag value to its RunConfig type."""
    if value is None:
        return None
    if key in ("gamma", "extent", "dt", "t_end", "dt_out", "section_level"):
        return parse_real(value)
    if key == "omega_sq":
        return _real_list(value) if isinstance(value, str) else [parse_real(v) for v in value]
    if key == "occ":
        return _int_list(value) if isinstance(value, str) else [int(v) for v in value]
    if key == "axes":
        return value.split(",") if isinstance(value, str) else list(value)
    if key == "init":
        if isinstance(value, str):
            return _complex_list(value)
        return [complex(*v) if isinstance(v, (list, tuple)) else parse_complex(str(v))
                for v in value]
    return value


def _join_negative_values(argv: Sequence[str]) -> list[str]:
    """Rewrite ``--flag -1+i,...`` as ``--flag=-1+i,...`` so argparse does not
    mistake a leading minus sign for an option."""
    out: list[str] = []
    it = iter(argv)
    for tok in it:
        if tok.startswith("--") and "=" not in tok and tok not in ("--help",):
            nxt = next(it, None)
            if nxt is not None and nxt.startswith("-") and not nxt.startswith("--"):
                out.append(f"{tok}={nxt}")
                continue
            out.append(tok)
            if nxt is not None:
                out.append(nxt)
        else:
            out.append(tok)
    return out


def config_from_args(argv: Sequence[str] | None = None) -> RunConfig:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(_join_negative_values(argv))
    settings: dict[str, Any] = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                settings = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigParse(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(settings, dict):
            raise ConfigParse("config file must hold a JSON object")
        settings = {k.replace("-", "_"): v for k, v in settings.items()}
    names = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(settings) - names - {f"omega_{s}_sq" for s in _SITE_FLAGS}
    if unknown:
        raise ConfigParse(f"unknown config keys: {', '.join(sorted(unknown))}")
    for key, value in vars(args).items():
        if key != "config" and value is not None:
            settings[key] = value
    settings["command"] = args.command
    site_values = {s: settings.pop(f"omega_{s}_sq", None) for s in _SITE_FLAGS}
    try:
        values = {k: _coerce(k, v) for k, v in settings.items()}
        config = RunConfig(**values)
        if any(v is not None for v in site_values.values()):
            omega_sq = list(config.omega_sq or [1.0] * config.n)
            for s, v in site_values.items():
                if v is not None:
                    if _SITE_FLAGS[s] >= len(omega_sq):
                        raise ConfigParse(f"--omega-{s}-sq refers to a site beyond n={config.n}")
                    omega_sq[_SITE_FLAGS[s]] = parse_real(v)
            config.omega_sq = omega_sq
    except (TypeError, ValueError) as exc:
        if isinstance(exc, PTChainError):
            raise
        raise ConfigParse(str(exc)) from None
    return config


def main(argv: Sequence[str] | None = None) -> int:
    try:
        config = config_from_args(argv)
        return run(config)
    except PTChainError as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code}
        sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
