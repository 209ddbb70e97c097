"""Command line runner: ``multitime <subcommand> [flags]``.

Parameters come from the subcommand's schema below, then a TOML file
(``--config``), then explicit flags, later sources winning.  Each run writes
an RFC-4180 CSV report and ``manifest.json`` into ``--out``.

Exit status: 0 all enabled checks pass, 1 a check failed, 2 invalid
configuration, 3 resource budget exceeded, 4 domain error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass

import numpy as np
import tomli

from . import __version__
from .experiments import PROFILES, RUNNERS, ZERORANGE_CHECKS
from .fock import ResourceError
from .spacetime import DomainError


@dataclass(frozen=True)
class Param:
    type: type
    default: object
    help: str
    choices: tuple = None


def _checks(allowed, default=None):
    return Param(list, list(default or allowed), f"checks to run: {', '.join(allowed)}, 'all' or 'none'", tuple(allowed))


_MODEL = {
    "sites": Param(int, 8, "lattice sites L"),
    "spacing": Param(float, 1.0, "lattice spacing a"),
    "boundary": Param(str, "periodic", "lattice boundary", ("periodic", "open")),
    "mmax": Param(int, 1, "largest x-particle number kept"),
    "nmax": Param(int, 2, "largest y-particle number kept"),
    "g_re": Param(str, "0.5,0.0", "real parts of the two coupling components"),
    "g_im": Param(str, "0.0,0.0", "imaginary parts of the two coupling components"),
    "mass_x": Param(float, 0.0, "x-particle mass"),
    "mass_y": Param(float, 0.5, "y-particle mass"),
    "cutoff": Param(str, "delta", "coupling cutoff: delta or gauss:<radius>"),
    "dispersion": Param(str, "wilson", "lattice Dirac operator", ("wilson", "exact")),
}

SCHEMA = {
    "zerorange": {
        "theta": Param(float, math.pi / 2, "boundary phase in (-pi, pi]"),
        "initial": Param(str, "builtin-gaussian", "builtin-gaussian, a .npz grid file, or JSON packet list"),
        "surface": Param(str, "", "extra surface for the unitarity check, JSON [[z, t], ...]"),
        "grid_dz": Param(float, 0.005, "finest lattice-oracle spacing (also run at 2x and 4x)"),
        "t_final": Param(float, 1.6, "final time for slices and the oracle"),
        "check": _checks(ZERORANGE_CHECKS),
        "report": Param(str, "", "CSV path (default <out>/zerorange.csv)"),
    },
    "consistency": {
        "model": Param(str, "pair-potential", "operator family",
                       ("free", "single-particle", "pair-potential", "scalar-pair", "qft")),
        "h": Param(float, 0.04, "coarsest finite-difference step (also h/2, h/4)"),
        "check": _checks(("commutator",)),
        "report": Param(str, "", "CSV path (default <out>/consistency.csv)"),
    },
    "qft": dict(_MODEL, **{
        "check": _checks(("equations", "splitting", "equal-time", "statistics")),
        "dt": Param(float, 0.04, "coarsest time step of the equation residuals"),
        "configs": Param(str, "random:3", "random:<n> or JSON list of {x: [[t, site]], y: [...]}"),
        "times": Param(str, "0.0,0.5,1.0", "comma-separated times for the equal-time check"),
        "stat_sites": Param(int, 4, "lattice sites for the statistics experiment"),
        "report": Param(str, "", "CSV path (default <out>/qft.csv)"),
    }),
    "ts": dict(_MODEL, **{
        "boundary": Param(str, "open", "lattice boundary", ("periodic", "open")),
        "path": Param(str, "", "JSON list of surfaces (site times), visited in order from t = 0"),
        "dt": Param(float, 0.08, "largest per-site increment (also dt/2, dt/4)"),
        "scheme": Param(str, "euler", "site update", ("euler", "midpoint")),
        "compare_multitime": Param(bool, True, "compare with the restricted multi-time function"),
        "check": _checks(("multitime", "composition", "commutators")),
        "report": Param(str, "", "CSV path (default <out>/ts.csv)"),
    }),
    "born": {
        "dynamics": Param(str, "free1", "detection scenario", ("free1", "bloch2", "zerorange")),
        "surface": Param(str, "", "replace the scenario's surface, JSON [[z, t], ...]"),
        "eps": Param(float, 0.2, "coarsest piece spacing"),
        "refinements": Param(int, 3, "number of eps halvings run"),
        "check": _checks(("coverage", "probability", "convergence", "factorization")),
        "report": Param(str, "", "CSV path (default <out>/born.csv)"),
    },
}

GLOBAL_KEYS = {"seed", "out", "tolerance_profile"}


class ConfigError(ValueError):
    pass


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="multitime", description="Multi-time wave function experiments")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, schema in SCHEMA.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML file with a table per subcommand")
        p.add_argument("--seed", type=int, help="random seed (default 0)")
        p.add_argument("--out", help="output directory (default multitime-out)")
        p.add_argument("--tolerance-profile", choices=sorted(PROFILES), help="default or strict")
        for key, spec in schema.items():
            if spec.type is bool:
                p.add_argument(_flag(key), dest=key, action=argparse.BooleanOptionalAction, help=spec.help)
            elif spec.type is list:
                p.add_argument(_flag(key), dest=key, action="append", help=spec.help)
            else:
                p.add_argument(_flag(key), dest=key, type=spec.type, choices=spec.choices, help=spec.help)
    return parser


def _coerce(sub: str, key: str, value):
    spec = SCHEMA[sub][key]
    if spec.type is list:
        items = value if isinstance(value, list) else [value]
        flat = [s.strip() for v in items for s in str(v).split(",") if s.strip()]
        if flat == ["all"]:
            return list(spec.choices)
        if flat == ["none"]:
            return []
        bad = [c for c in flat if c not in spec.choices]
        if bad:
            raise ConfigError(f"{sub}.{key}: unknown entries {bad}")
        return flat
    if spec.type is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{sub}.{key}: expected true or false")
        return value
    if spec.type is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, spec.type) or isinstance(value, bool):
        raise ConfigError(f"{sub}.{key}: expected {spec.type.__name__}, got {value!r}")
    if spec.choices and value not in spec.choices:
        raise ConfigError(f"{sub}.{key}: must be one of {list(spec.choices)}")
    return value


def load_config(path: str, sub: str) -> tuple:
    """``(globals, params)`` from a TOML file; unknown keys and tables are errors."""
    with open(path, "rb") as fh:
        data = tomli.load(fh)
    glob, params = {}, {}
    for key, value in data.items():
        if isinstance(value, dict):
            if key not in SCHEMA:
                raise ConfigError(f"unknown table [{key}]")
            for k, v in value.items():
                if k not in SCHEMA[key]:
                    raise ConfigError(f"unknown key {key}.{k}")
                coerced = _coerce(key, k, v)
                if key == sub:
                    params[k] = coerced
        elif key in GLOBAL_KEYS:
            glob[key] = value
        else:
            raise ConfigError(f"unknown top-level key {key!r}")
    return glob, params


def resolve(args: argparse.Namespace) -> tuple:
    """Merge defaults, config file and flags into ``(params, seed, out, profile)``."""
    sub = args.subcommand
    glob, from_file = load_config(args.config, sub) if args.config else ({}, {})
    params = {k: _coerce(sub, k, s.default) if s.type is list else s.default for k, s in SCHEMA[sub].items()}
    params.update(from_file)
    for key in SCHEMA[sub]:
        v = getattr(args, key)
        if v is not None:
            params[key] = _coerce(sub, key, v)
    seed = args.seed if args.seed is not None else glob.get("seed", 0)
    out = args.out or glob.get("out", "multitime-out")
    profile = args.tolerance_profile or glob.get("tolerance_profile", "default")
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("seed must be an integer")
    if profile not in PROFILES:
        raise ConfigError(f"tolerance_profile must be one of {sorted(PROFILES)}")
    return params, seed, str(out), profile


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return v


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def execute(sub: str, params: dict, seed: int, out: str, profile: str) -> dict:
    """Run one experiment, write its files and return the manifest."""
    start = time.perf_counter()
    run = RUNNERS[sub](params, PROFILES[profile], np.random.default_rng(seed))
    report = params.get("report") or os.path.join(out, f"{sub}.csv")
    _atomic_write(report, csv_text(run.columns, run.rows))
    manifest = {
        "artifact_version": __version__,
        "subcommand": sub,
        "seed": seed,
        "tolerance_profile": profile,
        "config": params,
        "report": report,
        "checks": [c.as_dict() for c in run.checks],
        "all_passed": all(c.passed for c in run.checks),
        "wall_clock_seconds": round(time.perf_counter() - start, 3),
    }
    _atomic_write(os.path.join(out, "manifest.json"),
                  json.dumps(manifest, sort_keys=True, indent=2, ensure_ascii=False) + "\n")
    return manifest


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    sub = args.subcommand
    try:
        params, seed, out, profile = resolve(args)
        manifest = execute(sub, params, seed, out, profile)
    except (ConfigError, tomli.TOMLDecodeError, json.JSONDecodeError, OSError) as exc:
        print(f"multitime {sub}: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except ResourceError as exc:
        print(f"multitime {sub}: resource budget exceeded: {exc}", file=sys.stderr)
        return 3
    except DomainError as exc:
        print(f"multitime {sub}: domain error with config {vars(args)}: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"multitime {sub}: invalid configuration: {exc}", file=sys.stderr)
        return 2
    for c in manifest["checks"]:
        bound = "" if c["relation"].startswith("in") else f" {c['tolerance']}"
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: {c['value']} {c['relation']}{bound}")
    return 0 if manifest["all_passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
