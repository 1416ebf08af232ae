"""Command-line interface: analyze, simulate, probe and catalog.

Exit codes: 0 success, 1 verdict mismatch in ``catalog check``, 2 input or
validation error, 3 numerical failure. Errors are written to stderr as a
JSON object ``{"kind": ..., "message": ...}``.
"""

from __future__ import annotations

import argparse
import json
import sys

import jsonschema
import numpy as np

from . import catalog, dynamics
from .errors import (DomainError, InconsistentRank, NearSingular, PoissonStabError,
                     StepSizeUnderflow)

SCHEMA_VERSION = 1

_number_list = {"type": "array", "items": {"type": "number"}}

SYSTEM_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "SystemFile",
    "type": "object",
    "required": ["dim", "poisson", "hamiltonian", "equilibrium"],
    "properties": {
        "name": {"type": "string"},
        "dim": {"type": "integer", "minimum": 1},
        "variables": {"type": "array", "items": {"type": "string", "pattern": "^[A-Za-z_][A-Za-z0-9_]*$"}},
        "poisson": {
            "oneOf": [
                {"type": "object", "required": ["kind", "algebra"],
                 "properties": {"kind": {"const": "lie_poisson"}, "algebra": {"type": "string"}}},
                {"type": "object", "required": ["kind", "A"],
                 "properties": {"kind": {"const": "r3_casimir"}, "A": {"type": "string"}}},
                {"type": "object", "required": ["kind", "matrix"],
                 "properties": {"kind": {"const": "structure_matrix"},
                                "matrix": {"type": "array",
                                           "items": {"type": "array",
                                                     "items": {"type": ["string", "number"]}}}}},
            ]
        },
        "hamiltonian": {"type": "string"},
        "parameters": {"type": "object", "additionalProperties": {"type": "number"}},
        "casimirs": {"type": "array", "items": {"type": "string"}},
        "equilibrium": _number_list,
        "algebra": {"type": "string"},
        "group": {"enum": ["SE2", "SE3"]},
        "t2_override": {
            "type": "object",
            "required": ["pieces"],
            "properties": {
                "pieces": {"type": "array", "items": {
                    "type": "object",
                    "properties": {"offset": _number_list,
                                   "tangent": {"type": "array", "items": _number_list},
                                   "note": {"type": "string"},
                                   "kind": {"enum": ["affine", "leaf"]}}}},
                "exact": {"type": "boolean"},
                "source": {"type": "string"},
                "cone": {"type": "array", "items": {
                    "type": "object", "required": ["kind"],
                    "properties": {"kind": {"enum": ["subspace", "quadric"]},
                                   "basis": {"type": "array", "items": _number_list},
                                   "matrix": {"type": "array", "items": _number_list}}}},
            },
        },
    },
}

_verdict = {
    "type": "object",
    "required": ["value", "criterion", "witness", "notes"],
    "properties": {"value": {"enum": ["Stable", "LeafwiseStable", "InstabilityEvidence", "Inconclusive"]},
                   "criterion": {"type": "string"},
                   "witness": {"type": "object"},
                   "notes": {"type": "array", "items": {"type": "string"}}},
}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "StabilityReport",
    "type": "object",
    "required": ["schema_version", "kind", "system", "equilibrium", "verdict"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "kind": {"const": "stability_report"},
        "system": {"type": "string"},
        "equilibrium": _number_list,
        "verdict": _verdict,
        "reduced": _verdict,
        "euclidean": _verdict,
        "reduced_error": {"type": "object"},
    },
}

PROBE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "ProbeReport",
    "type": "object",
    "required": ["schema_version", "kind", "radius", "t_final", "seed", "per_delta", "trials", "caveat"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "kind": {"const": "probe"},
        "system": {"type": "string"},
        "equilibrium": _number_list,
        "radius": {"type": "number"},
        "t_final": {"type": "number"},
        "seed": {"type": "integer"},
        "tol": {"type": "number"},
        "per_delta": {"type": "array", "items": {
            "type": "object", "required": ["delta", "trials", "confined", "confinement_fraction"],
            "properties": {"delta": {"type": "number"}, "trials": {"type": "integer"},
                           "confined": {"type": "integer"},
                           "confinement_fraction": {"type": "number", "minimum": 0, "maximum": 1}}}},
        "trials": {"type": "array", "items": {
            "type": "object", "required": ["index", "delta", "direction", "max_distance", "escape_time"],
            "properties": {"index": {"type": "integer"}, "delta": {"type": "number"},
                           "direction": _number_list, "max_distance": {"type": "number"},
                           "escape_time": {"type": ["number", "null"]}}}},
        "caveat": {"type": "string"},
    },
}

SCHEMAS = {"system": SYSTEM_SCHEMA, "report": REPORT_SCHEMA, "probe": PROBE_SCHEMA}


class CliError(Exception):
    def __init__(self, kind, message, code=2):
        super().__init__(message)
        self.kind = kind
        self.code = code


# --------------------------------------------------------------------------- helpers


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise CliError("validation", f"not a comma-separated list of numbers: {text!r}") from None


def read_system(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise CliError("io", f"cannot read {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise CliError("validation", f"{path} is not valid JSON: {exc}") from None
    try:
        jsonschema.validate(doc, SYSTEM_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise CliError("validation", f"{path}: {exc.message}") from None
    return catalog.load_system(doc)


def build_report(loaded, seed=0) -> dict:
    res = catalog.analyze_loaded(loaded, seed)
    report = {"schema_version": SCHEMA_VERSION, "kind": "stability_report",
              "system": loaded.system.name, "equilibrium": loaded.equilibrium.tolist(),
              "verdict": res["verdict"].to_json()}
    for key in ("reduced", "euclidean"):
        if key in res:
            report[key] = res[key].to_json()
    if "reduced_error" in res:
        report["reduced_error"] = res["reduced_error"]
    jsonschema.validate(report, REPORT_SCHEMA)
    return report


def _write(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
        return
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError("io", f"cannot write {path}: {exc.strerror or exc}") from None


def _dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False, default=_nan_safe)


def _nan_safe(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not serializable: {type(obj).__name__}")


# --------------------------------------------------------------------------- commands


def cmd_analyze(args):
    report = build_report(read_system(args.system), args.seed)
    _write(args.report, _dumps(report))
    return 0


def cmd_simulate(args):
    loaded = read_system(args.system)
    x0 = _floats(args.x0) if args.x0 else loaded.equilibrium.tolist()
    if len(x0) != loaded.system.dim:
        raise CliError("validation", f"--x0 has {len(x0)} entries, expected {loaded.system.dim}")
    samples = None
    if args.samples:
        samples = np.linspace(0.0, args.t_final, args.samples)
    rec = dynamics.integrate(loaded.system, x0, args.t_final, tol=args.tol, sample_times=samples)
    _write(args.out, rec.to_csv())
    sys.stderr.write(json.dumps(rec.summary(), default=_nan_safe) + "\n")
    return 0


def cmd_probe(args):
    loaded = read_system(args.system)
    x_e = loaded.equilibrium
    rep = dynamics.probe(loaded.system, x_e, args.radius, _floats(args.deltas), args.trials,
                         args.t_final, seed=args.seed, workers=args.workers)
    jsonschema.validate(rep, PROBE_SCHEMA)
    _write(args.out, dynamics.probe_json(rep))
    return 0


def _params(pairs):
    out = {}
    for item in pairs or ():
        key, _, val = item.partition("=")
        if not _:
            raise CliError("validation", f"expected NAME=VALUE, got {item!r}")
        out[key] = _floats(val)[0] if val else 0.0
    return out


def cmd_catalog(args):
    if args.action == "list":
        for name in catalog.names():
            e = catalog.get(name)
            tag = "" if e.runnable else "  [documentation only]"
            sys.stdout.write(f"{name:16s} {e.title}{tag}\n")
        return 0
    if args.action == "show":
        e = catalog.get(args.names[0]) if args.names else None
        if e is None:
            raise CliError("validation", "catalog show needs an entry name")
        info = {"name": e.name, "title": e.title, "citation": e.citation, "runnable": e.runnable,
                "grid": e.grid, "probe": e.probe}
        if e.runnable:
            info["system"] = e.document()
        else:
            info["reason"] = e.reason
        _write(None, _dumps(info))
        return 0
    if args.action == "export":
        if not args.names:
            raise CliError("validation", "catalog export needs an entry name")
        doc = catalog.export(args.names[0], _params(args.param))
        _write(args.out, _dumps(doc))
        return 0
    rows = catalog.run_expectations(args.names or None, budget=args.budget, seed=args.seed,
                                    probes=not args.no_probe)
    bad = False
    for r in rows:
        line = f"{r['status']:10s} {r['name']:16s} points={r['points']}"
        if r.get("elapsed") is not None:
            line += f" {r['elapsed']:.2f}s"
        sys.stdout.write(line + "\n")
        for m in r["mismatches"]:
            sys.stdout.write("    " + json.dumps(m, default=_nan_safe) + "\n")
        if r["status"] == "ERROR":
            sys.stdout.write("    " + json.dumps(r["error"]) + "\n")
        bad = bad or r["status"] in ("FAIL", "ERROR")
    return 1 if bad else 0


def build_parser():
    ap = argparse.ArgumentParser(prog="poisson-stab",
                                 description="Stability of equilibria of Poisson systems.")
    sub = ap.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="run the stability pipeline on a system file")
    a.add_argument("--system", required=True)
    a.add_argument("--report", help="output path (default stdout)")
    a.add_argument("--seed", type=int, default=0)
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", help="integrate a trajectory and write CSV")
    s.add_argument("--system", required=True)
    s.add_argument("--x0", help="comma-separated initial state (default: the equilibrium)")
    s.add_argument("--t-final", type=float, required=True)
    s.add_argument("--tol", type=float, default=1e-10)
    s.add_argument("--samples", type=int, default=0, help="uniform output samples (default: steps)")
    s.add_argument("--out", help="CSV path (default stdout)")
    s.set_defaults(func=cmd_simulate)

    p = sub.add_parser("probe", help="Monte-Carlo confinement probe")
    p.add_argument("--system", required=True)
    p.add_argument("--radius", type=float, required=True)
    p.add_argument("--deltas", required=True)
    p.add_argument("--trials", type=int, default=16)
    p.add_argument("--t-final", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="JSON path (default stdout)")
    p.set_defaults(func=cmd_probe)

    c = sub.add_parser("catalog", help="builtin examples")
    c.add_argument("action", choices=["list", "show", "check", "export"])
    c.add_argument("names", nargs="*")
    c.add_argument("--budget", type=float, help="seconds; entries beyond it are SKIPPED")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--no-probe", action="store_true")
    c.add_argument("--param", action="append", help="NAME=VALUE for export")
    c.add_argument("--out")
    c.set_defaults(func=cmd_catalog)
    return ap


_NUMERICAL = (DomainError, InconsistentRank, NearSingular, StepSizeUnderflow)


def _fail(kind, message, code):
    sys.stderr.write(json.dumps({"kind": kind, "message": message}) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 2
    try:
        return args.func(args)
    except CliError as exc:
        return _fail(exc.kind, str(exc), exc.code)
    except _NUMERICAL as exc:
        return _fail(exc.kind, str(exc), 3)
    except PoissonStabError as exc:
        return _fail(exc.kind, str(exc), 2)
    except (ValueError, KeyError) as exc:
        return _fail("validation", str(exc), 2)
    except FloatingPointError as exc:
        return _fail("numerical", str(exc), 3)


if __name__ == "__main__":
    sys.exit(main())
