"""Builtin example systems with expected verdicts, and the JSON system loader.

Every entry is stored as a JSON system template, so ``catalog check`` and
``analyze`` on an exported entry go through the same loader.
"""

from __future__ import annotations

import copy
import difflib
import itertools
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import dynamics, stability
from .algebra import get_algebra
from .errors import DimensionMismatch, NotFound, PoissonStabError
from .expr import parse
from .leafspace import t2_from_override
from .poisson import HamiltonianSystem, lie_poisson, r3_casimir, structure_matrix

# --------------------------------------------------------------------------- loader


@dataclass
class LoadedSystem:
    system: HamiltonianSystem
    equilibrium: np.ndarray
    t2_override: dict | None
    algebra: str | None
    group: str | None
    doc: dict


def load_system(doc: dict) -> LoadedSystem:
    """Build a system from its JSON document (already schema-validated)."""
    dim = int(doc["dim"])
    params = {k: float(v) for k, v in doc.get("parameters", {}).items()}
    names = doc.get("variables")
    if names is not None and len(names) != dim:
        raise DimensionMismatch(f"{len(names)} variable names for dimension {dim}")

    def ex(text):
        return parse(text, dim, params, names)

    casimirs = [ex(c) for c in doc.get("casimirs", [])]
    pdoc = doc["poisson"]
    kind = pdoc["kind"]
    algebra = doc.get("algebra")
    if kind == "lie_poisson":
        alg = get_algebra(pdoc["algebra"])
        if alg.dim != dim:
            raise DimensionMismatch(f"algebra {alg.name} has dimension {alg.dim}, not {dim}")
        ps = lie_poisson(alg, casimirs)
        algebra = algebra or alg.name
    elif kind == "r3_casimir":
        if dim != 3:
            raise DimensionMismatch("r3_casimir structures live on R^3")
        A = ex(pdoc["A"])
        ps = r3_casimir(A, casimirs if casimirs else [A])
    else:
        ps = structure_matrix(pdoc["matrix"], dim, params, names, casimirs)
    h = ex(doc["hamiltonian"])
    sys = HamiltonianSystem(ps, h, params, doc.get("name", ""))
    x_e = np.asarray(doc["equilibrium"], dtype=float)
    if len(x_e) != dim:
        raise DimensionMismatch(f"equilibrium has length {len(x_e)}, expected {dim}")
    return LoadedSystem(sys, x_e, doc.get("t2_override"), algebra, doc.get("group"), doc)


def t2_for(loaded: LoadedSystem):
    if loaded.t2_override is None:
        return None
    from .leafspace import leaf_tangent
    lt = leaf_tangent(loaded.system.structure, loaded.equilibrium)
    return t2_from_override(loaded.t2_override, loaded.equilibrium, lt,
                            source=loaded.t2_override.get("source", "user_override"))


def analyze_loaded(loaded: LoadedSystem, seed: int = 0) -> dict:
    """All verdicts for a loaded system: Poisson-level plus, when the system
    carries a group, the reduced Euclidean criteria."""
    sys = loaded.system
    out = {}
    v = stability.analyze(sys, loaded.equilibrium, t2=t2_for(loaded), seed=seed)
    out["verdict"] = v
    if loaded.group:
        out["euclidean"] = stability.euclidean_criteria(loaded.group, sys.h, loaded.equilibrium)
    if loaded.algebra and sys.structure.kind == "lie_poisson":
        try:
            out["reduced"] = stability.reduced_energy_momentum(get_algebra(loaded.algebra), sys.h,
                                                               loaded.equilibrium)
        except PoissonStabError as exc:
            out["reduced_error"] = {"kind": exc.kind, "message": str(exc)}
    return out


# --------------------------------------------------------------------------- entries


@dataclass
class CatalogEntry:
    name: str
    title: str
    citation: str
    template: dict
    defaults: dict
    grid: list
    expected: Callable | None = None
    probe: dict | None = None
    extra: Callable | None = None
    runnable: bool = True
    reason: str = ""
    overrides: Callable | None = field(default=None, repr=False)

    def document(self, params: dict | None = None) -> dict:
        """Concrete JSON system document for a parameter point."""
        p = dict(self.defaults)
        p.update(params or {})
        doc = copy.deepcopy(self.template)
        doc["parameters"] = {k: float(v) for k, v in p.items() if k in doc.get("parameters", p)}
        if callable(doc.get("equilibrium")):
            doc["equilibrium"] = [float(v) for v in doc["equilibrium"](p)]
        if self.overrides is not None:
            doc["t2_override"] = self.overrides(p)
        return doc

    def build(self, params: dict | None = None) -> LoadedSystem:
        if not self.runnable:
            raise PoissonStabError(f"{self.name} is documentation only: {self.reason}")
        return load_system(self.document(params))


def _plane_pieces(vectors_list, dim=3, exact=True):
    return {"pieces": [{"offset": [0.0] * dim, "tangent": vs} for vs in vectors_list],
            "exact": exact, "source": "catalogue"}


def _sl2_linear_expect(p):
    s = p["xi1"] ** 2 + p["xi2"] ** 2 - p["xi3"] ** 2
    if s < 0:
        return {"value": stability.STABLE}
    if s > 0:
        return {"value": stability.EVIDENCE}
    return {"value": stability.LEAFWISE}


def _sl2_quadratic_expect(p):
    a, b, c = p["a"], p["b"], p["c"]
    if c > max(-a, -b) or c < min(-a, -b):
        return {"value": stability.STABLE}
    return {"value": stability.LEAFWISE}


def _rigid_expect(p):
    i1 = p["I1"]
    if i1 >= max(p["I2"], p["I3"]) or i1 <= min(p["I2"], p["I3"]):
        return {"value": stability.STABLE}
    return {"value": stability.EVIDENCE}


def _se2_axis_expect(p):
    c, b = p["c"], p["b"]
    value = stability.STABLE if (c != 0 or b != 0) else stability.LEAFWISE
    if c != 0:
        euclid = stability.INCONCLUSIVE
    else:
        euclid = stability.STABLE if b != 0 else stability.INCONCLUSIVE
    return {"value": value, "euclidean": euclid}


def _threeplanes_single(entry, p):
    """The plain (one full-neighbourhood piece) run must stay inconclusive."""
    from .leafspace import single_piece
    loaded = entry.build(p)
    t2 = single_piece(t2_for(loaded))
    v = stability.t2_energy_casimir(loaded.system, loaded.equilibrium, t2)
    return {"single_piece": v.value}


def _threeplanes_extra_expect(p):
    return {"single_piece": stability.INCONCLUSIVE}


def _rsdr_extra(entry, p):
    loaded = entry.build(p)
    v = stability.reduced_energy_momentum(get_algebra("rsdr"), loaded.system.h, loaded.equilibrium)
    return {"reduced": v.value, "reduced_wild": "wild_witness" in v.witness}


def _grid(**axes):
    keys = list(axes)
    return [dict(zip(keys, vals)) for vals in itertools.product(*(axes[k] for k in keys))]


def _build_entries():
    entries = []
    add = entries.append
    lp = lambda name: {"kind": "lie_poisson", "algebra": name}  # noqa: E731

    add(CatalogEntry(
        "so3_any", "so(3)*, origin, arbitrary Hamiltonian",
        "so(3)*: the origin is a point leaf equal to its own T2-set",
        {"name": "so3_any", "dim": 3, "poisson": lp("so3"),
         "hamiltonian": "a*x + (x^2 + 2*y^2 + 3*z^2)/2 + b*x*y*z", "parameters": {"a": 1.0, "b": 0.0},
         "casimirs": ["x^2 + y^2 + z^2"], "equilibrium": [0.0, 0.0, 0.0]},
        {"a": 1.0, "b": 0.0}, _grid(a=[-1.0, 0.0, 2.0], b=[0.0, 1.0]),
        lambda p: {"value": stability.STABLE},
        probe={"params": {"a": 1.0, "b": 1.0}, "radius": 0.1, "deltas": [0.01], "trials": 16,
               "t_final": 50.0, "expect": "confined"}))

    add(CatalogEntry(
        "so3_rigid_body", "free rigid body on so(3)*",
        "so(3)*: nonzero momenta are regular points",
        {"name": "so3_rigid_body", "dim": 3, "poisson": lp("so3"),
         "hamiltonian": "(x^2/I1 + y^2/I2 + z^2/I3)/2",
         "parameters": {"I1": 1.0, "I2": 2.0, "I3": 3.0},
         "casimirs": ["(x^2 + y^2 + z^2)/2"], "equilibrium": [1.0, 0.0, 0.0]},
        {"I1": 1.0, "I2": 2.0, "I3": 3.0},
        [dict(zip(("I1", "I2", "I3"), perm)) for perm in itertools.permutations((1.0, 2.0, 3.0))],
        _rigid_expect))

    add(CatalogEntry(
        "se2_axis", "se(2)*, point on the z-axis",
        "se(2)*: the T2-set is the z-axis and rotational generators are wild",
        {"name": "se2_axis", "dim": 3, "poisson": lp("se2"), "group": "SE2",
         "hamiltonian": "c*z + (x^2 + y^2)/2 + b*z^2/2", "parameters": {"c": 1.0, "b": 0.0},
         "casimirs": ["x^2 + y^2"], "equilibrium": [0.0, 0.0, 0.0]},
        {"c": 1.0, "b": 0.0}, _grid(c=[-1.0, 0.0, 1.0], b=[-1.0, 0.0, 1.0]), _se2_axis_expect))

    add(CatalogEntry(
        "se2n1", "se(2)* blow-up Hamiltonian with one cylinder",
        "se(2)* blow-up with one factor: decided by the one-dimensional T2 test",
        {"name": "se2n1", "dim": 3, "poisson": lp("se2"),
         "hamiltonian": "z^2/2 + (x^2 + y^2)*(1 + z) + e*x*y", "parameters": {"e": 0.0},
         "casimirs": ["x^2 + y^2"], "equilibrium": lambda p: [0.0, 0.0, p["z0"]]},
        {"e": 0.0, "z0": 1.0}, _grid(e=[0.0, 0.5], z0=[-1.0, 0.0, 1.0]),
        lambda p: {"value": stability.STABLE}))

    add(CatalogEntry(
        "sl2_linear", "sl(2)*, origin, linear Hamiltonian",
        "sl(2)*: stable when dh(0) points into the cone",
        {"name": "sl2_linear", "dim": 3, "poisson": lp("sl2"),
         "hamiltonian": "xi1*x + xi2*y + xi3*z", "parameters": {"xi1": 1.0, "xi2": 0.0, "xi3": 2.0},
         "casimirs": ["(x^2 + y^2 - z^2)/2"], "equilibrium": [0.0, 0.0, 0.0]},
        {"xi1": 1.0, "xi2": 0.0, "xi3": 2.0},
        _grid(xi1=[-2.0, 0.0, 1.0], xi2=[0.0, 1.0], xi3=[-2.0, 0.0, 1.0, 3.0]),
        _sl2_linear_expect,
        probe={"params": {"xi1": 1.0, "xi2": 0.0, "xi3": 2.0}, "radius": 0.1, "deltas": [0.01],
               "trials": 16, "t_final": 50.0, "expect": "confined"}))

    add(CatalogEntry(
        "sl2_quadratic", "sl(2)*, origin, diagonal quadratic Hamiltonian",
        "sl(2)*: a Casimir is needed; stable when c > -a and c > -b",
        {"name": "sl2_quadratic", "dim": 3, "poisson": lp("sl2"),
         "hamiltonian": "a*x^2 + b*y^2 + c*z^2", "parameters": {"a": 1.0, "b": 1.0, "c": 0.0},
         "casimirs": ["(x^2 + y^2 - z^2)/2"], "equilibrium": [0.0, 0.0, 0.0]},
        {"a": 1.0, "b": 1.0, "c": 0.0},
        _grid(a=[-2.0, -1.0, 0.0, 1.0, 2.0], b=[-2.0, -1.0, 0.0, 1.0, 2.0], c=[-2.0, -1.0, 0.0, 1.0, 2.0]),
        _sl2_quadratic_expect))

    se2p_matrix = [["0", "0", "y", "0", "0"], ["0", "0", "-x", "0", "0"], ["-y", "x", "0", "0", "0"],
                   ["0", "0", "0", "0", "1"], ["0", "0", "0", "-1", "0"]]
    add(CatalogEntry(
        "se2plus", "se(2)* x R^2 with a resonant coupling",
        "se(2)* x R^2: leafwise stable but unstable through a 1:1 resonance",
        {"name": "se2plus", "dim": 5, "variables": ["x", "y", "z", "q", "p"],
         "poisson": {"kind": "structure_matrix", "matrix": se2p_matrix},
         "hamiltonian": "a*z - q*y + (q^2 + p^2)/2", "parameters": {"a": 1.0},
         "casimirs": ["x^2 + y^2"], "equilibrium": [0.0] * 5},
        {"a": 1.0}, _grid(a=[0.5, 1.0, 2.0]), lambda p: {"value": stability.LEAFWISE},
        probe={"params": {"a": 1.0}, "radius": 0.1, "deltas": [0.01], "trials": 8,
               "t_final": 100.0, "expect": "escape"},
        overrides=lambda p: _plane_pieces([[[0, 0, 1, 0, 0], [0, 0, 0, 1, 0], [0, 0, 0, 0, 1]]], 5)))

    add(CatalogEntry(
        "twoplanes", "R^3 bracket with A = (x^2 - y^2)/2",
        "two planes: stable when a > b without Casimirs",
        {"name": "twoplanes", "dim": 3, "poisson": {"kind": "r3_casimir", "A": "(x^2 - y^2)/2"},
         "hamiltonian": "a*x^2 - b*y^2 + z^2", "parameters": {"a": 2.0, "b": 1.0},
         "casimirs": ["(x^2 - y^2)/2"], "equilibrium": [0.0, 0.0, 0.0]},
        {"a": 2.0, "b": 1.0}, _grid(a=[-2.0, -1.0, 0.0, 1.0, 2.0], b=[-2.0, -1.0, 0.0, 1.0, 2.0]),
        lambda p: {"value": stability.STABLE if p["a"] > p["b"] else stability.LEAFWISE},
        overrides=lambda p: _plane_pieces([[[1, 1, 0], [0, 0, 1]], [[1, -1, 0], [0, 0, 1]]])))

    add(CatalogEntry(
        "threeplanes", "R^3 bracket with A = (a^2 x^2 - y^2) y",
        "three planes: T2 pieces succeed where a single piece fails",
        {"name": "threeplanes", "dim": 3, "poisson": {"kind": "r3_casimir", "A": "(a^2*x^2 - y^2)*y"},
         "hamiltonian": "x^2 - y^2 + z^2", "parameters": {"a": 0.5},
         "casimirs": ["(a^2*x^2 - y^2)*y"], "equilibrium": [0.0, 0.0, 0.0]},
        {"a": 0.5}, _grid(a=[0.5, -0.5, 0.9, 1.0, 1.5]),
        lambda p: {"value": stability.STABLE if abs(p["a"]) < 1 else stability.LEAFWISE,
                   **_threeplanes_extra_expect(p)},
        extra=_threeplanes_single,
        overrides=lambda p: _plane_pieces([[[1, 0, 0], [0, 0, 1]], [[1, p["a"], 0], [0, 0, 1]],
                                           [[1, -p["a"], 0], [0, 0, 1]]])))

    add(CatalogEntry(
        "rsdr", "dual of the affine algebra R x| R, h = nu2",
        "affine algebra: generators are wild and the momentum drifts",
        {"name": "rsdr", "dim": 2, "poisson": lp("rsdr"), "hamiltonian": "y",
         "parameters": {"c": 0.0}, "casimirs": [], "equilibrium": lambda p: [p["c"], 0.0]},
        {"c": 0.0}, _grid(c=[0.0, 1.0]),
        lambda p: {"value": stability.LEAFWISE, "reduced": stability.INCONCLUSIVE, "reduced_wild": True},
        extra=_rsdr_extra,
        probe={"params": {"c": 0.0}, "radius": 0.1, "deltas": [0.01], "trials": 4, "t_final": 100.0,
               "directions": [[0.0, 1.0], [0.0, -1.0]], "expect": "escape"}))

    add(CatalogEntry(
        "se2_regular", "SE(2) relative equilibrium at a regular momentum",
        "SE(2), regular momentum: translation along the momentum",
        {"name": "se2_regular", "dim": 3, "poisson": lp("se2"), "group": "SE2",
         "hamiltonian": "(x^2/m1 + y^2/m2 + z^2)/2", "parameters": {"m1": 2.0, "m2": 1.0},
         "casimirs": ["x^2 + y^2"], "equilibrium": [1.0, 0.0, 0.0]},
        {"m1": 2.0, "m2": 1.0}, [{"m1": 2.0, "m2": 1.0}, {"m1": 1.0, "m2": 2.0}],
        lambda p: ({"value": stability.STABLE, "euclidean": stability.STABLE} if p["m1"] > p["m2"]
                   else {"value": stability.EVIDENCE, "euclidean": stability.INCONCLUSIVE})))

    add(CatalogEntry(
        "se3_nonregular", "SE(3) momentum with vanishing translational part",
        "SE(3), vanishing translational momentum: tame only without a rotational generator",
        {"name": "se3_nonregular", "dim": 6, "poisson": lp("se3"), "group": "SE3",
         "hamiltonian": "(x1^2 + 2*x2^2 + 3*x3^2)/2 + s*x3 + (x4^2 + x5^2 + x6^2)/2",
         "parameters": {"s": 0.0}, "casimirs": ["x4^2 + x5^2 + x6^2", "x1*x4 + x2*x5 + x3*x6"],
         "equilibrium": [0.0, 0.0, 1.0, 0.0, 0.0, 0.0]},
        {"s": 0.0}, _grid(s=[0.0, -3.0]),
        lambda p: {"euclidean": stability.INCONCLUSIVE if p["s"] != -3.0 else stability.STABLE,
                   "euclidean_case": "nonregular"}))

    add(CatalogEntry(
        "se3_regular", "SE(3) momentum with nonzero translational part",
        "SE(3), nonzero translational momentum: isotropy SO(2) x R",
        {"name": "se3_regular", "dim": 6, "poisson": lp("se3"), "group": "SE3",
         "hamiltonian": "(x1^2 + 2*x2^2 + 3*x3^2)/2 + (x4^2/m1 + x5^2/m2 + x6^2/m3)/2",
         "parameters": {"m1": 1.0, "m2": 2.0, "m3": 3.0},
         "casimirs": ["x4^2 + x5^2 + x6^2", "x1*x4 + x2*x5 + x3*x6"],
         "equilibrium": [0.0, 0.0, 0.0, 0.0, 0.0, 1.0]},
        {"m1": 1.0, "m2": 2.0, "m3": 3.0}, [{"m1": 1.0, "m2": 2.0, "m3": 3.0}],
        lambda p: {"euclidean_case": "regular", "iso_dim": 2}))

    add(CatalogEntry(
        "unnecessary", "torus quotient with a dense leaf", "leaf space whose T2-set depends on the neighbourhood",
        {}, {}, [], runnable=False,
        reason="quotient topology: the T2-set depends on the neighbourhood through leaf self-accumulation"))
    add(CatalogEntry(
        "nosmoothing", "sl(3)* at a subregular nilpotent", "singular T2-set without a smoothing",
        {}, {}, [], runnable=False, reason="no smoothing exists for this T2-set"))
    return {e.name: e for e in entries}


ENTRIES = _build_entries()


def names() -> list:
    return list(ENTRIES)


def get(name: str) -> CatalogEntry:
    try:
        return ENTRIES[name]
    except KeyError:
        close = difflib.get_close_matches(name, list(ENTRIES), n=1)
        raise NotFound(name, close[0] if close else None) from None


# --------------------------------------------------------------------------- expectations


def observe(entry: CatalogEntry, params: dict, seed: int = 0) -> dict:
    loaded = entry.build(params)
    res = analyze_loaded(loaded, seed)
    obs = {"value": res["verdict"].value, "criterion": res["verdict"].criterion}
    if "euclidean" in res:
        e = res["euclidean"]
        obs["euclidean"] = e.value
        obs["euclidean_case"] = e.witness.get("case")
        obs["iso_dim"] = e.witness.get("iso_dim")
    if entry.extra is not None:
        obs.update(entry.extra(entry, params))
    return obs


def run_probe(entry: CatalogEntry, seed: int = 0, workers=None) -> dict:
    pr = entry.probe
    loaded = entry.build(pr.get("params"))
    return dynamics.probe(loaded.system, loaded.equilibrium, pr["radius"], pr["deltas"], pr["trials"],
                          pr["t_final"], seed=seed, workers=workers, directions=pr.get("directions"))


def check_entry(entry: CatalogEntry, seed: int = 0, probes: bool = True) -> dict:
    t0 = time.perf_counter()
    row = {"name": entry.name, "points": 0, "mismatches": []}
    if not entry.runnable:
        row.update(status="UNRUNNABLE", reason=entry.reason, elapsed=0.0)
        return row
    try:
        for params in entry.grid:
            exp = {k: v for k, v in entry.expected(dict(entry.defaults, **params)).items() if v is not None}
            obs = observe(entry, params, seed)
            row["points"] += 1
            bad = {k: {"expected": v, "observed": obs.get(k)} for k, v in exp.items() if obs.get(k) != v}
            if bad:
                row["mismatches"].append({"params": params, "diff": bad})
        if probes and entry.probe is not None:
            rep = run_probe(entry, seed)
            frac = min(d["confinement_fraction"] for d in rep["per_delta"])
            want = entry.probe["expect"]
            ok = frac == 1.0 if want == "confined" else frac < 1.0
            row["probe"] = {"expect": want, "confinement_fraction": frac, "ok": ok}
            if not ok:
                row["mismatches"].append({"probe": row["probe"]})
        row["status"] = "FAIL" if row["mismatches"] else "PASS"
    except PoissonStabError as exc:
        row.update(status="ERROR", error={"kind": exc.kind, "message": str(exc)})
    row["elapsed"] = time.perf_counter() - t0
    return row


def run_expectations(selection=None, budget: float | None = None, seed: int = 0,
                     probes: bool = True) -> list:
    """PASS/FAIL/SKIPPED rows for the selected entries (all when None)."""
    chosen = [get(n) for n in selection] if selection else list(ENTRIES.values())
    rows = []
    start = time.perf_counter()
    for entry in chosen:
        if budget is not None and (budget <= 0 or time.perf_counter() - start > budget):
            rows.append({"name": entry.name, "status": "SKIPPED", "points": 0, "mismatches": []})
            continue
        rows.append(check_entry(entry, seed, probes))
    return rows


def export(name: str, params: dict | None = None) -> dict:
    entry = get(name)
    if not entry.runnable:
        raise PoissonStabError(f"{name} is documentation only: {entry.reason}")
    return entry.document(params)
