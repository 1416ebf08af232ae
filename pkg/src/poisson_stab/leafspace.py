"""T2-sets with their smoothings, and the tameness classification of generators.

T2-sets are data, never computed from first principles. They come from three
sources: the sampled regularity test (the T2-set is then the leaf itself), a
small rule table for the catalogued Lie algebras, and user overrides.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import LieAlgebra, TransverseData, get_algebra, isotropy, null_space, numerical_rank
from .errors import InvalidT2, NotAGenerator, NotCatalogued
from .poisson import HamiltonianSystem, PoissonStructure, lie_poisson

GATE = 1e-9


def orth(m, rtol=1e-10):
    """Orthonormal basis of the column span of ``m``."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.size == 0 or not np.any(m):
        return np.zeros((m.shape[0], 0))
    u, s, _ = np.linalg.svd(m, full_matrices=False)
    return u[:, : int(np.sum(s > rtol * s[0]))]


def _cols(n, vectors):
    if vectors is None or len(vectors) == 0:
        return np.zeros((n, 0))
    return np.asarray(vectors, dtype=float).reshape(-1, n).T.copy()


@dataclass(frozen=True, eq=False)
class AffinePiece:
    """offset + span(tangent). ``kind == "leaf"`` marks a (curved) symplectic leaf
    represented by its tangent space at the base point."""

    offset: np.ndarray
    tangent: np.ndarray
    note: str = ""
    kind: str = "affine"

    @property
    def dim(self) -> int:
        return self.tangent.shape[1]


@dataclass(frozen=True, eq=False)
class ConeComponent:
    """A component of the tangent cone of a T2-set at its base point.

    ``subspace``: span(basis). ``quadric``: {basis @ u : u^T Q u = 0}.
    """

    kind: str
    basis: np.ndarray
    Q: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class T2Description:
    base: np.ndarray
    pieces: tuple
    tangent_span: np.ndarray
    contained_exactly: bool
    source: str
    cone: tuple
    leaf_tangent: np.ndarray
    regular: bool = False
    notes: tuple = field(default=())

    @property
    def dim(self) -> int:
        return len(self.base)

    def to_json(self):
        return {
            "base": self.base.tolist(),
            "pieces": [{"offset": p.offset.tolist(), "tangent": p.tangent.T.tolist(),
                        "note": p.note, "kind": p.kind} for p in self.pieces],
            "tangent_span": self.tangent_span.T.tolist(),
            "contained_exactly": self.contained_exactly,
            "source": self.source,
            "regular": self.regular,
        }


def make_t2(base, pieces, exact, source, leaf_tangent, cone=None, regular=False, notes=()):
    base = np.asarray(base, dtype=float)
    n = len(base)
    pieces = tuple(pieces)
    if cone is None:
        cone = tuple(ConeComponent("subspace", p.tangent) for p in pieces
                     if np.linalg.norm(p.offset - base) <= 1e-12 * (1 + np.linalg.norm(base)))
    cone = tuple(cone)
    spans = [leaf_tangent] + [p.tangent for p in pieces] + [c.basis for c in cone]
    span = orth(np.hstack(spans)) if spans else np.zeros((n, 0))
    t2 = T2Description(base, pieces, span, bool(exact), source, cone, leaf_tangent, regular, tuple(notes))
    _validate(t2)
    return t2


def _validate(t2: T2Description):
    n = t2.dim
    tol = 1e-9 * (1 + np.linalg.norm(t2.base))
    inside = False
    for p in t2.pieces:
        if p.offset.shape != (n,) or p.tangent.shape[0] != n:
            raise InvalidT2("piece dimensions do not match the base point")
        d = t2.base - p.offset
        if p.dim:
            d = d - p.tangent @ np.linalg.lstsq(p.tangent, d, rcond=None)[0]
        if np.linalg.norm(d) <= tol:
            inside = True
    if not inside:
        raise InvalidT2("base point lies in no piece")
    lt = t2.leaf_tangent
    if lt.shape[1]:
        own = [p.tangent for p in t2.pieces] + [c.basis for c in t2.cone]
        span = orth(np.hstack(own)) if own else np.zeros((n, 0))
        resid = lt - span @ (span.T @ lt)
        if np.max(np.abs(resid)) > 1e-9:
            raise InvalidT2("leaf tangent is not contained in the T2 tangent span")


def leaf_tangent(ps: PoissonStructure, x) -> np.ndarray:
    return orth(ps.matrix_at(x))


def sampled_regular(ps: PoissonStructure, x, samples: int = 64, seed: int = 0) -> bool:
    x = np.asarray(x, dtype=float)
    base = numerical_rank(ps.matrix_at(x))
    rng = np.random.Generator(np.random.Philox(key=seed))
    r = 1e-3 * max(1.0, float(np.linalg.norm(x)))
    for _ in range(samples):
        d = rng.standard_normal(len(x))
        d *= r * rng.random() ** (1.0 / len(x)) / np.linalg.norm(d)
        if numerical_rank(ps.matrix_at(x + d)) != base:
            return False
    return True


def _r3_quadratic_algebra(ps: PoissonStructure):
    """Recognise A = (x^2 + y^2 + eps z^2)/2 as so3, se2 or sl2."""
    rng = np.random.Generator(np.random.Philox(key=7))
    pts = rng.uniform(-1, 1, (6, 3))
    for eps, name in ((1.0, "so3"), (0.0, "se2"), (-1.0, "sl2")):
        ok = True
        for p in pts:
            want = 0.5 * (p[0] ** 2 + p[1] ** 2 + eps * p[2] ** 2)
            if abs(ps.A.evaluate(p) - want) > 1e-12 * (1 + abs(want)):
                ok = False
                break
        if ok:
            return name
    return None


def _algebra_rule(name, x):
    """Catalogued T2 data at nonregular points: (pieces, exact, cone, note) or None."""
    n = len(x)
    scale = 1e-12 * (1 + np.linalg.norm(x))
    eye = np.eye(n)
    if name == "so3" and np.linalg.norm(x) <= scale:
        return [AffinePiece(x, np.zeros((3, 0)), "point leaf")], True, None, "isolated point leaf"
    if name in ("se2", "se2_plus_r2") and np.linalg.norm(x[:2]) <= scale:
        return [AffinePiece(x, eye[:, 2:3], "z-axis")], True, None, "axis of point leaves"
    if name == "sl2" and np.linalg.norm(x) <= scale:
        cone = [ConeComponent("quadric", eye, np.diag([1.0, 1.0, -1.0]))]
        return ([AffinePiece(x, eye, "full neighbourhood smoothing of the cone A=0")], False, cone,
                "cone A=0")
    if name == "rsdr" and abs(x[1]) <= scale:
        return [AffinePiece(x, eye, "full neighbourhood")], True, None, "line of point leaves"
    if name == "se3" and np.linalg.norm(x[3:]) <= scale:
        if np.linalg.norm(x[:3]) <= scale:
            return [AffinePiece(x, eye, "full neighbourhood")], False, None, "origin"
        return ([AffinePiece(x, eye[:, :3], "so(3)* + 0")], True, None,
                "momenta with vanishing translational part")
    return None


def t2_description(sys, x_e, override=None) -> T2Description:
    """T2 data at ``x_e`` for a HamiltonianSystem or PoissonStructure."""
    ps = sys.structure if isinstance(sys, HamiltonianSystem) else sys
    x = np.asarray(x_e, dtype=float)
    ps._check(x)
    lt = leaf_tangent(ps, x)
    if override is not None:
        return t2_from_override(override, x, lt)
    if sampled_regular(ps, x):
        piece = AffinePiece(x, lt, "symplectic leaf", "leaf")
        return make_t2(x, [piece], True, "regular", lt, regular=True)
    name = None
    if ps.kind == "lie_poisson" and ps.algebra.catalogued:
        name = ps.algebra.name
    elif ps.kind == "r3_casimir":
        name = _r3_quadratic_algebra(ps)
    rule = _algebra_rule(name, x) if name else None
    if rule is None:
        raise NotCatalogued(f"no T2 data for this structure at {x.tolist()}; supply t2_override "
                            "or fall back to probes")
    pieces, exact, cone, note = rule
    return make_t2(x, pieces, exact, "catalogue", lt, cone=cone, notes=(note,))


def t2_from_override(spec: dict, x_e, lt, source="user_override") -> T2Description:
    x = np.asarray(x_e, dtype=float)
    n = len(x)
    pieces = []
    for p in spec["pieces"]:
        off = np.asarray(p.get("offset", x), dtype=float)
        pieces.append(AffinePiece(off, _cols(n, p.get("tangent", [])), p.get("note", ""),
                                  p.get("kind", "affine")))
    cone = None
    if spec.get("cone"):
        cone = []
        for c in spec["cone"]:
            basis = _cols(n, c["basis"]) if c.get("basis") is not None else np.eye(n)
            q = np.asarray(c["matrix"], dtype=float) if c["kind"] == "quadric" else None
            cone.append(ConeComponent(c["kind"], basis, q))
    return make_t2(x, pieces, spec.get("exact", False), spec.get("source", source), lt, cone=cone,
                   regular=bool(spec.get("regular", False)), notes=tuple(spec.get("notes", ())))


def single_piece(t2: T2Description) -> T2Description:
    """Same T2 data smoothed by one full neighbourhood (the plain Energy-Casimir setting)."""
    n = t2.dim
    piece = AffinePiece(t2.base, np.eye(n), "full neighbourhood")
    return T2Description(t2.base, (piece,), orth(np.eye(n)), False, t2.source, t2.cone,
                         t2.leaf_tangent, t2.regular, t2.notes + ("single piece",))


# --------------------------------------------------------------------------- classification


@dataclass(frozen=True)
class GeneratorClassification:
    xi: np.ndarray
    tame: bool
    very_tame: bool
    witness: np.ndarray | None = None

    @property
    def wild(self) -> bool:
        return not self.tame

    def to_json(self):
        return {"xi": self.xi.tolist(), "tame": self.tame, "very_tame": self.very_tame,
                "witness": None if self.witness is None else self.witness.tolist()}


def classify_generator(t2: T2Description, xi) -> GeneratorClassification:
    xi = np.asarray(xi, dtype=float)
    scale = GATE * max(1.0, float(np.linalg.norm(xi)))
    if t2.leaf_tangent.shape[1] and np.linalg.norm(t2.leaf_tangent.T @ xi) > scale:
        raise NotAGenerator("covector does not annihilate the tangent space of the leaf")
    pair = t2.tangent_span.T @ xi
    if np.linalg.norm(pair) > scale:
        w = t2.tangent_span @ pair
        return GeneratorClassification(xi, False, False, w / np.linalg.norm(w))
    very = True
    for p in t2.pieces:
        if p.kind == "leaf":
            continue
        if abs(xi @ (p.offset - t2.base)) > scale or (p.dim and np.linalg.norm(p.tangent.T @ xi) > scale):
            very = False
    return GeneratorClassification(xi, True, very, None)


def tame_subspace(t2: T2Description) -> np.ndarray:
    """Orthonormal basis of the tame covectors (the annihilator of tangent_span)."""
    if t2.tangent_span.shape[1] == 0:
        return np.eye(t2.dim)
    return null_space(t2.tangent_span.T)


# --------------------------------------------------------------------------- spanning condition


def _intersect(a, b):
    if a.shape[1] == 0 or b.shape[1] == 0:
        return np.zeros((a.shape[0], 0))
    ns = null_space(np.hstack([a, -b]))
    return orth(a @ ns[: a.shape[1]]) if ns.shape[1] else np.zeros((a.shape[0], 0))


def _quadric_samples(qw, rng, count):
    r = qw.shape[0]
    out = []
    for _ in range(count * 4):
        u = rng.standard_normal(r)
        e = rng.standard_normal(r)
        a = e @ qw @ e
        b = 2 * u @ qw @ e
        c = u @ qw @ u
        if abs(a) < 1e-14:
            continue
        disc = b * b - 4 * a * c
        if disc < 0:
            continue
        for t in ((-b + np.sqrt(disc)) / (2 * a), (-b - np.sqrt(disc)) / (2 * a)):
            out.append(u + t * e)
        if len(out) >= count:
            break
    return out


def check_spanning_condition(t2: T2Description, piece_index: int, samples: int = 40) -> bool:
    """Whether v (x) v over the tangent cone inside the piece spans its symmetric square."""
    piece = t2.pieces[piece_index]
    tb = orth(piece.tangent)
    k = tb.shape[1]
    if k == 0:
        return True
    rng = np.random.Generator(np.random.Philox(key=piece_index))
    vecs = []
    for comp in t2.cone:
        if comp.kind == "subspace":
            w = _intersect(orth(comp.basis), tb)
            cols = [w[:, i] for i in range(w.shape[1])]
            vecs += cols
            vecs += [cols[i] + cols[j] for i in range(len(cols)) for j in range(i + 1, len(cols))]
        else:
            b = comp.basis
            w = _intersect(orth(b), tb)
            if w.shape[1] == 0:
                continue
            coef = np.linalg.lstsq(b, w, rcond=None)[0]
            qw = coef.T @ comp.Q @ coef
            vecs += [w @ u for u in _quadric_samples(qw, rng, samples)]
    if not vecs:
        return False
    iu = np.triu_indices(k)
    rows = []
    for v in vecs:
        c = tb.T @ v
        nrm = np.linalg.norm(c)
        if nrm == 0:
            continue
        c = c / nrm
        rows.append(np.outer(c, c)[iu])
    if not rows:
        return False
    return numerical_rank(np.array(rows), 1e-9) == k * (k + 1) // 2


# --------------------------------------------------------------------------- wild momenta


def wild_momenta(alg: LieAlgebra, mu, td: TransverseData | None = None):
    """Basis (covectors in g*) of the wild momenta at ``mu``, with the isotropy data.

    Columns lie in n_mu^o, identified with g_mu*.
    """
    mu = np.asarray(mu, dtype=float)
    td = td or isotropy(alg, mu)
    t2 = t2_description(lie_poisson(alg), mu)
    k = td.iso_dim
    if t2.regular:
        return np.zeros((alg.dim, 0)), td, t2
    # very tame generators inside g_mu: xi = g_mu @ a with <tangent_span, xi> = 0
    m = t2.tangent_span.T @ td.g_mu
    tame_coef = null_space(m) if m.size else np.eye(k)
    if tame_coef.shape[1] == 0:
        wild_coef = np.eye(k)
    else:
        wild_coef = null_space(tame_coef.T) if tame_coef.shape[1] < k else np.zeros((k, 0))
    return td.n_ann @ wild_coef, td, t2


def wild_momenta_by_name(name: str, mu):
    return wild_momenta(get_algebra(name), mu)[0]
