"""Poisson structures, brackets, Hamiltonian vector fields and Casimir checks.

Every structure is reduced internally to a matrix field P(x) with the
Hamiltonian vector field xdot = P(x) dh(x). The bracket follows the
convention of each representation:

* structure matrix:  {f, g} = df . Pi dg
* R^3 with generator A:  {f, g} = dA . (df x dg)
* Lie-Poisson:  {f, g}(x) = -<x, [df, dg]>
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .algebra import LieAlgebra, numerical_rank
from .errors import DimensionMismatch, InconsistentRank, NotPoisson
from .expr import Expression, parse

KINDS = ("structure_matrix", "lie_poisson", "r3_casimir")


def hat(v):
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def _rng(seed):
    return np.random.Generator(np.random.Philox(key=seed))


@dataclass(frozen=True, eq=False)
class PoissonStructure:
    kind: str
    dim: int
    matrix: tuple = ()
    algebra: LieAlgebra | None = None
    A: Expression | None = None
    casimirs: tuple = ()
    names: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown Poisson kind {self.kind!r}")
        object.__setattr__(self, "casimirs", tuple(self.casimirs))
        for c in self.casimirs:
            if c.dim != self.dim:
                raise DimensionMismatch("Casimir dimension does not match the structure")

    # ----------------------------------------------------------------- P(x)

    def matrix_at(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "lie_poisson":
            return self.algebra.poisson_tensor(x)
        if self.kind == "r3_casimir":
            return hat(self.A.gradient(x)[1])
        base, varying = self._compiled
        p = base.copy()
        args = tuple(x.tolist())
        for i, j, fn in varying:
            p[i, j] = fn(args)
        return p

    @cached_property
    def _compiled(self):
        n = self.dim
        base = np.zeros((n, n))
        varying = []
        for i in range(n):
            for j in range(n):
                e = self.matrix[i][j]
                if e.is_constant:
                    base[i, j] = e.evaluate(np.zeros(n))
                else:
                    varying.append((i, j, e._float_fn))
        return base, tuple(varying)

    def matrix_derivative(self, x):
        """D[k, j, l] = d P_kj / d x_l."""
        x = np.asarray(x, dtype=float)
        n = self.dim
        if self.kind == "lie_poisson":
            return np.transpose(self.algebra.c, (1, 0, 2)).copy()
        if self.kind == "r3_casimir":
            hess = self.A.derive(x)[2]
            d = np.empty((3, 3, 3))
            for l in range(3):
                d[:, :, l] = hat(hess[:, l])
            return d
        d = np.zeros((n, n, n))
        for i in range(n):
            for j in range(n):
                e = self.matrix[i][j]
                if not e.is_constant:
                    d[i, j, :] = e.gradient(x)[1]
        return d

    def _check(self, x):
        if len(x) != self.dim:
            raise DimensionMismatch(f"expected a point of length {self.dim}, got {len(x)}")

    def bracket(self, f: Expression, g: Expression, x) -> float:
        self._check(x)
        if f.dim != self.dim or g.dim != self.dim:
            raise DimensionMismatch("expression dimension does not match the structure")
        df = f.gradient(x)[1]
        dg = g.gradient(x)[1]
        return self.bracket_covectors(df, dg, x)

    def bracket_covectors(self, df, dg, x) -> float:
        x = np.asarray(x, dtype=float)
        if self.kind == "lie_poisson":
            return float(-np.dot(x, self.algebra.bracket(df, dg)))
        if self.kind == "r3_casimir":
            return float(np.dot(self.A.gradient(x)[1], np.cross(df, dg)))
        return float(df @ self.matrix_at(x) @ dg)

    def leaf_rank(self, x) -> int:
        self._check(x)
        p = self.matrix_at(x)
        r = numerical_rank(p, 1e-10)
        if r % 2:
            raise InconsistentRank(f"Poisson tensor has odd numerical rank {r} at {list(x)}")
        return r

    def jacobiator(self, x) -> float:
        p = self.matrix_at(x)
        d = self.matrix_derivative(x)
        t = np.einsum("il,jkl->ijk", p, d)
        j = t + np.transpose(t, (1, 2, 0)) + np.transpose(t, (2, 0, 1))
        return float(np.max(np.abs(j), initial=0.0))

    def validate(self, samples: int = 100, seed: int = 0, box: float = 1.0):
        """Sampled antisymmetry and Jacobi check; raises NotPoisson."""
        rng = _rng(seed)
        for _ in range(samples):
            x = rng.uniform(-box, box, self.dim)
            p = self.matrix_at(x)
            scale = 1.0 + np.max(np.abs(p))
            if np.max(np.abs(p + p.T)) > 1e-12 * scale:
                raise NotPoisson(f"Poisson matrix is not antisymmetric at {x.tolist()}")
            if self.kind == "structure_matrix":
                d = self.matrix_derivative(x)
                jscale = 1.0 + scale * (1.0 + np.max(np.abs(d)))
                if self.jacobiator(x) > 1e-9 * jscale:
                    raise NotPoisson(f"Jacobi identity fails at {x.tolist()}")
        return True

    def verify_casimir(self, C: Expression, region=None, samples: int = 200, seed: int = 0):
        """Max of |{C, x_i}| over sampled points of a box.

        ``region`` is ``(lo, hi)``; default is the unit box.
        """
        lo, hi = region if region is not None else (-np.ones(self.dim), np.ones(self.dim))
        lo = np.broadcast_to(np.asarray(lo, dtype=float), (self.dim,))
        hi = np.broadcast_to(np.asarray(hi, dtype=float), (self.dim,))
        rng = _rng(seed)
        worst, scale = 0.0, 1.0
        eye = np.eye(self.dim)
        for _ in range(samples):
            x = rng.uniform(lo, hi)
            dc = C.gradient(x)[1]
            scale = max(scale, 1.0 + np.linalg.norm(self.matrix_at(x)) * np.linalg.norm(dc))
            for i in range(self.dim):
                worst = max(worst, abs(self.bracket_covectors(dc, eye[i], x)))
        return {"max_residual": float(worst), "scale": float(scale), "pass": bool(worst <= 1e-9 * scale)}


def structure_matrix(entries: Sequence[Sequence], dim: int, params: Mapping[str, float] | None = None,
                     names: Sequence[str] | None = None, casimirs: Sequence = (),
                     validate: bool = True) -> PoissonStructure:
    """Build a structure-matrix Poisson structure from expression texts."""
    if len(entries) != dim or any(len(row) != dim for row in entries):
        raise DimensionMismatch(f"structure matrix must be {dim}x{dim}")

    def conv(e):
        if isinstance(e, Expression):
            return e
        return parse(str(e), dim, params, names)

    mat = tuple(tuple(conv(e) for e in row) for row in entries)
    cas = tuple(conv(c) for c in casimirs)
    ps = PoissonStructure("structure_matrix", dim, matrix=mat, casimirs=cas,
                          names=tuple(names) if names else ())
    if validate:
        ps.validate()
    return ps


def lie_poisson(alg: LieAlgebra, casimirs: Sequence[Expression] = ()) -> PoissonStructure:
    return PoissonStructure("lie_poisson", alg.dim, algebra=alg, casimirs=tuple(casimirs))


def r3_casimir(A: Expression, casimirs: Sequence[Expression] | None = None) -> PoissonStructure:
    if A.dim != 3:
        raise DimensionMismatch("the R^3 bracket needs a generator on R^3")
    cas = (A,) if casimirs is None else tuple(casimirs)
    return PoissonStructure("r3_casimir", 3, A=A, casimirs=cas)


@dataclass(frozen=True, eq=False)
class HamiltonianSystem:
    structure: PoissonStructure
    h: Expression
    params: dict = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        if self.h.dim != self.structure.dim:
            raise DimensionMismatch("Hamiltonian dimension does not match the structure")

    @property
    def dim(self) -> int:
        return self.structure.dim

    @property
    def casimirs(self):
        return self.structure.casimirs

    def vector_field(self, x):
        self.structure._check(x)
        return self.structure.matrix_at(x) @ self.h.gradient(x)[1]

    def jacobian(self, x):
        """Exact Jacobian of x -> P(x) dh(x)."""
        x = np.asarray(x, dtype=float)
        _, g, hess = self.h.derive(x)
        p = self.structure.matrix_at(x)
        d = self.structure.matrix_derivative(x)
        return np.einsum("kjl,j->kl", d, g) + p @ hess

    def energy(self, x) -> float:
        return self.h.evaluate(x)


def vector_field(sys: HamiltonianSystem, x):
    return sys.vector_field(x)


def bracket(ps: PoissonStructure, f: Expression, g: Expression, x) -> float:
    return ps.bracket(f, g, x)


def leaf_rank(ps: PoissonStructure, x) -> int:
    return ps.leaf_rank(x)


def verify_casimir(ps: PoissonStructure, C: Expression, region=None, samples=200, seed=0):
    return ps.verify_casimir(C, region, samples, seed)
