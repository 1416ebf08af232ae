"""Lie algebras from structure constants, with their coadjoint and transverse operators.

Sign convention, used everywhere downstream::

    <ad*_xi mu, eta> = -<mu, [xi, eta]>

The Lie-Poisson bracket is then {f, g}(mu) = -<mu, [df, dg]>.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import DimensionMismatch, NearSingular, NotFound, NotPoisson

RANK_RTOL = 1e-10
CONNECTOR_MAX_COND = 1e12


@dataclass(frozen=True, eq=False)
class LieAlgebra:
    """Structure constants ``c[i, j, k]`` with ``[e_i, e_j] = sum_k c[i, j, k] e_k``."""

    name: str
    c: np.ndarray
    has_invariant_inner_product: bool = False
    catalogued: bool = False
    labels: tuple = ()

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if c.ndim != 3 or not (c.shape[0] == c.shape[1] == c.shape[2]):
            raise DimensionMismatch("structure constants must have shape (n, n, n)")
        object.__setattr__(self, "c", c)
        c.setflags(write=False)
        if np.max(np.abs(c + c.transpose(1, 0, 2)), initial=0.0) > 1e-12:
            raise NotPoisson(f"structure constants of {self.name!r} are not antisymmetric")
        if jacobiator(c) > 1e-12:
            raise NotPoisson(f"structure constants of {self.name!r} violate the Jacobi identity")

    @property
    def dim(self) -> int:
        return self.c.shape[0]

    def bracket(self, xi, eta):
        return np.einsum("i,j,ijk->k", xi, eta, self.c)

    def ad(self, xi):
        """Matrix of eta -> [xi, eta]."""
        return np.einsum("i,ijk->kj", np.asarray(xi, dtype=float), self.c)

    def ad_star_map(self, mu):
        """Matrix ``A`` with ``A @ xi = ad*_xi mu``."""
        self._check(mu)
        return -np.einsum("ijk,k->ji", self.c, np.asarray(mu, dtype=float))

    def ad_star(self, xi, mu):
        self._check(xi)
        return self.ad_star_map(mu) @ np.asarray(xi, dtype=float)

    def poisson_tensor(self, x):
        """Pi(x) with xdot = Pi(x) dh; Pi_kj = sum_l c[j, k, l] x_l."""
        return np.einsum("jkl,l->kj", self.c, np.asarray(x, dtype=float))

    def _check(self, v):
        if len(v) != self.dim:
            raise DimensionMismatch(f"{self.name}: expected length {self.dim}, got {len(v)}")


def jacobiator(c) -> float:
    cyc = (np.einsum("ijm,mkl->ijkl", c, c)
           + np.einsum("jkm,mil->ijkl", c, c)
           + np.einsum("kim,mjl->ijkl", c, c))
    return float(np.max(np.abs(cyc), initial=0.0))


def _levi_civita():
    eps = np.zeros((3, 3, 3))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        eps[i, j, k] = 1.0
        eps[j, i, k] = -1.0
    return eps


def _from_table(n, table):
    c = np.zeros((n, n, n))
    for (i, j), vec in table.items():
        for k, v in vec.items():
            c[i, j, k] = v
            c[j, i, k] = -v
    return c


def _build_catalogue():
    eps = _levi_civita()
    so3 = LieAlgebra("so3", eps, True, True, ("e1", "e2", "e3"))
    # se(2): basis (T1, T2, rot); [rot, T1] = T2, [rot, T2] = -T1
    se2_c = _from_table(3, {(2, 0): {1: 1.0}, (2, 1): {0: -1.0}})
    se2 = LieAlgebra("se2", se2_c, False, True, ("T1", "T2", "rot"))
    sl2_c = _from_table(3, {(0, 1): {2: -1.0}, (1, 2): {0: 1.0}, (2, 0): {1: 1.0}})
    sl2 = LieAlgebra("sl2", sl2_c, True, True, ("e1", "e2", "e3"))
    # se(3): basis (R1, R2, R3, T1, T2, T3)
    se3_c = np.zeros((6, 6, 6))
    se3_c[:3, :3, :3] = eps
    se3_c[:3, 3:, 3:] = eps
    se3_c[3:, :3, 3:] = -eps.transpose(1, 0, 2)
    se3 = LieAlgebra("se3", se3_c, False, True, ("R1", "R2", "R3", "T1", "T2", "T3"))
    rsdr = LieAlgebra("rsdr", _from_table(2, {(0, 1): {1: 1.0}}), False, True, ("a", "b"))
    sp_c = np.zeros((5, 5, 5))
    sp_c[:3, :3, :3] = se2_c
    se2p = LieAlgebra("se2_plus_r2", sp_c, False, True, ("T1", "T2", "rot", "u1", "u2"))
    return {a.name: a for a in (so3, se2, sl2, se3, rsdr, se2p)}


ALGEBRAS = _build_catalogue()


def get_algebra(name: str) -> LieAlgebra:
    try:
        return ALGEBRAS[name]
    except KeyError:
        import difflib
        close = difflib.get_close_matches(name, list(ALGEBRAS), n=1)
        raise NotFound(name, close[0] if close else None) from None


# --------------------------------------------------------------------------- linear algebra helpers

def numerical_rank(m, rtol=RANK_RTOL) -> int:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.size == 0:
        return 0
    s = np.linalg.svd(m, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def null_space(m, rtol=RANK_RTOL):
    m = np.atleast_2d(np.asarray(m, dtype=float))
    n = m.shape[1]
    if not np.any(m):
        return np.eye(n)
    u, s, vt = np.linalg.svd(m)
    r = int(np.sum(s > rtol * s[0]))
    return vt[r:].T.copy()


def canonical_basis(b):
    """Column basis of span(b) whose pivot rows form the identity."""
    if b.shape[1] == 0:
        return b
    _, _, piv = sla.qr(b.T, pivoting=True)
    rows = np.sort(piv[: b.shape[1]])
    out = b @ np.linalg.inv(b[rows, :])
    out[np.abs(out) < 1e-14] = 0.0
    return out


# --------------------------------------------------------------------------- isotropy and transverse data


@dataclass(frozen=True, eq=False)
class TransverseData:
    """Splitting g = g_mu + n_mu and the dual splitting g* = g_mu^o + n_mu^o.

    Covectors in ``n_ann`` (n_mu^o) are identified with g_mu*: column b pairs to
    one with the b-th column of ``g_mu`` and to zero with ``n_mu``.
    """

    alg: LieAlgebra
    mu: np.ndarray
    g_mu: np.ndarray
    n_mu: np.ndarray
    n_ann: np.ndarray
    g_ann: np.ndarray
    projector: np.ndarray
    split: bool = False
    notes: tuple = field(default=())

    @property
    def iso_dim(self) -> int:
        return self.g_mu.shape[1]


def isotropy(alg: LieAlgebra, mu) -> TransverseData:
    mu = np.asarray(mu, dtype=float)
    alg._check(mu)
    n = alg.dim
    a = alg.ad_star_map(mu)
    g = canonical_basis(null_space(a))
    if g.shape[1] == n:
        nb = np.zeros((n, 0))
    else:
        nb = canonical_basis(null_space(g.T) if g.shape[1] else np.eye(n))
    m = np.hstack([g, nb])
    dual = np.linalg.inv(m).T
    k = g.shape[1]
    n_ann = dual[:, :k]
    g_ann = dual[:, k:]
    proj = g_ann @ nb.T
    split = True
    for b in range(k):
        ad_b = alg.ad(g[:, b])
        img = ad_b @ nb
        if nb.shape[1]:
            resid = img - nb @ np.linalg.lstsq(nb, img, rcond=None)[0]
            if np.max(np.abs(resid), initial=0.0) > 1e-10 * (1 + np.max(np.abs(img), initial=0.0)):
                split = False
                break
    return TransverseData(alg, mu, g, nb, n_ann, g_ann, proj, split)


def is_regular(alg: LieAlgebra, mu, radius: float = 1e-2, samples: int = 200, seed: int = 0):
    """Sampled test that the coadjoint rank is constant near ``mu``.

    Returns ``(regular, report)`` where report maps rank -> count.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    mu = np.asarray(mu, dtype=float)
    base = numerical_rank(alg.ad_star_map(mu))
    rng = np.random.Generator(np.random.Philox(key=seed))
    counts = {base: 1}
    n = alg.dim
    for _ in range(samples):
        d = rng.standard_normal(n)
        d *= radius * rng.random() ** (1.0 / n) / np.linalg.norm(d)
        r = numerical_rank(alg.ad_star_map(mu + d))
        counts[r] = counts.get(r, 0) + 1
    return len(counts) == 1, {"base_rank": base, "ranks": dict(sorted(counts.items()))}


def _connector_system(td: TransverseData, nu):
    nu = np.asarray(nu, dtype=float)
    td.alg._check(nu)
    a = td.alg.ad_star_map(td.mu + nu)
    lhs = td.n_mu.T @ a @ td.n_mu
    if lhs.size and np.linalg.cond(lhs) > CONNECTOR_MAX_COND:
        raise NearSingular("transverse connector system is near singular; nu lies outside the "
                           "neighbourhood where the connector exists")
    return a, lhs


def transverse_connector(td: TransverseData, nu, xi):
    """eta in n_mu with pi_{g_mu^o}(ad*_{xi+eta}(mu+nu)) = 0."""
    xi = np.asarray(xi, dtype=float)
    n = td.alg.dim
    if td.n_mu.shape[1] == 0:
        return np.zeros(n)
    a, lhs = _connector_system(td, nu)
    c = np.linalg.solve(lhs, -td.n_mu.T @ a @ xi)
    return td.n_mu @ c


def connector_residual(td: TransverseData, nu, xi) -> float:
    eta = transverse_connector(td, nu, xi)
    v = td.alg.ad_star(np.asarray(xi) + eta, td.mu + np.asarray(nu))
    return float(np.linalg.norm(td.projector @ v))


def z_tangent(td: TransverseData, nu):
    """Columns j_mu(nu) xi_b over the basis xi_b of g_mu."""
    cols = [td.g_mu[:, b] + transverse_connector(td, nu, td.g_mu[:, b]) for b in range(td.iso_dim)]
    if not cols:
        return np.zeros((td.alg.dim, 0))
    return np.column_stack(cols)


def transverse_bracket(td: TransverseData, nu, df, dg) -> float:
    """Transverse Poisson bracket of two linear functionals on the slice.

    ``df`` and ``dg`` are coordinates in g_mu* relative to the basis ``td.g_mu``.
    """
    df = np.asarray(df, dtype=float)
    dg = np.asarray(dg, dtype=float)
    if len(df) != td.iso_dim or len(dg) != td.iso_dim:
        raise DimensionMismatch(f"expected covectors of length {td.iso_dim}")
    if np.array_equal(df, dg):
        return 0.0
    z = z_tangent(td, nu)
    u, v = z @ df, z @ dg
    return float(-np.dot(td.mu + np.asarray(nu, dtype=float), td.alg.bracket(u, v)))


def coadjoint_tangent(alg: LieAlgebra, mu):
    """Orthonormal basis of the tangent space to the coadjoint orbit at mu."""
    a = alg.ad_star_map(mu)
    r = numerical_rank(a)
    if r == 0:
        return np.zeros((alg.dim, 0))
    u, _, _ = np.linalg.svd(a)
    return u[:, :r]
