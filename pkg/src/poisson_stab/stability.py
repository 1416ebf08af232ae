"""Stability criteria for equilibria of Poisson systems.

Verdicts live in a small lattice::

    Stable > InstabilityEvidence > LeafwiseStable > Inconclusive

``InstabilityEvidence`` is a linearisation result and never a proof.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from . import leafspace as ls
from .algebra import LieAlgebra, coadjoint_tangent, isotropy, null_space
from .errors import NotEquilibrium, UnsupportedCase, WrongDimension
from .expr import Expression
from .poisson import HamiltonianSystem, lie_poisson

STABLE = "Stable"
LEAFWISE = "LeafwiseStable"
EVIDENCE = "InstabilityEvidence"
INCONCLUSIVE = "Inconclusive"
VALUES = (STABLE, LEAFWISE, EVIDENCE, INCONCLUSIVE)

EQ_GATE = 1e-9
DEF_GATE = 1e-8
SPEC_GATE = 1e-7


@dataclass
class StabilityVerdict:
    value: str
    criterion: str
    witness: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_json(self):
        return {"value": self.value, "criterion": self.criterion,
                "witness": _jsonable(self.witness), "notes": list(self.notes)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.complexfloating):
        return {"re": float(obj.real), "im": float(obj.imag)}
    return obj


# --------------------------------------------------------------------------- definiteness


def definiteness(H):
    """(definite, sign, eigenvalues, score); score > DEF_GATE iff definite."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    if H.size == 0:
        return True, 0, np.zeros(0), np.inf
    eig = np.linalg.eigvalsh(0.5 * (H + H.T))
    norm = float(np.max(np.abs(eig)))
    pos = eig[0] / (1.0 + norm)
    neg = -eig[-1] / (1.0 + norm)
    score = float(max(pos, neg))
    sign = 1 if pos >= neg else -1
    return score > DEF_GATE, sign, eig, score


@dataclass(frozen=True)
class CasimirFamily:
    basis: tuple
    box: tuple = (-10.0, 10.0)

    @classmethod
    def for_system(cls, sys: HamiltonianSystem, powers: Sequence[int] = (1, 2), box=(-10.0, 10.0)):
        basis = []
        for c in sys.casimirs:
            for k in powers:
                basis.append(c if k == 1 else c.power(k))
        return cls(tuple(basis), box)


def _breakpoints(H0, H1):
    if not np.any(H1):
        return []
    w = sla.eigvals(H0, -H1)
    out = []
    for v in w:
        if np.isfinite(v) and abs(v.imag) <= 1e-9 * (1 + abs(v.real)):
            out.append(float(v.real))
    return sorted(set(out))


def _search_1d(H0, H1):
    bps = _breakpoints(H0, H1)
    if not bps:
        cands = [0.0]
    else:
        cands = [0.5 * (a + b) for a, b in zip(bps, bps[1:])]
        cands += [bps[0] - 1.0 - abs(bps[0]), bps[-1] + 1.0 + abs(bps[-1])]
    best = None
    for lam in cands:
        s = definiteness(H0 + lam * H1)[3]
        if best is None or s > best[1]:
            best = (lam, s)
    return best


def search_coefficients(H0, Hs, box=(-10.0, 10.0), seed: int = 0, starts: int = 64):
    """Find lambda making H0 + sum lambda_k Hs[k] definite.

    Returns (found, lambda, score). One coefficient is solved exactly through
    the generalised eigenvalue breakpoints; more use coordinate sweeps from
    multiple seeded starts.
    """
    k = len(Hs)
    if k == 0:
        s = definiteness(H0)[3]
        return s > DEF_GATE, np.zeros(0), s
    if k == 1:
        lam, s = _search_1d(H0, Hs[0])
        return s > DEF_GATE, np.array([lam]), s

    def total(lam):
        return H0 + sum(l * h for l, h in zip(lam, Hs))

    def sweep(lam, rounds=3):
        lam = lam.copy()
        for _ in range(rounds):
            for m in range(k):
                rest = H0 + sum(lam[l] * Hs[l] for l in range(k) if l != m)
                lam[m] = _search_1d(rest, Hs[m])[0]
        return lam, definiteness(total(lam))[3]

    best_lam, best_s = sweep(np.zeros(k))
    lo, hi = box
    for i in range(starts):
        if best_s > DEF_GATE:
            break
        rng = np.random.Generator(np.random.Philox(key=np.array([seed, i], dtype=np.uint64)))
        lam, s = sweep(rng.uniform(lo, hi, k), rounds=1)
        if s > best_s:
            best_lam, best_s = lam, s
    return best_s > DEF_GATE, best_lam, best_s


# --------------------------------------------------------------------------- basic checks


def equilibrium_and_generator(sys: HamiltonianSystem, x_e):
    x = np.asarray(x_e, dtype=float)
    dh = sys.h.gradient(x)[1]
    v = sys.structure.matrix_at(x) @ dh
    return float(np.linalg.norm(v)), dh


def equilibrium_scale(sys: HamiltonianSystem, x_e) -> float:
    x = np.asarray(x_e, dtype=float)
    dh = sys.h.gradient(x)[1]
    return max(1.0, float(np.linalg.norm(sys.structure.matrix_at(x)) * np.linalg.norm(dh)))


def is_equilibrium(sys, x_e) -> bool:
    res, _ = equilibrium_and_generator(sys, x_e)
    return res <= EQ_GATE * equilibrium_scale(sys, x_e)


def one_dim_t2_test(sys: HamiltonianSystem, x_e, t2: ls.T2Description) -> StabilityVerdict:
    if t2.tangent_span.shape[1] != 1:
        raise WrongDimension(f"T2 tangent span has dimension {t2.tangent_span.shape[1]}, not 1")
    _, dh = equilibrium_and_generator(sys, x_e)
    t = t2.tangent_span[:, 0]
    pairing = float(dh @ t)
    wit = {"tangent": t, "pairing": pairing}
    if not t2.contained_exactly:
        return StabilityVerdict(INCONCLUSIVE, "one_dim_t2", wit, ["T2 pieces are not exact"])
    if abs(pairing) > EQ_GATE * max(1.0, float(np.linalg.norm(dh))):
        return StabilityVerdict(STABLE, "one_dim_t2", wit,
                                ["dh is nonzero on the one-dimensional T2 tangent"])
    return StabilityVerdict(INCONCLUSIVE, "one_dim_t2", wit, ["dh vanishes on the T2 tangent"])


def isolation_test(sys: HamiltonianSystem, x_e, t2: ls.T2Description) -> StabilityVerdict:
    """First-order isolation of x_e in the level set of h inside the T2-set.

    Holds when ann(dh) meets every tangent-cone component of T2 only at 0.
    """
    _, dh = equilibrium_and_generator(sys, x_e)
    n = len(dh)
    gate = EQ_GATE * max(1.0, float(np.linalg.norm(dh)))
    comps = []
    for c in t2.cone:
        if c.kind == "subspace":
            b = ls.orth(c.basis)
            if b.shape[1] == 0:
                comps.append({"kind": "point", "ok": True})
            elif b.shape[1] == 1:
                comps.append({"kind": "line", "ok": abs(dh @ b[:, 0]) > gate, "pairing": float(dh @ b[:, 0])})
            else:
                comps.append({"kind": "subspace", "dim": b.shape[1], "ok": False})
        else:
            b = c.basis
            if np.linalg.norm(dh) <= gate:
                comps.append({"kind": "quadric", "ok": False})
                continue
            # restrict the quadric to ann(dh) inside span(b)
            k = null_space(np.atleast_2d(dh @ b))
            ok, _, eig, _ = definiteness(k.T @ c.Q @ k)
            comps.append({"kind": "quadric", "ok": bool(ok), "eigenvalues": eig})
    ok = bool(comps) and all(c["ok"] for c in comps)
    if not t2.contained_exactly and not t2.cone:
        ok = False
    value = STABLE if ok else INCONCLUSIVE
    note = "x_e is isolated in its level set within T2" if ok else "level set of h meets the T2 cone"
    return StabilityVerdict(value, "isolation", {"components": comps, "dh": dh}, [note])


# --------------------------------------------------------------------------- hessians


def leafwise_hessian(sys: HamiltonianSystem, x_e):
    """Hessian of h restricted to the symplectic leaf at an equilibrium, in an
    orthonormal basis of the leaf tangent. Includes the leaf curvature term."""
    x = np.asarray(x_e, dtype=float)
    p = sys.structure.matrix_at(x)
    L = ls.orth(p)
    if L.shape[1] == 0:
        return L, np.zeros((0, 0))
    alpha = np.linalg.lstsq(p, L, rcond=None)[0]
    J = sys.jacobian(x)
    H = -alpha.T @ J @ L
    return L, 0.5 * (H + H.T)


def _piece_result(index, piece, H, lam, basis_names, spanning):
    ok, sign, eig, score = definiteness(H)
    return {"piece": index, "note": piece.note, "dim": piece.dim, "definite": bool(ok),
            "sign": sign, "eigenvalues": eig, "hessian": H, "lambda": lam,
            "casimirs": basis_names, "spanning": spanning, "score": score}


def t2_energy_casimir(sys: HamiltonianSystem, x_e, t2: ls.T2Description,
                      family: CasimirFamily | None = None, seed: int = 0) -> StabilityVerdict:
    x = np.asarray(x_e, dtype=float)
    _, dh = equilibrium_and_generator(sys, x)
    cls = ls.classify_generator(t2, dh)
    if not cls.tame:
        return StabilityVerdict(INCONCLUSIVE, "t2_energy_casimir", {"generator": cls.to_json()},
                                ["generator is wild; the Hessian test needs a tame equilibrium"])
    family = family if family is not None else CasimirFamily.for_system(sys)
    d2h = sys.h.derive(x)[2]
    cas_data = [c.derive(x) for c in family.basis]
    results = []
    for i, piece in enumerate(t2.pieces):
        if piece.kind == "leaf":
            _, H = leafwise_hessian(sys, x)
            results.append(_piece_result(i, piece, H, [], [], None))
            continue
        B = ls.orth(piece.tangent)
        if B.shape[1] == 0:
            results.append(_piece_result(i, piece, np.zeros((0, 0)), [], [], True))
            continue
        H0 = B.T @ d2h @ B
        spanning = ls.check_spanning_condition(t2, i)
        usable = []
        if not spanning:
            gate = EQ_GATE * max(1.0, float(np.linalg.norm(dh)))
            usable = [j for j, (_, g, _) in enumerate(cas_data) if np.linalg.norm(B.T @ g) <= gate]
        Hs = [B.T @ cas_data[j][2] @ B for j in usable]
        _, lam, _ = search_coefficients(H0, Hs, family.box, seed=seed + i)
        H = H0 + sum(l * h for l, h in zip(lam, Hs))
        names = [family.basis[j].text() for j in usable]
        results.append(_piece_result(i, piece, H, list(lam), names, spanning))
    ok = all(r["definite"] for r in results)
    wit = {"generator": cls.to_json(), "pieces": results}
    if ok:
        return StabilityVerdict(STABLE, "t2_energy_casimir", wit,
                                [f"definite restricted Hessian on all {len(results)} pieces"])
    bad = [r["piece"] for r in results if not r["definite"]]
    return StabilityVerdict(INCONCLUSIVE, "t2_energy_casimir", wit,
                            [f"no definite Hessian found on piece(s) {bad}"])


# --------------------------------------------------------------------------- spectrum


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    max_real: float
    evidence: bool
    defective: list
    jacobian: np.ndarray

    def to_json(self):
        return {"eigenvalues": [{"re": float(z.real), "im": float(z.imag)} for z in self.eigenvalues],
                "max_real": self.max_real, "evidence": self.evidence, "defective": _jsonable(self.defective)}


def _clusters(J, eig, rtol=1e-5):
    """Group nearby eigenvalues; a perturbed Jordan block of size m splits by
    O(eps^(1/m)) but its mean stays accurate to rounding."""
    scale = 1.0 + np.linalg.norm(J, 2)
    groups = []
    for z in eig:
        for g in groups:
            if abs(z - np.mean(g)) <= rtol * scale:
                g.append(z)
                break
        else:
            groups.append([z])
    return [(complex(np.mean(g)), len(g)) for g in groups]


def _defects(J, clusters):
    n = J.shape[0]
    scale = 1.0 + np.linalg.norm(J, 2)
    out = []
    for z, alg in clusters:
        if alg < 2:
            continue
        s = np.linalg.svd(J - z * np.eye(n), compute_uv=False)
        geo = max(int(np.sum(s <= 1e-6 * scale)), 1)
        if geo < alg:
            out.append({"eigenvalue": z, "algebraic": alg, "geometric": geo})
    return out


def linearization_spectrum(sys: HamiltonianSystem, x_e) -> SpectrumReport:
    J = sys.jacobian(np.asarray(x_e, dtype=float))
    eig = np.linalg.eigvals(J)
    eig = eig[np.lexsort((eig.imag, np.round(eig.real, 10)))]
    scale = max(1.0, float(np.linalg.norm(J, 2)))
    clusters = _clusters(J, eig)
    mr = max((z.real for z, _ in clusters), default=0.0)
    return SpectrumReport(eig, float(mr), mr > SPEC_GATE * scale, _defects(J, clusters), J)


# --------------------------------------------------------------------------- pipeline


def analyze(sys: HamiltonianSystem, x_e, t2: ls.T2Description | None = None,
            family: CasimirFamily | None = None, seed: int = 0, override=None) -> StabilityVerdict:
    """Run every applicable test and combine the outcomes in the verdict lattice."""
    x = np.asarray(x_e, dtype=float)
    res, dh = equilibrium_and_generator(sys, x)
    scale = equilibrium_scale(sys, x)
    if res > EQ_GATE * scale:
        raise NotEquilibrium(f"vector field does not vanish at x_e (residual {res:.3e})")
    trail = [f"equilibrium residual {res:.3e}"]
    steps = {"equilibrium": {"residual": res, "generator": dh}}
    stable = None
    try:
        if t2 is None:
            t2 = ls.t2_description(sys, x, override)
    except Exception as exc:  # NotCatalogued
        if getattr(exc, "kind", "") != "not_catalogued":
            raise
        trail.append(str(exc))
        t2 = None
    if t2 is not None:
        steps["t2"] = t2.to_json()
        cls = ls.classify_generator(t2, dh)
        steps["generator"] = cls.to_json()
        trail.append("generator is " + ("very tame" if cls.very_tame else "tame" if cls.tame else "wild"))
        tests = []
        if t2.tangent_span.shape[1] == 1 and t2.contained_exactly:
            tests.append(("one_dim_t2", lambda: one_dim_t2_test(sys, x, t2)))
        tests.append(("isolation", lambda: isolation_test(sys, x, t2)))
        if cls.tame:
            tests.append(("t2_energy_casimir", lambda: t2_energy_casimir(sys, x, t2, family, seed)))
        for name, run in tests:
            v = run()
            steps[name] = v.to_json()
            trail.append(f"{name}: {v.value}")
            if v.value == STABLE:
                stable = v
                break
    spec = linearization_spectrum(sys, x)
    steps["spectrum"] = spec.to_json()
    L, H = leafwise_hessian(sys, x)
    ok, _, eig, _ = definiteness(H)
    steps["leafwise_hessian"] = {"dim": L.shape[1], "eigenvalues": eig, "definite": bool(ok)}
    if stable is not None:
        return StabilityVerdict(STABLE, stable.criterion, {**stable.witness, "trail": steps},
                                trail + stable.notes)
    if spec.evidence:
        return StabilityVerdict(EVIDENCE, "linearization",
                                {"eigenvalue": complex(spec.eigenvalues[-1]), "trail": steps},
                                trail + [f"eigenvalue with real part {spec.max_real:.6g}"])
    if ok:
        note = "point leaf" if L.shape[1] == 0 else "definite leafwise Hessian"
        return StabilityVerdict(LEAFWISE, "leafwise_hessian", {"trail": steps}, trail + [note])
    return StabilityVerdict(INCONCLUSIVE, "none", {"trail": steps}, trail + ["no criterion applies"])


# --------------------------------------------------------------------------- reduced energy-momentum


def _coadjoint_matrix(alg: LieAlgebra, xi):
    """Matrix of mu -> ad*_xi mu."""
    return -alg.ad(xi).T


def reduced_energy_momentum(alg: LieAlgebra, h: Expression, mu_e) -> StabilityVerdict:
    """Energy-momentum test on g* for a left-invariant system reduced to g*.

    Slice chart: Phi(nu, w) = exp(sum w_a ad*_{N_a}) (mu + sum nu_c W_c), with
    N_a spanning the complement n_mu and W_c spanning the wild momenta. The test
    function is F = h o Phi - <mu + nu, xi_e>; its Hessian at 0 includes the
    orbit curvature through the second derivatives of Phi.
    """
    mu = np.asarray(mu_e, dtype=float)
    sys = HamiltonianSystem(lie_poisson(alg), h)
    res, xi = equilibrium_and_generator(sys, mu)
    if res > EQ_GATE * equilibrium_scale(sys, mu):
        raise NotEquilibrium(f"mu_e is not a relative equilibrium (residual {res:.3e})")
    wild, td, t2 = ls.wild_momenta(alg, mu)
    # very tame check for xi_e inside g_mu
    pair = t2.tangent_span.T @ xi if not t2.regular else np.zeros(0)
    wit = {"generator": xi, "iso_dim": td.iso_dim, "wild_dim": wild.shape[1]}
    if pair.size and np.linalg.norm(pair) > EQ_GATE * max(1.0, float(np.linalg.norm(xi))):
        w = t2.tangent_span @ pair
        wit["wild_witness"] = w / np.linalg.norm(w)
        return StabilityVerdict(INCONCLUSIVE, "reduced_energy_momentum", wit,
                                ["generator is wild: it pairs nontrivially with the T2 tangent"])
    _, g, d2h = h.derive(mu)
    Ls = [_coadjoint_matrix(alg, td.n_mu[:, a]) for a in range(td.n_mu.shape[1])]
    cols = [wild[:, c] for c in range(wild.shape[1])] + [La @ mu for La in Ls]
    m = len(cols)
    if m == 0:
        return StabilityVerdict(STABLE, "reduced_energy_momentum", {**wit, "hessian": np.zeros((0, 0))},
                                ["test space is zero-dimensional"])
    D = np.column_stack(cols)
    H = D.T @ d2h @ D
    nw = wild.shape[1]
    for a, La in enumerate(Ls):
        for b, Lb in enumerate(Ls):
            H[nw + a, nw + b] += g @ (0.5 * (La @ Lb + Lb @ La) @ mu)
        for c in range(nw):
            v = g @ (La @ wild[:, c])
            H[c, nw + a] += v
            H[nw + a, c] += v
    ok, sign, eig, score = definiteness(H)
    wit.update({"hessian": H, "eigenvalues": eig, "score": score})
    if ok:
        return StabilityVerdict(STABLE, "reduced_energy_momentum", wit,
                                ["definite on wild momenta plus orbit directions"])
    return StabilityVerdict(INCONCLUSIVE, "reduced_energy_momentum", wit,
                            ["energy-momentum Hessian is not definite"])


def momentum_blocks(group: str, mu):
    mu = np.asarray(mu, dtype=float)
    if group == "SE2":
        return mu[2:3], mu[:2]
    if group == "SE3":
        return mu[:3], mu[3:]
    raise UnsupportedCase(f"unknown group {group!r}")


def euclidean_criteria(group: str, h: Expression, mu_e) -> StabilityVerdict:
    from .algebra import get_algebra
    name = {"SE2": "se2", "SE3": "se3"}.get(group)
    if name is None:
        raise UnsupportedCase(f"unknown group {group!r}")
    alg = get_algebra(name)
    mu = np.asarray(mu_e, dtype=float)
    mu_r, mu_a = momentum_blocks(group, mu)
    regular = float(np.linalg.norm(mu_a)) > 1e-12 * (1 + np.linalg.norm(mu))
    td = isotropy(alg, mu)
    xi = h.gradient(mu)[1]
    xi_r, _ = momentum_blocks(group, xi)
    case = "regular" if regular else "nonregular"
    notes = [f"{group} {case} case, dim g_mu = {td.iso_dim}"]
    if not regular and np.linalg.norm(xi_r) > EQ_GATE * max(1.0, float(np.linalg.norm(xi))):
        return StabilityVerdict(INCONCLUSIVE, f"{group.lower()}_corollary",
                                {"case": case, "iso_dim": td.iso_dim, "xi_r": xi_r},
                                notes + ["rotational part of the generator is nonzero: wild"])
    v = reduced_energy_momentum(alg, h, mu)
    v.witness.update({"case": case, "iso_dim": td.iso_dim})
    v.criterion = f"{group.lower()}_corollary"
    v.notes = notes + v.notes
    return v


def orbit_tangent(alg: LieAlgebra, mu):
    return coadjoint_tangent(alg, mu)
