"""Property tests for the invariants each module promises."""

import numpy as np
from hypothesis import given, settings, strategies as st

from poisson_stab import catalog, stability
from poisson_stab.algebra import ALGEBRAS, connector_residual, get_algebra, isotropy, transverse_bracket
from poisson_stab.dynamics import integrate
from poisson_stab.errors import DomainError
from poisson_stab.expr import parse
from poisson_stab.leafspace import classify_generator, t2_description
from poisson_stab.poisson import HamiltonianSystem, lie_poisson

SETTINGS = settings(max_examples=40, deadline=None)
coord = st.floats(-2.0, 2.0, allow_nan=False)
vec3 = st.lists(coord, min_size=3, max_size=3).map(np.array)

leaves = st.sampled_from(["x", "y", "z", "1.5", "0.25"])


def _expr(children):
    un = st.tuples(st.sampled_from(["sin", "cos", "exp", "-"]), children).map(
        lambda t: f"-({t[1]})" if t[0] == "-" else f"{t[0]}(({t[1]})/3)")
    bi = st.tuples(children, st.sampled_from(["+", "-", "*", "/", "^"]), children).map(
        lambda t: f"({t[0]}) {t[1]} (2 + ({t[2]})^2)" if t[1] in "/^" else f"({t[0]}) {t[1]} ({t[2]})")
    return un | bi


exprs = st.recursive(leaves, _expr, max_leaves=6)


def _rel(a, b):
    return np.max(np.abs(np.asarray(a) - np.asarray(b))) / max(1.0, np.max(np.abs(b)))


@SETTINGS
@given(exprs, exprs, vec3)
def test_product_rule(fa, fb, x):
    f, g = parse(fa, 3), parse(fb, 3)
    try:
        vf, gf, hf = f.derive(x)
        vg, gg, hg = g.derive(x)
        vp, gp, hp = (f * g).derive(x)
        vs, gs, _ = (f + g).derive(x)
    except DomainError:
        return
    assert _rel(gp, vf * gg + vg * gf) <= 1e-12
    assert _rel(hp, vf * hg + vg * hf + np.outer(gf, gg) + np.outer(gg, gf)) <= 1e-12
    assert _rel(gs, gf + gg) <= 1e-12


@SETTINGS
@given(exprs, vec3)
def test_print_parse_round_trip(src, x):
    e = parse(src, 3)
    again = parse(e.text(), 3)
    assert again.text() == e.text()
    try:
        v = e.evaluate(x)
    except DomainError:
        return
    assert again.evaluate(x) == v


@SETTINGS
@given(st.sampled_from(sorted(ALGEBRAS)), st.integers(0, 2 ** 32 - 1))
def test_coadjoint_pairing(name, seed):
    alg = get_algebra(name)
    r = np.random.Generator(np.random.Philox(key=seed))
    xi, eta, mu = r.normal(size=(3, alg.dim))
    lhs = alg.ad_star(xi, mu) @ eta
    rhs = -mu @ alg.bracket(xi, eta)
    assert abs(lhs - rhs) <= 1e-12 * (1 + abs(rhs))


@SETTINGS
@given(st.sampled_from(sorted(ALGEBRAS)), st.integers(0, 2 ** 32 - 1), st.booleans())
def test_isotropy_annihilates(name, seed, special):
    alg = get_algebra(name)
    r = np.random.Generator(np.random.Philox(key=seed))
    mu = r.normal(size=alg.dim)
    if special:
        mu[r.integers(alg.dim):] = 0.0
    td = isotropy(alg, mu)
    for k in range(td.iso_dim):
        assert np.linalg.norm(alg.ad_star(td.g_mu[:, k], mu)) <= 1e-9 * (1 + np.linalg.norm(mu))


@SETTINGS
@given(st.sampled_from(["so3", "se2", "sl2", "se3"]), st.integers(0, 2 ** 32 - 1))
def test_connector_and_transverse_bracket(name, seed):
    alg = get_algebra(name)
    r = np.random.Generator(np.random.Philox(key=seed))
    mu = r.normal(size=alg.dim)
    if name == "sl2":
        mu = np.array([1.0, 0.0, 1.0])
    td = isotropy(alg, mu)
    nu = td.n_ann @ r.uniform(-0.05, 0.05, td.iso_dim)
    for k in range(td.iso_dim):
        res = connector_residual(td, nu, td.g_mu[:, k])
        assert res <= 1e-10 * (np.linalg.norm(mu) + np.linalg.norm(nu))
    f, g, k = r.normal(size=(3, td.iso_dim))
    a, b = r.normal(size=2)
    assert abs(transverse_bracket(td, nu, f, g) + transverse_bracket(td, nu, g, f)) <= 1e-10
    lin = transverse_bracket(td, nu, a * f + b * k, g)
    parts = a * transverse_bracket(td, nu, f, g) + b * transverse_bracket(td, nu, k, g)
    assert abs(lin - parts) <= 1e-10 * (1 + abs(parts))


@SETTINGS
@given(vec3, st.sampled_from(["so3", "se2", "sl2"]))
def test_leibniz(x, name):
    ps = lie_poisson(get_algebra(name))
    f, g, h = parse("x*y + z", 3), parse("sin(x) - y^2", 3), parse("x*z^2 + y", 3)
    fg = f * g
    lhs = ps.bracket(fg, h, x)
    rhs = f.evaluate(x) * ps.bracket(g, h, x) + g.evaluate(x) * ps.bracket(f, h, x)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs), abs(rhs)) * 10


@settings(max_examples=10, deadline=None)
@given(vec3)
def test_leaf_rank_preserved_by_flow(x):
    ps = lie_poisson(get_algebra("se2"))
    sys = HamiltonianSystem(ps, parse("(x^2 + 2*y^2 + z^2)/2", 3))
    rec = integrate(sys, x, 2.0, tol=1e-9, sample_times=[0.0, 1.0, 2.0])
    ranks = {ps.leaf_rank(s) for s in rec.states}
    assert len(ranks) == 1


@SETTINGS
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.floats(-3, 3), st.floats(-3, 3))
def test_tameness_unchanged_by_casimirs(xi, c1, c2):
    ps = lie_poisson(get_algebra("se2"))
    x_e = np.array([0.0, 0.0, 0.7])
    t2 = t2_description(ps, x_e)
    dC = parse("x^2 + y^2", 3).gradient(x_e)[1] + 0.0
    a = classify_generator(t2, np.array(xi)).tame
    b = classify_generator(t2, np.array(xi) + c1 * dC + c2 * dC).tame
    assert a == b


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([-2.0, -1.0, 0.0, 1.0, 2.0]), st.sampled_from([-2.0, -1.0, 0.0, 1.0, 2.0]),
       st.sampled_from([-2.0, -1.0, 0.0, 1.0, 2.0]), st.floats(0.1, 10.0))
def test_scaling_invariance_and_monotonicity(a, b, c, k):
    alg = get_algebra("sl2")
    C = parse("(x^2 + y^2 - z^2)/2", 3)
    h = parse("a*x^2 + b*y^2 + c*z^2", 3, {"a": a, "b": b, "c": c})
    sys = HamiltonianSystem(lie_poisson(alg, [C]), h)
    scaled = HamiltonianSystem(lie_poisson(alg, [C]), h.scaled(k))
    t2 = t2_description(sys.structure, np.zeros(3))
    small = stability.CasimirFamily.for_system(sys, powers=(1,))
    big = stability.CasimirFamily.for_system(sys, powers=(1, 2))
    v_small = stability.t2_energy_casimir(sys, np.zeros(3), t2, small).value
    v_big = stability.t2_energy_casimir(sys, np.zeros(3), t2, big).value
    v_scaled = stability.t2_energy_casimir(scaled, np.zeros(3), t2, big).value
    assert v_scaled == v_big
    if v_small == stability.STABLE:
        assert v_big == stability.STABLE


@settings(max_examples=20, deadline=None)
@given(st.permutations([1.0, 2.0, 3.0]))
def test_regular_leaf_piece_matches_leafwise_hessian(inertia):
    ps = lie_poisson(get_algebra("so3"), [parse("(x^2+y^2+z^2)/2", 3)])
    sys = HamiltonianSystem(ps, parse("(x^2/%g + y^2/%g + z^2/%g)/2" % tuple(inertia), 3))
    x = np.array([1.0, 0.0, 0.0])
    v = stability.t2_energy_casimir(sys, x, t2_description(sys, x))
    _, H = stability.leafwise_hessian(sys, x)
    assert (v.value == stability.STABLE) == stability.definiteness(H)[0]


def test_wild_generators_never_stable_in_catalogue():
    for name in catalog.names():
        e = catalog.get(name)
        if not e.runnable:
            continue
        for params in e.grid:
            loaded = e.build(params)
            x = loaded.equilibrium
            t2 = catalog.t2_for(loaded) or t2_description(loaded.system, x)
            dh = loaded.system.h.gradient(x)[1]
            if not classify_generator(t2, dh).tame:
                v = stability.t2_energy_casimir(loaded.system, x, t2)
                assert v.value == stability.INCONCLUSIVE


def test_drift_envelope_on_catalogue():
    tol, t_final = 1e-10, 100.0
    for name in ["so3_rigid_body", "se2_regular", "sl2_quadratic", "twoplanes"]:
        loaded = catalog.get(name).build()
        x0 = loaded.equilibrium + 0.05 * np.arange(1, loaded.system.dim + 1) / loaded.system.dim
        rec = integrate(loaded.system, x0, t_final, tol=tol)
        bound = 100 * tol * t_final
        assert rec.max_energy_drift <= bound, name
        assert all(d <= bound for d in rec.max_casimir_drift), name
