import numpy as np
import pytest

from poisson_stab import stability as st
from poisson_stab.algebra import get_algebra
from poisson_stab.errors import NotEquilibrium, WrongDimension
from poisson_stab.expr import parse
from poisson_stab.leafspace import leaf_tangent, t2_description, t2_from_override
from poisson_stab.poisson import HamiltonianSystem, lie_poisson, r3_casimir, structure_matrix


def system(alg, h, params=None, casimirs=()):
    a = get_algebra(alg)
    return HamiltonianSystem(lie_poisson(a, [parse(c, a.dim) for c in casimirs]), parse(h, a.dim, params))


def sl2(h, params=None):
    return system("sl2", h, params, ["(x^2 + y^2 - z^2)/2"])


def planes_t2(ps, x, tangents, exact=True):
    return t2_from_override({"pieces": [{"tangent": t} for t in tangents], "exact": exact},
                            x, leaf_tangent(ps, x))


def test_equilibrium_generators():
    s = sl2("x + y^2")
    assert st.equilibrium_and_generator(s, np.zeros(3))[0] == 0
    names = ["x", "y", "z", "q", "p"]
    m = [["0", "0", "y", "0", "0"], ["0", "0", "-x", "0", "0"], ["-y", "x", "0", "0", "0"],
         ["0", "0", "0", "0", "1"], ["0", "0", "0", "-1", "0"]]
    s5 = HamiltonianSystem(structure_matrix(m, 5, names=names),
                           parse("a*z - q*y + (q^2+p^2)/2", 5, {"a": 2.0}, names))
    res, dh = st.equilibrium_and_generator(s5, np.zeros(5))
    assert res == 0 and np.allclose(dh, [0, 0, 2, 0, 0])
    rb = system("so3", "(x^2+y^2+z^2)/2")
    res, dh = st.equilibrium_and_generator(rb, [1.0, 0, 0])
    assert res == 0 and np.allclose(dh, [1, 0, 0])


def test_one_dim_test_on_se2_axis():
    s = system("se2", "z + (x^2 + y^2)/2")
    t2 = t2_description(s.structure, np.zeros(3))
    assert st.one_dim_t2_test(s, np.zeros(3), t2).value == st.STABLE
    s0 = system("se2", "z^2/2")
    assert st.one_dim_t2_test(s0, np.zeros(3), t2).value == st.INCONCLUSIVE


def test_one_dim_rejects_sl2():
    s = sl2("z")
    with pytest.raises(WrongDimension):
        st.one_dim_t2_test(s, np.zeros(3), t2_description(s.structure, np.zeros(3)))


def test_twoplanes_without_casimirs():
    A = parse("(x^2 - y^2)/2", 3)
    s = HamiltonianSystem(r3_casimir(A), parse("2*x^2 - y^2 + z^2", 3))
    t2 = planes_t2(s.structure, np.zeros(3), [[[1, 1, 0], [0, 0, 1]], [[1, -1, 0], [0, 0, 1]]])
    v = st.t2_energy_casimir(s, np.zeros(3), t2)
    assert v.value == st.STABLE
    assert all(p["casimirs"] == [] for p in v.witness["pieces"])


def test_sl2_quadratic_needs_casimir():
    s = sl2("x^2 + y^2")
    v = st.t2_energy_casimir(s, np.zeros(3), t2_description(s.structure, np.zeros(3)))
    assert v.value == st.STABLE
    lam = v.witness["pieces"][0]["lambda"][0]
    H = np.diag([2.0, 2.0, 0.0]) + lam * np.diag([1.0, 1.0, -1.0])
    ev = np.linalg.eigvalsh(H)
    assert ev.min() > 0 or ev.max() < 0


def test_wild_generator_refused():
    s = sl2("x + y^2")
    v = st.t2_energy_casimir(s, np.zeros(3), t2_description(s.structure, np.zeros(3)))
    assert v.value == st.INCONCLUSIVE


@pytest.mark.parametrize("xi,eig", [((2, 0, 1), [-np.sqrt(3), 0, np.sqrt(3)]),
                                    ((1, 0, 2), [-1j * np.sqrt(3), 0, 1j * np.sqrt(3)])])
def test_sl2_linear_spectrum(xi, eig):
    s = sl2("a*x + b*y + c*z", dict(zip("abc", xi)))
    rep = st.linearization_spectrum(s, np.zeros(3))
    assert np.allclose(rep.eigenvalues, np.array(sorted(eig, key=lambda z: (complex(z).real, complex(z).imag)), dtype=complex))
    assert rep.evidence == (xi == (2, 0, 1))


def test_se2plus_resonance():
    names = ["x", "y", "z", "q", "p"]
    m = [["0", "0", "y", "0", "0"], ["0", "0", "-x", "0", "0"], ["-y", "x", "0", "0", "0"],
         ["0", "0", "0", "0", "1"], ["0", "0", "0", "-1", "0"]]
    s = HamiltonianSystem(structure_matrix(m, 5, names=names),
                          parse("z - q*y + (q^2+p^2)/2", 5, names=names))
    rep = st.linearization_spectrum(s, np.zeros(5))
    assert not rep.evidence
    assert any(abs(d["eigenvalue"].imag) == pytest.approx(1.0, abs=1e-6) and d["geometric"] < d["algebraic"]
               for d in rep.defective)


def test_analyze_verdicts():
    assert st.analyze(system("so3", "(x^2 + y^2/2 + z^2/3)/2"), [1.0, 0, 0]).value == st.STABLE
    assert st.analyze(system("so3", "(x^2/2 + y^2 + z^2/3)/2"), [1.0, 0, 0]).value == st.EVIDENCE
    assert st.analyze(sl2("2*x + z"), np.zeros(3)).value == st.EVIDENCE
    assert st.analyze(sl2("x + 2*z"), np.zeros(3)).value == st.STABLE
    assert st.analyze(sl2("x + z"), np.zeros(3)).value == st.LEAFWISE


def test_analyze_rejects_non_equilibrium():
    with pytest.raises(NotEquilibrium):
        st.analyze(system("so3", "(x^2 + y^2/2 + z^2/3)/2"), [1.0, 1.0, 0])


def test_reduced_energy_momentum():
    so3 = get_algebra("so3")
    for inertia, want in [((1, 2, 3), st.STABLE), ((3, 1, 2), st.STABLE), ((2, 1, 3), st.INCONCLUSIVE)]:
        h = parse("(x^2/%g + y^2/%g + z^2/%g)/2" % inertia, 3)
        assert st.reduced_energy_momentum(so3, h, [1.0, 0, 0]).value == want
    v = st.reduced_energy_momentum(get_algebra("rsdr"), parse("y", 2), [0.0, 0.0])
    assert v.value == st.INCONCLUSIVE and "wild_witness" in v.witness
    se2 = get_algebra("se2")
    assert st.reduced_energy_momentum(se2, parse("(x^2 + y^2 + z^2)/2", 3), np.zeros(3)).value == st.STABLE


def test_euclidean_corollaries():
    v = st.euclidean_criteria("SE3", parse("(x1^2 + x2^2 + x3^2)/2 + x3 + (x4^2+x5^2+x6^2)/2", 6),
                              [0, 0, 1.0, 0, 0, 0])
    assert v.value == st.INCONCLUSIVE and v.witness["case"] == "nonregular"
    v = st.euclidean_criteria("SE3", parse("(x1^2 + 2*x2^2 + 3*x3^2)/2 + (x4^2 + x5^2/2 + x6^2/3)/2", 6),
                              [0, 0, 0, 0, 0, 1.0])
    assert v.witness["case"] == "regular" and v.witness["iso_dim"] == 2
    v = st.euclidean_criteria("SE2", parse("(x^2 + y^2 + z^2)/2", 3), np.zeros(3))
    assert v.value == st.STABLE and v.criterion == "se2_corollary"


def test_definiteness_gate():
    assert st.definiteness(np.eye(2))[0]
    assert st.definiteness(-np.eye(2))[0]
    assert not st.definiteness(np.diag([1.0, 0.0]))[0]
    assert st.definiteness(np.zeros((0, 0)))[0]


def test_verdict_json_is_plain():
    import json
    v = st.analyze(sl2("2*x + z"), np.zeros(3))
    text = json.dumps(v.to_json())
    assert json.loads(text)["value"] == st.EVIDENCE
