import json

import numpy as np
import pytest

from poisson_stab import catalog, stability
from poisson_stab.errors import NotFound
from poisson_stab.leafspace import t2_description


def test_list_is_stable_and_complete():
    names = catalog.names()
    assert names == catalog.names()
    for n in ["so3_any", "sl2_linear", "sl2_quadratic", "se2plus", "twoplanes", "threeplanes", "rsdr",
              "se2n1", "unnecessary", "nosmoothing"]:
        assert n in names


def test_get_unknown_suggests():
    with pytest.raises(NotFound) as info:
        catalog.get("threeplane")
    assert info.value.suggestion == "threeplanes"
    with pytest.raises(NotFound):
        catalog.get("nosuch")


def test_sl2_linear_entry():
    e = catalog.get("sl2_linear")
    assert e.template["hamiltonian"] == "xi1*x + xi2*y + xi3*z"
    assert e.expected({"xi1": 0, "xi2": 0, "xi3": 1})["value"] == stability.STABLE
    assert e.expected({"xi1": 2, "xi2": 0, "xi3": 1})["value"] == stability.EVIDENCE


def test_threeplanes_entry():
    e = catalog.get("threeplanes")
    assert e.template["poisson"]["A"] == "(a^2*x^2 - y^2)*y"
    assert e.expected({"a": 0.5}) == {"value": stability.STABLE, "single_piece": stability.INCONCLUSIVE}


def test_documentation_entries_unrunnable():
    rows = catalog.run_expectations(["unnecessary", "nosmoothing"])
    assert [r["status"] for r in rows] == ["UNRUNNABLE", "UNRUNNABLE"]
    assert "quotient topology" in rows[0]["reason"]
    assert "no smoothing" in rows[1]["reason"]


def test_empty_budget_skips_everything():
    rows = catalog.run_expectations(budget=0)
    assert len(rows) == len(catalog.names())
    assert all(r["status"] == "SKIPPED" for r in rows)


@pytest.mark.parametrize("name", ["twoplanes", "threeplanes", "rsdr", "se2_axis", "se2n1", "so3_rigid_body",
                                  "se2_regular", "se3_nonregular", "se3_regular", "se2plus"])
def test_expectations_pass(name):
    row = catalog.run_expectations([name])[0]
    assert row["status"] == "PASS", row


def test_run_is_deterministic():
    a = catalog.run_expectations(["sl2_linear"], probes=True)[0]
    b = catalog.run_expectations(["sl2_linear"], probes=True)[0]
    assert a["probe"] == b["probe"] and a["mismatches"] == b["mismatches"]


def test_entries_satisfy_leaf_containment():
    for name in catalog.names():
        e = catalog.get(name)
        if not e.runnable:
            continue
        for params in e.grid:
            loaded = e.build(params)
            x = loaded.equilibrium
            t2 = catalog.t2_for(loaded) or t2_description(loaded.system, x)
            P = loaded.system.structure.matrix_at(x)
            S = t2.tangent_span
            assert np.allclose(P - S @ (S.T @ P), 0, atol=1e-9), name


def test_catalogued_casimirs_are_casimirs():
    for name in catalog.names():
        e = catalog.get(name)
        if not e.runnable:
            continue
        ps = e.build().system.structure
        for c in ps.casimirs:
            assert ps.verify_casimir(c, samples=20)["pass"], (name, c.text())


def test_export_round_trip():
    doc = catalog.export("twoplanes", {"a": 1.0, "b": 0.0})
    again = json.loads(json.dumps(doc))
    assert again == doc
    v1 = catalog.analyze_loaded(catalog.load_system(again))["verdict"]
    v2 = catalog.analyze_loaded(catalog.get("twoplanes").build({"a": 1.0, "b": 0.0}))["verdict"]
    assert v1.value == v2.value == stability.STABLE
    assert json.dumps(v1.to_json(), sort_keys=True) == json.dumps(v2.to_json(), sort_keys=True)
