import numpy as np
import pytest
from scipy.linalg import expm
from scipy.spatial.transform import Rotation

from poisson_stab import dynamics as dyn
from poisson_stab.algebra import get_algebra
from poisson_stab.errors import DimensionMismatch, UnsupportedCase
from poisson_stab.expr import parse
from poisson_stab.poisson import HamiltonianSystem, lie_poisson


def rigid_body(inertia=(1.0, 2.0, 3.0)):
    ps = lie_poisson(get_algebra("so3"), [parse("(x^2 + y^2 + z^2)/2", 3)])
    return HamiltonianSystem(ps, parse("(x^2/%g + y^2/%g + z^2/%g)/2" % inertia, 3))


def test_rigid_body_drift():
    rec = dyn.integrate(rigid_body(), [1.0, 0.01, 0.0], 100.0, tol=1e-10)
    assert rec.max_energy_drift < 1e-7 and rec.max_casimir_drift[0] < 1e-7


def test_equilibrium_stays_put():
    rec = dyn.integrate(rigid_body(), [0.0, 0.0, 2.0], 10.0, tol=1e-10)
    assert np.allclose(rec.states, [0, 0, 2.0], atol=1e-12)


def test_dopri_on_exponential():
    t, x, stats, dense = dyn.dopri5(lambda _t, y: -y, np.array([1.0]), 0.0, 5.0, 1e-10)
    assert x[0] == pytest.approx(np.exp(-5.0), rel=1e-8)
    assert dense(2.5)[0] == pytest.approx(np.exp(-2.5), rel=1e-7)
    assert stats["accepted"] > 0


def test_sample_times_and_csv():
    rec = dyn.integrate(rigid_body(), [1.0, 0.5, 0.2], 2.0, sample_times=np.linspace(0, 2, 5))
    lines = rec.to_csv().strip().splitlines()
    assert lines[0] == "t,x1,x2,x3,h,C1"
    assert len(lines) == 6
    assert float(lines[-1].split(",")[0]) == 2.0


def test_bad_arguments():
    with pytest.raises(ValueError):
        dyn.integrate(rigid_body(), [1.0, 0, 0], 1.0, tol=1e-2)
    with pytest.raises(DimensionMismatch):
        dyn.integrate(rigid_body(), [1.0, 0], 1.0)


def test_time_reversal():
    sys = rigid_body()
    x0 = np.array([1.0, 0.5, 0.2])
    fwd = dyn.integrate(sys, x0, 10.0, tol=1e-11)
    back = dyn.integrate(sys, fwd.states[-1], 10.0, tol=1e-11, reverse=True)
    assert np.linalg.norm(back.states[-1] - x0) < 1e-8


def test_probe_confined_rigid_body_origin():
    sys = rigid_body()
    rep = dyn.probe(sys, np.zeros(3), 0.1, [0.01], 8, 20.0, seed=1)
    assert rep["per_delta"][0]["confinement_fraction"] == 1.0
    assert rep["schema_version"] == 1 and rep["caveat"]


def test_probe_workers_identical(monkeypatch):
    sys = HamiltonianSystem(lie_poisson(get_algebra("rsdr")), parse("y", 2))
    a = dyn.probe_json(dyn.probe(sys, np.zeros(2), 0.1, [0.01], 6, 20.0, seed=42, workers=1))
    monkeypatch.setenv("POISSON_STAB_THREADS", "3")
    b = dyn.probe_json(dyn.probe(sys, np.zeros(2), 0.1, [0.01], 6, 20.0, seed=42))
    assert a == b


def test_worker_cap(monkeypatch):
    monkeypatch.setenv("POISSON_STAB_THREADS", "2")
    assert dyn.worker_count() <= 2
    assert dyn.worker_count(5) == 2
    assert dyn.worker_count(1) == 1


def test_probe_rejects_bad_delta():
    with pytest.raises(ValueError):
        dyn.probe(rigid_body(), np.zeros(3), 0.1, [0.2], 1, 1.0)


def test_constant_generator_reconstruction():
    xi = np.array([0.3, -0.1, 0.7, 0.2, 0.5, -0.4])
    h = parse("0.3*x1 - 0.1*x2 + 0.7*x3 + 0.2*x4 + 0.5*x5 - 0.4*x6", 6)

    class R:
        times = np.linspace(0, 10, 201)
        states = np.zeros((201, 6))

    gt = dyn.reconstruct("SE3", R, h)
    for i in (50, 200):
        want = expm(R.times[i] * dyn.algebra_matrix("SE3", xi))
        assert np.max(np.abs(gt.g[i] - want)) < 1e-8


def test_se2_regular_translation_subgroup():
    ps = lie_poisson(get_algebra("se2"))
    h = parse("(x^2/2 + y^2 + z^2)/2", 3)
    sys = HamiltonianSystem(ps, h)
    rec = dyn.integrate(sys, [1.0, 0, 0], 5.0, sample_times=np.linspace(0, 5, 101))
    gt = dyn.reconstruct("SE2", rec, h)
    for i in range(len(gt.times)):
        assert np.allclose(gt.rotation(i), np.eye(2), atol=1e-12)
        assert abs(gt.translation(i)[1]) < 1e-12


def test_reconstruction_order_two():
    h = parse("(x1^2 + x2^2/2 + x3^2/3)/2 + (x4^2/1.5 + x5^2/2.5 + x6^2/3.5)/2 + 0.1*x1*x4", 6)
    sys = HamiltonianSystem(lie_poisson(get_algebra("se3")), h)
    x0 = [0.3, -0.2, 0.5, 0.4, 0.1, -0.3]
    errs = []
    ref = dyn.integrate(sys, x0, 4.0, tol=1e-12, sample_times=np.linspace(0, 4, 3201))
    gref = dyn.reconstruct("SE3", ref, h).g[-1]
    for n in (101, 201):
        rec = dyn.integrate(sys, x0, 4.0, tol=1e-12, sample_times=np.linspace(0, 4, n))
        errs.append(np.max(np.abs(dyn.reconstruct("SE3", rec, h).g[-1] - gref)))
    assert 3.0 < errs[0] / errs[1] < 5.0


def test_spatial_momentum_conserved():
    h = parse("(x1^2 + x2^2/2 + x3^2/3)/2 + (x4^2/1.5 + x5^2/2.5 + x6^2/3.5)/2 + 0.1*x1*x4", 6)
    sys = HamiltonianSystem(lie_poisson(get_algebra("se3")), h)
    ts = np.linspace(0, 10, 2001)
    rec = dyn.integrate(sys, [0.3, -0.2, 0.5, 0.4, 0.1, -0.3], 10.0, tol=1e-12, sample_times=ts)
    gt = dyn.reconstruct("SE3", rec, h)
    sp = np.array([dyn.spatial_momentum("SE3", gt.g[i], rec.states[i]) for i in range(len(ts))])
    assert np.max(np.abs(sp - sp[0])) < 1e-6


def test_cone_bound_with_exact_factor():
    # |sin theta| <= |nu_a||a| / ((1 + t)|mu_r|) when nu_r = t mu_r
    rng = np.random.Generator(np.random.Philox(key=5))
    mu = np.array([0.3, -0.4, 1.2])
    for _ in range(300):
        R = Rotation.random(random_state=rng).as_matrix()
        t = rng.uniform(-0.1, 0.1)
        nua = rng.normal(size=3) * 0.1
        a, res = dyn.solve_e1(mu, R, t * mu, nua)
        assert res < 1e-10
        bound = np.linalg.norm(nua) * np.linalg.norm(a) / ((1 + t) * np.linalg.norm(mu))
        assert dyn.sin_theta(R, mu) <= bound + 1e-9


def test_identity_trajectory_is_clean():
    class R:
        times = np.linspace(0, 1, 11)
        states = np.zeros((11, 6))

    gt = dyn.reconstruct("SE3", R, parse("0*x1", 6))
    rep = dyn.a_stability_monitor("SE3", gt, [0, 0, 1.0, 0, 0, 0], 1e-3, 1e-3)
    assert rep["clean"] and rep["case"] == "se3_nonregular"
    rep = dyn.a_stability_monitor("SE3", gt, [0, 0, 0, 0, 0, 1.0], 1e-3, 1e-3)
    assert rep["clean"] and rep["case"] == "se3_regular"
    with pytest.raises(UnsupportedCase):
        dyn.a_stability_monitor("SE3", gt, np.zeros(6), 1e-3, 1e-3)
