"""Integration, confinement probes, group reconstruction and cone monitoring."""

from __future__ import annotations

import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq

from .errors import DimensionMismatch, PoissonStabError, StepSizeUnderflow, UnsupportedCase
from .poisson import HamiltonianSystem, hat

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# dense output (Hairer's continuous extension)
_D = np.array([-12715105075 / 11282082432, 0.0, 87487479700 / 32700410799,
               -10690763975 / 1880347072, 701980252875 / 199316789632,
               -1453857185 / 822651844, 69997945 / 29380423])

_BETA = 0.04
_EXPO = 0.2 - _BETA * 0.75
_SAFE = 0.9


@dataclass
class _Segment:
    t0: float
    h: float
    r: tuple

    def __call__(self, t):
        th = (t - self.t0) / self.h
        th1 = 1.0 - th
        r1, r2, r3, r4, r5 = self.r
        return r1 + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5)))


class DenseSolution:
    """Piecewise quartic interpolant over accepted steps."""

    def __init__(self):
        self.segments = []
        self.starts = []

    def add(self, seg):
        self.segments.append(seg)
        self.starts.append(seg.t0)

    def __call__(self, t):
        i = int(np.searchsorted(self.starts, t, side="right")) - 1
        i = min(max(i, 0), len(self.segments) - 1)
        return self.segments[i](t)


def dopri5(f, x0, t0, t1, rtol, atol=None, on_step=None, max_steps=10_000_000):
    """Integrate x' = f(t, x) from t0 to t1 (t1 > t0).

    ``on_step(t_old, t_new, x_new, segment)`` is called after each accepted
    step; returning True stops the integration. Returns (t, x, stats, dense).
    """
    atol = rtol if atol is None else atol
    x = np.array(x0, dtype=float)
    t = float(t0)
    span = float(t1) - t
    dense = DenseSolution()
    stats = {"accepted": 0, "rejected": 0, "evaluations": 0}
    if span <= 0:
        return t, x, stats, dense
    k1 = np.asarray(f(t, x), dtype=float)
    stats["evaluations"] += 1
    # initial step (Hairer's heuristic)
    sc = atol + rtol * np.abs(x)
    d0 = np.sqrt(np.mean((x / sc) ** 2))
    d1 = np.sqrt(np.mean((k1 / sc) ** 2))
    h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h = min(h, span)
    x1 = x + h * k1
    k2 = np.asarray(f(t + h, x1), dtype=float)
    stats["evaluations"] += 1
    d2 = np.sqrt(np.mean(((k2 - k1) / sc) ** 2)) / h
    dm = max(d1, d2)
    h1 = max(1e-6, h * 1e-3) if dm <= 1e-15 else (0.01 / dm) ** 0.2
    h = min(100 * h, h1, span)
    err_old = 1e-4
    ks = [None] * 7
    while True:
        if t >= t1:
            break
        if stats["accepted"] + stats["rejected"] > max_steps:
            raise StepSizeUnderflow("maximum number of steps exceeded")
        if h < 16 * np.finfo(float).eps * max(1.0, abs(t)):
            raise StepSizeUnderflow(f"step size underflow at t={t:.6g}")
        last = t + h >= t1
        if last:
            h = t1 - t
        ks[0] = k1
        for i in range(1, 7):
            xi = x.copy()
            for j, a in enumerate(_A[i]):
                if a:
                    xi += h * a * ks[j]
            ks[i] = np.asarray(f(t + _C[i] * h, xi), dtype=float)
            if i == 6:
                xnew = xi
        stats["evaluations"] += 6
        errv = h * sum(e * k for e, k in zip(_E, ks) if e)
        sc = atol + rtol * np.maximum(np.abs(x), np.abs(xnew))
        err = float(np.sqrt(np.mean((errv / sc) ** 2)))
        if not np.isfinite(err):
            h *= 0.2
            stats["rejected"] += 1
            continue
        if err <= 1.0:
            fac = _SAFE * max(err, 1e-10) ** (-_EXPO) * err_old ** _BETA
            fac = min(5.0, max(0.2, fac))
            err_old = max(err, 1e-4)
            ydiff = xnew - x
            bspl = h * ks[0] - ydiff
            seg = _Segment(t, h, (x.copy(), ydiff, bspl, ydiff - h * ks[6] - bspl,
                                  h * sum(d * k for d, k in zip(_D, ks) if d)))
            dense.add(seg)
            told = t
            t = t1 if last else t + h
            x = xnew
            k1 = ks[6]
            stats["accepted"] += 1
            if on_step is not None and on_step(told, t, x, seg):
                break
            h *= fac
        else:
            stats["rejected"] += 1
            h *= max(0.2, _SAFE * err ** (-_EXPO))
    return t, x, stats, dense


# --------------------------------------------------------------------------- trajectories


def _relative(v, v0):
    scale = abs(v0) if abs(v0) > 1e-12 else 1.0
    return abs(v - v0) / scale


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    states: np.ndarray
    energy: np.ndarray
    casimirs: np.ndarray
    energy_drift: np.ndarray
    casimir_drifts: np.ndarray
    max_energy_drift: float
    max_casimir_drift: list
    stats: dict
    dense: DenseSolution | None = field(default=None, repr=False)

    def summary(self):
        return {"samples": len(self.times), "t_final": float(self.times[-1]),
                "max_energy_drift": self.max_energy_drift,
                "max_casimir_drift": list(self.max_casimir_drift), **self.stats}

    def to_csv(self) -> str:
        n = self.states.shape[1]
        k = self.casimirs.shape[1] if self.casimirs.ndim == 2 else 0
        header = ["t"] + [f"x{i + 1}" for i in range(n)] + ["h"] + [f"C{j + 1}" for j in range(k)]
        buf = io.StringIO()
        buf.write(",".join(header) + "\n")
        for i, t in enumerate(self.times):
            row = [t, *self.states[i], self.energy[i], *(self.casimirs[i] if k else [])]
            buf.write(",".join(format(float(v), ".17g") for v in row) + "\n")
        return buf.getvalue()


def integrate(sys: HamiltonianSystem, x0, t_final: float, tol: float = 1e-10,
              sample_times=None, reverse: bool = False) -> TrajectoryRecord:
    """Adaptive RK5(4) solution with energy and Casimir drift monitoring.

    Without ``sample_times`` the record holds the accepted step points.
    ``reverse`` integrates the negated vector field.
    """
    if not (1e-13 <= tol <= 1e-3):
        raise ValueError("tol must lie in [1e-13, 1e-3]")
    x0 = np.asarray(x0, dtype=float)
    if len(x0) != sys.dim:
        raise DimensionMismatch(f"initial state has length {len(x0)}, expected {sys.dim}")
    sign = -1.0 if reverse else 1.0
    pmat = sys.structure.matrix_at
    grad = sys.h.gradient

    def f(_t, x):
        return sign * (pmat(x) @ grad(x)[1])

    cas = sys.casimirs
    h0 = sys.h.evaluate(x0)
    c0 = [c.evaluate(x0) for c in cas]
    worst = {"h": 0.0, "c": [0.0] * len(cas)}

    def on_step(_a, _b, x, _seg):
        worst["h"] = max(worst["h"], _relative(sys.h.evaluate(x), h0))
        for j, c in enumerate(cas):
            worst["c"][j] = max(worst["c"][j], _relative(c.evaluate(x), c0[j]))
        return False

    steps_t = [0.0]
    steps_x = [x0.copy()]

    def record(a, b, x, seg):
        steps_t.append(b)
        steps_x.append(x.copy())
        return on_step(a, b, x, seg)

    _, _, stats, dense = dopri5(f, x0, 0.0, float(t_final), tol, tol, record)
    if sample_times is None:
        times = np.array(steps_t)
        states = np.array(steps_x)
    else:
        times = np.asarray(sample_times, dtype=float)
        if np.any(times < 0) or np.any(times > t_final) or np.any(np.diff(times) < 0):
            raise ValueError("sample times must be increasing within [0, t_final]")
        states = np.array([x0 if t == 0.0 else dense(t) for t in times])
    energy = np.array([sys.h.evaluate(x) for x in states])
    cvals = np.array([[c.evaluate(x) for c in cas] for x in states]).reshape(len(times), len(cas))
    edrift = np.array([_relative(e, h0) for e in energy])
    cdrift = np.array([[_relative(v, c0[j]) for j, v in enumerate(row)] for row in cvals]).reshape(
        len(times), len(cas))
    return TrajectoryRecord(times, states, energy, cvals, edrift, cdrift, float(worst["h"]),
                            [float(v) for v in worst["c"]], stats, dense)


# --------------------------------------------------------------------------- probes


def worker_count(requested=None) -> int:
    """Worker threads: the request (default: CPU count), capped by POISSON_STAB_THREADS."""
    n = int(requested) if requested is not None else (os.cpu_count() or 1)
    env = os.environ.get("POISSON_STAB_THREADS")
    if env:
        try:
            n = min(n, int(env))
        except ValueError:
            pass
    return max(1, n)


def trial_rng(seed: int, index: int):
    """Counter-based stream keyed by (seed, trial index)."""
    return np.random.Generator(np.random.Philox(key=np.array([seed, index], dtype=np.uint64)))


def _run_trial(sys, x_e, R, delta, direction, t_final, tol):
    x0 = x_e + delta * direction
    state = {"max": delta, "escape": None}

    def dist(x):
        return float(np.linalg.norm(x - x_e))

    def on_step(a, b, x, seg):
        d = dist(x)
        if d > R:
            g = lambda t: dist(seg(t)) - R  # noqa: E731
            state["escape"] = brentq(g, a, b, xtol=1e-12) if g(a) < 0 else a
            state["max"] = max(state["max"], d)
            return True
        state["max"] = max(state["max"], d)
        return False

    pmat = sys.structure.matrix_at
    grad = sys.h.gradient
    try:
        dopri5(lambda _t, x: pmat(x) @ grad(x)[1], x0, 0.0, t_final, tol, tol, on_step)
    except PoissonStabError as exc:
        return {"delta": delta, "error": {"kind": exc.kind, "message": str(exc)},
                "max_distance": state["max"], "escape_time": None}
    return {"delta": delta, "direction": direction.tolist(), "max_distance": state["max"],
            "escape_time": state["escape"]}


def probe(sys: HamiltonianSystem, x_e, R: float, delta_grid, trials_per_delta: int,
          t_final: float, seed: int = 0, workers=None, tol: float = 1e-9, directions=None) -> dict:
    """Monte-Carlo confinement probe around ``x_e``.

    Trial ``i`` draws its direction from a stream keyed by (seed, i), so the
    report does not depend on the worker count. ``directions`` (optional list
    of vectors) replaces the random directions, cycling through the list.
    """
    x_e = np.asarray(x_e, dtype=float)
    deltas = [float(d) for d in delta_grid]
    if any(not (0 < d < R) for d in deltas):
        raise ValueError("every delta must satisfy 0 < delta < R")
    jobs = []
    idx = 0
    for d in deltas:
        for k in range(trials_per_delta):
            if directions is not None:
                v = np.asarray(directions[k % len(directions)], dtype=float)
            else:
                v = trial_rng(seed, idx).standard_normal(len(x_e))
            jobs.append((idx, d, v / np.linalg.norm(v)))
            idx += 1

    def run(job):
        i, d, v = job
        return i, _run_trial(sys, x_e, R, d, v, t_final, tol)

    n = min(worker_count(workers), max(1, len(jobs)))
    if n == 1:
        results = [run(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=n) as ex:
            results = list(ex.map(run, jobs))
    results.sort(key=lambda r: r[0])
    trials = [dict(index=i, **r) for i, r in results]
    per_delta = []
    for d in deltas:
        ts = [t for t in trials if t["delta"] == d]
        confined = sum(1 for t in ts if t["escape_time"] is None and "error" not in t)
        per_delta.append({"delta": d, "trials": len(ts), "confined": confined,
                          "confinement_fraction": confined / len(ts) if ts else 1.0})
    return {"schema_version": 1, "kind": "probe", "system": sys.name,
            "equilibrium": x_e.tolist(), "radius": float(R), "t_final": float(t_final),
            "seed": int(seed), "tol": tol, "per_delta": per_delta, "trials": trials,
            "caveat": "finite horizon: trials that never leave the ball by t_final count as confined"}


def probe_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, separators=(",", ":"))


# --------------------------------------------------------------------------- groups


def algebra_matrix(group: str, xi):
    xi = np.asarray(xi, dtype=float)
    if group == "SE2":
        if len(xi) != 3:
            raise DimensionMismatch("se(2) elements have 3 components")
        v1, v2, w = xi
        return np.array([[0.0, -w, v1], [w, 0.0, v2], [0.0, 0.0, 0.0]])
    if group == "SE3":
        if len(xi) != 6:
            raise DimensionMismatch("se(3) elements have 6 components")
        m = np.zeros((4, 4))
        m[:3, :3] = hat(xi[:3])
        m[:3, 3] = xi[3:]
        return m
    raise UnsupportedCase(f"unknown group {group!r}")


def group_exp(group: str, xi):
    return sla.expm(algebra_matrix(group, xi))


def _reorthonormalize(g):
    d = g.shape[0] - 1
    u, _, vt = np.linalg.svd(g[:d, :d])
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] *= -1
        r = u @ vt
    g = g.copy()
    g[:d, :d] = r
    return g


@dataclass
class GroupTrajectory:
    group: str
    times: np.ndarray
    g: np.ndarray
    xi: np.ndarray
    richardson_error: float = 0.0

    def rotation(self, i):
        d = self.g.shape[1] - 1
        return self.g[i, :d, :d]

    def translation(self, i):
        d = self.g.shape[1] - 1
        return self.g[i, :d, d]


def _lie_steps(group, times, xis, g0):
    gs = [np.asarray(g0, dtype=float)]
    for k in range(len(times) - 1):
        dt = times[k + 1] - times[k]
        step = group_exp(group, 0.5 * dt * (xis[k] + xis[k + 1]))
        gs.append(_reorthonormalize(gs[-1] @ step))
    return np.array(gs)


def reconstruct(group: str, reduced, h, g0=None) -> GroupTrajectory:
    """Solve g' = g xi(t), xi = dh(nu(t)), by order-2 exponential steps.

    ``reduced`` is a TrajectoryRecord (or an object with ``times`` and
    ``states``). The Richardson estimate compares against the run on every
    other sample.
    """
    dim = {"SE2": 3, "SE3": 6}.get(group)
    if dim is None:
        raise UnsupportedCase(f"unknown group {group!r}")
    states = np.asarray(reduced.states, dtype=float)
    if states.shape[1] != dim or h.dim != dim:
        raise DimensionMismatch(f"{group} reconstruction needs states of length {dim}")
    times = np.asarray(reduced.times, dtype=float)
    if g0 is None:
        g0 = np.eye(3 if group == "SE2" else 4)
    xis = np.array([h.gradient(s)[1] for s in states])
    gs = _lie_steps(group, times, xis, g0)
    rich = 0.0
    if len(times) >= 3:
        coarse = _lie_steps(group, times[::2], xis[::2], g0)
        rich = float(np.max(np.abs(coarse[-1] - gs[::2][-1]))) / 3.0
    return GroupTrajectory(group, times, gs, xis, rich)


def spatial_momentum(group: str, g, nu):
    """Coadjoint transport Ad*_{g^-1} of a body momentum to the spatial frame."""
    nu = np.asarray(nu, dtype=float)
    if group == "SE2":
        r = g[:2, :2]
        a = g[:2, 2]
        p = r @ nu[:2]
        return np.array([p[0], p[1], nu[2] + a[0] * p[1] - a[1] * p[0]])
    r = g[:3, :3]
    a = g[:3, 3]
    p = r @ nu[3:]
    return np.concatenate([r @ nu[:3] + np.cross(a, p), p])


# --------------------------------------------------------------------------- A-stability


def solve_e1(mu_r, R, nu_r, nu_a):
    """Least-squares translation a with mu_r x (R(mu_r + nu_r) + a x R nu_a) = 0."""
    mu_r = np.asarray(mu_r, dtype=float)
    w = R @ np.asarray(nu_a, dtype=float)
    M = -hat(mu_r) @ hat(w)
    rhs = -np.cross(mu_r, R @ (mu_r + np.asarray(nu_r, dtype=float)))
    a, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    resid = float(np.linalg.norm(M @ a - rhs))
    return a, resid


def sin_theta(R, mu_r):
    mu_r = np.asarray(mu_r, dtype=float)
    return float(np.linalg.norm(np.cross(mu_r, R @ mu_r)) / (mu_r @ mu_r))


def _cone_distance(a, d, half_angle):
    """Distance from a to the double cone of the given half-angle about the line R d."""
    na = float(np.linalg.norm(a))
    if na == 0.0:
        return 0.0
    phi = float(np.arccos(min(1.0, abs(a @ d) / na)))
    if phi <= half_angle:
        return 0.0
    return na * np.sin(min(phi - half_angle, np.pi / 2))


def a_stability_monitor(group: str, gt: GroupTrajectory, mu_e, eps0: float, eps1: float) -> dict:
    from .stability import momentum_blocks
    mu = np.asarray(mu_e, dtype=float)
    mu_r, mu_a = momentum_blocks(group, mu)
    scale = 1e-12 * (1 + np.linalg.norm(mu))
    rows = []
    if group == "SE3" and np.linalg.norm(mu_a) <= scale and np.linalg.norm(mu_r) > scale:
        case = "se3_nonregular"
        for i, t in enumerate(gt.times):
            s = sin_theta(gt.rotation(i), mu_r)
            bound = eps1 * float(np.linalg.norm(gt.translation(i))) + eps0
            rows.append((t, s < bound, bound - s))
    elif np.linalg.norm(mu_a) > scale:
        case = f"{group.lower()}_regular"
        d = mu_a / np.linalg.norm(mu_a)
        for i, t in enumerate(gt.times):
            dist = _cone_distance(gt.translation(i), d, eps0)
            rows.append((t, dist <= eps1, eps1 - dist))
    else:
        raise UnsupportedCase(f"no cone test for {group} at this momentum")
    first = next((float(t) for t, ok, _ in rows if not ok), None)
    return {"case": case, "clean": first is None, "first_violation": first,
            "min_margin": float(min(m for _, _, m in rows)), "samples": len(rows),
            "eps0": eps0, "eps1": eps1}
