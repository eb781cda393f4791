"""Acceptance suite: one PASS/FAIL line per criterion, at the stated tolerance.

Run with ``pytest tests/test_acceptance.py -v``; the verdict lines are
printed straight to the terminal even when output capture is on.
"""

import time

import numpy as np
import pytest
from scipy.linalg import expm

from switched_mpc.cli import sandwich
from switched_mpc.integrator import GridSpec, batch_step, step, step_with_sensitivities
from switched_mpc.invariants import (Polytope, SwitchedLinearSystem, compute_srci, contains, lp_min,
                                     sample_points, verify_srci)
from switched_mpc.model import EX1_A1, EX1_A2, builtin_example1, builtin_example2
from switched_mpc.mpc import ControllerState, mpc_step, run_closed_loop, verify_dwell
from switched_mpc.ocp import SolverOptions
from switched_mpc.plan import ModePlan
from switched_mpc.rounding import error_bound, max_integration_gap, sur_round
from test_invariants import random_polygon, vertices_2d
from toys import scalar_switched

EX1 = builtin_example1()
EX2 = builtin_example2()
SOFT = SolverOptions(soften=True)

EX1_REF = {2: (1.448, 0.267), 4: (1.459, 0.199), 5: (1.453, 0.411)}
EX2_REF = {4: 8.143, 5: 10.818, 8: 37.65}


def report(request, ok, detail):
    with request.config.pluginmanager.getplugin("capturemanager").global_and_fixture_disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] {request.node.name}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def ex1_runs():
    out = {}
    for l in EX1_REF:
        t0 = time.perf_counter()
        out[l] = run_closed_loop(EX1, GridSpec(20, 0.1), l, [-1.0, 1.0], 50, SOFT)
        out[l].wall = time.perf_counter() - t0
    return out


@pytest.fixture(scope="module")
def ex2_runs():
    out = {}
    for l in EX2_REF:
        t0 = time.perf_counter()
        out[l] = run_closed_loop(EX2, GridSpec(40, 0.1), l, np.zeros(6), 80, SOFT)
        out[l].wall = time.perf_counter() - t0
    return out


def test_criterion1_sur_bound(request):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = -np.inf
    cases = 0
    for Q in (2, 3, 4):
        for M in range(1, 13):
            ls = rng.integers(1, 6, size=1000).tolist()
            hs = (1 + np.floor(rng.uniform(size=1000) * ls)).astype(int).tolist()
            dts = rng.uniform(0.01, 0.5, size=1000).tolist()
            weights = rng.dirichlet(np.ones(Q), size=(1000, M))
            for l, h, dt, P in zip(ls, hs, dts, weights):
                rel = ModePlan(P, l, h, dt)
                gap = max_integration_gap(rel, sur_round(rel))
                worst = max(worst, gap - (error_bound(l, Q, dt) + 1e-12))
                cases += 1
    wall = time.perf_counter() - t0
    ok = worst <= 0 and wall < 5.0
    report(request, ok, f"{cases} plans, max(gap - bound) = {worst:.3e}, {wall:.2f} s (limit 5 s)")


def test_criterion2_closed_loop_dwell(request, ex1_runs, ex2_runs):
    rows = [f"ex1 l={l}: {verify_dwell(tr.modes, l)}" for l, tr in ex1_runs.items()]
    rows += [f"ex2 l={l}: {verify_dwell(tr.modes, l)}" for l, tr in ex2_runs.items()]
    ok = all(r.endswith("True") for r in rows)
    report(request, ok, "; ".join(rows))


def test_criterion3_example1_metrics(request, ex1_runs):
    rows, ok = [], True
    for l, (E_ref, res_ref) in EX1_REF.items():
        tr = ex1_runs[l]
        good = abs(tr.E - E_ref) <= 0.10 * E_ref and abs(tr.res - res_ref) <= 0.25 * res_ref
        ok &= good
        rows.append(f"l={l} E={tr.E:.5f} (ref {E_ref}) res={tr.res:.5f} (ref {res_ref})")
    wall = sum(tr.wall for tr in ex1_runs.values())
    ok &= wall < 30.0
    report(request, ok, "; ".join(rows) + f"; {wall:.1f} s (limit 30 s)")


def test_criterion4_example2_metrics(request, ex2_runs):
    rows, ok = [], True
    for l in (4, 5):
        tr = ex2_runs[l]
        within = abs(tr.E - EX2_REF[l]) <= 0.25 * EX2_REF[l]
        resid = max(EX2.path(tr.states[k], tr.inputs[k]).max() for k in range(tr.n_steps))
        ok &= within and resid <= 1e-3
        rows.append(f"l={l} E={tr.E:.3f} (ref {EX2_REF[l]}, +-25%: {within}) max obstacle residual {resid:.2e}")
    degraded = ex2_runs[8].E >= 2 * ex2_runs[5].E
    ok &= degraded
    rows.append(f"l=8 E={ex2_runs[8].E:.3f} >= 2 x l=5: {degraded}")
    ratio = max(np.mean(tr.round_time) / np.mean(tr.nlp1_time) for tr in ex2_runs.values())
    ok &= ratio <= 0.01
    wall = sum(tr.wall for tr in ex2_runs.values())
    ok &= wall < 300.0
    rows.append(f"rounding/NLP #1 time {ratio:.2e} (limit 1e-2); {wall:.0f} s (limit 300 s)")
    report(request, ok, "; ".join(rows))


def test_criterion5_srci(request):
    t0 = time.perf_counter()
    sys_ = SwitchedLinearSystem.from_continuous((EX1_A1, EX1_A2), 0.1)
    X = Polytope.box(EX1.state_lb, EX1.state_ub)
    res = compute_srci(X, sys_, 4)
    cert = verify_srci(res.polytope, sys_, 4)
    inside = contains(X, res.polytope)
    strict = not contains(res.polytope, X)
    wall = time.perf_counter() - t0
    ok = res.converged and res.iterations <= 50 and not res.empty and inside and strict and cert and wall < 10
    report(request, ok, f"converged={res.converged} iterations={res.iterations} empty={res.empty} "
                        f"in box={inside} strictly inside={strict} certified={cert}, {wall:.2f} s (limit 10 s)")


def test_criterion6_recursive_feasibility(request):
    t0 = time.perf_counter()
    l, grid = 4, GridSpec(20, 0.1)
    sys_ = SwitchedLinearSystem.from_continuous((EX1_A1, EX1_A2), 0.1)
    Xf = compute_srci(Polytope.box(EX1.state_lb, EX1.state_ub), sys_, l).polytope
    # softened so a run survives a rounding-induced excursion and the count stays complete
    solves, bad = 0, []
    for k, x0 in enumerate(sample_points(Xf, 20, seed=7)):
        ctrl = ControllerState.fresh(l)
        x = x0
        for _ in range(50):
            u, b, info = mpc_step(ctrl, EX1, grid, x, SOFT, terminal_set=Xf)
            s = info.relaxed
            solves += 1
            if s.status != "converged" or s.constraint_violation > 1e-6:
                bad.append((k, ctrl.i - 1, s.status, s.constraint_violation))
            x = step(EX1, x, u, b, 0.1)
    wall = time.perf_counter() - t0
    ok = not bad and wall < 120
    report(request, ok, f"{solves} NLP #1 solves from 20 states in the terminal set, "
                        f"{len(bad)} not converged or violation > 1e-6 {bad[:2]}, {wall:.1f} s (limit 120 s)")


def test_criterion7_oracle_sandwich(request):
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    cases = []
    for x0 in rng.uniform(EX1.state_lb, EX1.state_ub, size=(10, 2)):
        cases.append(("ex1", sandwich(EX1, GridSpec(8, 0.1), 4, x0, SOFT)))
    toy = scalar_switched()
    for x0 in rng.uniform(-1.8, 1.8, size=(10, 1)):
        cases.append(("toy", sandwich(toy, GridSpec(6, 0.1), 2, x0, SolverOptions())))
    bad = []
    for name, (r, o, p) in cases:
        tol = 1e-6 * max(1.0, abs(o))
        if not (r <= o + tol and o <= p + tol):
            bad.append((name, r, o, p))
    wall = time.perf_counter() - t0
    ok = not bad and wall < 60
    report(request, ok, f"{len(cases)} instances, {len(bad)} violate relaxed <= oracle <= pipeline {bad[:2]}, "
                        f"{wall:.1f} s (limit 60 s)")


def _central(fn, z, eps=1e-5):
    return np.array([(fn(z + e) - fn(z - e)) / (2 * eps) for e in eps * np.eye(z.size)]).T


def _rel(a, b):
    return np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b)))


def test_criterion8_numerical_kernels(request):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    rk = 0.0
    for j, A in enumerate((EX1_A1, EX1_A2)):
        for x in rng.uniform(-1, 1, size=(20, 2)):
            rk = max(rk, np.max(np.abs(step(EX1, x, [], np.eye(2)[j], 0.1) - expm(0.1 * A) @ x)))
    sens = 0.0
    for _ in range(5):
        x = rng.uniform(-1, 1, 6)
        u = np.array([rng.uniform(0, 5), rng.uniform(-1.5, 1.5)])
        a = rng.uniform()
        b = np.array([a, 1 - a])
        _, dx, du, db = step_with_sensitivities(EX2, x, u, b, 0.1)
        sens = max(sens, _rel(dx, _central(lambda z: step(EX2, z, u, b, 0.1), x)),
                   _rel(du, _central(lambda z: step(EX2, x, z, b, 0.1), u)),
                   _rel(db, _central(lambda z: batch_step(EX2, x[None], u[None], z[None], 0.1, 4)[0], b)))
    lp = 0.0
    for _ in range(100):
        P = random_polygon(rng, int(rng.integers(5, 12)))
        c = rng.normal(size=2)
        lp = max(lp, abs(lp_min(c, P).value - np.min(vertices_2d(P) @ c)))
    wall = time.perf_counter() - t0
    ok = rk <= 1e-6 and sens <= 1e-4 and lp <= 1e-8 and wall < 30
    report(request, ok, f"RK4 vs expm {rk:.2e} (limit 1e-6); sensitivities vs central differences {sens:.2e} "
                        f"(limit 1e-4); LP vs vertex enumeration {lp:.2e}; {wall:.1f} s (limit 30 s)")
