import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from switched_mpc.integrator import step
from switched_mpc.invariants import (Polytope, SwitchedLinearSystem, compute_srci, contains, equal, intersect,
                                     is_empty, lp_min, pre_l, remove_redundancy, sample_points, verify_srci)
from switched_mpc.model import EX1_A1, EX1_A2, ModelError, builtin_example1

UNIT = Polytope.box([-1, -1], [1, 1])


def vertices_2d(P):
    """Vertex enumeration by brute force over row pairs (test oracle)."""
    pts = []
    for i, j in itertools.combinations(range(P.n_rows), 2):
        A = P.C[[i, j]]
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        v = np.linalg.solve(A, P.d[[i, j]])
        if np.all(P.C @ v <= P.d + 1e-9):
            pts.append(v)
    return np.array(pts)


def random_polygon(rng, k):
    # angles with gaps below pi keep the polygon bounded; offsets > 0 keep 0 inside
    gaps = rng.uniform(0.2, 1.0, k)
    ang = np.cumsum(gaps / gaps.sum() * 2 * np.pi)
    C = np.column_stack([np.cos(ang), np.sin(ang)])
    d = rng.uniform(0.2, 2.0, k)
    return Polytope(C, d)


def test_lp_examples():
    r = lp_min([1, 0], UNIT)
    assert r.status == "optimal" and r.value == pytest.approx(-1) and r.x[0] == pytest.approx(-1)
    assert lp_min([1.0], Polytope([[1.0], [-1.0]], [0.0, -1.0])).status == "infeasible"
    half = Polytope([[1.0, 0.0]], [5.0])
    assert lp_min([-1, 0], half).value == pytest.approx(-5)
    assert lp_min([0, 1], half).status == "unbounded"


def test_lp_agrees_with_vertex_enumeration():
    rng = np.random.default_rng(42)
    for _ in range(100):
        P = random_polygon(rng, int(rng.integers(5, 12)))
        c = rng.normal(size=2)
        V = vertices_2d(P)
        assert lp_min(c, P).value == pytest.approx(np.min(V @ c), abs=1e-8)


def test_pre_l_examples():
    assert equal(pre_l(UNIT, SwitchedLinearSystem((np.eye(2), np.eye(2))), 0, 3), UNIT)
    half = SwitchedLinearSystem((0.5 * np.eye(2), np.eye(2)))
    assert equal(pre_l(UNIT, half, 0, 1), Polytope.box([-2, -2], [2, 2]))


def test_pre_l_membership_example1():
    sys_ = SwitchedLinearSystem.from_continuous((EX1_A1, EX1_A2), 0.1)
    X = Polytope.box([-1, -0.05], [0.05, 1])
    pre = pre_l(X, sys_, 0, 4)
    A4 = sys_.l_step(0, 4)
    pts = np.random.default_rng(0).uniform(-3, 3, size=(10_000, 2))
    np.testing.assert_array_equal(pre.contains_points(pts), X.contains_points(pts @ A4.T))


def test_intersect_examples():
    assert equal(intersect(UNIT, UNIT), UNIT)
    shifted = Polytope.box([-0.5, -1], [1.5, 1])
    assert equal(intersect(UNIT, shifted), Polytope.box([-0.5, -1], [1, 1]))
    far = Polytope.box([3, 3], [4, 4])
    assert is_empty(intersect(UNIT, far))


def test_remove_redundancy_examples():
    dup = Polytope(np.vstack([UNIT.C, UNIT.C[:1]]), np.append(UNIT.d, UNIT.d[0]))
    assert remove_redundancy(dup).n_rows == 4
    slack = Polytope(np.vstack([UNIT.C, [[1, 0]]]), np.append(UNIT.d, 2.0))
    assert remove_redundancy(slack).n_rows == 4


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.integers(4, 14))
def test_remove_redundancy_preserves_set(seed, k):
    P = random_polygon(np.random.default_rng(seed), k)
    R = remove_redundancy(P)
    assert equal(P, R)
    assert R.n_rows == len(vertices_2d(R))


def test_contains_examples():
    assert contains(Polytope.box([-2, -2], [2, 2]), UNIT)
    assert not contains(UNIT, Polytope.box([-2, -2], [2, 2]))
    assert contains(UNIT, UNIT)
    empty = Polytope([[1, 0], [-1, 0]], [0, -1])
    assert contains(UNIT, empty)


def test_polytope_validation():
    with pytest.raises(ModelError):
        Polytope([[1, 0]], [1, 2])
    with pytest.raises(ModelError):
        Polytope([[np.inf, 0]], [1])
    np.testing.assert_allclose(np.linalg.norm(Polytope([[3, 4]], [5]).C, axis=1), 1)


def test_srci_contractive_scalar():
    X = Polytope([[1.0], [-1.0]], [1.0, 1.0])
    res = compute_srci(X, SwitchedLinearSystem((np.array([[0.5]]), np.array([[0.5]]))), 1)
    assert res.converged and res.iterations == 1 and equal(res.polytope, X)


def test_srci_expanding_scalar_halves():
    X = Polytope([[1.0], [-1.0]], [1.0, 1.0])
    sys_ = SwitchedLinearSystem((np.array([[2.0]]), np.array([[2.0]])))
    res = compute_srci(X, sys_, 1, max_iter=20)
    assert not res.converged and res.iterations == 20
    assert lp_min([-1.0], res.polytope).value == pytest.approx(-(0.5 ** 20))


def test_srci_example1():
    sys_ = SwitchedLinearSystem.from_continuous((EX1_A1, EX1_A2), 0.1)
    X = Polytope.box([-1, -0.05], [0.05, 1])
    res = compute_srci(X, sys_, 4)
    assert res.converged and not res.empty and res.iterations <= 50
    assert contains(X, res.polytope) and not contains(res.polytope, X)
    assert verify_srci(res.polytope, sys_, 4)
    assert not verify_srci(X, sys_, 4, samples=0)


@pytest.mark.parametrize("l", [1, 2, 5])
def test_srci_iterates_nested_and_certified(l):
    sys_ = SwitchedLinearSystem.from_continuous((EX1_A1, EX1_A2), 0.1)
    X = Polytope.box([-1, -0.05], [0.05, 1])
    prev = X
    for k in range(1, 6):
        res = compute_srci(X, sys_, l, max_iter=k)
        assert contains(prev, res.polytope)
        prev = res.polytope
        if res.converged:
            assert verify_srci(res.polytope, sys_, l)
            break


def test_discrete_map_matches_integrator():
    model = builtin_example1()
    sys_ = SwitchedLinearSystem.from_continuous(model.linear_modes, 0.1)
    x0 = np.array([-0.4, 0.3])
    for j in range(2):
        x = x0
        for _ in range(4):
            x = step(model, x, [], np.eye(2)[j], 0.1)
        np.testing.assert_allclose(sys_.l_step(j, 4) @ x0, x, atol=1e-8)


def test_feedback_form():
    A = (np.array([[1.1]]), np.array([[0.9]]))
    B = (np.array([[1.0]]), np.array([[1.0]]))
    K = (np.array([[-0.6]]), np.array([[0.0]]))
    sys_ = SwitchedLinearSystem(A, B, K)
    np.testing.assert_allclose(sys_.closed_loop(0), [[0.5]])
    with pytest.raises(ModelError):
        SwitchedLinearSystem(A, B)


def test_sampling_stays_inside():
    P = random_polygon(np.random.default_rng(3), 7)
    pts = sample_points(P, 500, seed=1)
    assert len(pts) == 500 and np.all(P.contains_points(pts))


def test_verify_empty_is_vacuous():
    empty = Polytope([[1.0], [-1.0]], [0.0, -1.0])
    assert verify_srci(empty, SwitchedLinearSystem((np.eye(1), np.eye(1))), 1)
