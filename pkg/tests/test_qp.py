import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from switched_mpc.qp import QpError, solve_qp


def _random_qp(seed, n=8, m_eq=2, m_in=10):
    rng = np.random.default_rng(seed)
    R = rng.normal(size=(n, n))
    H = R @ R.T + 0.1 * np.eye(n)
    g = rng.normal(size=n)
    A_eq = rng.normal(size=(m_eq, n))
    z_feas = rng.normal(size=n)
    b_eq = A_eq @ z_feas
    A_in = rng.normal(size=(m_in, n))
    b_in = A_in @ z_feas + rng.uniform(0, 1, m_in)
    return H, g, A_eq, b_eq, A_in, b_in


def _reference(H, g, A_eq, b_eq, A_in, b_in):
    z = cp.Variable(g.size)
    cons = []
    if A_eq.size:
        cons.append(A_eq @ z == b_eq)
    if A_in.size:
        cons.append(A_in @ z <= b_in)
    prob = cp.Problem(cp.Minimize(0.5 * cp.quad_form(z, cp.psd_wrap(H)) + g @ z), cons)
    prob.solve(solver=cp.CLARABEL)
    return prob.status, z.value, prob.value


@settings(max_examples=40)
@given(st.integers(0, 10_000), st.integers(2, 12), st.integers(0, 3), st.integers(0, 20))
def test_matches_conic_reference(seed, n, m_eq, m_in):
    m_eq = min(m_eq, n - 1)
    H, g, A_eq, b_eq, A_in, b_in = _random_qp(seed, n, m_eq, m_in)
    res = solve_qp(H, g, A_eq, b_eq, A_in, b_in)
    status, z_ref, val_ref = _reference(H, g, A_eq, b_eq, A_in, b_in)
    assert status == "optimal" and res.status == "optimal"
    val = 0.5 * res.z @ H @ res.z + g @ res.z
    assert val == pytest.approx(val_ref, rel=1e-6, abs=1e-6)
    np.testing.assert_allclose(res.z, z_ref, atol=1e-5 * (1 + np.abs(z_ref).max()))


@settings(max_examples=40)
@given(st.integers(0, 10_000))
def test_kkt_conditions(seed):
    H, g, A_eq, b_eq, A_in, b_in = _random_qp(seed)
    r = solve_qp(H, g, A_eq, b_eq, A_in, b_in)
    assert r.ok
    stat = H @ r.z + g + A_eq.T @ r.lam_eq + A_in.T @ r.lam_in
    assert np.max(np.abs(stat)) <= 1e-8 * (1 + np.abs(g).max())
    assert np.all(r.lam_in >= -1e-10)
    assert np.all(A_in @ r.z <= b_in + 1e-9)
    np.testing.assert_allclose(A_eq @ r.z, b_eq, atol=1e-9)
    # complementarity
    assert np.max(np.abs(r.lam_in * (A_in @ r.z - b_in))) <= 1e-8


def test_unconstrained_and_box():
    H = np.diag([2.0, 4.0])
    g = np.array([-2.0, -8.0])
    np.testing.assert_allclose(solve_qp(H, g).z, [1.0, 2.0])
    r = solve_qp(H, g, A_in=np.vstack([np.eye(2), -np.eye(2)]), b_in=[0.5, 0.5, 0.5, 0.5])
    np.testing.assert_allclose(r.z, [0.5, 0.5], atol=1e-12)


def test_infeasible_detected():
    r = solve_qp(np.eye(1), [0.0], A_in=[[1.0], [-1.0]], b_in=[0.0, -1.0])
    assert r.status == "infeasible"


def test_rejects_indefinite_hessian():
    with pytest.raises(QpError):
        solve_qp(np.diag([1.0, -1.0]), np.zeros(2))
