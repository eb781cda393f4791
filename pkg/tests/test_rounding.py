import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from switched_mpc.model import ModelError
from switched_mpc.plan import ModePlan, block_layout
from switched_mpc.rounding import error_bound, max_integration_gap, sur_round


def plan(rows, l=1, h=None, dt=0.1):
    return ModePlan(np.array(rows, dtype=float), l, l if h is None else h, dt)


def test_binary_input_unchanged():
    p = plan([[1, 0]] * 4, l=2)
    assert np.array_equal(sur_round(p).blocks, p.blocks)


def test_constant_sixty_forty():
    out = sur_round(plan([[0.6, 0.4]] * 3))
    assert np.array_equal(out.blocks, [[1, 0], [0, 1], [1, 0]])


def test_tie_goes_to_first_mode():
    out = sur_round(plan([[0.5, 0.5]] * 2))
    assert np.array_equal(out.blocks, [[1, 0], [0, 1]])


def test_gap_of_sixty_forty():
    # prefix deviations per mode: 0.4*dt, 0.2*dt, 0.4*dt (in absolute value)
    p = plan([[0.6, 0.4]] * 3)
    assert max_integration_gap(p, sur_round(p)) == pytest.approx(0.04, abs=1e-15)
    assert max_integration_gap(p, p) == 0.0


def test_error_bound_values():
    assert error_bound(4, 2, 0.1) == pytest.approx(0.4)
    assert error_bound(1, 2, 0.1) == pytest.approx(0.1)
    assert error_bound(5, 3, 0.1) == pytest.approx(1.0)
    with pytest.raises(ModelError):
        error_bound(0, 2, 0.1)


def test_rejects_off_simplex():
    with pytest.raises(ModelError):
        sur_round(plan([[0.7, 0.7]]))


def test_gap_shape_mismatch():
    with pytest.raises(ModelError):
        max_integration_gap(plan([[1, 0]] * 2), plan([[1, 0]] * 3))


def test_short_first_block_weighting():
    # a short first block carries less weight in the deficit
    p = plan([[0.4, 0.6], [0.55, 0.45]], l=4, h=1)
    out = sur_round(p)
    assert out.h == 1
    assert max_integration_gap(p, out) <= error_bound(4, 2, 0.1) + 1e-12


def test_block_layout():
    assert block_layout(9, 3)[0] == 3
    assert list(block_layout(9, 3, 2)[1]) == [2, 3, 3]
    with pytest.raises(ModelError):
        block_layout(9, 3, 4)
    with pytest.raises(ModelError):
        block_layout(21, 4)


@st.composite
def simplex_plans(draw):
    Q = draw(st.integers(2, 4))
    M = draw(st.integers(1, 12))
    l = draw(st.integers(1, 6))
    h = draw(st.integers(1, l))
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.full(Q, draw(st.sampled_from([0.2, 1.0, 5.0]))), size=M)
    if draw(st.booleans()):
        # exact ties are the delicate case
        P = np.round(P * 4) / 4
        P[:, -1] = 1.0 - P[:, :-1].sum(axis=1)
        P = np.where(P < 0, 0, P)
        P /= P.sum(axis=1, keepdims=True)
    return ModePlan(P, l, h, 0.1)


@given(simplex_plans())
def test_bound_certification(p):
    out = sur_round(p)
    assert max_integration_gap(p, out) <= error_bound(p.l, p.Q, p.dt) + 1e-12


@given(simplex_plans())
def test_output_is_binary_and_idempotent(p):
    out = sur_round(p)
    assert out.is_binary()
    assert np.array_equal(sur_round(out).blocks, out.blocks)


@given(simplex_plans())
def test_deterministic(p):
    a = sur_round(p)
    b = sur_round(ModePlan(p.blocks.copy(), p.l, p.h, p.dt))
    assert a.blocks.tobytes() == b.blocks.tobytes()
