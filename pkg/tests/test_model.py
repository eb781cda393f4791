import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from switched_mpc.model import (ModelError, as_convex_combination, builtin_example1, builtin_example2,
                                eval_convexified, get_builtin, is_binary, vertex)
from toys import integrator_toy

EX1 = builtin_example1()
EX2 = builtin_example2()

finite = st.floats(-3, 3, allow_nan=False)


def test_example1_fields_at_unit_state():
    assert np.array_equal(eval_convexified(EX1, [1, 0], [], [1, 0]), [-5, 5])
    np.testing.assert_allclose(eval_convexified(EX1, [1, 0], [], [0.5, 0.5]), [-3, 1])


def test_example1_mode1_at_initial_state():
    assert np.array_equal(eval_convexified(EX1, [-1, 1], [], [1, 0]), [2, -6])


def test_example1_box_and_costs():
    assert EX1.state_box_feasible([0.05, 1.0])
    assert not EX1.state_box_feasible([0.06, 1.0])
    assert EX1.running_cost[0](np.zeros(2), np.zeros(0)) == 0.0
    assert EX1.terminal_cost(np.zeros(2)) == 0.0
    assert EX1.terminal_cost(np.array([1.0, 0.0])) == 10.0


def test_example2_fields():
    x = np.zeros(6)
    np.testing.assert_allclose(eval_convexified(EX2, x, [1, 0], [1, 0]), [0, 0, 1, 0.22, 0, 0], atol=1e-15)
    rng = np.random.default_rng(1)
    np.testing.assert_array_equal(eval_convexified(EX2, rng.normal(size=6), [0, 1], [0, 1]), [0, 0, 0, 0, 0, 1])


def test_example2_obstacle_residual_at_centre():
    g = EX2.path(np.array([0, 0, 5.0, 0, 0, 0]), np.zeros(2))
    assert g[0] == pytest.approx(4.0)
    assert EX2.n_path == 3 and np.all(g[1:] < 0)


def test_example2_bounds_and_costs():
    np.testing.assert_allclose(EX2.input_lb, [0, -np.pi / 2])
    np.testing.assert_allclose(EX2.input_ub, [5, np.pi / 2])
    assert EX2.running_cost[0](np.zeros(6), np.array([1.0, 2.0])) == pytest.approx(0.05)
    assert EX2.terminal_cost(np.array([-2, 3.5, 10, 0, 0, 0.0])) == 0.0
    assert EX2.terminal_cost(np.array([-2, 3.5, 11, 0, 0, 0.0])) == pytest.approx(10.0)


def test_identical_modes_average():
    m = integrator_toy()
    assert eval_convexified(m, [0.3], [0.7], [0.3, 0.7]) == pytest.approx(eval_convexified(m, [0.3], [0.7], [1, 0]))


def test_dimension_errors():
    with pytest.raises(ModelError):
        eval_convexified(EX1, [1, 0, 0], [], [1, 0])
    with pytest.raises(ModelError):
        eval_convexified(EX1, [1, 0], [], [1, 0, 0])
    with pytest.raises(ModelError):
        get_builtin("example3")


def test_convex_combination_checks():
    assert is_binary([0, 1]) and not is_binary([0.5, 0.5])
    np.testing.assert_array_equal(vertex(1, 3), [0, 1, 0])
    with pytest.raises(ModelError):
        as_convex_combination([0.7, 0.7])
    with pytest.raises(ModelError):
        as_convex_combination([1.2, -0.2])


@given(st.lists(finite, min_size=6, max_size=6), st.lists(st.floats(0, 5), min_size=2, max_size=2),
       st.integers(0, 1))
def test_vertex_weights_give_single_mode_field(x, u, j):
    x, u = np.array(x), np.array(u)
    b = vertex(j, 2)
    assert np.array_equal(eval_convexified(EX2, x, u, b), EX2.dynamics[j](x, u))


@given(st.lists(finite, min_size=6, max_size=6), st.floats(0, 1), st.floats(0, 1))
def test_convexified_field_is_affine_in_weights(x, a, c):
    x, u = np.array(x), np.array([1.3, -0.4])
    b1, b2 = np.array([a, 1 - a]), np.array([c, 1 - c])
    mid = eval_convexified(EX2, x, u, (b1 + b2) / 2)
    avg = (eval_convexified(EX2, x, u, b1) + eval_convexified(EX2, x, u, b2)) / 2
    np.testing.assert_allclose(mid, avg, rtol=1e-12, atol=1e-12)
