"""Generic LP solver: known optima, degeneracy, cycling, statuses."""

import numpy as np
import pytest

from cmdpbarrier import solve_lp


def test_simple_equality_lp():
    # max x0 + 2 x1  s.t.  x0 + x1 = 1
    res = solve_lp([1.0, 2.0], [[1.0, 1.0]], [1.0], maximize=True)
    assert res.status == "optimal"
    assert res.objective == pytest.approx(2.0, abs=1e-10)
    assert res.x == pytest.approx([0.0, 1.0], abs=1e-10)


def test_inequality_lp():
    # min x0 + x1  s.t.  x0 + 2 x1 >= 4, 3 x0 + x1 >= 6  ->  (1.6, 1.2)
    res = solve_lp([1.0, 1.0], a_ge=[[1.0, 2.0], [3.0, 1.0]], b_ge=[4.0, 6.0])
    assert res.status == "optimal"
    assert res.objective == pytest.approx(2.8, abs=1e-10)
    assert res.x == pytest.approx([1.6, 1.2], abs=1e-10)


def test_mixed_constraints():
    # max 3a + 2b  s.t.  a + b = 10, a >= 2  ->  a=10? b=0 gives 30; check a>=2 binding no
    res = solve_lp([3.0, 2.0], [[1.0, 1.0]], [10.0], [[1.0, 0.0]], [2.0], maximize=True)
    assert res.status == "optimal"
    assert res.objective == pytest.approx(30.0, abs=1e-9)


def test_infeasible():
    # x0 = 1 and x0 >= 3 cannot hold
    res = solve_lp([1.0], [[1.0]], [1.0], [[1.0]], [3.0])
    assert res.status == "infeasible"


def test_unbounded():
    # max x0 s.t. x0 >= 1
    res = solve_lp([1.0], a_ge=[[1.0]], b_ge=[1.0], maximize=True)
    assert res.status == "unbounded"


def test_beale_cycling_instance():
    # The classic degenerate example on which naive steepest-descent pricing
    # cycles; the stall fallback must terminate it at the true optimum -0.05.
    c = [-0.75, 150.0, -0.02, 6.0]
    a_le = np.array([
        [0.25, -60.0, -1.0 / 25.0, 9.0],
        [0.5, -90.0, -1.0 / 50.0, 3.0],
        [0.0, 0.0, 1.0, 0.0],
    ])
    b_le = np.array([0.0, 0.0, 1.0])
    res = solve_lp(c, a_ge=(-a_le).tolist(), b_ge=(-b_le).tolist())
    assert res.status == "optimal"
    assert res.objective == pytest.approx(-0.05, abs=1e-9)


def test_solution_is_vertex():
    rng = np.random.default_rng(0)
    for _ in range(20):
        m, n = 4, 9
        a = rng.random((m, n))
        x_feas = rng.random(n)
        b = a @ x_feas  # guaranteed feasible
        c = rng.standard_normal(n)
        res = solve_lp(c, a.tolist(), b.tolist(), maximize=True)
        assert res.status == "optimal"
        assert np.count_nonzero(np.abs(res.x) > 1e-9) <= m
        assert np.max(np.abs(a @ res.x - b)) <= 1e-8
        assert np.min(res.x) >= -1e-9


def test_redundant_rows_handled():
    # Second row duplicates the first; phase 1 must drop it, not fail.
    res = solve_lp([1.0, 1.0], [[1.0, 1.0], [2.0, 2.0]], [1.0, 2.0], maximize=True)
    assert res.status == "optimal"
    assert res.objective == pytest.approx(1.0, abs=1e-10)
