import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cola_sdp.conic import Cone, ConicProblem, ConicSolution, SolverSettings, Status, residuals, smat, solve, svec
from cola_sdp.conic.cones import svec_position
from cola_sdp.errors import ShapeMismatch

from conftest import random_known_optimum

SQ2 = np.sqrt(2.0)


def lp_problem():
    # min x s.t. x >= 1  ->  -x + s = -1, s >= 0
    return ConicProblem([1.0], [[-1.0]], [-1.0], [Cone.nonneg(1)])


def soc_problem():
    # min t s.t. ||(3, 4)|| <= t, with the constants carried by equality-fixed variables
    a = np.array([
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [-1.0, 0.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, -1.0],
    ])
    return ConicProblem([1.0, 0.0, 0.0], a, [3.0, 4.0, 0.0, 0.0, 0.0], [Cone.zero(2), Cone.soc(3)])


def sdp_problem():
    # min tr X s.t. X11 = 1, X12 = 2, X psd; x = (X11, X21, X22)
    a = np.array([
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, -SQ2, 0.0],
        [0.0, 0.0, -1.0],
    ])
    return ConicProblem([1.0, 0.0, 1.0], a, [1.0, 2.0, 0.0, 0.0, 0.0], [Cone.zero(2), Cone.psd(2)])


@pytest.mark.parametrize("build, expected", [(lp_problem, 1.0), (soc_problem, 5.0), (sdp_problem, 5.0)])
def test_analytic_problems(build, expected):
    sol = solve(build())
    assert sol.status == Status.OPTIMAL
    assert abs(sol.primal_obj - expected) <= 1e-8


def test_sdp_optimal_point():
    sol = solve(sdp_problem())
    x = sol.primal
    assert x[0] == pytest.approx(1.0, abs=1e-7)
    assert x[2] == pytest.approx(4.0, abs=1e-6)


def test_random_known_optimum_instances():
    rng = np.random.default_rng(20240501)
    for _ in range(50):
        prob, opt = random_known_optimum(rng)
        sol = solve(prob)
        assert sol.status == Status.OPTIMAL
        assert abs(sol.primal_obj - opt) / (1 + abs(opt)) <= 1e-7


def test_exact_pair_residuals():
    prob = lp_problem()
    sol = ConicSolution(np.array([1.0]), np.array([1.0]), np.array([0.0]), Status.OPTIMAL, 1.0, 1.0, 0.0, 0)
    pres, dres, gap = residuals(prob, sol)
    assert max(pres, dres, gap) <= 1e-15


def test_residual_grows_linearly_with_perturbation():
    prob = lp_problem()
    base = np.array([1.0])
    out = []
    for delta in (1e-3, 2e-3, 4e-3):
        sol = ConicSolution(base + delta, np.array([1.0]), np.array([0.0]), Status.OPTIMAL, 0, 0, 0, 0)
        out.append(residuals(prob, sol)[0])
    assert out[1] / out[0] == pytest.approx(2.0, rel=1e-9)
    assert out[2] / out[0] == pytest.approx(4.0, rel=1e-9)


def test_residuals_shape_mismatch():
    prob = lp_problem()
    sol = ConicSolution(np.zeros(2), np.zeros(1), np.zeros(1), Status.OPTIMAL, 0, 0, 0, 0)
    with pytest.raises(ShapeMismatch):
        residuals(prob, sol)


def test_primal_infeasible():
    # x >= 1 and x <= 0
    prob = ConicProblem([1.0], [[-1.0], [1.0]], [-1.0, 0.0], [Cone.nonneg(2)])
    assert solve(prob).status == Status.PRIMAL_INFEASIBLE


def test_dual_infeasible():
    # min x with x <= 0 only: unbounded below
    prob = ConicProblem([1.0], [[1.0]], [0.0], [Cone.nonneg(1)])
    assert solve(prob).status == Status.DUAL_INFEASIBLE


def test_max_iterations_reported():
    sol = solve(sdp_problem(), SolverSettings(max_iterations=1))
    assert sol.status == Status.MAX_ITERATIONS


def test_weak_duality_and_cone_membership():
    rng = np.random.default_rng(7)
    for _ in range(10):
        prob, _ = random_known_optimum(rng)
        sol = solve(prob)
        assert sol.primal_obj >= sol.dual_obj - 1e-8 * (1 + abs(sol.primal_obj))
        for cone, sl in prob.cone_slices():
            s = sol.slack[sl]
            if cone.kind == "nonneg":
                assert s.min() >= -1e-8
            elif cone.kind == "soc":
                assert s[0] >= np.linalg.norm(s[1:]) - 1e-8
            elif cone.kind == "psd":
                m = smat(s)
                assert np.linalg.eigvalsh(m).min() >= -1e-8 * max(1.0, np.trace(m))


def test_deterministic():
    prob, _ = random_known_optimum(np.random.default_rng(3))
    a, b = solve(prob), solve(prob)
    assert np.array_equal(a.primal, b.primal) and a.iterations == b.iterations


def test_objective_scaling():
    prob, _ = random_known_optimum(np.random.default_rng(11))
    base = solve(prob)
    scaled = solve(ConicProblem(3.0 * prob.c, prob.a, prob.b, prob.cones))
    assert scaled.primal_obj == pytest.approx(3.0 * base.primal_obj, rel=1e-7, abs=1e-7)
    assert np.allclose(scaled.primal, base.primal, atol=1e-5)


def test_empty_row_rejected():
    with pytest.raises(ValueError):
        ConicProblem([1.0], [[-1.0], [0.0]], [0.0, 1.0], [Cone.nonneg(2)])


def test_cone_dimension_mismatch():
    with pytest.raises(ShapeMismatch):
        ConicProblem([1.0], [[-1.0]], [0.0], [Cone.nonneg(2)])


def test_settings_validation():
    with pytest.raises(ValueError):
        SolverSettings(rel_gap_tol=0.0)
    with pytest.raises(ValueError):
        SolverSettings(step_fraction=1.0)


def test_dump_roundtrip():
    prob, _ = random_known_optimum(np.random.default_rng(5))
    again = ConicProblem.loads(prob.dumps())
    assert again.dumps() == prob.dumps()
    assert np.array_equal(again.b, prob.b) and np.array_equal(again.c, prob.c)
    assert (again.a != prob.a).nnz == 0


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2 ** 31 - 1))
def test_svec_inner_product(order, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(order, order))
    y = rng.normal(size=(order, order))
    x, y = x + x.T, y + y.T
    assert svec(x) @ svec(y) == pytest.approx(np.trace(x @ y), rel=1e-12, abs=1e-12)
    assert np.allclose(smat(svec(x)), x, atol=1e-14)


def test_svec_layout_is_column_major_lower():
    m = np.array([[1.0, 2.0, 4.0], [2.0, 3.0, 5.0], [4.0, 5.0, 6.0]])
    assert np.allclose(svec(m), [1.0, 2 * SQ2, 4 * SQ2, 3.0, 5 * SQ2, 6.0])
    assert svec_position(3, 2, 1) == 4
