import math

import numpy as np
import pytest

from cqnpm.core import ConstraintSet, norm, sqnorm
from cqnpm.regularizers import HuberTV, LogTV, Quadratic
from cqnpm.solvers import (TRACE_COLUMNS, ArmijoParams, Problem, SolverTrace, StepsizePolicy, apg,
                           cost, cqnpm, estimate_fstar, gd, pg, psnr)
from cqnpm.wpm import WpmSettings

from conftest import crandn

FIXED = StepsizePolicy.fixed(1.0)
THEORY = StepsizePolicy.theory_safe()


def dense_quadratic_optimum(prob, lam):
    model = prob.model
    eye = np.eye(model.n_pixels)
    A = np.column_stack([model.apply(e.reshape(model.image_shape)) for e in eye])
    x = np.linalg.solve(A.conj().T @ A + lam * eye, A.conj().T @ prob.y)
    return x.reshape(model.image_shape)


@pytest.fixture(scope="module")
def quad_prob(cart16):
    rng = np.random.default_rng(5)
    y = cart16.apply(0.3 * crandn(rng, 16, 16))
    return Problem(cart16, y, Quadratic(0.3))


@pytest.fixture(scope="module")
def tv_prob(spiral16):
    rng = np.random.default_rng(6)
    img = np.zeros((16, 16), complex)
    img[4:12, 5:11] = 0.8 * np.exp(0.5j)
    y = spiral16.apply(img) + 0.01 * crandn(rng, spiral16.output_size)
    return Problem(spiral16, y, HuberTV(0.05, 0.05)), img


def test_cost_examples(rng, cart16):
    x = crandn(rng, 16, 16)
    prob = Problem(cart16, cart16.apply(x), Quadratic(1.0, anchor=x))
    assert cost(prob, x) == pytest.approx(0.0, abs=1e-25)
    y = crandn(rng, cart16.output_size)
    prob = Problem(cart16, y, Quadratic(2.0))
    assert cost(prob, np.zeros((16, 16))) == pytest.approx(0.5 * sqnorm(y), rel=1e-14)
    want = 0.5 * np.sum(np.abs(cart16.apply(x) - y) ** 2) + np.sum(np.abs(x) ** 2)
    assert cost(prob, x) == pytest.approx(want, rel=1e-12)


def test_psnr():
    ref = np.zeros((4, 4))
    x = ref + 0.1
    assert psnr(x, ref) == pytest.approx(20.0, rel=1e-12)
    assert psnr(ref, ref) == math.inf


def test_fixed_point_of_quadratic_problem(quad_prob):
    x_star = dense_quadratic_optimum(quad_prob, 0.3)
    assert np.max(np.abs(x_star)) < 1.0
    for solver in (cqnpm, pg):
        trace = solver(quad_prob, x_star, FIXED, K=5)
        assert trace.records[0].step_norm <= 1e-6
        assert np.all(np.diff(trace.costs) <= 1e-12)


def test_fstar_matches_dense_optimum(quad_prob):
    x_star = dense_quadratic_optimum(quad_prob, 0.3)
    assert estimate_fstar(quad_prob) == pytest.approx(cost(quad_prob, x_star), abs=1e-8)
    assert estimate_fstar(quad_prob, eps=0.5) == pytest.approx(estimate_fstar(quad_prob) - 0.5, abs=1e-15)
    with pytest.raises(ValueError):
        estimate_fstar(quad_prob, eps=-1.0)


def test_pg_equals_cqnpm_with_identity_metric(tv_prob):
    prob, _ = tv_prob
    a = pg(prob, None, FIXED, K=8)
    b = cqnpm(prob, None, FIXED, K=8, identity_metric=True)
    assert np.array_equal(a.costs, b.costs)
    assert np.array_equal(a.x, b.x)


def test_apg_first_iteration_equals_pg(tv_prob):
    prob, _ = tv_prob
    a, b = apg(prob, None, FIXED, K=1), pg(prob, None, FIXED, K=1)
    assert np.array_equal(a.x, b.x)


@pytest.mark.parametrize("solver", ["cqnpm", "pg", "apg", "gd"])
def test_costs_non_increasing_and_iterates_feasible(solver, tv_prob):
    prob, ref = tv_prob
    K = 15
    if solver == "gd":
        trace = gd(prob, None, K, x_ref=ref)
    else:
        fn = {"cqnpm": cqnpm, "pg": pg, "apg": apg}[solver]
        trace = fn(prob, None, FIXED, K, x_ref=ref)
    assert np.all(np.diff(trace.costs) <= 1e-12)
    assert [r.k for r in trace.records] == list(range(1, K + 2))
    assert np.all(np.isfinite(trace.column("psnr_db")))
    assert ConstraintSet().contains(trace.x, tol=1e-12)


def test_theory_safe_descent_inequality(tv_prob):
    prob, _ = tv_prob
    for fn in (cqnpm, pg):
        trace = fn(prob, None, THEORY, K=10)
        for i, r in enumerate(trace.steps):
            assert r.alpha == pytest.approx(r.mu_B / prob.reg.lipschitz(), rel=1e-15)
            lhs = r.mu_B / (2 * r.alpha) * r.step_norm**2
            assert lhs <= trace.costs[i] - trace.costs[i + 1] + 1e-9


def test_constraint_active_problem_stays_feasible(spiral16):
    rng = np.random.default_rng(2)
    prob = Problem(spiral16, spiral16.apply(3 * crandn(rng, 16, 16)), LogTV(0.05, 0.5))
    trace = cqnpm(prob, None, FIXED, K=10)
    assert np.max(np.abs(trace.x)) <= 1 + 1e-12
    assert np.isclose(np.max(np.abs(trace.x)), 1.0)


def test_gd_stays_at_stationary_point(quad_prob):
    x_star = dense_quadratic_optimum(quad_prob, 0.3)
    trace = gd(quad_prob, x_star, K=3)
    assert all(r.step_norm <= 1e-12 for r in trace.steps)


def test_gd_flags_exhausted_line_search(quad_prob):
    trace = gd(quad_prob, None, K=2, ls=ArmijoParams(alpha0=1e6, max_halvings=2))
    assert trace.n_truncated == 2 and np.all(trace.column("alpha")[:-1] == 0)


def test_safeguard_rejects_cost_increase(tv_prob):
    prob, _ = tv_prob
    trace = cqnpm(prob, None, StepsizePolicy.fixed(50.0), K=6)
    assert np.all(np.diff(trace.costs) <= 1e-12)
    assert np.any(trace.column("alpha")[:-1] < 50.0)


def test_runs_are_deterministic(tv_prob):
    prob, _ = tv_prob
    a, b = cqnpm(prob, None, FIXED, K=6), cqnpm(prob, None, FIXED, K=6)
    for col in TRACE_COLUMNS:
        if col != "wall_time_s":
            assert np.array_equal(a.column(col), b.column(col), equal_nan=True)
    assert np.array_equal(a.x, b.x)


def test_trace_csv_round_trip(tmp_path, tv_prob):
    prob, ref = tv_prob
    trace = cqnpm(prob, None, FIXED, K=4, x_ref=ref)
    trace.to_csv(tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == ",".join(TRACE_COLUMNS)
    back = SolverTrace.from_csv(tmp_path / "t.csv", "cqnpm")
    for col in TRACE_COLUMNS:
        assert np.array_equal(back.column(col), trace.column(col), equal_nan=True)
    (tmp_path / "bad.csv").write_text("k,cost\n1,2\n")
    with pytest.raises(ValueError):
        SolverTrace.from_csv(tmp_path / "bad.csv")


def test_policy_validation():
    with pytest.raises(ValueError):
        StepsizePolicy("adaptive")
    with pytest.raises(ValueError):
        StepsizePolicy.fixed(0.0)


def test_rejects_zero_iterations(tv_prob):
    with pytest.raises(ValueError):
        cqnpm(tv_prob[0], K=0)
