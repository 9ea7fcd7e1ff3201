"""Batch assembly tests: discretization, stacked maps against recursive
simulation, and condensed-QP behavior on single integrators."""

import numpy as np
import pytest

from envelope_planner import ltv_ocp, qp
from envelope_planner.ltv_ocp import (
    CostWeights,
    InconsistentBounds,
    LtvModel,
    SlackSpec,
    assemble_qp,
    build_batch,
    discretize,
    evaluate_cost,
)
from envelope_planner.planners import lateral_model, longitudinal_model, PlannerConfig


def recursive_simulation(disc, x0, u_stack, z_stack=None):
    """Step-by-step propagation, independent of the batch maps."""
    n = disc.a.shape[0]
    nx = disc.a.shape[1]
    nu = disc.b.shape[2]
    x = np.asarray(x0, float).copy()
    u = np.asarray(u_stack, float).reshape(n, nu)
    out = np.zeros((n, nx))
    for k in range(n):
        x = disc.a[k] @ x + disc.b[k] @ u[k]
        if disc.e is not None and z_stack is not None:
            x = x + disc.e[k] @ np.atleast_1d(z_stack[k])
        out[k] = x
    return out.ravel()


def random_ltv(rng, n_steps, nx, nu, ny, nz=0):
    a = rng.uniform(-0.5, 0.5, (n_steps, nx, nx))
    b = rng.uniform(-0.5, 0.5, (n_steps, nx, nu))
    c = rng.uniform(-0.5, 0.5, (n_steps, ny, nx))
    e = rng.uniform(-0.5, 0.5, (n_steps, nx, nz)) if nz else None
    return LtvModel(a=a, b=b, c=c, e=e)


def single_integrator(n_steps):
    a = np.zeros((n_steps, 1, 1))
    b = np.ones((n_steps, 1, 1))
    c = np.ones((n_steps, 1, 1))
    return LtvModel(a=a, b=b, c=c)


def test_discretize_zero_dynamics_gives_identity():
    model = random_ltv(np.random.default_rng(0), 3, 4, 1, 2)
    model = LtvModel(a=np.zeros_like(model.a), b=model.b, c=model.c)
    disc = discretize(model, 0.25)
    for k in range(3):
        assert np.array_equal(disc.a[k], np.eye(4))


def test_discretize_longitudinal_chain():
    model = longitudinal_model(PlannerConfig(horizon=5))
    disc = discretize(model, 0.2)
    expected = np.eye(4)
    expected[0, 1] = expected[1, 2] = expected[2, 3] = 0.2
    assert np.allclose(disc.a[0], expected)
    assert np.allclose(disc.b[0].ravel(), [0.0, 0.0, 0.0, 0.2])


def test_euler_step_against_fine_integration():
    # One 0.2 s interval of the lateral model vs 1e-4-step integration.
    v_path = np.full(3, 9.0)
    model = lateral_model(v_path, 4.0)
    x0 = np.array([0.3, 0.05, 0.02, 0.0, 0.01])
    u = np.array([0.1])
    z = np.array([0.02])

    def fine(duration):
        x = x0.copy()
        fine_dt = 1e-4
        for _ in range(int(duration / fine_dt)):
            x = x + fine_dt * (model.a[0] @ x + model.b[0] @ u + model.e[0] @ z)
        return x

    disc = discretize(model, 0.2)
    euler = disc.a[0] @ x0 + disc.b[0] @ u + disc.e[0] @ z
    x_true = fine(0.2)
    err_02 = np.abs(euler - x_true).max()
    assert err_02 <= 5e-2 * max(1.0, np.abs(x_true).max())

    # Halving the step shrinks the one-interval error (first-order method,
    # quadratic local truncation).
    disc_h = discretize(model, 0.1)
    half = disc_h.a[0] @ x0 + disc_h.b[0] @ u + disc_h.e[0] @ z
    half = disc_h.a[0] @ half + disc_h.b[0] @ u + disc_h.e[0] @ z
    err_01 = np.abs(half - x_true).max()
    assert err_01 <= 0.7 * err_02


def test_batch_single_step():
    rng = np.random.default_rng(1)
    model = random_ltv(rng, 1, 3, 2, 2)
    disc = discretize(model, 0.1)
    batch = build_batch(disc)
    assert np.allclose(batch.cal_a, disc.a[0])
    assert np.allclose(batch.cal_b, disc.b[0])


def test_batch_two_step_expansion():
    rng = np.random.default_rng(2)
    model = random_ltv(rng, 2, 3, 2, 2)
    disc = discretize(model, 0.1)
    batch = build_batch(disc)
    a0, a1 = disc.a
    b0, b1 = disc.b
    assert np.allclose(batch.cal_a[:3], a0)
    assert np.allclose(batch.cal_a[3:], a1 @ a0)
    assert np.allclose(batch.cal_b[:3, :2], b0)
    assert np.allclose(batch.cal_b[:3, 2:], 0.0)
    assert np.allclose(batch.cal_b[3:, :2], a1 @ b0)
    assert np.allclose(batch.cal_b[3:, 2:], b1)


@pytest.mark.parametrize("n_steps", [5, 20])
def test_batch_equals_recursive_simulation(n_steps):
    rng = np.random.default_rng(3)
    for _ in range(10):
        nx = int(rng.integers(2, 7))
        nu = int(rng.integers(1, 3))
        nz = int(rng.integers(0, 2))
        model = random_ltv(rng, n_steps, nx, nu, 2, nz)
        disc = discretize(model, 0.2)
        batch = build_batch(disc)
        x0 = rng.normal(size=nx)
        u = rng.normal(size=n_steps * nu)
        z = rng.normal(size=n_steps * max(nz, 1)) if nz else None
        stacked = batch.propagate(x0, u, z)
        recursive = recursive_simulation(disc, x0, u, z)
        assert np.abs(stacked - recursive).max() <= 1e-12


def test_pure_input_penalty_gives_zero_input():
    n = 8
    disc = discretize(single_integrator(n), 0.2)
    batch = build_batch(disc)
    weights = CostWeights(
        q_per_step=np.zeros((n, 1, 1)),
        r_per_step=np.ones((n, 1, 1)),
        x_ref=np.zeros(n),
    )
    assembled = assemble_qp(batch, weights, np.array([1.0]))
    solution = qp.solve(assembled.qp)
    assert solution.status == "optimal"
    assert np.abs(solution.primal).max() <= 1e-8


def test_reference_tracking_reaches_target():
    n = 20
    disc = discretize(single_integrator(n), 0.2)
    batch = build_batch(disc)
    weights = CostWeights(
        q_per_step=np.full((n, 1, 1), 1e4),
        r_per_step=np.ones((n, 1, 1)),
        x_ref=np.full(n, 3.0),
    )
    assembled = assemble_qp(batch, weights, np.array([0.0]))
    solution = qp.solve(assembled.qp)
    states = batch.propagate(np.zeros(1), solution.primal)
    assert abs(states[-1] - 3.0) <= 0.01 * 3.0


def test_output_bound_saturates():
    n = 20
    disc = discretize(single_integrator(n), 0.2)
    batch = build_batch(disc)
    weights = CostWeights(
        q_per_step=np.full((n, 1, 1), 1e4),
        r_per_step=np.ones((n, 1, 1)),
        x_ref=np.full(n, 10.0),
    )
    assembled = assemble_qp(
        batch,
        weights,
        np.array([0.0]),
        y_min=np.full((n, 1), -np.inf),
        y_max=np.full((n, 1), 5.0),
    )
    solution = qp.solve(assembled.qp)
    assert solution.status == "optimal"
    states = batch.propagate(np.zeros(1), solution.primal)
    assert states.max() <= 5.0 + 1e-6
    assert states[-1] == pytest.approx(5.0, abs=1e-3)


def test_cost_consistency():
    rng = np.random.default_rng(4)
    n = 10
    model = random_ltv(rng, n, 3, 1, 2)
    disc = discretize(model, 0.2)
    batch = build_batch(disc)
    q = rng.normal(size=(3, 3))
    weights = CostWeights(
        q_per_step=np.repeat((q.T @ q)[None], n, axis=0),
        r_per_step=np.full((n, 1, 1), 2.0),
        x_ref=rng.normal(size=n * 3),
    )
    x0 = rng.normal(size=3)
    assembled = assemble_qp(batch, weights, x0)
    u = rng.normal(size=n)
    qp_objective = (
        0.5 * u @ assembled.qp.hessian @ u + assembled.qp.linear @ u + assembled.constant
    )
    direct = evaluate_cost(batch, weights, x0, u)
    assert abs(qp_objective - direct) <= 1e-8 * (1.0 + abs(direct))


def test_inconsistent_bounds_raise():
    n = 4
    disc = discretize(single_integrator(n), 0.2)
    batch = build_batch(disc)
    weights = CostWeights(
        q_per_step=np.ones((n, 1, 1)),
        r_per_step=np.ones((n, 1, 1)),
        x_ref=np.zeros(n),
    )
    with pytest.raises(InconsistentBounds):
        assemble_qp(
            batch,
            weights,
            np.zeros(1),
            y_min=np.full((n, 1), 2.0),
            y_max=np.full((n, 1), 1.0),
        )


def test_slack_relaxes_selected_bounds():
    # Initial state far above a hard output ceiling: infeasible without
    # slack at the early steps, feasible with it.
    n = 6
    disc = discretize(single_integrator(n), 0.2)
    batch = build_batch(disc)
    weights = CostWeights(
        q_per_step=np.ones((n, 1, 1)),
        r_per_step=np.ones((n, 1, 1)),
        x_ref=np.zeros(n),
    )
    bounds = dict(
        u_min=np.full((n, 1), -2.0),
        u_max=np.full((n, 1), 2.0),
        y_min=np.full((n, 1), -np.inf),
        y_max=np.full((n, 1), 0.5),
    )
    hard = assemble_qp(batch, weights, np.array([2.0]), **bounds)
    assert qp.solve(hard.qp).status == "infeasible"
    soft = assemble_qp(
        batch,
        weights,
        np.array([2.0]),
        slack=SlackSpec(tuple((k, 0) for k in (1, 2, 3)), 1e4),
        **bounds,
    )
    solution = qp.solve(soft.qp)
    assert solution.status == "optimal"
    _, slack_values = soft.split(solution.primal)
    assert slack_values.max() > 0.1
