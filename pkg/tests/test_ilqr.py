import numpy as np
import pytest

from phasectl.dynamics import ALLEN_CAHN, ModelParams, PhaseFieldSystem
from phasectl.errors import ConfigurationError
from phasectl.grid import GridSpec, make_goal
from phasectl.ilqr import (
    CostParams,
    ILQROptions,
    Trajectory,
    backward_pass,
    forward_pass,
    optimize_open_loop,
    rollout,
)
from phasectl.sysid import LTVModel


class LinearTestSystem:
    """x' = A x + B u with no control bounds."""

    def __init__(self, a, b):
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.n_states = self.a.shape[0]
        self.n_controls = self.b.shape[1]

    def step(self, x, u):
        return self.a @ x + self.b @ u

    def step_batch(self, xs, us):
        return xs @ self.a.T + us @ self.b.T

    def jacobians(self, x, u):
        return self.a.copy(), self.b.copy()

    def clip_controls(self, u):
        return u


def solve_lq_directly(system, x0, cost, horizon):
    """Independent oracle: minimize the stacked quadratic over all controls.

    Builds the linear map from the stacked control vector to every state and
    solves the normal equations; no Riccati machinery involved.
    """
    a, b = system.a, system.b
    nx, nu = system.n_states, system.n_controls
    powers = [np.eye(nx)]
    for _ in range(horizon):
        powers.append(a @ powers[-1])
    # state t = powers[t] x0 + sum_s powers[t-1-s] b u_s
    maps = np.zeros((horizon + 1, nx, horizon * nu))
    for t in range(1, horizon + 1):
        for s in range(t):
            maps[t][:, s * nu : (s + 1) * nu] = powers[t - 1 - s] @ b
    weights = [cost.q_run] * horizon + [cost.q_term]
    big_m = cost.r_ctrl * np.eye(horizon * nu)
    rhs = np.zeros(horizon * nu)
    const = 0.0
    for t in range(horizon + 1):
        w = weights[t]
        if w == 0.0:
            continue
        offset = powers[t] @ x0 - cost.goal
        big_m += w * maps[t].T @ maps[t]
        rhs -= w * maps[t].T @ offset
        const += 0.5 * w * float(offset @ offset)
    u_star = np.linalg.solve(big_m, rhs)
    j_star = 0.5 * float(u_star @ (big_m @ u_star)) - float(rhs @ u_star) + const
    return u_star.reshape(horizon, nu), j_star


def scalar_riccati_gains(a, b, q, r, q_term, horizon):
    """Textbook finite-horizon recursion for a scalar plant."""
    p = q_term
    gains = []
    for _ in range(horizon):
        k = (b * p * a) / (r + b * p * b)
        p = q + a * p * (a - b * k)
        gains.append(k)
    gains.reverse()
    return gains


def make_ltv(system, horizon):
    return LTVModel([system.a.copy() for _ in range(horizon)], [system.b.copy() for _ in range(horizon)])


def zero_trajectory(system, cost, horizon):
    return rollout(system, np.zeros(system.n_states), np.zeros((horizon, system.n_controls)), cost)


# ---------------------------------------------------------------------------
# rollout
# ---------------------------------------------------------------------------

def test_rollout_zero_controls_cost_identity():
    n, horizon = 4, 6
    params = ModelParams(pde=ALLEN_CAHN, grid=GridSpec(n), dt="auto")
    system = PhaseFieldSystem(params)
    goal = make_goal(GridSpec(n), "banded", 2).field.to_vector()
    cost = CostParams(goal=goal, q_run=1.0, r_ctrl=1e-3, q_term=100.0)
    traj = rollout(system, np.zeros(n * n), np.zeros((horizon, 2 * n * n)), cost)
    assert np.all(traj.states == 0.0)
    # all states sit at distance |goal|^2 = n^2 from the +/-1 goal
    expected = (horizon * 0.5 * cost.q_run + 0.5 * cost.q_term) * n * n
    assert traj.total_cost == pytest.approx(expected, rel=1e-12)


def test_rollout_cost_recompute_matches():
    rng = np.random.default_rng(0)
    n = 3
    params = ModelParams(pde=ALLEN_CAHN, grid=GridSpec(n), dt="auto")
    system = PhaseFieldSystem(params)
    goal = make_goal(GridSpec(n), "banded", 3).field.to_vector()
    cost = CostParams(goal=goal)
    controls = rng.uniform(-4, 4, size=(8, 2 * n * n))
    traj = rollout(system, rng.normal(scale=0.2, size=n * n), controls, cost)
    assert traj.recompute_cost(cost) == pytest.approx(traj.total_cost, rel=1e-10)


def test_rollout_single_step_hand_values():
    # 2x2 grid, uniform T=1, h=2 from zero state; hand evaluation:
    #   running = 0.5*|0-g|^2 + 0.5*0.01*20 = 2.1
    #   next state uniform -0.02, terminal = 0.5*2*4.0016
    n = 2
    params = ModelParams(pde=ALLEN_CAHN, grid=GridSpec(n), gamma=0.01, dt=0.01)
    system = PhaseFieldSystem(params)
    goal = np.array([1.0, 1.0, -1.0, -1.0])
    cost = CostParams(goal=goal, q_run=1.0, r_ctrl=0.01, q_term=2.0)
    u = np.tile([1.0, 2.0], n * n)
    traj = rollout(system, np.zeros(n * n), u[None, :], cost)
    np.testing.assert_allclose(traj.states[1], -0.02, atol=1e-15)
    assert traj.per_step_costs[0] == pytest.approx(2.1, rel=1e-12)
    assert traj.terminal_cost == pytest.approx(4.0016, rel=1e-12)
    assert traj.total_cost == pytest.approx(6.1016, rel=1e-12)


def test_rollout_clips_to_bounds():
    n = 3
    params = ModelParams(pde=ALLEN_CAHN, grid=GridSpec(n), dt="auto")
    system = PhaseFieldSystem(params)
    cost = CostParams(goal=np.zeros(n * n))
    controls = np.full((4, 2 * n * n), 99.0)
    traj = rollout(system, np.zeros(n * n), controls, cost)
    assert np.max(np.abs(traj.controls)) <= 5.0


def test_trajectory_shape_validation():
    with pytest.raises(ConfigurationError):
        Trajectory(np.zeros((3, 2)), np.zeros((3, 1)), np.zeros(3), 0.0)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def test_backward_pass_matches_scalar_riccati():
    system = LinearTestSystem([[1.0]], [[1.0]])
    cost = CostParams(goal=np.zeros(1), q_run=1.0, r_ctrl=1.0, q_term=1.0)
    horizon = 3
    traj = zero_trajectory(system, cost, horizon)
    bwd = backward_pass(traj, make_ltv(system, horizon), cost, mu=0.0)
    assert bwd.ok
    oracle = scalar_riccati_gains(1.0, 1.0, 1.0, 1.0, 1.0, horizon)
    for t in range(horizon):
        assert bwd.big_k_seq[t][0, 0] == pytest.approx(-oracle[t], rel=1e-12)
        assert bwd.k_seq[t][0] == pytest.approx(0.0, abs=1e-15)


def test_backward_pass_zero_weights_zero_gains():
    rng = np.random.default_rng(5)
    system = LinearTestSystem(rng.normal(size=(3, 3)), rng.normal(size=(3, 2)))
    cost = CostParams(goal=np.zeros(3), q_run=0.0, r_ctrl=1.0, q_term=0.0)
    traj = zero_trajectory(system, cost, 4)
    bwd = backward_pass(traj, make_ltv(system, 4), cost, mu=0.0)
    assert bwd.ok
    for t in range(4):
        assert np.all(bwd.k_seq[t] == 0.0)
        assert np.all(bwd.big_k_seq[t] == 0.0)


def test_backward_pass_huge_mu_kills_gains():
    rng = np.random.default_rng(6)
    system = LinearTestSystem(rng.normal(size=(3, 3)), rng.normal(size=(3, 2)))
    cost = CostParams(goal=rng.normal(size=3), q_run=1.0, r_ctrl=1.0, q_term=5.0)
    traj = rollout(system, rng.normal(size=3), rng.normal(size=(4, 2)), cost)
    bwd = backward_pass(traj, make_ltv(system, 4), cost, mu=1e14)
    assert bwd.ok
    for t in range(4):
        assert np.max(np.abs(bwd.big_k_seq[t])) < 1e-6


def test_backward_pass_horizon_mismatch():
    system = LinearTestSystem([[1.0]], [[1.0]])
    cost = CostParams(goal=np.zeros(1))
    traj = zero_trajectory(system, cost, 3)
    with pytest.raises(ConfigurationError):
        backward_pass(traj, make_ltv(system, 2), cost, mu=0.0)


# ---------------------------------------------------------------------------
# forward pass
# ---------------------------------------------------------------------------

def test_forward_pass_alpha_zero_reproduces_nominal():
    rng = np.random.default_rng(7)
    system = LinearTestSystem(0.5 * rng.normal(size=(3, 3)), rng.normal(size=(3, 2)))
    cost = CostParams(goal=rng.normal(size=3))
    traj = rollout(system, rng.normal(size=3), rng.normal(size=(5, 2)), cost)
    bwd = backward_pass(traj, make_ltv(system, 5), cost, mu=0.0)
    new_traj, accepted = forward_pass(system, traj, bwd.k_seq, bwd.big_k_seq, 0.0, cost)
    assert not accepted
    np.testing.assert_array_equal(new_traj.states, traj.states)
    np.testing.assert_array_equal(new_traj.controls, traj.controls)


def test_forward_pass_zero_gains_reproduces_nominal():
    rng = np.random.default_rng(8)
    system = LinearTestSystem(0.5 * rng.normal(size=(3, 3)), rng.normal(size=(3, 2)))
    cost = CostParams(goal=rng.normal(size=3))
    traj = rollout(system, rng.normal(size=3), rng.normal(size=(5, 2)), cost)
    zeros_k = [np.zeros(2) for _ in range(5)]
    zeros_kk = [np.zeros((2, 3)) for _ in range(5)]
    new_traj, accepted = forward_pass(system, traj, zeros_k, zeros_kk, 1.0, cost)
    assert not accepted
    np.testing.assert_array_equal(new_traj.states, traj.states)


def test_forward_pass_rejects_all_alphas_at_exact_optimum():
    # x' = x + u from the origin with zero running state weight: staying put
    # is exactly optimal, so every line-search candidate ties and is rejected
    system = LinearTestSystem([[1.0]], [[1.0]])
    cost = CostParams(goal=np.zeros(1), q_run=0.0, r_ctrl=1.0, q_term=1.0)
    traj = zero_trajectory(system, cost, 4)
    bwd = backward_pass(traj, make_ltv(system, 4), cost, mu=0.0)
    for alpha in ILQROptions().alpha_schedule:
        _, accepted = forward_pass(system, traj, bwd.k_seq, bwd.big_k_seq, alpha, cost)
        assert not accepted


# ---------------------------------------------------------------------------
# full optimization
# ---------------------------------------------------------------------------

def test_optimize_matches_direct_lq_solve():
    rng = np.random.default_rng(9)
    a = 0.9 * np.eye(4) + 0.1 * rng.normal(size=(4, 4))
    b = rng.normal(size=(4, 2))
    system = LinearTestSystem(a, b)
    x0 = rng.normal(size=4)
    cost = CostParams(goal=rng.normal(size=4), q_run=1.0, r_ctrl=0.5, q_term=10.0)
    horizon = 5
    _, j_star = solve_lq_directly(system, x0, cost, horizon)
    opts = ILQROptions(horizon=horizon, eps_converge=1e-10)
    result = optimize_open_loop(system, x0, cost, opts, jacobian_source="analytic")
    accepted = [rec for rec in result.history if rec.accepted and rec.iteration > 0]
    assert len(accepted) <= 2
    assert result.trajectory.total_cost == pytest.approx(j_star, rel=1e-8)
    assert result.converged


def test_optimize_lls_cd_matches_direct_lq_solve():
    rng = np.random.default_rng(10)
    a = 0.8 * np.eye(3) + 0.1 * rng.normal(size=(3, 3))
    b = rng.normal(size=(3, 2))
    system = LinearTestSystem(a, b)
    x0 = rng.normal(size=3)
    cost = CostParams(goal=rng.normal(size=3), q_run=1.0, r_ctrl=0.5, q_term=10.0)
    _, j_star = solve_lq_directly(system, x0, cost, 4)
    opts = ILQROptions(horizon=4, eps_converge=1e-10, sigma=1e-5, seed=3)
    result = optimize_open_loop(system, x0, cost, opts, jacobian_source="lls-cd")
    assert result.trajectory.total_cost == pytest.approx(j_star, rel=1e-6)


def ac5_problem():
    n = 5
    params = ModelParams(pde=ALLEN_CAHN, grid=GridSpec(n), dt="auto")
    system = PhaseFieldSystem(params)
    goal = make_goal(GridSpec(n), "banded", 5).field.to_vector()
    cost = CostParams(goal=goal, q_run=1.0, r_ctrl=1e-3, q_term=100.0)
    return system, cost


def test_optimize_ac5_reaches_banded_goal():
    system, cost = ac5_problem()
    opts = ILQROptions(horizon=10, max_iters=60, seed=0)
    result = optimize_open_loop(system, np.zeros(25), cost, opts, jacobian_source="lls-cd")
    mse = float(np.mean((result.trajectory.states[-1] - cost.goal) ** 2))
    assert mse < 1e-2
    accepted_costs = [rec.cost for rec in result.history if rec.accepted]
    assert all(b < a for a, b in zip(accepted_costs, accepted_costs[1:]))
    assert np.max(np.abs(result.trajectory.controls[:, 0::2])) <= 5.0
    assert np.max(np.abs(result.trajectory.controls[:, 1::2])) <= 5.0


def test_optimize_analytic_and_llscd_costs_agree():
    system, cost = ac5_problem()
    opts = ILQROptions(horizon=10, max_iters=60, seed=1)
    res_lls = optimize_open_loop(system, np.zeros(25), cost, opts, jacobian_source="lls-cd")
    res_ana = optimize_open_loop(system, np.zeros(25), cost, opts, jacobian_source="analytic")
    gap = abs(res_lls.trajectory.total_cost - res_ana.trajectory.total_cost)
    assert gap <= 0.02 * res_ana.trajectory.total_cost


def test_optimize_deterministic_given_seed():
    system, cost = ac5_problem()
    opts = ILQROptions(horizon=6, max_iters=15, seed=42)
    r1 = optimize_open_loop(system, np.zeros(25), cost, opts, jacobian_source="lls-cd")
    r2 = optimize_open_loop(system, np.zeros(25), cost, opts, jacobian_source="lls-cd")
    np.testing.assert_array_equal(r1.trajectory.controls, r2.trajectory.controls)
    assert [rec.cost for rec in r1.history] == [rec.cost for rec in r2.history]


def test_optimize_from_goal_start_costs_little():
    # starting on the goal with no running state weight, the optimizer only
    # needs cheap maintenance controls; cost ends far below the drift cost
    system, cost_full = ac5_problem()
    cost = CostParams(goal=cost_full.goal, q_run=0.0, r_ctrl=1e-3, q_term=100.0)
    opts = ILQROptions(horizon=10, max_iters=60, seed=2)
    drift = rollout(system, cost.goal.copy(), np.zeros((10, system.n_controls)), cost)
    result = optimize_open_loop(system, cost.goal.copy(), cost, opts, jacobian_source="analytic")
    assert result.trajectory.total_cost < 0.01 * drift.total_cost


def test_optimize_emits_history_records():
    system, cost = ac5_problem()
    opts = ILQROptions(horizon=5, max_iters=10, seed=4)
    result = optimize_open_loop(system, np.zeros(25), cost, opts, jacobian_source="analytic")
    assert result.history[0].iteration == 0
    assert all(rec.mu > 0 for rec in result.history)
    accepted = [rec for rec in result.history if rec.accepted and rec.iteration > 0]
    assert all(0 < rec.alpha <= 1 for rec in accepted)


def test_options_validation():
    with pytest.raises(ConfigurationError):
        ILQROptions(alpha_schedule=(0.5, 0.25))
    with pytest.raises(ConfigurationError):
        ILQROptions(mu_factor=1.0)
    with pytest.raises(ConfigurationError):
        ILQROptions(horizon=0)
    with pytest.raises(ConfigurationError):
        CostParams(goal=np.zeros(4), r_ctrl=0.0)
