import numpy as np
import pytest

from phasectl.dynamics import ALLEN_CAHN, ModelParams, PhaseFieldSystem
from phasectl.errors import ConfigurationError
from phasectl.grid import GridSpec, make_goal
from phasectl.ilqr import CostParams, ILQROptions, optimize_open_loop
from phasectl.lqr import FeedbackPolicy, riccati_gains, riccati_recursion
from phasectl.sysid import LTVModel, SysIdConfig, identify_ltv


def constant_model(a, b, horizon):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    return LTVModel([a.copy() for _ in range(horizon)], [b.copy() for _ in range(horizon)])


def dare_gain_fixed_point(a, b, q, r, iters=400):
    """Independent infinite-horizon oracle via plain fixed-point iteration."""
    p = q
    for _ in range(iters):
        k = (b * p * a) / (r + b * p * b)
        p = q + a * p * (a - b * k)
    return (b * p * a) / (r + b * p * b)


def test_scalar_gain_approaches_dare_fixed_point():
    model = constant_model([[1.0]], [[1.0]], horizon=60)
    cost = CostParams(goal=np.zeros(1), q_run=1.0, r_ctrl=1.0, q_term=1.0)
    gains = riccati_gains(model, cost)
    k_inf = dare_gain_fixed_point(1.0, 1.0, 1.0, 1.0)
    assert k_inf == pytest.approx((np.sqrt(5) - 1) / 2, rel=1e-12)
    # returned gains are negated for u = u_bar + K dx
    assert gains[0][0, 0] == pytest.approx(-k_inf, rel=1e-10)


def test_zero_weights_zero_gains():
    rng = np.random.default_rng(0)
    model = constant_model(rng.normal(size=(3, 3)), rng.normal(size=(3, 2)), horizon=5)
    cost = CostParams(goal=np.zeros(3), q_run=0.0, r_ctrl=1.0, q_term=0.0)
    for k in riccati_gains(model, cost):
        assert np.all(k == 0.0)


def test_zero_input_matrix_zero_gains():
    rng = np.random.default_rng(1)
    model = constant_model(rng.normal(size=(3, 3)), np.zeros((3, 2)), horizon=5)
    cost = CostParams(goal=np.zeros(3), q_run=1.0, r_ctrl=1.0, q_term=2.0)
    for k in riccati_gains(model, cost):
        assert np.all(k == 0.0)


def test_value_matrices_symmetric_psd():
    rng = np.random.default_rng(2)
    model = LTVModel(
        [0.9 * np.eye(4) + 0.2 * rng.normal(size=(4, 4)) for _ in range(8)],
        [rng.normal(size=(4, 2)) for _ in range(8)],
    )
    cost = CostParams(goal=np.zeros(4), q_run=0.5, r_ctrl=0.2, q_term=30.0)
    result = riccati_recursion(model, cost)
    assert result.max_asymmetry < 1e-10
    for p in result.value_matrices:
        np.testing.assert_array_equal(p, p.T)
        assert np.min(np.linalg.eigvalsh(p)) > -1e-10


def test_gains_invariant_under_joint_weight_scaling():
    rng = np.random.default_rng(3)
    model = LTVModel(
        [0.9 * np.eye(3) + 0.1 * rng.normal(size=(3, 3)) for _ in range(6)],
        [rng.normal(size=(3, 2)) for _ in range(6)],
    )
    base = CostParams(goal=np.zeros(3), q_run=1.0, r_ctrl=0.1, q_term=10.0)
    scaled = CostParams(goal=np.zeros(3), q_run=7.0, r_ctrl=0.7, q_term=70.0)
    for k1, k2 in zip(riccati_gains(model, base), riccati_gains(model, scaled)):
        np.testing.assert_allclose(k1, k2, rtol=1e-10)


def test_closed_loop_beats_zero_feedback_on_identified_model():
    n = 5
    params = ModelParams(pde=ALLEN_CAHN, grid=GridSpec(n), dt="auto")
    system = PhaseFieldSystem(params)
    goal = make_goal(GridSpec(n), "banded", 5).field.to_vector()
    cost = CostParams(goal=goal)
    opts = ILQROptions(horizon=8, max_iters=25, seed=11)
    nominal = optimize_open_loop(system, np.zeros(25), cost, opts, "analytic").trajectory
    model = identify_ltv(nominal, system, SysIdConfig(mode="analytic-oracle"))
    gains = riccati_gains(model, cost)

    def quadratic_cost(dx0, feedback):
        dx = dx0
        total = 0.0
        for t in range(model.horizon):
            du = gains[t] @ dx if feedback else np.zeros(system.n_controls)
            total += 0.5 * cost.q_run * dx @ dx + 0.5 * cost.r_ctrl * du @ du
            dx = model.a_seq[t] @ dx + model.b_seq[t] @ du
        return total + 0.5 * cost.q_term * dx @ dx

    rng = np.random.default_rng(4)
    fb, zero = [], []
    for _ in range(100):
        dx0 = 0.1 * rng.standard_normal(system.n_states)
        fb.append(quadratic_cost(dx0, True))
        zero.append(quadratic_cost(dx0, False))
    assert np.mean(fb) < np.mean(zero)


def test_state_dimension_cap():
    model = constant_model(np.eye(5), np.ones((5, 2)), horizon=3)
    cost = CostParams(goal=np.zeros(5))
    with pytest.raises(ConfigurationError) as err:
        riccati_gains(model, cost, state_dim_cap=4)
    assert "cap" in str(err.value)
    riccati_gains(model, cost, state_dim_cap=5)  # raising the cap admits it


def test_empty_model_rejected():
    with pytest.raises(ConfigurationError):
        riccati_gains(LTVModel([], []), CostParams(goal=np.zeros(2)))


def test_feedback_policy_validation():
    from phasectl.ilqr import Trajectory

    traj = Trajectory(np.zeros((4, 2)), np.zeros((3, 1)), np.zeros(3), 0.0)
    with pytest.raises(ConfigurationError):
        FeedbackPolicy(traj, [np.zeros((1, 2))] * 2)
    bad = [np.zeros((1, 2))] * 3
    bad[1] = np.full((1, 2), np.nan)
    with pytest.raises(ConfigurationError):
        FeedbackPolicy(traj, bad)
    policy = FeedbackPolicy(traj, [np.zeros((1, 2))] * 3)
    assert policy.horizon == 3
