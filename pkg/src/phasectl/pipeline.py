"""Top-level control strategies producing noisy closed-loop rollouts.

``d2c_design`` composes the three decoupled stages: open-loop trajectory
optimization, identification of the time-varying perturbation model, and
Riccati feedback synthesis. The resulting policy can be replayed four ways:

* ``open_loop_rollout``: apply the nominal control sequence, no feedback;
* ``closed_loop_rollout``: ``u_t = u_bar_t + K_t (x_t - x_bar_t)``;
* ``mpc_rollout``: shrinking-horizon replanning, applying only the first
  control of each warm-started re-solve;
* ``baseline_rollout``: the analytic time-invariant control derived from
  the per-cell steady-state condition (diffusion neglected).

Noise is injected on the control channels as ``u_applied = u_cmd + w`` with
``w`` i.i.d. Gaussian of standard deviation ``level * max|u_bar*|``, where
the reference magnitude is taken from the designed nominal (or passed
explicitly so different strategies share one scale). The plant is always
the true nonlinear dynamics. Episodic cost is charged on the commanded
(clipped, pre-noise) controls.

Rollouts with the same ``NoiseSpec`` consume identical noise realizations
across strategies, so Monte-Carlo comparisons are paired.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .dynamics import (
    ALLEN_CAHN,
    CAHN_HILLIARD,
    ControlBounds,
    ModelParams,
    PhaseFieldSystem,
)
from .errors import (
    ConfigurationError,
    FieldFormatError,
    NumericalBlowupError,
    OptimizationStalledError,
)
from .grid import GridSpec, PhaseField
from .ilqr import (
    CostParams,
    ILQROptions,
    OpenLoopResult,
    Trajectory,
    optimize_open_loop,
)
from .lqr import DEFAULT_STATE_DIM_CAP, FeedbackPolicy, riccati_gains
from .sysid import LTVModel, SysIdConfig, _derived_seed, identify_ltv

_POLICY_MAGIC = b"PLCY"
_POLICY_VERSION = 1
_PDE_CODES = {ALLEN_CAHN: 0, CAHN_HILLIARD: 1}
_INTEGRATOR_CODES = {"euler": 0, "heun": 1}

STRATEGIES = ("open-loop", "closed-loop", "mpc", "baseline")


@dataclass(frozen=True)
class NoiseSpec:
    """Control noise intensity as a fraction of the max nominal control."""

    level: float
    seed: int = 0

    def __post_init__(self):
        if self.level < 0:
            raise ConfigurationError(f"noise level must be nonnegative, got {self.level!r}")


@dataclass
class RolloutResult:
    trajectory: Trajectory
    episodic_cost: float
    terminal_mse: float


@dataclass
class D2CDesign:
    policy: FeedbackPolicy
    model: LTVModel
    history: list
    params: ModelParams
    cost: CostParams

    @property
    def n_open_loop_parameters(self) -> int:
        return self.policy.horizon * self.policy.nominal.controls.shape[1]


def open_loop_parameter_count(grid: GridSpec, horizon: int) -> int:
    """Decision-variable count of the open-loop stage: horizon x 2n^2."""
    return horizon * 2 * grid.n_cells


def d2c_design(
    params: ModelParams,
    initial: PhaseField,
    cost: CostParams,
    opts: ILQROptions,
    sysid_cfg: SysIdConfig | None = None,
    jacobian_source: str = "lls-cd",
    state_dim_cap: int = DEFAULT_STATE_DIM_CAP,
) -> D2CDesign:
    """Run the full three-stage design and return the feedback policy."""
    system = PhaseFieldSystem(params)
    if cost.goal.shape[0] != system.n_states:
        raise ConfigurationError(
            f"goal dimension {cost.goal.shape[0]} does not match grid "
            f"({system.n_states} cells)"
        )
    result: OpenLoopResult = optimize_open_loop(
        system, initial.to_vector(), cost, opts, jacobian_source=jacobian_source
    )
    sysid_cfg = sysid_cfg if sysid_cfg is not None else SysIdConfig()
    model = identify_ltv(result.trajectory, system, sysid_cfg)
    gains = riccati_gains(model, cost, state_dim_cap=state_dim_cap)
    policy = FeedbackPolicy(result.trajectory, gains)
    return D2CDesign(policy, model, result.history, params, cost)


def nominal_control_scale(policy: FeedbackPolicy) -> float:
    """max over timesteps and channels of |u_bar*|, the noise reference."""
    return float(np.max(np.abs(policy.nominal.controls)))


def _noise_matrix(noise: NoiseSpec, horizon: int, n_controls: int, std: float) -> np.ndarray:
    if std == 0.0:
        return np.zeros((horizon, n_controls))
    rng = np.random.default_rng(noise.seed)
    return std * rng.standard_normal((horizon, n_controls))


def _finish(states, controls, per_step, cost: CostParams) -> RolloutResult:
    traj = Trajectory(
        np.asarray(states), np.asarray(controls), np.asarray(per_step), cost.terminal(states[-1])
    )
    terminal_mse = float(np.mean((traj.states[-1] - cost.goal) ** 2))
    return RolloutResult(traj, traj.total_cost, terminal_mse)


def _run_policy_rollout(
    policy: FeedbackPolicy,
    params: ModelParams,
    cost: CostParams,
    noise: NoiseSpec,
    feedback: bool,
    noise_scale: float | None,
) -> RolloutResult:
    system = PhaseFieldSystem(params)
    nominal = policy.nominal
    horizon = policy.horizon
    scale = nominal_control_scale(policy) if noise_scale is None else noise_scale
    w = _noise_matrix(noise, horizon, system.n_controls, noise.level * scale)
    x = nominal.states[0].copy()
    states = [x]
    controls = []
    per_step = []
    for t in range(horizon):
        u_cmd = nominal.controls[t]
        if feedback:
            u_cmd = u_cmd + policy.gains[t] @ (x - nominal.states[t])
        u_cmd = system.clip_controls(u_cmd)
        controls.append(u_cmd)
        per_step.append(cost.running(x, u_cmd))
        try:
            x = system.step(x, u_cmd + w[t])
        except NumericalBlowupError as err:
            err.timestep = t
            raise
        states.append(x)
    return _finish(states, controls, per_step, cost)


def closed_loop_rollout(
    policy: FeedbackPolicy,
    params: ModelParams,
    cost: CostParams,
    noise: NoiseSpec,
    noise_scale: float | None = None,
) -> RolloutResult:
    return _run_policy_rollout(policy, params, cost, noise, True, noise_scale)


def open_loop_rollout(
    policy: FeedbackPolicy,
    params: ModelParams,
    cost: CostParams,
    noise: NoiseSpec,
    noise_scale: float | None = None,
) -> RolloutResult:
    return _run_policy_rollout(policy, params, cost, noise, False, noise_scale)


def mpc_rollout(
    policy: FeedbackPolicy,
    params: ModelParams,
    cost: CostParams,
    noise: NoiseSpec,
    opts: ILQROptions,
    inner_iters: int = 10,
    jacobian_source: str = "analytic",
    noise_scale: float | None = None,
) -> RolloutResult:
    """Shrinking-horizon replanning: solve the deterministic problem from the
    current state with horizon H, apply only the first control to the noisy
    plant, decrement H. Each re-solve warm-starts from the previous
    solution's tail."""
    system = PhaseFieldSystem(params)
    horizon = policy.horizon
    scale = nominal_control_scale(policy) if noise_scale is None else noise_scale
    w = _noise_matrix(noise, horizon, system.n_controls, noise.level * scale)
    x = policy.nominal.states[0].copy()
    warm = policy.nominal.controls.copy()
    states = [x]
    controls = []
    per_step = []
    for t in range(horizon):
        h_left = horizon - t
        inner_opts = replace(
            opts,
            horizon=h_left,
            max_iters=inner_iters,
            seed=_derived_seed(opts.seed, t),
        )
        try:
            solved = optimize_open_loop(
                system, x, cost, inner_opts, jacobian_source=jacobian_source, init_controls=warm
            )
        except OptimizationStalledError as err:
            raise OptimizationStalledError(
                f"inner solve stalled at outer step {t}: {err}", err.cost_history
            ) from err
        u_cmd = solved.trajectory.controls[0]
        controls.append(u_cmd)
        per_step.append(cost.running(x, u_cmd))
        try:
            x = system.step(x, u_cmd + w[t])
        except NumericalBlowupError as blow:
            blow.timestep = t
            raise
        states.append(x)
        warm = solved.trajectory.controls[1:].copy()
    return _finish(states, controls, per_step, cost)


# ---------------------------------------------------------------------------
# analytic time-invariant baseline
# ---------------------------------------------------------------------------


@dataclass
class BaselineControl:
    """Time-invariant (T, h) built from the per-cell steady-state condition
    4 phi^3 + 2 phi T + h = 0 at the goal value."""

    goal: PhaseField
    t_bar: np.ndarray
    h_bar: np.ndarray

    def __post_init__(self):
        res = self.constraint_residual()
        if np.max(np.abs(res)) > 1e-12:
            raise ConfigurationError(
                f"baseline control violates the steady-state constraint "
                f"(max residual {np.max(np.abs(res)):.3e})"
            )

    def constraint_residual(self) -> np.ndarray:
        phi = self.goal.values
        return 4.0 * phi**3 + 2.0 * phi * self.t_bar + self.h_bar


def baseline_control(goal: PhaseField) -> BaselineControl:
    """Minimum-effort time-invariant control fixing the goal as steady state."""
    phi = goal.values
    denom = 1.0 + 4.0 * phi**2
    t_bar = -8.0 * phi**4 / denom
    h_bar = -4.0 * phi**3 / denom
    return BaselineControl(goal, t_bar, h_bar)


def baseline_rollout(
    initial: PhaseField,
    goal: PhaseField,
    params: ModelParams,
    cost: CostParams,
    steps: int,
    noise: NoiseSpec,
    noise_scale: float | None = None,
) -> RolloutResult:
    """Apply the fixed baseline control through the full dynamics."""
    if steps < 1:
        raise ConfigurationError(f"baseline rollout needs steps >= 1, got {steps}")
    system = PhaseFieldSystem(params)
    base = baseline_control(goal)
    u_flat = np.empty(system.n_controls)
    u_flat[0::2] = base.t_bar.reshape(-1)
    u_flat[1::2] = base.h_bar.reshape(-1)
    u_cmd = system.clip_controls(u_flat)
    scale = float(np.max(np.abs(u_cmd))) if noise_scale is None else noise_scale
    w = _noise_matrix(noise, steps, system.n_controls, noise.level * scale)
    x = initial.to_vector()
    states = [x]
    controls = []
    per_step = []
    for t in range(steps):
        controls.append(u_cmd)
        per_step.append(cost.running(x, u_cmd))
        try:
            x = system.step(x, u_cmd + w[t])
        except NumericalBlowupError as err:
            err.timestep = t
            raise
        states.append(x)
    return _finish(states, controls, per_step, cost)


# ---------------------------------------------------------------------------
# self-contained policy artifact
# ---------------------------------------------------------------------------


@dataclass
class PolicyArtifact:
    policy: FeedbackPolicy
    params: ModelParams
    cost: CostParams


def save_policy(policy: FeedbackPolicy, params: ModelParams, cost: CostParams, path) -> None:
    """Persist policy + problem definition so rollouts need no extra config."""
    n = params.grid.n
    horizon = policy.horizon
    nominal = policy.nominal
    with open(path, "wb") as fh:
        fh.write(_POLICY_MAGIC)
        fh.write(bytes([_POLICY_VERSION]))
        fh.write(struct.pack("<II", n, horizon))
        fh.write(bytes([_PDE_CODES[params.pde], _INTEGRATOR_CODES[params.integrator]]))
        fh.write(
            struct.pack(
                "<9d",
                params.grid.dx,
                params.mobility,
                params.gamma,
                params.dt,
                params.bounds.t_max,
                params.bounds.h_max,
                cost.q_run,
                cost.r_ctrl,
                cost.q_term,
            )
        )
        for arr in (
            cost.goal,
            nominal.states,
            nominal.controls,
            nominal.per_step_costs,
            np.array([nominal.terminal_cost]),
            np.stack(policy.gains) if horizon else np.empty(0),
        ):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_policy(path) -> PolicyArtifact:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _POLICY_MAGIC:
        raise FieldFormatError(f"{path}: bad magic {data[:4]!r} at byte 0 (expected PLCY)")
    if data[4] != _POLICY_VERSION:
        raise FieldFormatError(f"{path}: unsupported version {data[4]} at byte 4")
    n, horizon = struct.unpack("<II", data[5:13])
    pde_code, integ_code = data[13], data[14]
    floats = struct.unpack("<9d", data[15:87])
    dx, mobility, gamma, dt, t_max, h_max, q_run, r_ctrl, q_term = floats
    pde = {v: k for k, v in _PDE_CODES.items()}.get(pde_code)
    integrator = {v: k for k, v in _INTEGRATOR_CODES.items()}.get(integ_code)
    if pde is None or integrator is None:
        raise FieldFormatError(f"{path}: unknown pde/integrator code at byte 13")
    nx = n * n
    nu = 2 * nx
    counts = [nx, (horizon + 1) * nx, horizon * nu, horizon, 1, horizon * nu * nx]
    expect = 87 + sum(counts) * 8
    if len(data) != expect:
        raise FieldFormatError(
            f"{path}: file holds {len(data)} bytes, expected {expect} "
            f"for n={n}, horizon={horizon}"
        )
    payload = np.frombuffer(data[87:], dtype="<f8")
    parts = []
    offset = 0
    for count in counts:
        parts.append(payload[offset : offset + count].astype(float))
        offset += count
    goal, states, controls, per_step, term, gains_flat = parts
    params = ModelParams(
        pde=pde,
        grid=GridSpec(n, dx),
        mobility=mobility,
        gamma=gamma,
        dt=dt,
        bounds=ControlBounds(t_max=t_max, h_max=h_max),
        integrator=integrator,
    )
    cost = CostParams(goal=goal, q_run=q_run, r_ctrl=r_ctrl, q_term=q_term)
    nominal = Trajectory(
        states.reshape(horizon + 1, nx),
        controls.reshape(horizon, nu),
        per_step,
        float(term[0]),
    )
    gains = list(gains_flat.reshape(horizon, nu, nx)) if horizon else []
    return PolicyArtifact(FeedbackPolicy(nominal, gains), params, cost)
