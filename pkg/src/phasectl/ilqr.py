"""Open-loop trajectory optimization via iterative LQR.

The optimizer works on flat state/control vectors through a system object
exposing ``step``, ``step_batch``, ``clip_controls`` and (for the analytic
Jacobian source) ``jacobians``; the phase-field problem is one such system.
Each iteration linearizes the dynamics along the nominal — either exactly
or with the randomized central-difference estimator, keeping the whole loop
simulation-driven — runs the value backward recursion with an adaptive
control-Hessian regularizer mu, and line-searches the feedforward step over
a halving alpha schedule. Iterations stop when an accepted pass improves
the cost by less than an ``eps_converge`` fraction.

Cost convention: per-step ``0.5*q_run*|x - goal|^2 + 0.5*r_ctrl*|u|^2``
with terminal ``0.5*q_term*|x_T - goal|^2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericalBlowupError, OptimizationStalledError
from .jacobian import LLSCDConfig, estimate_jacobians
from .sysid import LTVModel, _derived_seed

# regularizer above this is treated as a hopeless solve and stops the run
_MU_CAP = 1e12
# expected-improvement scale below which the nominal counts as locally optimal
_STATIONARY_TOL = 1e-12


@dataclass(frozen=True)
class CostParams:
    """Quadratic goal-tracking cost; ``goal`` is a flat state vector."""

    goal: np.ndarray
    q_run: float = 1.0
    r_ctrl: float = 1e-3
    q_term: float = 100.0

    def __post_init__(self):
        goal = np.asarray(self.goal, dtype=float).reshape(-1).copy()
        goal.flags.writeable = False
        object.__setattr__(self, "goal", goal)
        if not self.r_ctrl > 0:
            raise ConfigurationError(f"r_ctrl must be positive, got {self.r_ctrl!r}")
        if self.q_run < 0 or self.q_term < 0:
            raise ConfigurationError("state weights q_run/q_term must be nonnegative")

    def running(self, x: np.ndarray, u: np.ndarray) -> float:
        # near-blowup states overflow to inf, which the callers handle
        with np.errstate(over="ignore"):
            dx = x - self.goal
            return 0.5 * self.q_run * float(dx @ dx) + 0.5 * self.r_ctrl * float(u @ u)

    def terminal(self, x: np.ndarray) -> float:
        with np.errstate(over="ignore"):
            dx = x - self.goal
            return 0.5 * self.q_term * float(dx @ dx)


@dataclass(frozen=True)
class ILQROptions:
    horizon: int = 10
    max_iters: int = 100
    eps_converge: float = 1e-3
    mu_init: float = 1e-6
    mu_factor: float = 10.0
    mu_min: float = 1e-9
    alpha_schedule: tuple = tuple(0.5**i for i in range(11))
    sigma: float = 1e-4
    n_samples: int | None = None  # None resolves to 2*(nx + nu)
    seed: int = 0

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigurationError(f"horizon must be >= 1, got {self.horizon!r}")
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be >= 1")
        if not self.eps_converge > 0:
            raise ConfigurationError("eps_converge must be positive")
        if not self.mu_factor > 1:
            raise ConfigurationError("mu_factor must exceed 1")
        sched = tuple(float(a) for a in self.alpha_schedule)
        if not sched or sched[0] != 1.0:
            raise ConfigurationError("alpha schedule must start at 1.0")
        if any(not (0 < a <= 1) for a in sched) or any(
            b >= a for a, b in zip(sched, sched[1:])
        ):
            raise ConfigurationError("alpha schedule must be decreasing within (0, 1]")
        object.__setattr__(self, "alpha_schedule", sched)


@dataclass
class Trajectory:
    """States (T+1, nx), controls (T, nu), and the bookkept costs."""

    states: np.ndarray
    controls: np.ndarray
    per_step_costs: np.ndarray
    terminal_cost: float

    def __post_init__(self):
        if self.states.shape[0] != self.controls.shape[0] + 1:
            raise ConfigurationError(
                f"{self.states.shape[0]} states vs {self.controls.shape[0]} controls; "
                "need exactly one more state than controls"
            )
        if self.per_step_costs.shape[0] != self.controls.shape[0]:
            raise ConfigurationError("per-step cost count must match control count")

    @property
    def horizon(self) -> int:
        return self.controls.shape[0]

    @property
    def total_cost(self) -> float:
        return float(self.per_step_costs.sum() + self.terminal_cost)

    def recompute_cost(self, cost: CostParams) -> float:
        total = sum(
            cost.running(self.states[t], self.controls[t]) for t in range(self.horizon)
        )
        return total + cost.terminal(self.states[-1])


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    cost: float
    mu: float
    alpha: float
    accepted: bool


@dataclass
class BackwardPassResult:
    k_seq: list
    big_k_seq: list
    ok: bool
    d1: float  # expected linear cost change coefficient
    d2: float  # expected quadratic cost change coefficient
    failed_step: int | None = None


@dataclass
class OpenLoopResult:
    trajectory: Trajectory
    history: list
    converged: bool

    @property
    def cost_history(self):
        return [rec.cost for rec in self.history if rec.accepted]


def rollout(system, initial: np.ndarray, controls: np.ndarray, cost: CostParams) -> Trajectory:
    """Deterministic forward simulation with control clipping and cost bookkeeping."""
    controls = np.asarray(controls, dtype=float)
    horizon = controls.shape[0]
    nx = initial.shape[0]
    states = np.empty((horizon + 1, nx))
    clipped = np.empty_like(controls)
    per_step = np.empty(horizon)
    states[0] = initial
    for t in range(horizon):
        u = system.clip_controls(controls[t])
        clipped[t] = u
        per_step[t] = cost.running(states[t], u)
        try:
            states[t + 1] = system.step(states[t], u)
        except NumericalBlowupError as err:
            err.timestep = t
            raise
    return Trajectory(states, clipped, per_step, cost.terminal(states[-1]))


def backward_pass(
    traj: Trajectory, model: LTVModel, cost: CostParams, mu: float
) -> BackwardPassResult:
    """Value-function recursion along the nominal; fails soft (flag) when the
    regularized control Hessian loses positive definiteness."""
    horizon = traj.horizon
    if model.horizon != horizon:
        raise ConfigurationError(
            f"linearization horizon {model.horizon} != trajectory horizon {horizon}"
        )
    nu = traj.controls.shape[1]
    v_x = cost.q_term * (traj.states[-1] - cost.goal)
    v_xx = cost.q_term * np.eye(traj.states.shape[1])
    k_seq = [None] * horizon
    big_k_seq = [None] * horizon
    d1 = 0.0
    d2 = 0.0
    eye_u = np.eye(nu)
    for t in range(horizon - 1, -1, -1):
        a, b = model.a_seq[t], model.b_seq[t]
        q_x = cost.q_run * (traj.states[t] - cost.goal) + a.T @ v_x
        q_u = cost.r_ctrl * traj.controls[t] + b.T @ v_x
        vxx_a = v_xx @ a
        vxx_b = v_xx @ b
        q_xx = cost.q_run * np.eye(a.shape[0]) + a.T @ vxx_a
        q_uu = cost.r_ctrl * eye_u + b.T @ vxx_b
        q_ux = b.T @ vxx_a
        try:
            chol = np.linalg.cholesky(q_uu + mu * eye_u)
        except np.linalg.LinAlgError:
            return BackwardPassResult(k_seq, big_k_seq, False, d1, d2, failed_step=t)
        rhs = np.concatenate([q_u[:, None], q_ux], axis=1)
        sol = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
        k = -sol[:, 0]
        big_k = -sol[:, 1:]
        v_x = q_x + big_k.T @ (q_uu @ k + q_u) + q_ux.T @ k
        v_xx = q_xx + big_k.T @ q_uu @ big_k + big_k.T @ q_ux + q_ux.T @ big_k
        v_xx = 0.5 * (v_xx + v_xx.T)
        d1 += float(k @ q_u)
        d2 += 0.5 * float(k @ q_uu @ k)
        k_seq[t] = k
        big_k_seq[t] = big_k
    return BackwardPassResult(k_seq, big_k_seq, True, d1, d2)


def forward_pass(
    system,
    traj: Trajectory,
    k_seq,
    big_k_seq,
    alpha: float,
    cost: CostParams,
):
    """Simulate u = u_bar + alpha*k + K (x - x_bar) with clipping.

    Returns (new trajectory, accepted); a numerical blowup rejects the pass
    instead of raising, which sends the caller down the alpha schedule.
    """
    if not 0 <= alpha <= 1:
        raise ConfigurationError(f"alpha must lie in [0, 1], got {alpha!r}")
    horizon = traj.horizon
    states = np.empty_like(traj.states)
    controls = np.empty_like(traj.controls)
    per_step = np.empty(horizon)
    states[0] = traj.states[0]
    for t in range(horizon):
        u = traj.controls[t] + alpha * k_seq[t] + big_k_seq[t] @ (states[t] - traj.states[t])
        u = system.clip_controls(u)
        controls[t] = u
        per_step[t] = cost.running(states[t], u)
        try:
            states[t + 1] = system.step(states[t], u)
        except NumericalBlowupError:
            return None, False
    new_traj = Trajectory(states, controls, per_step, cost.terminal(states[-1]))
    return new_traj, new_traj.total_cost < traj.total_cost


def _linearize(system, traj: Trajectory, source: str, opts: ILQROptions, iteration: int) -> LTVModel:
    a_seq, b_seq = [], []
    d = system.n_states + system.n_controls
    for t in range(traj.horizon):
        if source == "analytic":
            a, b = system.jacobians(traj.states[t], traj.controls[t])
        elif source == "lls-cd":
            cfg = LLSCDConfig(
                sigma=opts.sigma,
                n_samples=opts.n_samples if opts.n_samples is not None else 2 * d,
                seed=_derived_seed(opts.seed, iteration, t),
            )
            a, b = estimate_jacobians(system, traj.states[t], traj.controls[t], cfg)
        else:
            raise ConfigurationError(
                f"unknown jacobian source {source!r} (expected 'lls-cd' or 'analytic')"
            )
        a_seq.append(a)
        b_seq.append(b)
    return LTVModel(a_seq, b_seq)


def optimize_open_loop(
    system,
    initial: np.ndarray,
    cost: CostParams,
    opts: ILQROptions,
    jacobian_source: str = "lls-cd",
    init_controls: np.ndarray | None = None,
) -> OpenLoopResult:
    """Iterate backward/forward passes until the cost improvement fraction
    drops below ``eps_converge`` or the iteration budget runs out."""
    if init_controls is None:
        init_controls = np.zeros((opts.horizon, system.n_controls))
    elif init_controls.shape != (opts.horizon, system.n_controls):
        raise ConfigurationError(
            f"initial control guess shape {init_controls.shape} != "
            f"({opts.horizon}, {system.n_controls})"
        )
    nominal = rollout(system, initial, init_controls, cost)
    mu = opts.mu_init
    history = [IterationRecord(0, nominal.total_cost, mu, 0.0, True)]
    accepted_any = False
    converged = False
    for m in range(1, opts.max_iters + 1):
        model = _linearize(system, nominal, jacobian_source, opts, m)
        bwd = backward_pass(nominal, model, cost, mu)
        if not bwd.ok:
            mu = max(mu * opts.mu_factor, opts.mu_min)
            history.append(IterationRecord(m, nominal.total_cost, mu, 0.0, False))
            if mu > _MU_CAP:
                break
            continue
        if abs(bwd.d1) < _STATIONARY_TOL * (1.0 + nominal.total_cost):
            converged = True
            history.append(IterationRecord(m, nominal.total_cost, mu, 0.0, False))
            break
        accepted_traj = None
        accepted_alpha = None
        last_candidate = None
        any_evaluable = False
        for alpha in opts.alpha_schedule:
            candidate, ok = forward_pass(system, nominal, bwd.k_seq, bwd.big_k_seq, alpha, cost)
            if candidate is not None:
                any_evaluable = True
                last_candidate = candidate
            if ok:
                accepted_traj = candidate
                accepted_alpha = alpha
                break
        if accepted_traj is None:
            # clipping can reproduce the nominal bitwise at the smallest step:
            # every improving direction is blocked at the control box, which is
            # a constrained local optimum, not a failure
            if last_candidate is not None and np.array_equal(
                last_candidate.controls, nominal.controls
            ):
                converged = True
                history.append(IterationRecord(m, nominal.total_cost, mu, 0.0, False))
                break
            mu = max(mu * opts.mu_factor, opts.mu_min)
            history.append(IterationRecord(m, nominal.total_cost, mu, 0.0, False))
            if mu > _MU_CAP:
                # no descent within line-search resolution despite heavy
                # regularization; an evaluable nominal counts as converged
                converged = any_evaluable
                break
            continue
        prev_cost = nominal.total_cost
        nominal = accepted_traj
        accepted_any = True
        mu = max(mu / 2.0, opts.mu_min)
        history.append(IterationRecord(m, nominal.total_cost, mu, accepted_alpha, True))
        if (prev_cost - nominal.total_cost) < opts.eps_converge * max(prev_cost, 1e-300):
            converged = True
            break
    if not accepted_any and not converged:
        raise OptimizationStalledError(
            f"no forward pass accepted within {opts.max_iters} iterations",
            cost_history=[rec.cost for rec in history],
        )
    return OpenLoopResult(nominal, history, converged)
