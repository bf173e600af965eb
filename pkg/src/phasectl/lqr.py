"""Finite-horizon time-varying LQR gain synthesis over an identified model.

Backward Riccati recursion with terminal weight q_term:

    P_T = q_term*I
    K_t = (r_ctrl*I + B_t^T P_{t+1} B_t)^{-1} B_t^T P_{t+1} A_t
    P_t = q_run*I + A_t^T P_{t+1} (A_t - B_t K_t)

Gains are returned already negated, so downstream code applies the policy
literally as ``u_t = u_bar_t + K_t (x_t - x_bar_t)``.

The dense recursion scales as the cube of the state dimension per step; a
configurable cap refuses grids whose flattened state exceeds it rather than
thrash memory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, RiccatiError
from .ilqr import CostParams, Trajectory
from .sysid import LTVModel

DEFAULT_STATE_DIM_CAP = 1024


@dataclass
class RiccatiResult:
    gains: list  # negated gains K_t, shape (nu, nx) each
    value_matrices: list  # P_t, t = 0..T (symmetrized)
    max_asymmetry: float  # worst relative |P - P^T| seen before symmetrization


@dataclass
class FeedbackPolicy:
    """Nominal trajectory plus time-varying feedback gains."""

    nominal: Trajectory
    gains: list

    def __post_init__(self):
        if len(self.gains) != self.nominal.horizon:
            raise ConfigurationError(
                f"{len(self.gains)} gains for horizon {self.nominal.horizon}"
            )
        for t, k in enumerate(self.gains):
            if not np.all(np.isfinite(k)):
                raise ConfigurationError(f"non-finite feedback gain at step {t}")

    @property
    def horizon(self) -> int:
        return self.nominal.horizon


def riccati_recursion(
    model: LTVModel, cost: CostParams, state_dim_cap: int = DEFAULT_STATE_DIM_CAP
) -> RiccatiResult:
    """Full recursion, returning value matrices for diagnostics as well."""
    if model.horizon < 1:
        raise ConfigurationError("cannot synthesize gains for an empty model")
    nx = model.a_seq[0].shape[0]
    nu = model.b_seq[0].shape[1]
    if nx > state_dim_cap:
        raise ConfigurationError(
            f"state dimension {nx} exceeds the dense Riccati cap {state_dim_cap}; "
            "raise the cap explicitly to accept the cubic cost"
        )
    p = cost.q_term * np.eye(nx)
    p_seq = [p]
    gains = []
    max_asym = 0.0
    eye_u = np.eye(nu)
    eye_x = np.eye(nx)
    for t in range(model.horizon - 1, -1, -1):
        a, b = model.a_seq[t], model.b_seq[t]
        pb = p @ b
        quu = cost.r_ctrl * eye_u + b.T @ pb
        try:
            chol = np.linalg.cholesky(quu)
        except np.linalg.LinAlgError:
            raise RiccatiError(
                f"control-Hessian block not positive definite at step {t}", timestep=t
            ) from None
        k = np.linalg.solve(chol.T, np.linalg.solve(chol, b.T @ (p @ a)))
        p_next = cost.q_run * eye_x + a.T @ p @ (a - b @ k)
        asym = np.max(np.abs(p_next - p_next.T))
        scale = max(np.max(np.abs(p_next)), 1e-300)
        max_asym = max(max_asym, asym / scale)
        p = 0.5 * (p_next + p_next.T)
        p_seq.append(p)
        gains.append(-k)
    gains.reverse()
    p_seq.reverse()
    return RiccatiResult(gains, p_seq, max_asym)


def riccati_gains(
    model: LTVModel, cost: CostParams, state_dim_cap: int = DEFAULT_STATE_DIM_CAP
) -> list:
    """Negated LQR gains for ``u = u_bar + K (x - x_bar)``."""
    return riccati_recursion(model, cost, state_dim_cap).gains
