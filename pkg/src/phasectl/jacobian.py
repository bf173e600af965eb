"""Randomized central-difference estimation of one-step Jacobians.

Treats the dynamics as a black box. For nominal (x, u), draws ``n_samples``
i.i.d. Gaussian perturbation pairs (dx_i, du_i) with standard deviation
``sigma``, evaluates the dynamics at nominal +/- each perturbation (2 *
n_samples evaluations), and solves the least-squares system

    step(x + dx, u + du) - step(x - dx, u - du) = 2 * [A B] @ [dx; du] + O(sigma^3)

for the stacked Jacobian [A B]. Even-order terms cancel, so the estimate
error scales as O(sigma^2).

By default the Gram matrix dY dY^T is formed and solved exactly. With
``exact_gram=False`` it is replaced by its large-sample diagonal
approximation sigma^2 * (n_samples - 1) * I, which trades a solve for a
scaled matrix product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, EstimationError


@dataclass(frozen=True)
class LLSCDConfig:
    sigma: float
    n_samples: int
    seed: int
    exact_gram: bool = True

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigurationError(f"perturbation sigma must be positive, got {self.sigma!r}")
        if self.n_samples < 1:
            raise ConfigurationError(f"n_samples must be >= 1, got {self.n_samples!r}")


def default_config(n_states: int, n_controls: int, seed: int = 0, sigma: float = 1e-4) -> LLSCDConfig:
    """Config with the sample-sufficiency default n_samples = 2*(nx + nu)."""
    return LLSCDConfig(sigma=sigma, n_samples=2 * (n_states + n_controls), seed=seed)


class CallableSystem:
    """Adapter turning a plain step function into the batched-system protocol."""

    def __init__(self, fn, n_states: int, n_controls: int):
        self._fn = fn
        self.n_states = n_states
        self.n_controls = n_controls

    def step(self, x, u):
        return self._fn(x, u)

    def step_batch(self, xs, us):
        return np.stack([self._fn(x, u) for x, u in zip(xs, us)])


def estimate_jacobians(system, x: np.ndarray, u: np.ndarray, cfg: LLSCDConfig):
    """Estimate (A, B) of the one-step map at nominal (x, u).

    ``system`` needs ``n_states``, ``n_controls`` and ``step_batch``;
    :class:`CallableSystem` wraps a bare function. Same seed gives a
    bit-identical estimate.
    """
    nx, nu = system.n_states, system.n_controls
    d = nx + nu
    ns = cfg.n_samples
    if ns < d:
        raise EstimationError(
            f"n_samples={ns} is below the state+control dimension {d}; "
            f"the Gram matrix is singular, use n_samples >= {d}"
        )
    rng = np.random.default_rng(cfg.seed)
    dy = cfg.sigma * rng.standard_normal((d, ns))
    dxs = dy[:nx].T
    dus = dy[nx:].T
    plus = system.step_batch(x[None, :] + dxs, u[None, :] + dus)
    minus = system.step_batch(x[None, :] - dxs, u[None, :] - dus)
    h = (plus - minus).T  # (nx, ns), column i = central difference for sample i
    if cfg.exact_gram:
        gram = dy @ dy.T
        try:
            sol = np.linalg.solve(gram, dy @ h.T)
        except np.linalg.LinAlgError:
            raise EstimationError(
                f"Gram matrix of {ns} perturbation samples is singular; "
                "increase n_samples"
            ) from None
        jac = 0.5 * sol.T
    else:
        jac = (h @ dy.T) / (2.0 * cfg.sigma**2 * (ns - 1))
    if not np.all(np.isfinite(jac)):
        raise EstimationError("Jacobian estimate is non-finite (ill-conditioned samples)")
    return jac[:, :nx], jac[:, nx:]
