"""Explicit finite-difference steppers for the controlled phase-field PDEs.

Two dynamics are supported on the periodic grid, both driven by the local
potential density ``phi^4 + T*phi^2 + h*phi``:

* ``allen-cahn``: non-conserved relaxation,
  ``phi' = phi - M*dt*(4*phi^3 + 2*T*phi + h - gamma*lap(phi))``
* ``cahn-hilliard``: conserved transport,
  ``mu = -(4*phi^3 + 2*T*phi + h - gamma*lap(phi))``, ``phi' = phi - M*dt*lap(mu)``

Both one-step maps are affine in the stacked control vector,
``next = f(state) + g(state) @ u``; :func:`split_affine` exposes that
decomposition and :func:`analytic_jacobians` the exact linearization, which
downstream estimators use as a test oracle.

Time stepping is forward Euler, matching the update formulas above
literally. A Heun (two-stage) integrator is available behind
``ModelParams(integrator="heun")`` for simulation only; it is not affine
in control, so the affine/Jacobian helpers reject it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericalBlowupError
from .grid import ControlField, GridSpec, PhaseField

ALLEN_CAHN = "allen-cahn"
CAHN_HILLIARD = "cahn-hilliard"

# worst-case |phi| assumed by the Allen-Cahn stability guard
_GUARD_PHI_MAX = 2.0
# safety factor in the Cahn-Hilliard biharmonic guard
_GUARD_CH_FACTOR = 4.0
# fraction of the guard bound used when dt is resolved automatically
_AUTO_DT_FRACTION = 0.8


@dataclass(frozen=True)
class ControlBounds:
    """Box bounds |T| <= t_max, |h| <= h_max, enforced by clipping in every
    rollout and by the line-search clamp in the trajectory optimizer."""

    t_max: float = 5.0
    h_max: float = 5.0

    def __post_init__(self):
        if not (self.t_max > 0 and self.h_max > 0):
            raise ConfigurationError(
                f"control bounds must be strictly positive, got "
                f"t_max={self.t_max!r}, h_max={self.h_max!r}"
            )


def allen_cahn_dt_bound(mobility: float, gamma: float, dx: float, t_max: float) -> float:
    """Largest dt admitted by the Allen-Cahn explicit stability guard."""
    stiffness = 4.0 * gamma / dx**2 + 12.0 * _GUARD_PHI_MAX**2 + 2.0 * t_max
    return 1.0 / (mobility * stiffness)


def cahn_hilliard_dt_bound(mobility: float, gamma: float, dx: float) -> float:
    """Largest dt admitted by the Cahn-Hilliard biharmonic stability guard."""
    if gamma == 0.0:
        return np.inf
    return 1.0 / (mobility * gamma * (16.0 / dx**4) * _GUARD_CH_FACTOR)


@dataclass(frozen=True)
class ModelParams:
    """PDE choice plus the numerical parameters of the explicit scheme.

    ``dt`` may be the string ``"auto"``, which resolves to 0.8x the stability
    guard bound for the chosen PDE. Constructing params that violate the
    guard is a configuration error, not a warning.
    """

    pde: str
    grid: GridSpec
    mobility: float = 1.0
    gamma: float = 0.01
    dt: float | str = "auto"
    bounds: ControlBounds = field(default_factory=ControlBounds)
    integrator: str = "euler"

    def __post_init__(self):
        if self.pde not in (ALLEN_CAHN, CAHN_HILLIARD):
            raise ConfigurationError(
                f"unknown pde {self.pde!r} (expected {ALLEN_CAHN!r} or {CAHN_HILLIARD!r})"
            )
        if self.integrator not in ("euler", "heun"):
            raise ConfigurationError(f"unknown integrator {self.integrator!r}")
        if not self.mobility > 0:
            raise ConfigurationError(f"mobility must be positive, got {self.mobility!r}")
        if self.gamma < 0:
            raise ConfigurationError(f"gamma must be nonnegative, got {self.gamma!r}")
        bound = self.dt_bound()
        if self.dt == "auto":
            if not np.isfinite(bound):
                raise ConfigurationError(
                    "dt=auto needs a finite stability bound; set dt explicitly "
                    "(cahn-hilliard with gamma=0 has no biharmonic bound)"
                )
            object.__setattr__(self, "dt", _AUTO_DT_FRACTION * bound)
        if not (isinstance(self.dt, (int, float)) and self.dt > 0):
            raise ConfigurationError(f"dt must be positive or 'auto', got {self.dt!r}")
        if self.dt > bound * (1 + 1e-12):
            raise ConfigurationError(
                f"dt={self.dt:g} violates the {self.pde} stability guard "
                f"(bound {bound:g} for mobility={self.mobility:g}, gamma={self.gamma:g}, "
                f"dx={self.grid.dx:g}, t_max={self.bounds.t_max:g})"
            )

    def dt_bound(self) -> float:
        if self.pde == ALLEN_CAHN:
            return allen_cahn_dt_bound(self.mobility, self.gamma, self.grid.dx, self.bounds.t_max)
        return cahn_hilliard_dt_bound(self.mobility, self.gamma, self.grid.dx)


def energy_density(phi, t, h):
    """Local potential density phi^4 + T*phi^2 + h*phi (elementwise)."""
    phi = np.asarray(phi, dtype=float)
    return phi**4 + t * phi**2 + h * phi


def lap_values(values: np.ndarray, dx: float) -> np.ndarray:
    """Periodic 5-point Laplacian over the last two axes (batch-friendly)."""
    return (
        np.roll(values, 1, axis=-2)
        + np.roll(values, -1, axis=-2)
        + np.roll(values, 1, axis=-1)
        + np.roll(values, -1, axis=-1)
        - 4.0 * values
    ) / dx**2


def laplacian(fld: PhaseField) -> PhaseField:
    """Periodic central-difference Laplacian of a field."""
    return PhaseField(fld.spec, lap_values(fld.values, fld.spec.dx))


def laplacian_matrix(n: int, dx: float) -> np.ndarray:
    """Dense matrix form of the periodic Laplacian on the row-major flat state."""
    one = np.zeros(n)
    one[1] = 1.0
    one[-1] = 1.0
    ring = np.empty((n, n))
    for r in range(n):
        ring[r] = np.roll(one, r)
    ring -= 2.0 * np.eye(n)
    eye = np.eye(n)
    return (np.kron(ring, eye) + np.kron(eye, ring)) / dx**2


def _rhs(values: np.ndarray, t: np.ndarray, h: np.ndarray, params: ModelParams) -> np.ndarray:
    """Continuous-time right-hand side for either PDE (batch-friendly)."""
    dx = params.grid.dx
    # overflow here surfaces as a NumericalBlowupError at the step boundary
    with np.errstate(over="ignore", invalid="ignore"):
        bulk = 4.0 * values**3 + 2.0 * t * values + h - params.gamma * lap_values(values, dx)
        if params.pde == ALLEN_CAHN:
            return -params.mobility * bulk
        mu = -bulk
        return -params.mobility * lap_values(mu, dx)


def step_values(
    values: np.ndarray, t: np.ndarray, h: np.ndarray, params: ModelParams
) -> np.ndarray:
    """One explicit step on raw arrays; supports leading batch axes."""
    with np.errstate(over="ignore", invalid="ignore"):
        if params.integrator == "euler":
            return values + params.dt * _rhs(values, t, h, params)
        k1 = _rhs(values, t, h, params)
        k2 = _rhs(values + params.dt * k1, t, h, params)
        return values + 0.5 * params.dt * (k1 + k2)


def _check_finite(values: np.ndarray, pde: str) -> None:
    if not np.all(np.isfinite(values)):
        bad = tuple(int(x) for x in np.argwhere(~np.isfinite(values))[0])
        raise NumericalBlowupError(
            f"{pde} step produced a non-finite value at cell {bad[-2:]}", cell=bad[-2:]
        )


def _step_field(state: PhaseField, control: ControlField, params: ModelParams) -> PhaseField:
    if state.spec != params.grid or control.spec != params.grid:
        raise ConfigurationError("state/control grid does not match model grid")
    out = step_values(state.values, control.t_vals, control.h_vals, params)
    _check_finite(out, params.pde)
    return PhaseField(state.spec, out)


def step_allen_cahn(state: PhaseField, control: ControlField, params: ModelParams) -> PhaseField:
    if params.pde != ALLEN_CAHN:
        raise ConfigurationError(f"params are for {params.pde}, not {ALLEN_CAHN}")
    return _step_field(state, control, params)


def step_cahn_hilliard(state: PhaseField, control: ControlField, params: ModelParams) -> PhaseField:
    if params.pde != CAHN_HILLIARD:
        raise ConfigurationError(f"params are for {params.pde}, not {CAHN_HILLIARD}")
    return _step_field(state, control, params)


def step(state: PhaseField, control: ControlField, params: ModelParams) -> PhaseField:
    """One step of whichever PDE ``params`` selects."""
    return _step_field(state, control, params)


def _require_euler(params: ModelParams, what: str) -> None:
    if params.integrator != "euler":
        raise ConfigurationError(
            f"{what} is defined for the euler integrator only "
            "(the heun stage is not affine in control)"
        )


def split_affine(state: PhaseField, params: ModelParams):
    """Decompose the one-step map as next = f(state) + g(state) @ u.

    ``u`` is the interleaved [T_k, h_k] control vector. The reconstruction
    matches the stepper exactly (to rounding) for any admissible u.
    """
    _require_euler(params, "split_affine")
    n = params.grid.n
    dx = params.grid.dx
    mdt = params.mobility * params.dt
    phi = state.values
    phi_flat = phi.reshape(-1)
    drift_grid = phi - mdt * (4.0 * phi**3 - params.gamma * lap_values(phi, dx))
    n_cells = n * n
    gain = np.zeros((n_cells, 2 * n_cells))
    if params.pde == ALLEN_CAHN:
        drift = drift_grid.reshape(-1)
        k = np.arange(n_cells)
        gain[k, 2 * k] = -mdt * 2.0 * phi_flat
        gain[k, 2 * k + 1] = -mdt
    else:
        lap = laplacian_matrix(n, dx)
        drift = phi_flat + mdt * (lap @ (4.0 * phi_flat**3 - params.gamma * (lap @ phi_flat)))
        gain[:, 0::2] = mdt * lap * (2.0 * phi_flat)[None, :]
        gain[:, 1::2] = mdt * lap
    return drift, gain


def analytic_jacobians(state: PhaseField, control: ControlField, params: ModelParams):
    """Exact partial derivatives (A, B) of the one-step map at (state, control)."""
    _require_euler(params, "analytic_jacobians")
    n = params.grid.n
    dx = params.grid.dx
    mdt = params.mobility * params.dt
    phi = state.values.reshape(-1)
    t = control.t_vals.reshape(-1)
    n_cells = n * n
    lap = laplacian_matrix(n, dx)
    bulk_diag = 12.0 * phi**2 + 2.0 * t
    b = np.zeros((n_cells, 2 * n_cells))
    k = np.arange(n_cells)
    if params.pde == ALLEN_CAHN:
        a = np.eye(n_cells) - mdt * (np.diag(bulk_diag) - params.gamma * lap)
        b[k, 2 * k] = -mdt * 2.0 * phi
        b[k, 2 * k + 1] = -mdt
    else:
        a = np.eye(n_cells) + mdt * (lap * bulk_diag[None, :] - params.gamma * (lap @ lap))
        b[:, 0::2] = mdt * lap * (2.0 * phi)[None, :]
        b[:, 1::2] = mdt * lap
    return a, b


class PhaseFieldSystem:
    """Flat-vector view of the controlled dynamics for the planning stack.

    States are row-major flattened fields (length n^2); controls interleave
    [T_k, h_k] (length 2n^2). Batched stepping vectorizes over a leading
    sample axis, which the randomized Jacobian estimators rely on.
    """

    def __init__(self, params: ModelParams):
        self.params = params
        self.spec = params.grid
        n = self.spec.n
        self.n_states = n * n
        self.n_controls = 2 * n * n
        bounds = np.empty(self.n_controls)
        bounds[0::2] = params.bounds.t_max
        bounds[1::2] = params.bounds.h_max
        bounds.flags.writeable = False
        self.control_limits = bounds

    def _grids(self, u: np.ndarray):
        n = self.spec.n
        lead = u.shape[:-1]
        return u[..., 0::2].reshape(*lead, n, n), u[..., 1::2].reshape(*lead, n, n)

    def step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        n = self.spec.n
        t, h = self._grids(u)
        out = step_values(x.reshape(n, n), t, h, self.params)
        _check_finite(out, self.params.pde)
        return out.reshape(-1)

    def step_batch(self, xs: np.ndarray, us: np.ndarray) -> np.ndarray:
        n = self.spec.n
        batch = xs.shape[0]
        t, h = self._grids(us)
        out = step_values(xs.reshape(batch, n, n), t, h, self.params)
        _check_finite(out, self.params.pde)
        return out.reshape(batch, -1)

    def jacobians(self, x: np.ndarray, u: np.ndarray):
        state = PhaseField(self.spec, x.reshape(self.spec.n, self.spec.n))
        t, h = self._grids(u)
        return analytic_jacobians(state, ControlField(self.spec, t, h), self.params)

    def clip_controls(self, u: np.ndarray) -> np.ndarray:
        return np.clip(u, -self.control_limits, self.control_limits)
