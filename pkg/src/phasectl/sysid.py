"""Least-squares identification of the time-varying perturbation model.

Around a nominal trajectory (x_t, u_t) the deviation dynamics are
``dx_{t+1} = A_t dx_t + B_t du_t``. Three ways to obtain (A_t, B_t):

* ``simulation-least-squares``: per timestep, feed N Gaussian perturbation
  pairs one step through the true dynamics, collect output deviations Y and
  regressors X = [dx; du], and solve [A|B] = Y X^T (X X^T)^{-1}. One-sided
  differences, exactly the stacked-regression estimator.
* ``lls-cd-reuse``: delegate to the central-difference estimator
  (:mod:`phasectl.jacobian`), which targets the same Jacobians with
  second-order accuracy. Default.
* ``analytic-oracle``: exact linearization from the dynamics module; used
  for validation and at scales where sampling is wasteful.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, FieldFormatError, IdentificationError
from .jacobian import LLSCDConfig, estimate_jacobians

_LTV_MAGIC = b"LTVM"
_LTV_VERSION = 1

MODES = ("simulation-least-squares", "lls-cd-reuse", "analytic-oracle")


@dataclass(frozen=True)
class SysIdConfig:
    sigma: float = 1e-4
    n_rollouts: int | None = None  # None resolves to 2*(nx + nu)
    seed: int = 0
    mode: str = "lls-cd-reuse"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigurationError(f"sysid sigma must be positive, got {self.sigma!r}")
        if self.n_rollouts is not None and self.n_rollouts < 1:
            raise ConfigurationError(f"n_rollouts must be >= 1, got {self.n_rollouts!r}")
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown sysid mode {self.mode!r} (expected one of {MODES})")


@dataclass
class LTVModel:
    """Per-timestep linearization (A_t, B_t) about a nominal trajectory."""

    a_seq: list
    b_seq: list

    def __post_init__(self):
        if len(self.a_seq) != len(self.b_seq):
            raise ConfigurationError("A and B sequences must have equal length")
        for t, (a, b) in enumerate(zip(self.a_seq, self.b_seq)):
            if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
                raise ConfigurationError(f"non-finite linearization matrix at step {t}")

    @property
    def horizon(self) -> int:
        return len(self.a_seq)


def _derived_seed(base: int, *key: int) -> int:
    return int(np.random.SeedSequence(entropy=base, spawn_key=key).generate_state(1)[0])


class _TimeSliceView:
    """One-timestep view of a time-varying plant for the Jacobian estimator."""

    def __init__(self, batch_fn, n_states, n_controls):
        self.step_batch = batch_fn
        self.n_states = n_states
        self.n_controls = n_controls


def identify_ltv(nominal, system, cfg: SysIdConfig) -> LTVModel:
    """Identify (A_t, B_t) along ``nominal`` (an object with ``states`` and
    ``controls`` arrays) for the given system. Deterministic per seed."""
    states = np.asarray(nominal.states)
    controls = np.asarray(nominal.controls)
    horizon = controls.shape[0]
    if horizon == 0:
        return LTVModel([], [])
    nx, nu = system.n_states, system.n_controls
    d = nx + nu
    # time-varying plants may expose *_at hooks; the phase-field system is
    # time-invariant and uses the plain ones
    step_batch_at = getattr(system, "step_batch_at", None)
    jac_at = getattr(system, "jacobians_at", None)
    a_seq, b_seq = [], []
    for t in range(horizon):
        x_bar, u_bar = states[t], controls[t]
        batch = (
            (lambda xs, us, _t=t: step_batch_at(_t, xs, us))
            if step_batch_at is not None
            else system.step_batch
        )
        if cfg.mode == "analytic-oracle":
            a, b = jac_at(t, x_bar, u_bar) if jac_at is not None else system.jacobians(x_bar, u_bar)
        elif cfg.mode == "lls-cd-reuse":
            lls = LLSCDConfig(
                sigma=cfg.sigma,
                n_samples=cfg.n_rollouts if cfg.n_rollouts is not None else 2 * d,
                seed=_derived_seed(cfg.seed, t),
            )
            view = _TimeSliceView(batch, nx, nu) if step_batch_at is not None else system
            a, b = estimate_jacobians(view, x_bar, u_bar, lls)
        else:
            n = cfg.n_rollouts if cfg.n_rollouts is not None else 2 * d
            if n < d:
                raise IdentificationError(
                    f"step {t}: {n} rollouts cannot determine a {nx}x{d} model; "
                    f"use n_rollouts >= {d}"
                )
            rng = np.random.default_rng(_derived_seed(cfg.seed, t))
            x_regress = cfg.sigma * rng.standard_normal((d, n))
            xs = x_bar[None, :] + x_regress[:nx].T
            us = u_bar[None, :] + x_regress[nx:].T
            y = (batch(xs, us) - states[t + 1][None, :]).T
            gram = x_regress @ x_regress.T
            try:
                sol = np.linalg.solve(gram, x_regress @ y.T)
            except np.linalg.LinAlgError:
                raise IdentificationError(
                    f"step {t}: rank-deficient regressor ({n} rollouts); increase n_rollouts"
                ) from None
            ab = sol.T
            a, b = ab[:, :nx], ab[:, nx:]
        a_seq.append(a)
        b_seq.append(b)
    return LTVModel(a_seq, b_seq)


# ---------------------------------------------------------------------------
# persistence ("LTVM" binary artifact)
# ---------------------------------------------------------------------------

def save_ltv(model: LTVModel, path) -> None:
    horizon = model.horizon
    nx = model.a_seq[0].shape[0] if horizon else 0
    nu = model.b_seq[0].shape[1] if horizon else 0
    with open(path, "wb") as fh:
        fh.write(_LTV_MAGIC)
        fh.write(bytes([_LTV_VERSION]))
        fh.write(struct.pack("<III", horizon, nx, nu))
        for a, b in zip(model.a_seq, model.b_seq):
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_ltv(path) -> LTVModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _LTV_MAGIC:
        raise FieldFormatError(f"{path}: bad magic {data[:4]!r} at byte 0 (expected LTVM)")
    if data[4] != _LTV_VERSION:
        raise FieldFormatError(f"{path}: unsupported version {data[4]} at byte 4")
    horizon, nx, nu = struct.unpack("<III", data[5:17])
    expect = 17 + horizon * (nx * nx + nx * nu) * 8
    if len(data) != expect:
        raise FieldFormatError(
            f"{path}: file holds {len(data)} bytes, expected {expect} "
            f"for horizon={horizon}, nx={nx}, nu={nu}"
        )
    payload = np.frombuffer(data[17:], dtype="<f8")
    a_seq, b_seq = [], []
    per = nx * nx + nx * nu
    for t in range(horizon):
        block = payload[t * per : (t + 1) * per]
        a_seq.append(block[: nx * nx].reshape(nx, nx).astype(float))
        b_seq.append(block[nx * nx :].reshape(nx, nu).astype(float))
    return LTVModel(a_seq, b_seq)
