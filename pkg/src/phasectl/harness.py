"""Noise-sweep benchmark orchestration and result persistence.

A sweep runs every (strategy, noise level, rollout) cell, aggregates
episodic-cost statistics per cell group, and persists:

* ``sweep.csv``: strategy, noise_level, mean_cost, std_cost, min, max, n, n_failed
* ``raw_costs.csv``: per-rollout audit dump (strategy, noise_level, rollout,
  seed, cost, failed)
* ``convergence.csv``: iteration, cost, mu, alpha (when a design ran)
* ``manifest.json``: full resolved configuration for bit-identical replay
* goal/final field files for the montage plots

Each cell derives its noise seed as ``base_seed XOR mix64(level_index,
rollout_index)`` (no strategy term, so strategies face identical noise
realizations and comparisons are paired). Results are reduced in cell-index
order, so the output is byte-identical for any worker count.

Rollouts that blow up are recorded as failed cells (infinity sentinel,
excluded from the statistics) rather than aborting the sweep.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigurationError, NumericalBlowupError, OptimizationStalledError
from .grid import PhaseField, write_field
from .ilqr import CostParams, ILQROptions
from .pipeline import (
    STRATEGIES,
    NoiseSpec,
    PolicyArtifact,
    baseline_rollout,
    closed_loop_rollout,
    mpc_rollout,
    nominal_control_scale,
    open_loop_rollout,
)

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def cell_seed(base_seed: int, level_index: int, rollout_index: int) -> int:
    """Worker-count-independent per-cell seed: base XOR mix(level, rollout)."""
    mixed = _splitmix64(((level_index + 1) << 32) ^ (rollout_index + 1))
    return (base_seed ^ mixed) & _MASK64


@dataclass(frozen=True)
class SweepConfig:
    noise_levels: tuple = tuple(round(0.1 * i, 10) for i in range(11))
    rollouts_per_level: int = 100
    strategies: tuple = ("open-loop", "closed-loop")
    base_seed: int = 0
    mpc_inner_iters: int = 10
    mpc_jacobian_source: str = "analytic"
    baseline_steps: int | None = None  # None: use the policy horizon

    def __post_init__(self):
        object.__setattr__(self, "noise_levels", tuple(float(v) for v in self.noise_levels))
        object.__setattr__(self, "strategies", tuple(self.strategies))
        if self.rollouts_per_level < 1:
            raise ConfigurationError("rollouts_per_level must be >= 1")
        if any(level < 0 for level in self.noise_levels):
            raise ConfigurationError("noise levels must be nonnegative")
        unknown = [s for s in self.strategies if s not in STRATEGIES]
        if unknown:
            raise ConfigurationError(
                f"unknown strategies {unknown}; expected a subset of {list(STRATEGIES)}"
            )


@dataclass
class CellStats:
    strategy: str
    noise_level: float
    mean_cost: float
    std_cost: float
    min_cost: float
    max_cost: float
    n: int
    n_failed: int


@dataclass
class SweepResult:
    cells: list
    raw: list  # (strategy, noise_level, rollout_index, seed, cost, failed)
    config: SweepConfig


def _run_one(
    strategy: str,
    artifact: PolicyArtifact,
    opts: ILQROptions,
    cfg: SweepConfig,
    level: float,
    seed: int,
    scale: float,
):
    noise = NoiseSpec(level, seed)
    policy, params, cost = artifact.policy, artifact.params, artifact.cost
    if strategy == "open-loop":
        return open_loop_rollout(policy, params, cost, noise, noise_scale=scale)
    if strategy == "closed-loop":
        return closed_loop_rollout(policy, params, cost, noise, noise_scale=scale)
    if strategy == "mpc":
        return mpc_rollout(
            policy,
            params,
            cost,
            noise,
            opts,
            inner_iters=cfg.mpc_inner_iters,
            jacobian_source=cfg.mpc_jacobian_source,
            noise_scale=scale,
        )
    if strategy == "baseline":
        grid = params.grid
        goal = PhaseField.from_vector(grid, cost.goal)
        initial = PhaseField.from_vector(grid, policy.nominal.states[0])
        steps = cfg.baseline_steps if cfg.baseline_steps is not None else policy.horizon
        return baseline_rollout(initial, goal, params, cost, steps, noise, noise_scale=scale)
    raise ConfigurationError(f"unknown strategy {strategy!r}")


def run_sweep(
    artifact: PolicyArtifact,
    cfg: SweepConfig,
    opts: ILQROptions | None = None,
    threads: int | None = None,
) -> SweepResult:
    """Execute all (strategy x level x rollout) cells and aggregate."""
    if "mpc" in cfg.strategies and opts is None:
        raise ConfigurationError("mpc strategy needs ILQR options for the inner solver")
    opts = opts if opts is not None else ILQROptions(horizon=max(artifact.policy.horizon, 1))
    scale = nominal_control_scale(artifact.policy)
    tasks = [
        (strategy, li, ri)
        for strategy in cfg.strategies
        for li in range(len(cfg.noise_levels))
        for ri in range(cfg.rollouts_per_level)
    ]

    def execute(task):
        strategy, li, ri = task
        seed = cell_seed(cfg.base_seed, li, ri)
        level = cfg.noise_levels[li]
        try:
            res = _run_one(strategy, artifact, opts, cfg, level, seed, scale)
            cost = res.episodic_cost
            if not np.isfinite(cost):
                return strategy, li, ri, seed, float("inf"), True
            return strategy, li, ri, seed, cost, False
        except (NumericalBlowupError, OptimizationStalledError):
            return strategy, li, ri, seed, float("inf"), True

    workers = threads if threads is not None else (os.cpu_count() or 1)
    if workers <= 1 or len(tasks) <= 1:
        outcomes = [execute(task) for task in tasks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(execute, tasks))
    outcomes.sort(key=lambda rec: (cfg.strategies.index(rec[0]), rec[1], rec[2]))

    cells = []
    raw = []
    for strategy in cfg.strategies:
        for li, level in enumerate(cfg.noise_levels):
            costs = []
            n_failed = 0
            for rec in outcomes:
                if rec[0] == strategy and rec[1] == li:
                    raw.append((strategy, level, rec[2], rec[3], rec[4], rec[5]))
                    if rec[5]:
                        n_failed += 1
                    else:
                        costs.append(rec[4])
            if costs:
                arr = np.array(costs)
                lo, hi = float(arr.min()), float(arr.max())
                # identical samples have exactly zero spread; np.std would
                # report mean-rounding noise otherwise
                spread = 0.0 if lo == hi else float(arr.std())
                stats = (float(arr.mean()), spread, lo, hi)
            else:
                stats = (float("inf"),) * 4
            cells.append(
                CellStats(strategy, level, *stats, cfg.rollouts_per_level, n_failed)
            )
    return SweepResult(cells, raw, cfg)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

SWEEP_COLUMNS = ("strategy", "noise_level", "mean_cost", "std_cost", "min", "max", "n", "n_failed")
CONVERGENCE_COLUMNS = ("iteration", "cost", "mu", "alpha")
RAW_COLUMNS = ("strategy", "noise_level", "rollout", "seed", "cost", "failed")


def format_sweep_csv(result: SweepResult) -> str:
    lines = [",".join(SWEEP_COLUMNS)]
    for c in result.cells:
        lines.append(
            ",".join(
                [
                    c.strategy,
                    repr(c.noise_level),
                    repr(c.mean_cost),
                    repr(c.std_cost),
                    repr(c.min_cost),
                    repr(c.max_cost),
                    str(c.n),
                    str(c.n_failed),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def parse_sweep_csv(text: str) -> list:
    lines = [line for line in text.splitlines() if line]
    if not lines or tuple(lines[0].split(",")) != SWEEP_COLUMNS:
        raise ConfigurationError(
            f"sweep CSV header mismatch: {lines[0] if lines else '<empty>'!r}"
        )
    cells = []
    for line in lines[1:]:
        parts = line.split(",")
        cells.append(
            CellStats(
                parts[0],
                float(parts[1]),
                float(parts[2]),
                float(parts[3]),
                float(parts[4]),
                float(parts[5]),
                int(parts[6]),
                int(parts[7]),
            )
        )
    return cells


def format_convergence_csv(history) -> str:
    lines = [",".join(CONVERGENCE_COLUMNS)]
    for rec in history:
        lines.append(f"{rec.iteration},{rec.cost!r},{rec.mu!r},{rec.alpha!r}")
    return "\n".join(lines) + "\n"


def format_raw_csv(result: SweepResult) -> str:
    lines = [",".join(RAW_COLUMNS)]
    for strategy, level, rollout, seed, cost, failed in result.raw:
        lines.append(
            f"{strategy},{level!r},{rollout},{seed},{cost!r},{int(failed)}"
        )
    return "\n".join(lines) + "\n"


def write_results(
    result: SweepResult,
    out_dir,
    manifest: dict | None = None,
    history=None,
    goal_field: PhaseField | None = None,
    final_field: PhaseField | None = None,
) -> list:
    """Write the sweep artifact set; returns the created paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def emit(name, text):
        path = out / name
        path.write_text(text)
        written.append(path)

    emit("sweep.csv", format_sweep_csv(result))
    emit("raw_costs.csv", format_raw_csv(result))
    if history is not None:
        emit("convergence.csv", format_convergence_csv(history))
    payload = {
        "version": __version__,
        "kind": "sweep",
        "sweep": {
            "noise_levels": list(result.config.noise_levels),
            "rollouts_per_level": result.config.rollouts_per_level,
            "strategies": list(result.config.strategies),
            "base_seed": result.config.base_seed,
            "mpc_inner_iters": result.config.mpc_inner_iters,
            "mpc_jacobian_source": result.config.mpc_jacobian_source,
            "baseline_steps": result.config.baseline_steps,
        },
    }
    if manifest:
        payload["config"] = manifest
    emit("manifest.json", json.dumps(payload, indent=2, sort_keys=True) + "\n")
    if goal_field is not None:
        path = out / "goal.pfld"
        write_field(goal_field, path)
        written.append(path)
    if final_field is not None:
        path = out / "final.pfld"
        write_field(final_field, path)
        written.append(path)
    return written
