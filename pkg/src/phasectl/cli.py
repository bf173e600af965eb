"""Command-line entry point.

Subcommands: ``simulate`` (free or fixed-control evolution), ``design``
(D2C policy synthesis), ``rollout`` (replay one strategy), ``sweep``
(noise-robustness benchmark). Exit codes: 0 success, 2 configuration or
usage error, 3 numerical failure.

Every command writes a ``manifest.json`` echoing the fully resolved
configuration into its output directory before doing real work; a sweep can
be replayed byte-identically by passing that manifest as ``--config``.
Worker count comes from ``--threads``, then the ``PHASECTL_THREADS``
environment variable, then the available parallelism.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, format_config
from .dynamics import PhaseFieldSystem
from .errors import ConfigurationError, PhasectlError
from .grid import ControlField, PhaseField, read_control, write_field
from .harness import format_convergence_csv, run_sweep, write_results
from .pipeline import (
    STRATEGIES,
    NoiseSpec,
    PolicyArtifact,
    baseline_rollout,
    closed_loop_rollout,
    d2c_design,
    load_policy,
    mpc_rollout,
    open_loop_parameter_count,
    open_loop_rollout,
    save_policy,
)
from .sysid import save_ltv


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig.defaults()
    for key, raw in args.set or []:
        cfg.set(key, raw)
    return cfg


def _write_manifest(cfg: RunConfig, out_dir: Path, command: str, extra: dict | None = None):
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "version": __version__,
        "command": command,
        "config": cfg.to_flat_dict(),
    }
    if extra:
        payload.update(extra)
    (out_dir / "manifest.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    (out_dir / "resolved.cfg").write_text(format_config(cfg))


def _threads(args, cfg: RunConfig) -> int | None:
    if getattr(args, "threads", None) is not None:
        return args.threads
    env = os.environ.get("PHASECTL_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigurationError(f"PHASECTL_THREADS={env!r} is not an integer") from None
    return cfg.threads()


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out_dir = Path(args.out or cfg["run.out"])
    _write_manifest(cfg, out_dir, "simulate")
    params = cfg.model_params()
    state = cfg.initial_field()
    if args.control == "zero":
        control = ControlField.zeros(params.grid)
    else:
        control = read_control(args.control)
        if control.spec != params.grid:
            raise ConfigurationError(
                f"control grid {control.spec.n} does not match grid.n={params.grid.n}"
            )
    steps = args.steps if args.steps is not None else cfg["run.steps"]
    stride = args.stride if args.stride is not None else cfg["run.snapshot_stride"]
    system = PhaseFieldSystem(params)
    u = control.to_vector()
    x = state.to_vector()
    write_field(PhaseField.from_vector(params.grid, x), out_dir / "state_000000.pfld")
    for t in range(1, steps + 1):
        x = system.step(x, system.clip_controls(u))
        if t % stride == 0 or t == steps:
            write_field(
                PhaseField.from_vector(params.grid, x), out_dir / f"state_{t:06d}.pfld"
            )
    final = PhaseField.from_vector(params.grid, x)
    print(f"simulate: {steps} steps of {params.pde}, final |phi| max {np.max(np.abs(x)):.4g}")
    if final.has_overshoot:
        print("simulate: overshoot diagnostic: |phi| > 2 somewhere")
    return 0


def _design(cfg: RunConfig, out_dir: Path):
    params = cfg.model_params()
    cost = cfg.cost_params()
    opts = cfg.ilqr_options()
    design = d2c_design(
        params,
        cfg.initial_field(),
        cost,
        opts,
        sysid_cfg=cfg.sysid_config(),
        jacobian_source=cfg["ilqr.jacobian"],
        state_dim_cap=cfg["lqr.state_dim_cap"],
    )
    save_policy(design.policy, params, cost, out_dir / "policy.plcy")
    save_ltv(design.model, out_dir / "model.ltvm")
    (out_dir / "convergence.csv").write_text(format_convergence_csv(design.history))
    write_field(PhaseField.from_vector(params.grid, cost.goal), out_dir / "goal.pfld")
    write_field(
        PhaseField.from_vector(params.grid, design.policy.nominal.states[-1]),
        out_dir / "final.pfld",
    )
    for t in range(design.policy.horizon + 1):
        write_field(
            PhaseField.from_vector(params.grid, design.policy.nominal.states[t]),
            out_dir / f"nominal_{t:04d}.pfld",
        )
    return design


def cmd_design(args) -> int:
    cfg = _load_config(args)
    if args.goal:
        cfg.set("goal.kind", "file")
        cfg.set("goal.file", args.goal)
    out_dir = Path(args.out or cfg["run.out"])
    _write_manifest(cfg, out_dir, "design")
    n_params = open_loop_parameter_count(cfg.grid_spec(), cfg["ilqr.horizon"])
    print(f"design: {n_params} open-loop decision variables "
          f"({cfg['ilqr.horizon']} steps x {2 * cfg.grid_spec().n_cells} actuators)")
    design = _design(cfg, out_dir)
    nominal = design.policy.nominal
    mse = float(np.mean((nominal.states[-1] - design.cost.goal) ** 2))
    print(f"design: converged cost {nominal.total_cost:.6g}, terminal MSE {mse:.4g}")
    print(f"design: artifacts written to {out_dir}")
    return 0


def cmd_rollout(args) -> int:
    cfg = _load_config(args)
    artifact = load_policy(args.policy)
    if args.strategy not in STRATEGIES:
        raise ConfigurationError(
            f"unknown strategy {args.strategy!r}; expected one of {list(STRATEGIES)}"
        )
    noise = NoiseSpec(args.noise, seed=args.seed)
    policy, params, cost = artifact.policy, artifact.params, artifact.cost
    if args.strategy == "open-loop":
        res = open_loop_rollout(policy, params, cost, noise)
    elif args.strategy == "closed-loop":
        res = closed_loop_rollout(policy, params, cost, noise)
    elif args.strategy == "mpc":
        opts = replace(cfg.ilqr_options(), horizon=policy.horizon)
        res = mpc_rollout(
            policy,
            params,
            cost,
            noise,
            opts,
            inner_iters=cfg["mpc.inner_iters"],
            jacobian_source=cfg["mpc.jacobian"],
        )
    else:
        grid = params.grid
        goal = PhaseField.from_vector(grid, cost.goal)
        initial = PhaseField.from_vector(grid, policy.nominal.states[0])
        steps = cfg["sweep.baseline_steps"]
        steps = policy.horizon if steps == "auto" else steps
        res = baseline_rollout(initial, goal, params, cost, steps, noise)
    print(
        f"rollout: strategy={args.strategy} noise={args.noise} seed={args.seed} "
        f"episodic_cost={res.episodic_cost!r} terminal_mse={res.terminal_mse!r}"
    )
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_field(
            PhaseField.from_vector(params.grid, res.trajectory.states[-1]),
            out_dir / "final.pfld",
        )
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    if args.levels:
        cfg.set("sweep.levels", args.levels)
    if args.rollouts is not None:
        cfg.set("sweep.rollouts", str(args.rollouts))
    if args.strategies:
        cfg.set("sweep.strategies", args.strategies)
    out_dir = Path(args.out or cfg["run.out"])
    policy_path = args.policy
    if policy_path is None and args.config:
        # a sweep manifest may point back at the policy it used
        text = Path(args.config).read_text()
        if text.lstrip().startswith("{"):
            policy_path = json.loads(text).get("policy_file")
    _write_manifest(
        cfg, out_dir, "sweep", extra={"policy_file": str(policy_path) if policy_path else None}
    )
    if policy_path:
        artifact = load_policy(policy_path)
    else:
        design = _design(cfg, out_dir)
        policy_path = out_dir / "policy.plcy"
        artifact = PolicyArtifact(design.policy, design.params, design.cost)
        _write_manifest(cfg, out_dir, "sweep", extra={"policy_file": str(policy_path)})
    sweep_cfg = cfg.sweep_config()
    result = run_sweep(artifact, sweep_cfg, opts=cfg.ilqr_options(), threads=_threads(args, cfg))
    write_results(
        result,
        out_dir,
        manifest=cfg.to_flat_dict(),
        goal_field=PhaseField.from_vector(artifact.params.grid, artifact.cost.goal),
        final_field=PhaseField.from_vector(
            artifact.params.grid, artifact.policy.nominal.states[-1]
        ),
    )
    # keep the replay pointer in the final manifest
    _write_manifest(cfg, out_dir, "sweep", extra={"policy_file": str(policy_path)})
    for cell in result.cells:
        print(
            f"sweep: {cell.strategy} level={cell.noise_level} "
            f"mean={cell.mean_cost:.6g} std={cell.std_cost:.4g} failed={cell.n_failed}"
        )
    print(f"sweep: results written to {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phasectl",
        description="Phase-field microstructure control: simulate, design, roll out, benchmark.",
    )
    parser.add_argument("--version", action="version", version=f"phasectl {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="config file or manifest.json to replay")
        p.add_argument(
            "--set",
            nargs=2,
            action="append",
            metavar=("KEY", "VALUE"),
            help="override one config key",
        )

    p = sub.add_parser("simulate", help="evolve the field under zero or fixed control")
    common(p)
    p.add_argument("--steps", type=int, help="number of steps (default run.steps)")
    p.add_argument("--stride", type=int, help="snapshot stride (default run.snapshot_stride)")
    p.add_argument("--control", default="zero", help="'zero' or a control file (CFLD/CSV)")
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("design", help="run the three-stage policy design")
    common(p)
    p.add_argument("--goal", help="goal field file (overrides goal.kind/goal.file)")
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("rollout", help="replay one strategy from a policy artifact")
    common(p)
    p.add_argument("--policy", required=True, help="policy artifact (.plcy)")
    p.add_argument("--strategy", required=True, help="|".join(STRATEGIES))
    p.add_argument("--noise", type=float, default=0.0, help="noise level fraction")
    p.add_argument("--seed", type=int, default=0, help="noise seed")
    p.add_argument("--out", help="optional output directory for the final field")

    p = sub.add_parser("sweep", help="noise-robustness benchmark across strategies")
    common(p)
    p.add_argument("--policy", help="existing policy artifact (designs one if omitted)")
    p.add_argument("--levels", help="comma-separated noise levels")
    p.add_argument("--rollouts", type=int, help="rollouts per level")
    p.add_argument("--strategies", help="comma-separated strategy subset")
    p.add_argument("--threads", type=int, help="worker cap (default PHASECTL_THREADS or all)")
    p.add_argument("--out", help="output directory")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "simulate": cmd_simulate,
        "design": cmd_design,
        "rollout": cmd_rollout,
        "sweep": cmd_sweep,
    }
    try:
        return handlers[args.command](args)
    except ConfigurationError as err:
        print(f"phasectl: configuration error: {err}", file=sys.stderr)
        return 2
    except FileNotFoundError as err:
        print(f"phasectl: {err}", file=sys.stderr)
        return 2
    except PhasectlError as err:
        print(f"phasectl: numerical failure: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
