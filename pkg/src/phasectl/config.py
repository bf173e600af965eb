"""Flat key=value run configuration.

The config file is diff-friendly structured text: one ``section.key = value``
per line, ``#`` comments, no nesting. Unknown keys are rejected with their
line number. ``auto`` is accepted where a value can be derived (``model.dt``
resolves through the stability guard, sample counts through the state
dimension).

A ``manifest.json`` written by a previous run is also accepted wherever a
config file is expected; its ``config`` object holds the same flat keys, so
any run can be replayed from its manifest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .dynamics import ALLEN_CAHN, CAHN_HILLIARD, ControlBounds, ModelParams
from .errors import ConfigurationError
from .grid import GridSpec, PhaseField, read_field
from .harness import SweepConfig
from .ilqr import CostParams, ILQROptions
from .sysid import SysIdConfig

_AUTO = "auto"


def _parse_bool(raw: str):
    low = raw.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _parse_float_list(raw: str):
    return tuple(float(tok) for tok in raw.split(",") if tok.strip() != "")


def _parse_str_list(raw: str):
    return tuple(tok.strip() for tok in raw.split(",") if tok.strip() != "")


# key -> (parser, default-as-string, choices-or-None)
_SCHEMA = {
    "grid.n": (int, "10", None),
    "grid.dx": (float, "1.0", None),
    "model.pde": (str, ALLEN_CAHN, (ALLEN_CAHN, CAHN_HILLIARD)),
    "model.mobility": (float, "1.0", None),
    "model.gamma": (float, "0.01", None),
    "model.dt": ("float_or_auto", _AUTO, None),
    "model.integrator": (str, "euler", ("euler", "heun")),
    "bounds.t_max": (float, "5.0", None),
    "bounds.h_max": (float, "5.0", None),
    "cost.q_run": (float, "1.0", None),
    "cost.r_ctrl": (float, "0.001", None),
    "cost.q_term": (float, "100.0", None),
    "goal.kind": (str, "banded", ("banded", "checkerboard", "file")),
    "goal.partitions": (int, "2", None),
    "goal.file": (str, "", None),
    "init.file": (str, "", None),
    "ilqr.horizon": (int, "10", None),
    "ilqr.max_iters": (int, "100", None),
    "ilqr.eps": (float, "0.001", None),
    "ilqr.mu_init": (float, "1e-06", None),
    "ilqr.mu_factor": (float, "10.0", None),
    "ilqr.mu_min": (float, "1e-09", None),
    "ilqr.jacobian": (str, "lls-cd", ("lls-cd", "analytic")),
    "ilqr.sigma": (float, "0.0001", None),
    "ilqr.n_samples": ("int_or_auto", _AUTO, None),
    "ilqr.seed": (int, "0", None),
    "sysid.mode": (
        str,
        "lls-cd-reuse",
        ("simulation-least-squares", "lls-cd-reuse", "analytic-oracle"),
    ),
    "sysid.sigma": (float, "0.0001", None),
    "sysid.n_rollouts": ("int_or_auto", _AUTO, None),
    "sysid.seed": (int, "0", None),
    "lqr.state_dim_cap": (int, "1024", None),
    "mpc.inner_iters": (int, "10", None),
    "mpc.jacobian": (str, "analytic", ("lls-cd", "analytic")),
    "sweep.levels": (_parse_float_list, "0.0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0", None),
    "sweep.rollouts": (int, "100", None),
    "sweep.strategies": (_parse_str_list, "open-loop,closed-loop", None),
    "sweep.base_seed": (int, "0", None),
    "sweep.baseline_steps": ("int_or_auto", _AUTO, None),
    "run.out": (str, "out", None),
    "run.steps": (int, "100", None),
    "run.snapshot_stride": (int, "10", None),
    "run.threads": ("int_or_auto", _AUTO, None),
}


def _convert(key: str, raw: str, where: str):
    parser, _, choices = _SCHEMA[key]
    if parser == "float_or_auto":
        if raw == _AUTO:
            return _AUTO
        parser = float
    elif parser == "int_or_auto":
        if raw == _AUTO:
            return _AUTO
        parser = int
    try:
        value = parser(raw)
    except ValueError as exc:
        raise ConfigurationError(f"{where}: key {key!r}: {exc}") from None
    if choices is not None and value not in choices:
        raise ConfigurationError(f"{where}: key {key!r}: {value!r} not in {choices}")
    return value


@dataclass
class RunConfig:
    """Validated view over the flat key table."""

    values: dict

    @classmethod
    def defaults(cls) -> "RunConfig":
        values = {key: _convert(key, default, "<default>") for key, (_, default, _c) in _SCHEMA.items()}
        return cls(values)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        text = Path(path).read_text()
        cfg = cls.defaults()
        if text.lstrip().startswith("{"):
            payload = json.loads(text)
            flat = payload.get("config")
            if flat is None:
                raise ConfigurationError(f"{path}: manifest has no 'config' object to replay")
            for key, raw in flat.items():
                cfg.set(key, str(raw), where=f"{path} (manifest)")
            return cfg
        for lineno, line in enumerate(text.splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigurationError(f"{path}: line {lineno}: expected 'key = value'")
            key, _, raw = stripped.partition("=")
            cfg.set(key.strip(), raw.strip(), where=f"{path}: line {lineno}")
        return cfg

    def set(self, key: str, raw: str, where: str = "<override>") -> None:
        if key not in _SCHEMA:
            raise ConfigurationError(f"{where}: unknown key {key!r}")
        self.values[key] = _convert(key, raw, where)

    def __getitem__(self, key: str):
        return self.values[key]

    def to_flat_dict(self) -> dict:
        """Canonical string form of every key, for the manifest echo."""
        out = {}
        for key in _SCHEMA:
            value = self.values[key]
            if isinstance(value, tuple):
                out[key] = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
            elif isinstance(value, float):
                out[key] = repr(value)
            else:
                out[key] = str(value)
        return out

    # -- derived objects ---------------------------------------------------

    def grid_spec(self) -> GridSpec:
        return GridSpec(self["grid.n"], self["grid.dx"])

    def model_params(self) -> ModelParams:
        return ModelParams(
            pde=self["model.pde"],
            grid=self.grid_spec(),
            mobility=self["model.mobility"],
            gamma=self["model.gamma"],
            dt=self["model.dt"] if self["model.dt"] != _AUTO else "auto",
            bounds=ControlBounds(t_max=self["bounds.t_max"], h_max=self["bounds.h_max"]),
            integrator=self["model.integrator"],
        )

    def goal_field(self) -> PhaseField:
        from .grid import goal_from_field, make_goal

        if self["goal.kind"] == "file":
            path = self["goal.file"]
            if not path:
                raise ConfigurationError("goal.kind=file needs goal.file to be set")
            field = read_field(path)
            if field.spec != self.grid_spec():
                raise ConfigurationError(
                    f"goal file grid {field.spec.n} does not match grid.n={self['grid.n']}"
                )
            return goal_from_field(field).field
        return make_goal(self.grid_spec(), self["goal.kind"], self["goal.partitions"]).field

    def initial_field(self) -> PhaseField:
        path = self["init.file"]
        if not path:
            return PhaseField.zeros(self.grid_spec())
        field = read_field(path)
        if field.spec != self.grid_spec():
            raise ConfigurationError(
                f"initial field grid {field.spec.n} does not match grid.n={self['grid.n']}"
            )
        return field

    def cost_params(self) -> CostParams:
        return CostParams(
            goal=self.goal_field().to_vector(),
            q_run=self["cost.q_run"],
            r_ctrl=self["cost.r_ctrl"],
            q_term=self["cost.q_term"],
        )

    def ilqr_options(self) -> ILQROptions:
        n_samples = self["ilqr.n_samples"]
        return ILQROptions(
            horizon=self["ilqr.horizon"],
            max_iters=self["ilqr.max_iters"],
            eps_converge=self["ilqr.eps"],
            mu_init=self["ilqr.mu_init"],
            mu_factor=self["ilqr.mu_factor"],
            mu_min=self["ilqr.mu_min"],
            sigma=self["ilqr.sigma"],
            n_samples=None if n_samples == _AUTO else n_samples,
            seed=self["ilqr.seed"],
        )

    def sysid_config(self) -> SysIdConfig:
        n_rollouts = self["sysid.n_rollouts"]
        return SysIdConfig(
            sigma=self["sysid.sigma"],
            n_rollouts=None if n_rollouts == _AUTO else n_rollouts,
            seed=self["sysid.seed"],
            mode=self["sysid.mode"],
        )

    def sweep_config(self) -> SweepConfig:
        steps = self["sweep.baseline_steps"]
        return SweepConfig(
            noise_levels=self["sweep.levels"],
            rollouts_per_level=self["sweep.rollouts"],
            strategies=self["sweep.strategies"],
            base_seed=self["sweep.base_seed"],
            mpc_inner_iters=self["mpc.inner_iters"],
            mpc_jacobian_source=self["mpc.jacobian"],
            baseline_steps=None if steps == _AUTO else steps,
        )

    def threads(self) -> int | None:
        value = self["run.threads"]
        return None if value == _AUTO else value


def format_config(cfg: RunConfig) -> str:
    """Render as the canonical flat key=value text."""
    lines = ["# phasectl resolved configuration"]
    for key, value in cfg.to_flat_dict().items():
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
