"""Run configuration: flat INI-style files with per-module sections, overlaid
by command-line flags (flags > file > built-in defaults).

Sections and keys:

    [problem] kind, dim, data_seed, noise, points, n_targets, n_rows
    [rule]    kind, step_size, beta1, beta2, eps, schedule
    [engine]  steps, window, workers, threshold, gamma, aggregation,
              seed_offset, injected_cost_ms
    [output]  dir, mode
    [compare] mode, tol
    [sweep]   axis, values

``schedule`` is space-separated ``step:action:i[,j...]`` entries, e.g.
``60:split:0 240:prune:1``.  The PICARDOPT_OUT_DIR environment variable
overrides the output directory (flag still wins).
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field

from .engine import AGGREGATIONS, EngineSettings
from .errors import ConfigError
from .problems import PROBLEM_KINDS, Problem, make_problem
from .rules import ADAM, EULER_ODE, RULE_KINDS, AdamParams, UpdateRule, make_rule
from .schedule import ScheduleAction

MODES = ("engine", "oracle", "both", "sweep")
COMPARE_MODES = ("auto", "bitexact", "tolerance")
SWEEP_AXES = ("window", "gamma", "cost")

# Calibrated per-family defaults; threshold mirrors the per-framework table
# shape (initial fixed-point threshold, overridable per run).
DEFAULT_STEP_SIZES: dict[tuple[str, str], float] = {
    ("quadratic", "sgd"): 0.1,
    ("quadratic", "adam"): 0.05,
    ("rosenbrock", "sgd"): 3e-4,
    ("rosenbrock", "adam"): 0.02,
    ("stochastic_lsq", "sgd"): 0.1,
    ("stochastic_lsq", "adam"): 0.05,
    ("tiny_mlp", "sgd"): 0.05,
    ("tiny_mlp", "adam"): 0.01,
    ("splat2d", "sgd"): 3e-4,
    ("splat2d", "adam"): 0.01,
    ("splat2d", "split_prune_sgd"): 3e-4,
    ("linear_ode", "euler_ode"): 1.0,
}

DEFAULT_THRESHOLDS: dict[str, float] = {
    "quadratic": 1e-6,
    "rosenbrock": 1e-6,
    "stochastic_lsq": 1e-6,
    "tiny_mlp": 1e-6,
    "splat2d": 1e-6,
    "linear_ode": 1e-6,
}
FALLBACK_THRESHOLD = 1e-6


@dataclass
class RunConfig:
    problem_kind: str = "quadratic"
    dim: int | None = None
    data_seed: int = 0
    noise: float | None = None
    points: int | None = None
    n_targets: int | None = None
    n_rows: int | None = None

    rule_kind: str = "adam"
    step_size: float | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    schedule: str = ""

    steps: int = 200
    window: int | None = None
    workers: int = 8
    threshold: float | None = None
    gamma: float | None = None
    aggregation: str = "median"
    seed_offset: int = 0
    injected_cost_ms: float = 0.0

    out_dir: str = "out"
    mode: str = "engine"
    compare_mode: str = "auto"
    compare_tol: float = 1e-6

    sweep_axis: str | None = None
    sweep_values: list[float] = field(default_factory=list)

    # -- resolution ----------------------------------------------------------
    def resolved_window(self) -> int:
        return self.window if self.window is not None else max(1, self.workers - 1)

    def resolved_threshold(self) -> float:
        if self.threshold is not None:
            return self.threshold
        return DEFAULT_THRESHOLDS.get(self.problem_kind, FALLBACK_THRESHOLD)

    def resolved_gamma(self) -> float:
        if self.gamma is not None:
            return self.gamma
        # threshold 0 means the exact-equivalence mode; keep it frozen at 0
        # unless the user explicitly asks for adaptation.
        return 1.0 if self.resolved_threshold() == 0.0 else 0.9

    def resolved_step_size(self) -> float:
        if self.step_size is not None:
            return self.step_size
        key = (self.problem_kind, self.rule_kind)
        if key in DEFAULT_STEP_SIZES:
            return DEFAULT_STEP_SIZES[key]
        if self.rule_kind == "adaptive_guidance":
            return DEFAULT_STEP_SIZES.get((self.problem_kind, "sgd"), 0.05)
        return 0.05

    def resolved_compare_mode(self) -> str:
        if self.compare_mode != "auto":
            return self.compare_mode
        exact = self.resolved_threshold() == 0.0 and self.resolved_gamma() == 1.0
        return "bitexact" if exact else "tolerance"

    def echo(self) -> dict:
        return {
            "problem": {
                "kind": self.problem_kind,
                "dim": self.dim,
                "data_seed": self.data_seed,
                "noise": self.noise,
                "points": self.points,
                "n_targets": self.n_targets,
                "n_rows": self.n_rows,
            },
            "rule": {
                "kind": self.rule_kind,
                "step_size": self.resolved_step_size(),
                "beta1": self.beta1,
                "beta2": self.beta2,
                "eps": self.eps,
                "schedule": self.schedule,
            },
            "engine": {
                "steps": self.steps,
                "window": self.resolved_window(),
                "workers": self.workers,
                "threshold": self.resolved_threshold(),
                "gamma": self.resolved_gamma(),
                "aggregation": self.aggregation,
                "seed_offset": self.seed_offset,
            },
            "mode": self.mode,
        }


def _parse_schedule(text: str) -> list[ScheduleAction]:
    actions = []
    for entry in text.split():
        parts = entry.split(":")
        if len(parts) != 3:
            raise ConfigError("schedule", f"bad entry {entry!r}; want step:action:i[,j...]")
        try:
            step = int(parts[0])
            indices = tuple(int(tok) for tok in parts[2].split(","))
        except ValueError as exc:
            raise ConfigError("schedule", f"bad entry {entry!r}: {exc}") from exc
        actions.append(ScheduleAction(step, parts[1], indices))
    return actions


_INT_FIELDS = {"dim", "data_seed", "points", "n_targets", "n_rows", "steps",
               "window", "workers", "seed_offset"}
_FLOAT_FIELDS = {"noise", "step_size", "beta1", "beta2", "eps", "threshold",
                 "gamma", "injected_cost_ms", "compare_tol"}

_SECTION_KEYS = {
    "problem": {"kind": "problem_kind", "dim": "dim", "data_seed": "data_seed",
                "noise": "noise", "points": "points", "n_targets": "n_targets",
                "n_rows": "n_rows"},
    "rule": {"kind": "rule_kind", "step_size": "step_size", "beta1": "beta1",
             "beta2": "beta2", "eps": "eps", "schedule": "schedule"},
    "engine": {"steps": "steps", "window": "window", "workers": "workers",
               "threshold": "threshold", "gamma": "gamma",
               "aggregation": "aggregation", "seed_offset": "seed_offset",
               "injected_cost_ms": "injected_cost_ms"},
    "output": {"dir": "out_dir", "mode": "mode"},
    "compare": {"mode": "compare_mode", "tol": "compare_tol"},
    "sweep": {"axis": "sweep_axis", "values": "sweep_values"},
}


def _coerce(name: str, raw: str):
    raw = raw.strip()
    try:
        if name in _INT_FIELDS:
            return int(raw)
        if name in _FLOAT_FIELDS:
            return float(raw)
    except ValueError as exc:
        raise ConfigError(name, f"cannot parse {raw!r}: {exc}") from exc
    if name == "sweep_values":
        try:
            return [float(tok) for tok in raw.replace(",", " ").split()]
        except ValueError as exc:
            raise ConfigError(name, f"cannot parse {raw!r}: {exc}") from exc
    return raw


def load_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Build a validated RunConfig from an optional file plus overrides."""
    cfg = RunConfig()
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        if not parser.read(path):
            raise ConfigError("config", f"cannot read config file {path!r}")
        for section, keys in _SECTION_KEYS.items():
            if not parser.has_section(section):
                continue
            for key, value in parser.items(section):
                if key not in keys:
                    raise ConfigError(f"{section}.{key}", "unknown key")
                setattr(cfg, keys[key], _coerce(keys[key], value))
    env_out = os.environ.get("PICARDOPT_OUT_DIR")
    if env_out:
        cfg.out_dir = env_out
    for name, value in (overrides or {}).items():
        if value is None:
            continue
        if not hasattr(cfg, name):
            raise ConfigError(name, "unknown override")
        setattr(cfg, name, _coerce(name, value) if isinstance(value, str) else value)
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig) -> None:
    if cfg.problem_kind not in PROBLEM_KINDS:
        raise ConfigError("problem.kind", f"unknown problem {cfg.problem_kind!r}")
    if cfg.rule_kind not in RULE_KINDS:
        raise ConfigError("rule.kind", f"unknown rule {cfg.rule_kind!r}")
    if cfg.steps < 1:
        raise ConfigError("engine.steps", "must be >= 1")
    if cfg.workers < 1:
        raise ConfigError("engine.workers", "must be >= 1")
    if cfg.window is not None and cfg.window < 1:
        raise ConfigError("engine.window", "must be >= 1")
    if cfg.gamma is not None and not 0.0 <= cfg.gamma <= 1.0:
        raise ConfigError("engine.gamma", f"{cfg.gamma} outside [0, 1]")
    if cfg.threshold is not None and cfg.threshold < 0.0:
        raise ConfigError("engine.threshold", "must be >= 0")
    if cfg.aggregation not in AGGREGATIONS:
        raise ConfigError("engine.aggregation", f"must be one of {AGGREGATIONS}")
    if cfg.seed_offset < 0:
        raise ConfigError("engine.seed_offset", "must be >= 0")
    if cfg.injected_cost_ms < 0:
        raise ConfigError("engine.injected_cost_ms", "must be >= 0")
    if cfg.noise is not None and cfg.noise < 0:
        raise ConfigError("problem.noise", "must be >= 0")
    if cfg.mode not in MODES:
        raise ConfigError("output.mode", f"must be one of {MODES}")
    if cfg.compare_mode not in COMPARE_MODES:
        raise ConfigError("compare.mode", f"must be one of {COMPARE_MODES}")
    if cfg.compare_tol < 0:
        raise ConfigError("compare.tol", "must be >= 0")
    if cfg.mode == "sweep" or cfg.sweep_axis is not None:
        if cfg.sweep_axis not in SWEEP_AXES:
            raise ConfigError("sweep.axis", f"must be one of {SWEEP_AXES}")
        if not cfg.sweep_values:
            raise ConfigError("sweep.values", "sweep needs at least one value")
    if cfg.rule_kind == EULER_ODE and cfg.problem_kind != "linear_ode":
        raise ConfigError("rule.kind", "euler_ode requires the linear_ode problem")
    try:
        _parse_schedule(cfg.schedule)
    except ConfigError:
        raise


def build_problem(cfg: RunConfig) -> Problem:
    extra = {}
    if cfg.problem_kind == "splat2d":
        if cfg.points is not None:
            extra["points"] = cfg.points
        if cfg.n_targets is not None:
            extra["n_targets"] = cfg.n_targets
    if cfg.problem_kind == "stochastic_lsq" and cfg.n_rows is not None:
        extra["n_rows"] = cfg.n_rows
    try:
        return make_problem(cfg.problem_kind, cfg.dim, cfg.data_seed, cfg.noise, **extra)
    except ValueError as exc:
        raise ConfigError("problem", str(exc)) from exc


def build_rule(cfg: RunConfig, problem: Problem) -> UpdateRule:
    adam = AdamParams(cfg.beta1, cfg.beta2, cfg.eps) if cfg.rule_kind == ADAM else None
    try:
        return make_rule(
            cfg.rule_kind, problem, cfg.resolved_step_size(), cfg.steps,
            adam=adam, schedule=_parse_schedule(cfg.schedule),
        )
    except ValueError as exc:
        raise ConfigError("rule", str(exc)) from exc


def engine_settings(cfg: RunConfig, record_trajectory: bool = True,
                    record_snapshots: bool = False) -> EngineSettings:
    return EngineSettings(
        window=cfg.resolved_window(),
        workers=cfg.workers,
        threshold0=cfg.resolved_threshold(),
        gamma=cfg.resolved_gamma(),
        aggregation=cfg.aggregation,
        seed_offset=cfg.seed_offset,
        injected_cost_ms=cfg.injected_cost_ms,
        record_trajectory=record_trajectory,
        record_snapshots=record_snapshots,
    )
