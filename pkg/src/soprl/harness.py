"""Experiment orchestration: config parsing, multi-seed runs, CSV output.

Per-seed learning curves land in ``seed_<s>.csv`` with a fixed column
schema; ``aggregate.csv`` holds the across-seed mean/std of the evaluation
return per checkpoint.  Identical (config, master seed) produces
byte-identical CSVs; wall-clock timing is therefore off by default and
only recorded when explicitly requested.
"""

from __future__ import annotations

import csv
import dataclasses
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .agent import AgentConfig, SopAgent, TrainRecord, evaluate_policy, train
from .envs import ToyEnv, env_names, make_env
from .seeds import derive_seed

CSV_COLUMNS = ["step", "seed", "eval_return_mean", "eval_return_std",
               "entropy_estimate", "saturation_fraction", "mean_abs_mu_pre_norm",
               "eta_current", "wall_ms"]

AGGREGATE_COLUMNS = ["step", "eval_return_mean", "eval_return_std"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: an environment, a variant/sampler, and a seed list."""

    env: str
    variant: str = "sop"
    sampler: str = "uniform"
    steps: int = 20_000
    eval_interval: int = 5000
    eval_rollouts: int = 5
    seeds: tuple[int, ...] = (0,)
    out: str | None = None
    walltime: bool = False
    gamma: float = 0.99
    tau: float = 0.005
    sigma: float = 0.29
    batch: int = 256
    lr: float = 3e-4
    hidden: int = 64
    buffer: int = 1_000_000
    eta0: float = 0.995
    beta1: float = 0.4
    beta2: float = 0.4
    exp_lambda: float = 5e-6
    warmup: int = 1000
    literal_target_update: bool = False

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("seeds: need at least one seed")
        if self.eval_interval < 1:
            raise ConfigError("eval_interval: must be >= 1")
        if self.steps < 0:
            raise ConfigError("steps: must be >= 0")
        if self.env not in env_names():
            raise ConfigError(f"env: unknown environment '{self.env}'")

    def agent_config(self) -> AgentConfig:
        return AgentConfig(
            gamma=self.gamma, tau=self.tau, sigma_explore=self.sigma,
            sigma_target=self.sigma, batch_size=self.batch, lr=self.lr,
            hidden_dim=self.hidden, buffer_capacity=self.buffer,
            sampler=self.sampler, variant=self.variant, eta0=self.eta0,
            per_beta1=self.beta1, per_beta2=self.beta2,
            exp_lambda=self.exp_lambda, warmup_steps=self.warmup,
            literal_target_update=self.literal_target_update,
        )


_BOOL_KEYS = {"walltime", "literal_target_update"}


def _coerce(key: str, value: str, target_type):
    try:
        if key == "seeds":
            return tuple(int(tok) for tok in str(value).split(",") if tok != "")
        if target_type is bool or key in _BOOL_KEYS:
            low = str(value).lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        return target_type(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot parse value '{value}'") from None


def read_config_file(path: str | Path) -> dict[str, str]:
    """Flat key=value lines; '#' starts a comment."""
    values: dict[str, str] = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line not key=value: '{raw.strip()}'")
        key, val = (part.strip() for part in line.split("=", 1))
        values[key] = val
    return values


def parse_config(overrides: dict[str, object], config_file: str | Path | None = None) -> ExperimentConfig:
    """Build a config: defaults, then file values, then explicit overrides.

    Unknown keys are rejected by name; 'env' must be present somewhere.
    """
    known = {f.name: f for f in fields(ExperimentConfig)}
    merged: dict[str, object] = {}
    if config_file is not None:
        for key, val in read_config_file(config_file).items():
            if key not in known:
                raise ConfigError(f"{key}: unknown config key")
            merged[key] = _coerce(key, val, _field_type(known[key]))
    for key, val in overrides.items():
        if val is None:
            continue
        if key not in known:
            raise ConfigError(f"{key}: unknown config key")
        if isinstance(val, str):
            val = _coerce(key, val, _field_type(known[key]))
        merged[key] = val
    if "env" not in merged:
        raise ConfigError("env: required key missing")
    try:
        cfg = ExperimentConfig(**merged)
        cfg.agent_config()  # validate agent-side invariants too
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def _field_type(f: dataclasses.Field):
    mapping = {"int": int, "float": float, "str": str, "bool": bool,
               "tuple[int, ...]": tuple, "str | None": str}
    return mapping.get(f.type, str) if isinstance(f.type, str) else f.type


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_seed_csv(path: Path, seed: int, record: TrainRecord) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in record.rows:
            writer.writerow([row.step, seed, _fmt(row.eval_return_mean),
                             _fmt(row.eval_return_std), _fmt(row.entropy_estimate),
                             _fmt(row.saturation_fraction),
                             _fmt(row.mean_abs_mu_pre_norm),
                             _fmt(row.eta_current), _fmt(row.wall_ms)])


def write_aggregate_csv(path: Path, records: dict[int, TrainRecord]) -> None:
    by_step: dict[int, list[float]] = {}
    for record in records.values():
        for row in record.rows:
            by_step.setdefault(row.step, []).append(row.eval_return_mean)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(AGGREGATE_COLUMNS)
        for step in sorted(by_step):
            vals = np.array(by_step[step])
            writer.writerow([step, _fmt(float(vals.mean())), _fmt(float(vals.std()))])


@dataclass
class ExperimentSummary:
    config: ExperimentConfig
    records: dict[int, TrainRecord] = field(default_factory=dict)
    failures: dict[int, str] = field(default_factory=dict)
    agents: dict[int, SopAgent] = field(default_factory=dict)

    def final_returns(self) -> dict[int, float]:
        return {seed: rec.rows[-1].eval_return_mean
                for seed, rec in self.records.items() if rec.rows}


def run_experiment(cfg: ExperimentConfig, keep_agents: bool = False) -> ExperimentSummary:
    """Train every seed independently and emit per-seed plus aggregate CSVs.

    A failing seed is reported in the summary and on stderr; the remaining
    seeds still run.
    """
    summary = ExperimentSummary(config=cfg)
    out_dir = Path(cfg.out) if cfg.out else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    agent_cfg = cfg.agent_config()
    print(make_env(cfg.env).spec.describe(), file=sys.stderr)
    for seed in cfg.seeds:
        env = make_env(cfg.env)
        try:
            record, agent = train(env, agent_cfg, cfg.steps,
                                  derive_seed(seed, "run"),
                                  eval_interval=cfg.eval_interval,
                                  eval_rollouts=cfg.eval_rollouts,
                                  record_walltime=cfg.walltime)
        except Exception as exc:  # noqa: BLE001 - isolate per-seed failures
            summary.failures[seed] = f"{type(exc).__name__}: {exc}"
            print(f"seed {seed} failed: {summary.failures[seed]}", file=sys.stderr)
            continue
        summary.records[seed] = record
        if keep_agents:
            summary.agents[seed] = agent
        if out_dir is not None:
            write_seed_csv(out_dir / f"seed_{seed}.csv", seed, record)
    if out_dir is not None:
        write_aggregate_csv(out_dir / "aggregate.csv", summary.records)
    return summary


def evaluate(agent: SopAgent, env: ToyEnv, rollouts: int, seed: int) -> tuple[float, float]:
    """Deterministic-policy evaluation; returns (mean, population std)."""
    mean, std, _ = evaluate_policy(agent, env, rollouts, seed)
    return mean, std
