"""Seeded experiment runner: regret curves and off-policy evaluation.

A run is fully determined by its :class:`ExperimentConfig`. Each
(policy, trial) pair gets its own random streams derived from the master
seed, so results do not depend on how trials are spread over workers.
Environment noise and per-trial instances depend on the trial only, which
gives every policy the same noise sequence within a trial.

Config files are TOML::

    horizon = 10000
    trials = 10
    master_seed = 0
    delay = 0
    checkpoints = 100
    out_dir = "out/large_gap"

    [instance]
    name = "large_gap"
    sigma_star_sq = 1.0

    [[policies]]
    name = "LinMED-50"

    [[policies]]
    name = "OFUL"
    sigma = 1.0

    [ope]                 # only read by run_ope
    target = "uniform"
    mc_samples = 1000
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import tomli
import tomli_w

from . import envs
from .errors import ConfigError, EstimatorUndefined
from .linalg import ConfidenceParams
from .ope import ipw_estimate, log_run, oracle_value, uniform_target, write_log_csv
from .policies import EXP2, LINMED_PRESETS, OFUL, LinMED, LinMEDNOPT, LinMedConfig, LinTS
from .simulate import run_trial

THREADS_ENV = "LINMED_THREADS"

INSTANCE_NAMES = ("large_gap", "end_of_optimism", "k_dependency", "unit_ball", "unit_ball_stream", "ope", "csv")
POLICY_NAMES = tuple(LINMED_PRESETS) + ("LinMED", "LinMEDNOPT", "OFUL", "LinTS-Freq", "LinTS-Bayes", "EXP2")
CONFIG_KEYS = {"instance", "policies", "horizon", "trials", "master_seed", "delay", "checkpoints", "out_dir", "ope"}


@dataclass
class ExperimentConfig:
    instance: dict
    policies: list
    horizon: int = 1000
    trials: int = 10
    master_seed: int = 0
    delay: int = 0
    checkpoints: int = 100
    out_dir: str = "out"
    ope: dict = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.instance, dict) or "name" not in self.instance:
            raise ConfigError("[instance] needs a name")
        if self.instance["name"] not in INSTANCE_NAMES:
            raise ConfigError(f"unknown instance {self.instance['name']!r}; valid names: {', '.join(INSTANCE_NAMES)}")
        if not self.policies:
            raise ConfigError("at least one [[policies]] entry is required")
        for spec in self.policies:
            if "name" not in spec:
                raise ConfigError("every [[policies]] entry needs a name")
            if spec["name"] not in POLICY_NAMES:
                raise ConfigError(f"unknown policy {spec['name']!r}; valid names: {', '.join(POLICY_NAMES)}")
        labels = self.labels
        if len(set(labels)) != len(labels):
            raise ConfigError(f"policy labels must be unique, got {labels}")
        for key in ("horizon", "trials", "checkpoints"):
            if int(getattr(self, key)) < 1:
                raise ConfigError(f"{key} must be >= 1")
        if self.delay < 0:
            raise ConfigError("delay must be >= 0")

    @property
    def labels(self) -> list:
        return [spec.get("label", spec["name"]) for spec in self.policies]

    def to_dict(self) -> dict:
        out = asdict(self)
        if not out["ope"]:
            del out["ope"]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def dumps(self) -> str:
        return tomli_w.dumps(_sorted(self.to_dict()))

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        try:
            return cls.from_dict(tomli.loads(text))
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML: {exc}") from None


def _sorted(obj):
    if isinstance(obj, dict):
        return {k: _sorted(obj[k]) for k in sorted(obj)}
    if isinstance(obj, list):
        return [_sorted(v) for v in obj]
    return obj


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return ExperimentConfig.loads(fh.read())


def default_threads() -> int:
    return int(os.environ.get(THREADS_ENV, "1"))


# --- seeding ---------------------------------------------------------------


def policy_stream(master_seed: int, policy_ordinal: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(0, policy_ordinal, trial)))


def env_stream(master_seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(1, trial)))


def instance_seed(master_seed: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(2, trial))


def ope_seed(master_seed: int, policy_ordinal: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(3, policy_ordinal, trial))


# --- registries ------------------------------------------------------------


def build_instance(spec: dict, master_seed: int = 0, trial: int = 0) -> envs.Instance:
    params = {k: v for k, v in spec.items() if k != "name"}
    name = spec["name"]
    try:
        if name == "large_gap":
            return envs.large_gap_instance(**params)
        if name == "end_of_optimism":
            return envs.end_of_optimism_instance(**params)
        if name == "k_dependency":
            return envs.k_dependency_instance(**params)
        if name == "ope":
            return envs.ope_instance(**params)
        if name == "unit_ball":
            return envs.unit_ball_instance(seed=instance_seed(master_seed, trial), **params)
        if name == "unit_ball_stream":
            seed = int(instance_seed(master_seed, trial).generate_state(1)[0])
            return envs.unit_ball_stream(seed=seed, **params)
        if name == "csv":
            arms = envs.load_arms_csv(params["path"], normalize=params.get("normalize", False))
            return envs.Instance(f"csv({params['path']})", np.asarray(params["theta_star"], dtype=float),
                                 params.get("sigma_star_sq", 1.0), arms=arms)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for instance {name!r}: {exc}") from None
    except KeyError as exc:
        raise ConfigError(f"instance {name!r} is missing parameter {exc}") from None
    raise ConfigError(f"unknown instance {name!r}; valid names: {', '.join(INSTANCE_NAMES)}")


POLICY_PARAMS = {"name", "label", "sigma", "S", "lam", "ver", "alpha_emp", "alpha_opt", "gamma", "eta", "denominator"}


def build_policy(spec: dict, instance: envs.Instance, horizon: int):
    unknown = set(spec) - POLICY_PARAMS
    if unknown:
        raise ConfigError(f"unknown parameters for policy {spec['name']!r}: {sorted(unknown)}")
    name = spec["name"]
    label = spec.get("label", name)
    # sigma defaults to the instance's true noise scale
    default_sigma = math.sqrt(instance.sigma_star_sq) if instance.sigma_star_sq > 0 else 1.0
    confidence = ConfidenceParams(sigma=spec.get("sigma", default_sigma), S=spec.get("S", 1.0))
    lam = spec.get("lam", 1.0)
    ver = spec.get("ver", 0)
    if name in LINMED_PRESETS:
        return LinMED(LinMedConfig.preset(name, ver=ver, confidence=confidence, lam=lam), name=label)
    if name in ("LinMED", "LinMEDNOPT"):
        cfg = LinMedConfig(alpha_emp=spec.get("alpha_emp", 0.9), alpha_opt=spec.get("alpha_opt", 0.05),
                           ver=ver, confidence=confidence, lam=lam)
        if name == "LinMED":
            return LinMED(cfg, name=label)
        return LinMEDNOPT(cfg, name=label, denominator=spec.get("denominator", "pair"))
    if name == "OFUL":
        return OFUL(confidence, lam, name=label)
    if name in ("LinTS-Freq", "LinTS-Bayes"):
        return LinTS("freq" if name == "LinTS-Freq" else "bayes", confidence, lam, name=label)
    if name == "EXP2":
        return EXP2(horizon=horizon, gamma=spec.get("gamma"), eta=spec.get("eta"), name=label)
    raise ConfigError(f"unknown policy {name!r}; valid names: {', '.join(POLICY_NAMES)}")


# --- regret experiments ----------------------------------------------------


@dataclass
class RegretCurve:
    policy: str
    t: np.ndarray
    mean_regret: np.ndarray
    stderr: np.ndarray
    trials: int
    final: np.ndarray  # per-trial final cumulative regret


def checkpoint_grid(n: int, points: int = 100) -> np.ndarray:
    """``min(points, n)`` distinct log-spaced rounds in [1, n], always including 1 and n."""
    if n <= points:
        return np.arange(1, n + 1, dtype=np.int64)
    m = points
    while True:
        grid = np.unique(np.round(np.logspace(0.0, math.log10(n), m)).astype(np.int64))
        if grid.size >= points:
            break
        m += 1
    # rounding collisions at the low end can leave a surplus; drop interior points closest to a neighbour
    while grid.size > points:
        gaps = np.log(grid[2:]) - np.log(grid[:-2])
        grid = np.delete(grid, 1 + int(np.argmin(gaps)))
    return grid


def _regret_task(args):
    cfg_dict, ordinal, trial = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    instance = build_instance(cfg.instance, cfg.master_seed, trial)
    policy = build_policy(cfg.policies[ordinal], instance, cfg.horizon)
    cumulative = run_trial(
        policy, instance, cfg.horizon,
        policy_stream(cfg.master_seed, ordinal, trial), env_stream(cfg.master_seed, trial),
        delay=cfg.delay,
    )
    return cumulative[checkpoint_grid(cfg.horizon, cfg.checkpoints) - 1]


def _map(fn, tasks, threads: int):
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))


def _fmt(x: float) -> str:
    return repr(float(x))


def run_experiment(config: ExperimentConfig, threads: Optional[int] = None, write: bool = True) -> list:
    """Simulate every (policy, trial) pair and aggregate regret curves.

    Writes ``regret.csv`` (``policy,t,mean_regret,stderr,trials``) to
    ``config.out_dir`` when ``write`` is set.
    """
    threads = default_threads() if threads is None else threads
    cfg_dict = config.to_dict()
    tasks = [(cfg_dict, p, k) for p in range(len(config.policies)) for k in range(config.trials)]
    results = _map(_regret_task, tasks, threads)
    grid = checkpoint_grid(config.horizon, config.checkpoints)
    curves = []
    for p, label in enumerate(config.labels):
        block = np.vstack(results[p * config.trials:(p + 1) * config.trials])
        mean = block.mean(axis=0)
        if config.trials > 1:
            stderr = block.std(axis=0, ddof=1) / math.sqrt(config.trials)
        else:
            stderr = np.zeros_like(mean)
        curves.append(RegretCurve(label, grid, mean, stderr, config.trials, block[:, -1].copy()))
    if write:
        write_regret_csv(Path(config.out_dir) / "regret.csv", curves)
    return curves


def write_regret_csv(path, curves) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["policy", "t", "mean_regret", "stderr", "trials"])
        for c in curves:
            for t, m, s in zip(c.t, c.mean_regret, c.stderr):
                writer.writerow([c.policy, int(t), _fmt(m), _fmt(s), c.trials])


# --- off-policy evaluation -------------------------------------------------


@dataclass
class OPESummary:
    policy: str
    estimates: np.ndarray  # nan where the trial's log had a zero propensity
    oracle: float
    mc_samples: Optional[int] = None

    @property
    def trials(self) -> int:
        return int(self.estimates.size)

    @property
    def defined(self) -> np.ndarray:
        return self.estimates[~np.isnan(self.estimates)]

    @property
    def mean(self) -> float:
        return float(self.defined.mean()) if self.defined.size else math.nan

    @property
    def std(self) -> float:
        return float(self.defined.std(ddof=1)) if self.defined.size > 1 else math.nan


def _target(cfg: ExperimentConfig, instance):
    target = cfg.ope.get("target", "uniform")
    if target != "uniform":
        raise ConfigError(f"unknown OPE target {target!r}; valid: uniform")
    return uniform_target(instance.arms.shape[0])


def _ope_task(args):
    cfg_dict, ordinal, trial = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    instance = build_instance(cfg.instance, cfg.master_seed, trial)
    policy = build_policy(cfg.policies[ordinal], instance, cfg.horizon)
    mc = cfg.ope.get("mc_samples") if not policy.closed_form else None
    log = log_run(policy, instance, cfg.horizon, ope_seed(cfg.master_seed, ordinal, trial), mc_samples=mc)
    if cfg.ope.get("save_logs", False):
        out = Path(cfg.out_dir) / "logs"
        out.mkdir(parents=True, exist_ok=True)
        write_log_csv(out / f"{cfg.labels[ordinal]}_trial{trial}.csv", log)
    try:
        return ipw_estimate(log, _target(cfg, instance)).estimate
    except EstimatorUndefined:
        return math.nan


def run_ope(config: ExperimentConfig, threads: Optional[int] = None, write: bool = True) -> list:
    """Log each policy for ``trials`` runs and score the uniform target by IPW.

    Per policy, writes ``ope_<label>.csv`` (``trial,estimate``; ``nan`` marks
    a trial whose log contains a zero Monte-Carlo propensity) and one row of
    ``ope_summary.csv``.
    """
    threads = default_threads() if threads is None else threads
    instance = build_instance(config.instance, config.master_seed, 0)
    if not instance.fixed:
        raise ConfigError("off-policy evaluation needs a fixed arm set")
    oracle = oracle_value(_target(config, instance), instance)
    cfg_dict = config.to_dict()
    tasks = [(cfg_dict, p, k) for p in range(len(config.policies)) for k in range(config.trials)]
    results = _map(_ope_task, tasks, threads)
    summaries = []
    for p, label in enumerate(config.labels):
        policy = build_policy(config.policies[p], instance, config.horizon)
        mc = None if policy.closed_form else config.ope.get("mc_samples")
        est = np.array(results[p * config.trials:(p + 1) * config.trials])
        summaries.append(OPESummary(label, est, oracle, mc))
    if write:
        write_ope_csv(config.out_dir, summaries)
    return summaries


def write_ope_csv(out_dir, summaries) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for s in summaries:
        with open(out / f"ope_{s.policy}.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["trial", "estimate"])
            for k, e in enumerate(s.estimates):
                writer.writerow([k, _fmt(e)])
    with open(out / "ope_summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["policy", "mc_samples", "trials", "defined_trials", "mean", "std", "oracle"])
        for s in summaries:
            writer.writerow([s.policy, "" if s.mc_samples is None else s.mc_samples, s.trials,
                             s.defined.size, _fmt(s.mean), _fmt(s.std), _fmt(s.oracle)])
