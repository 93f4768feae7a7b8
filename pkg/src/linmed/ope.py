"""Logged interaction data and inverse-propensity-weighted evaluation."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .envs import Instance
from .errors import EstimatorUndefined, InvalidArgument, ParseError, Unsupported
from .policies import Policy
from .simulate import run_trial

LOG_HEADER = ["round", "arm_index", "propensity", "reward"]
MC_COLUMNS = ["mc_samples", "flagged"]


@dataclass
class LogRecord:
    round: int
    arm_index: int
    propensity: float
    reward: float
    # set for Monte-Carlo propensities; flagged marks an estimated zero
    mc_samples: Optional[int] = None
    flagged: bool = False


@dataclass
class IPWResult:
    estimate: float
    n: int
    per_record_weights: Optional[np.ndarray] = None


def log_run(policy: Policy, instance: Instance, n: int, seed, mc_samples: Optional[int] = None) -> list:
    """Run ``policy`` for ``n`` rounds and record (round, arm, propensity, reward).

    Closed-form policies record the exact probability of the played arm.
    Others need ``mc_samples`` and record a Monte-Carlo estimate, which may be
    exactly zero; such records are kept and flagged.
    """
    if n == 0:
        return []
    if not policy.closed_form and mc_samples is None:
        raise InvalidArgument(f"{policy.name} has no closed-form propensity; pass mc_samples")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    policy_ss, env_ss = ss.spawn(2)
    policy_rng = np.random.default_rng(policy_ss)
    env_rng = np.random.default_rng(env_ss)
    records = []

    def before_feedback(t, arms, decision):
        if policy.closed_form:
            return decision.propensity
        return float(policy.propensities(arms, mc_samples, policy_rng)[decision.arm_index])

    def after_step(t, arms, decision, outcome, propensity):
        if policy.closed_form:
            records.append(LogRecord(t, decision.arm_index, propensity, outcome.reward))
        else:
            records.append(LogRecord(t, decision.arm_index, propensity, outcome.reward,
                                     mc_samples=mc_samples, flagged=propensity == 0.0))

    run_trial(policy, instance, n, policy_rng, env_rng,
              before_feedback=before_feedback, after_step=after_step)
    return records


def uniform_target(K: int) -> Callable[[int, int], float]:
    return lambda t, a: 1.0 / K


def ipw_estimate(log: Sequence[LogRecord], target_probs: Callable[[int, int], float]) -> IPWResult:
    """(1/n) * sum over records of target(A_t)/p_t(A_t) * r_t."""
    n = len(log)
    if n == 0:
        raise EstimatorUndefined("empty log")
    weights = np.empty(n)
    rewards = np.empty(n)
    for i, rec in enumerate(log):
        if not rec.propensity > 0:
            raise EstimatorUndefined(
                f"round {rec.round}: propensity {rec.propensity} is not positive", round_index=rec.round
            )
        weights[i] = target_probs(rec.round, rec.arm_index) / rec.propensity
        rewards[i] = rec.reward
    return IPWResult(float(np.sum(weights * rewards) / n), n, weights)


def oracle_value(target_probs: Callable[[int, int], float], instance: Instance) -> float:
    """Exact expected reward of a target policy on a fixed arm set."""
    if not instance.fixed:
        raise Unsupported("oracle value needs a fixed arm set")
    means = instance.means_at(1)
    return float(sum(target_probs(1, a) * means[a] for a in range(means.shape[0])))


def write_log_csv(path, log: Sequence[LogRecord]) -> None:
    with_mc = any(rec.mc_samples is not None for rec in log)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_HEADER + (MC_COLUMNS if with_mc else []))
        for rec in log:
            row = [rec.round, rec.arm_index, repr(float(rec.propensity)), repr(float(rec.reward))]
            if with_mc:
                row += ["" if rec.mc_samples is None else rec.mc_samples, int(rec.flagged)]
            writer.writerow(row)


def read_log_csv(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:4] != LOG_HEADER:
            raise ParseError(f"{path}: expected header {','.join(LOG_HEADER)}", line=1)
        with_mc = header[4:] == MC_COLUMNS
        out = []
        for lineno, row in enumerate(reader, start=2):
            try:
                rec = LogRecord(int(row[0]), int(row[1]), float(row[2]), float(row[3]))
                if with_mc:
                    rec.mc_samples = int(row[4]) if row[4] else None
                    rec.flagged = bool(int(row[5]))
            except (ValueError, IndexError):
                raise ParseError(f"{path}: line {lineno}: malformed record {row!r}", line=lineno) from None
            out.append(rec)
    return out
