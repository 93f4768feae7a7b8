"""Single-trial interaction loop with optional delayed feedback."""
from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .envs import DelayBuffer, Instance, step
from .policies import Policy


def run_trial(
    policy: Policy,
    instance: Instance,
    n: int,
    policy_rng: np.random.Generator,
    env_rng: np.random.Generator,
    delay: int = 0,
    before_feedback: Optional[Callable] = None,
    after_step: Optional[Callable] = None,
) -> np.ndarray:
    """Play ``n`` rounds and return the cumulative regret after each round.

    Feedback generated at round t reaches ``policy.update`` at the end of
    round ``t + delay``; whatever is still pending after round ``n`` is
    flushed so every generated reward is absorbed exactly once.

    ``before_feedback(t, arms, decision)`` runs after selection, before the
    reward is drawn; its return value is handed to
    ``after_step(t, arms, decision, outcome, extra)``.
    """
    policy.reset(instance.dim)
    buffer = DelayBuffer(delay)
    cumulative = np.empty(n)
    total = 0.0
    for t in range(1, n + 1):
        arms = instance.arms_at(t)
        decision = policy.select(arms, policy_rng)
        extra = before_feedback(t, arms, decision) if before_feedback is not None else None
        outcome = step(instance, t, decision.arm_index, env_rng)
        total += outcome.instant_regret
        cumulative[t - 1] = total
        if after_step is not None:
            after_step(t, arms, decision, outcome, extra)
        buffer.push(t, (arms, decision, outcome.reward))
        for item in buffer.release(t):
            policy.update(*item)
    for item in buffer.flush():
        policy.update(*item)
    return cumulative
