"""Bandit environments, reward simulation and delayed feedback."""
from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import InvalidArgument, ParseError, SchemaError, Unsupported

NORM_TOL = 1e-9


def _check_arms(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] == 0:
        raise InvalidArgument("arm set must be a nonempty (K, d) array")
    norms = np.linalg.norm(A, axis=1)
    bad = np.flatnonzero(norms > 1.0 + NORM_TOL)
    if bad.size:
        raise InvalidArgument(f"arm {int(bad[0])} has norm {norms[bad[0]]:.6g} > 1")
    return A


@dataclass(frozen=True, eq=False)
class Instance:
    """Linear bandit environment.

    Either ``arms`` is a fixed (K, d) array, or ``arm_fn(round)`` returns the
    arm set of each round and must be a deterministic function of the round.
    """

    name: str
    theta_star: np.ndarray
    sigma_star_sq: float
    arms: Optional[np.ndarray] = None
    arm_fn: Optional[Callable[[int], np.ndarray]] = None

    def __post_init__(self):
        if (self.arms is None) == (self.arm_fn is None):
            raise InvalidArgument("give exactly one of arms or arm_fn")
        if self.sigma_star_sq < 0:
            raise InvalidArgument("sigma_star_sq must be nonnegative")
        theta = np.asarray(self.theta_star, dtype=float)
        object.__setattr__(self, "theta_star", theta)
        if self.arms is not None:
            A = _check_arms(self.arms)
            if A.shape[1] != theta.shape[0]:
                raise InvalidArgument("arm dimension does not match theta_star")
            A.setflags(write=False)
            object.__setattr__(self, "arms", A)
            object.__setattr__(self, "_means", A @ theta)

    @property
    def dim(self) -> int:
        return int(self.theta_star.shape[0])

    @property
    def fixed(self) -> bool:
        return self.arms is not None

    def arms_at(self, t: int) -> np.ndarray:
        if self.arms is not None:
            return self.arms
        return _check_arms(self.arm_fn(t))

    def means_at(self, t: int) -> np.ndarray:
        if self.arms is not None:
            return self._means
        return self.arms_at(t) @ self.theta_star

    def optimal_index(self, t: int = 1) -> int:
        return int(np.argmax(self.means_at(t)))

    def gaps(self, t: int = 1) -> np.ndarray:
        means = self.means_at(t)
        return means.max() - means


@dataclass
class StepOutcome:
    reward: float
    instant_regret: float
    mean_reward: float


def step(instance: Instance, t: int, arm_index: int, rng: np.random.Generator) -> StepOutcome:
    """Pull ``arm_index`` at round ``t``; noise comes from ``rng``."""
    means = instance.means_at(t)
    if not 0 <= arm_index < means.shape[0]:
        raise InvalidArgument(f"arm index {arm_index} out of range for {means.shape[0]} arms")
    mean = float(means[arm_index])
    noise = math.sqrt(instance.sigma_star_sq) * rng.standard_normal() if instance.sigma_star_sq > 0 else 0.0
    regret = max(float(means.max()) - mean, 0.0)
    return StepOutcome(reward=mean + noise, instant_regret=regret, mean_reward=mean)


# --- benchmark instances ---------------------------------------------------


def large_gap_instance(sigma_star_sq: float = 1.0) -> Instance:
    return Instance("large_gap", np.array([1.0, 0.0]), sigma_star_sq, arms=np.array([[1.0, 0.0], [0.0, 1.0]]))


def end_of_optimism_instance(epsilon: float = 0.01, sigma_star_sq: float = 0.01) -> Instance:
    if not 0.0 < epsilon < 0.5:
        raise InvalidArgument(f"epsilon must lie in (0, 1/2), got {epsilon}")
    arms = np.array([[1.0, 0.0], [0.0, 1.0], [1.0 - epsilon, 2.0 * epsilon]])
    return Instance(f"end_of_optimism(eps={epsilon})", np.array([1.0, 0.0]), sigma_star_sq, arms=arms)


def k_dependency_instance(K: int, sigma_star_sq: float = 3.0) -> Instance:
    if K < 2:
        raise InvalidArgument("K must be >= 2")
    arms = np.vstack([[1.0, 0.0], np.tile([0.0, 1.0], (K - 1, 1))])
    return Instance(f"k_dependency(K={K})", np.array([1.0, 0.0]), sigma_star_sq, arms=arms)


def _unit_ball(rng: np.random.Generator, K: int, d: int) -> np.ndarray:
    X = rng.standard_normal((K, d))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    return X * rng.random((K, 1)) ** (1.0 / d)


def _unit_sphere(rng: np.random.Generator, d: int) -> np.ndarray:
    x = rng.standard_normal(d)
    return x / np.linalg.norm(x)


def unit_ball_instance(d: int, K: int, seed, sigma_star_sq: float = 1.0) -> Instance:
    """K arms uniform in the unit ball and theta* uniform on the sphere, fixed per seed."""
    if d < 1 or K < 1:
        raise InvalidArgument("d and K must be positive")
    rng = np.random.default_rng(seed)
    arms = _unit_ball(rng, K, d)
    theta = _unit_sphere(rng, d)
    return Instance(f"unit_ball(d={d},K={K})", theta, sigma_star_sq, arms=arms)


def unit_ball_stream(d: int, K: int, seed: int, sigma_star_sq: float = 1.0) -> Instance:
    """Fresh unit-ball arm set every round, drawn from (seed, round)."""
    theta = _unit_sphere(np.random.default_rng([seed, 0]), d)

    def arm_fn(t: int) -> np.ndarray:
        return _unit_ball(np.random.default_rng([seed, 1, t]), K, d)

    return Instance(f"unit_ball_stream(d={d},K={K})", theta, sigma_star_sq, arm_fn=arm_fn)


def ope_instance(sigma_star_sq: float = 0.1) -> Instance:
    return Instance("ope", np.array([1.0, 0.0]), sigma_star_sq, arms=np.array([[1.0, 0.0], [0.6, 0.8]]))


# --- delayed feedback ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DelayedInstance:
    instance: Instance
    delay: int

    def buffer(self) -> "DelayBuffer":
        return DelayBuffer(self.delay)


def delayed(instance: Instance, delay: int) -> DelayedInstance:
    if delay < 0:
        raise InvalidArgument("delay must be nonnegative")
    return DelayedInstance(instance, int(delay))


class DelayBuffer:
    """FIFO of feedback items; an item pushed at round t is released at round t + delay."""

    def __init__(self, delay: int):
        self.delay = delay
        self._queue = deque()

    def __len__(self):
        return len(self._queue)

    def push(self, t: int, item) -> None:
        self._queue.append((t, item))

    def release(self, t: int) -> list:
        out = []
        while self._queue and self._queue[0][0] + self.delay <= t:
            out.append(self._queue.popleft()[1])
        return out

    def flush(self) -> list:
        out = [item for _, item in self._queue]
        self._queue.clear()
        return out


# --- CSV arm sets ----------------------------------------------------------


def load_arms_csv(path, normalize: bool = False) -> np.ndarray:
    """Read one arm per row of comma-separated reals (optional header row).

    Rows with norm above 1 are rejected unless ``normalize`` is set, in which
    case they are scaled onto the unit sphere.
    """
    rows = []
    dim = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                values = [float(cell) for cell in row]
            except ValueError:
                if lineno == 1 and not rows:
                    continue  # header
                raise ParseError(f"line {lineno}: could not parse {row!r} as numbers", line=lineno) from None
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise SchemaError(f"line {lineno}: expected {dim} values, got {len(values)}", line=lineno)
            vec = np.array(values)
            norm = float(np.linalg.norm(vec))
            if norm > 1.0 + NORM_TOL:
                if not normalize:
                    raise SchemaError(f"line {lineno}: arm norm {norm:.6g} exceeds 1", line=lineno)
                vec = vec / norm
            rows.append(vec)
    if not rows:
        raise SchemaError(f"{path}: no arms found")
    return np.vstack(rows)
