"""Training environment for the order-selection agent.

The agent observes (p, e), where e is a log-mapped estimate of how much the
element solution changes between the degree-p and degree-(p-1) interpolants,
and acts to decrease, keep, or increase p. Training episodes use randomly
generated sinusoids on the reference element, so no PDE solve and no
analytic solution of the target problem are needed during training.

Two distinct error constructions live here and must not be conflated:

* the STATE error compares the degree-p interpolant of the nodal values
  against the degree-(p-1) re-interpolation of that same interpolant, at
  the three probe points xi = -1, 0, +1;
* the REWARD error compares the degree-(p-1) interpolant of samples of the
  true function g against g itself, at a fixed 21-point Gauss grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from functools import lru_cache
from typing import Callable

import numpy as np

from .quadrature import gauss_legendre, interpolation_matrix, lagrange_basis

P_MIN = 2
P_MAX = 10

_STATE_PROBES = (-1.0, 0.0, 1.0)
_MSE_FLOOR = 1e-10


class Action(IntEnum):
    DECREASE = 0
    KEEP = 1
    INCREASE = 2

    @property
    def delta(self) -> int:
        return int(self) - 1


@dataclass(frozen=True)
class AgentObservation:
    """Policy input: current order p and log-mapped error e in [0, 10]."""

    p: int
    e: float

    def as_vector(self) -> np.ndarray:
        return np.array([float(self.p), self.e])


@dataclass(frozen=True)
class RewardConfig:
    sigma: float = 0.01
    p_max: int = P_MAX
    n_reward_points: int = 2 * P_MAX + 1
    n_state_points: int = 3

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.n_reward_points < self.p_max + 1:
            raise ValueError("reward grid must resolve degree p_max")
        if self.n_state_points != 3:
            raise ValueError("state uses exactly 3 probe points")


@dataclass(frozen=True)
class RandomFunction:
    """g(xi) = (1 + a sin(2 pi f (xi - c))) / 2 on [-1, 1]."""

    a: float
    c: float
    f: float

    def __post_init__(self):
        if self.a not in (-1.0, 1.0):
            raise ValueError("a must be -1 or +1")
        if not -1.0 <= self.c <= 1.0:
            raise ValueError("c must lie in [-1, 1]")
        if not 0.0 <= self.f <= 1.0:
            raise ValueError("f must lie in [0, 1]")

    def __call__(self, xi):
        return eval_random_function(self, xi)


@dataclass(frozen=True)
class EpisodeConfig:
    steps_per_episode: int = 20
    num_episodes: int = 25000

    def __post_init__(self):
        if self.steps_per_episode < 1:
            raise ValueError("episodes need at least one step")


def eval_random_function(rf: RandomFunction, xi):
    """Evaluate the random sinusoid; range is contained in [0, 1]."""
    xi = np.asarray(xi, dtype=float)
    out = 0.5 * (1.0 + rf.a * np.sin(2.0 * np.pi * rf.f * (xi - rf.c)))
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=None)
def _down_interp_matrix(p: int) -> np.ndarray:
    """Degree-p nodal values -> interpolant sampled at the degree-(p-1) nodes."""
    return interpolation_matrix(lagrange_basis(p), gauss_legendre(p - 1).nodes)


@lru_cache(maxsize=None)
def _probe_matrix(p: int) -> np.ndarray:
    """Degree-p nodal values -> interpolant at the probes (-1, 0, +1)."""
    return interpolation_matrix(lagrange_basis(p), np.array(_STATE_PROBES))


@lru_cache(maxsize=None)
def _reward_eval_matrix(p: int, n_points: int) -> np.ndarray:
    """Samples at the degree-(p-1) nodes -> interpolant at the reward grid."""
    return interpolation_matrix(lagrange_basis(p - 1), gauss_legendre(n_points - 1).nodes)


def compute_state_error(values, p: int) -> float:
    """Log-mapped mismatch between consecutive-order interpolants.

    The degree-p interpolant of `values` is sampled at the degree-(p-1)
    Gauss nodes; the difference between both interpolants is probed at
    xi in {-1, 0, +1} and the mean square is mapped through
    -log10(min(mse + 1e-10, 1)), clamping the result into [0, 10].
    """
    if p < P_MIN:
        raise ValueError(f"state error needs p >= {P_MIN}, got {p}")
    values = np.asarray(values, dtype=float)
    if len(values) != p + 1:
        raise ValueError(f"expected {p + 1} nodal values for p={p}")
    high_at_probes = _probe_matrix(p) @ values
    low_samples = _down_interp_matrix(p) @ values
    diffs = high_at_probes - _probe_matrix(p - 1) @ low_samples
    mse = float(np.mean(diffs * diffs))
    return -np.log10(min(mse + _MSE_FLOOR, 1.0))


def compute_reward(g: Callable, p: int, cfg: RewardConfig = RewardConfig()) -> float:
    """Cost/accuracy reward of using order p to represent g.

    g is sampled at the p Gauss nodes of degree p-1; the resulting
    degree-(p-1) interpolant is compared with g on the fixed 21-point
    Gauss grid, and the rmse feeds a Gaussian accuracy factor weighted by
    the quadratic cost factor (p_max^2+1)/(p^2+1).
    """
    if not P_MIN <= p <= cfg.p_max:
        raise ValueError(f"p={p} outside [{P_MIN}, {cfg.p_max}]")
    low_nodes = gauss_legendre(p - 1).nodes
    reward_nodes = gauss_legendre(cfg.n_reward_points - 1).nodes
    approx = _reward_eval_matrix(p, cfg.n_reward_points) @ np.asarray(g(low_nodes), dtype=float)
    exact = np.asarray(g(reward_nodes), dtype=float)
    rmse = float(np.sqrt(np.mean((exact - approx) ** 2)))
    cost = (cfg.p_max**2 + 1.0) / (p**2 + 1.0)
    return cost * float(np.exp(-(rmse**2) / (2.0 * cfg.sigma**2)))


def optimal_p(g: Callable, cfg: RewardConfig = RewardConfig()) -> tuple[int, float]:
    """Brute-force argmax of the reward over p; ties go to the lowest p."""
    best_p, best_r = P_MIN, -np.inf
    for p in range(P_MIN, cfg.p_max + 1):
        r = compute_reward(g, p, cfg)
        if r > best_r:
            best_p, best_r = p, r
    return best_p, best_r


def sample_random_function(rng: np.random.Generator) -> RandomFunction:
    a = 1.0 if rng.random() < 0.5 else -1.0
    c = rng.uniform(-1.0, 1.0)
    f = rng.uniform(0.0, 1.0)
    return RandomFunction(a=a, c=c, f=f)


def observation_for(g: Callable, p: int) -> AgentObservation:
    """Observation from sampling g at the degree-p Gauss nodes."""
    values = np.asarray(g(gauss_legendre(p).nodes), dtype=float)
    return AgentObservation(p=p, e=compute_state_error(values, p))


def episode_reset(rng: np.random.Generator):
    """Draw a random target function and starting order for a new episode."""
    g = sample_random_function(rng)
    p0 = int(rng.integers(P_MIN, P_MAX + 1))
    return g, p0, observation_for(g, p0)


def episode_step(
    g: Callable, p: int, action: Action, cfg: RewardConfig = RewardConfig()
):
    """Apply the action (clamped to [2, 10]) and regenerate state and reward."""
    if not P_MIN <= p <= P_MAX:
        raise ValueError(f"p={p} outside [{P_MIN}, {P_MAX}]")
    p_new = min(max(p + Action(action).delta, P_MIN), P_MAX)
    return p_new, observation_for(g, p_new), compute_reward(g, p_new, cfg)
