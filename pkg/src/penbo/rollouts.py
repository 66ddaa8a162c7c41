"""Trajectory sampling.

Sampling is batch-first: ``sample_trajectories`` rolls ``count`` independent
trajectories with vectorized draws (essential for the finite-env estimator
loops, where batches run to thousands of rollouts per gradient step).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import FiniteMdp, Lq1dMdp
from .policies import GaussianPolicy, RewardModel, SoftmaxPolicy
from .rng import RngStream


@dataclass
class TrajectoryBatch:
    """Parallel (count, H) arrays for a batch of rollouts."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    kl_terms: np.ndarray

    @property
    def count(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.states.shape[1]

    def row(self, i: int) -> "Trajectory":
        return Trajectory(
            states=self.states[i].copy(),
            actions=self.actions[i].copy(),
            rewards=self.rewards[i].copy(),
            kl_terms=self.kl_terms[i].copy(),
        )


@dataclass
class Trajectory:
    """One rollout: step i holds (s_i, a_i), its base reward and KL term."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray | None = None
    kl_terms: np.ndarray | None = None

    @property
    def horizon(self) -> int:
        return len(self.states)


def _pick_rows(cdf_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    """One categorical draw per row of cumulative-probability rows; the last
    cdf column must be exactly 1 so indices stay in range."""
    if cdf_rows.shape[1] == 2:  # binary rows dominate the hot loops
        return (u > cdf_rows[:, 0]).astype(np.int64)
    return (u[:, None] > cdf_rows).sum(axis=1)


def _closed_cdf(probs: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs, axis=-1)
    cdf[..., -1] = 1.0  # rows sum to 1 within 1e-12; close the float gap
    return cdf


def sample_trajectories(
    env,
    policy,
    policy_ref,
    reward: RewardModel,
    count: int,
    horizon: int,
    rng: RngStream,
    start_states: np.ndarray | None = None,
    start_actions: np.ndarray | None = None,
    with_rewards: bool = True,
) -> TrajectoryBatch:
    """Roll ``count`` trajectories of length ``horizon`` under ``policy``.

    ``start_states``/``start_actions`` force the first step (used by the
    Monte-Carlo Q estimator); otherwise s_1 ~ init_dist and a_1 ~ policy.
    ``with_rewards=False`` skips the reward/KL fill for callers that only
    need the visited state-action pairs.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if count < 1:
        raise ValueError("count must be >= 1")
    gen = rng.generator()
    if isinstance(env, FiniteMdp):
        return _sample_finite(env, policy, policy_ref, reward, count, horizon, gen,
                              start_states, start_actions, with_rewards)
    if isinstance(env, Lq1dMdp):
        return _sample_lq1d(env, policy, policy_ref, reward, count, horizon, gen,
                            start_states, start_actions, with_rewards)
    raise TypeError(f"unknown environment type {type(env)!r}")


def _sample_finite(env, policy: SoftmaxPolicy, policy_ref: SoftmaxPolicy, reward,
                   count, horizon, gen, start_states, start_actions, with_rewards) -> TrajectoryBatch:
    pi_cdf = _closed_cdf(policy.prob_table())
    trans_cdf = _closed_cdf(env.transition)

    states = np.empty((count, horizon), dtype=np.int64)
    actions = np.empty((count, horizon), dtype=np.int64)
    u_act = gen.random((horizon, count))
    u_trans = gen.random((horizon - 1, count)) if horizon > 1 else None

    if start_states is None:
        init_cdf = _closed_cdf(env.init_dist)
        s = _pick_rows(np.broadcast_to(init_cdf, (count, init_cdf.shape[0])), gen.random(count))
    else:
        s = np.broadcast_to(np.asarray(start_states, dtype=np.int64), (count,)).copy()
        if s.min() < 0 or s.max() >= env.n_states:
            raise RuntimeError("start state outside the declared state space")
    for i in range(horizon):
        if i == 0 and start_actions is not None:
            a = np.broadcast_to(np.asarray(start_actions, dtype=np.int64), (count,)).copy()
            if a.min() < 0 or a.max() >= env.n_actions:
                raise RuntimeError("start action outside the declared action space")
        else:
            a = _pick_rows(pi_cdf[s], u_act[i])
        states[:, i] = s
        actions[:, i] = a
        if i + 1 < horizon:
            s = _pick_rows(trans_cdf[s, a], u_trans[i])
    if states.max() >= env.n_states:
        raise RuntimeError("transition sampler produced an out-of-space state")

    if with_rewards:
        rewards = reward.reward_table()[states, actions]
        kl = (policy.log_prob_table() - policy_ref.log_prob_table())[states, actions]
    else:
        rewards = kl = np.zeros((0, 0))
    return TrajectoryBatch(states=states, actions=actions, rewards=rewards, kl_terms=kl)


def _sample_lq1d(env, policy: GaussianPolicy, policy_ref: GaussianPolicy, reward,
                 count, horizon, gen, start_states, start_actions, with_rewards) -> TrajectoryBatch:
    states = np.empty((count, horizon), dtype=np.float64)
    actions = np.empty((count, horizon), dtype=np.float64)

    if start_states is None:
        s = env.initial_states(count, gen)
    else:
        s = np.broadcast_to(np.asarray(start_states, dtype=np.float64), (count,)).copy()
    for i in range(horizon):
        if i == 0 and start_actions is not None:
            a = np.broadcast_to(np.asarray(start_actions, dtype=np.float64), (count,)).copy()
        else:
            a = policy.sample_actions(s, gen)
        states[:, i] = s
        actions[:, i] = a
        if i + 1 < horizon:
            s = env.step(s, a, gen)
            if np.any(s < env.box_lo) or np.any(s > env.box_hi):
                raise RuntimeError("dynamics produced an out-of-space state")

    if with_rewards:
        rewards = reward.rewards(states, actions)
        kl = policy.log_prob(states, actions) - policy_ref.log_prob(states, actions)
    else:
        rewards = kl = np.zeros((0, 0))
    return TrajectoryBatch(states=states, actions=actions, rewards=rewards, kl_terms=kl)


def sample_trajectory(env, policy, policy_ref, reward, horizon: int, rng: RngStream) -> Trajectory:
    return sample_trajectories(env, policy, policy_ref, reward, 1, horizon, rng).row(0)


def discounted_sum(values: np.ndarray, gamma: float) -> np.ndarray:
    """Sum_i gamma^(i-1) * values[..., i-1] along the last axis."""
    weights = gamma ** np.arange(values.shape[-1])
    return values @ weights
