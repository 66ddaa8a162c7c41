"""Stochastic gradient estimators for the lower-level return.

The policy-gradient estimator draws its score samples from the discounted
state-action occupancy by geometric stopping (stop each step with probability
1 - gamma, which lands exactly on the normalized occupancy), scales by
1/(1 - gamma), and pairs each draw with an independent truncated Monte-Carlo
Q rollout.  The KL correction uses the bounded per-sample form
grad log pi * (1 + log pi - log pi_ref), whose conditional mean is the exact
gradient of the per-state KL.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .policies import RewardModel, grad_log_prob
from .rng import RngStream
from .rollouts import discounted_sum, sample_trajectories


@dataclass
class LowerGradEstimate:
    grad: np.ndarray
    n_used: int
    B_used: int
    H_used: int


@dataclass
class RewardGradEstimate:
    grad: np.ndarray
    B_used: int
    H_used: int


def mc_q_estimate(env, policy, policy_ref, reward: RewardModel, state, action,
                  n: int, horizon: int, rng: RngStream) -> float:
    """Average truncated regularized return over n rollouts forced at (s, a)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    batch = sample_trajectories(env, policy, policy_ref, reward, n, horizon, rng,
                                start_states=state, start_actions=action)
    totals = discounted_sum(batch.rewards + reward.beta * batch.kl_terms, env.gamma)
    return float(totals.mean())


def policy_grad_estimate(env, policy, policy_ref, reward: RewardModel,
                         n: int, batch: int, horizon: int, rng: RngStream) -> LowerGradEstimate:
    """Sampled grad_lam of the regularized return.

    First term: n occupancy draws (geometric stopping, zero contribution when
    the stopping time exceeds the horizon), each scored against a one-rollout
    Monte-Carlo Q estimate.  Second term (beta > 0): the discounted per-sample
    KL gradient averaged over ``batch`` fresh trajectories.
    """
    if min(n, batch, horizon) < 1:
        raise ValueError("n, batch and horizon must all be >= 1")
    gamma = env.gamma
    grad = np.zeros(policy.dim)

    stops = rng.child(0).generator().geometric(1.0 - gamma, size=n)
    keep = stops <= horizon
    if keep.any():
        stops_k = stops[keep]
        m = int(keep.sum())
        roll_h = int(stops_k.max())
        occ = sample_trajectories(env, policy, policy_ref, reward, m, roll_h, rng.child(1),
                                  with_rewards=False)
        rows = np.arange(m)
        s_occ = occ.states[rows, stops_k - 1]
        a_occ = occ.actions[rows, stops_k - 1]
        qroll = sample_trajectories(env, policy, policy_ref, reward, m, horizon, rng.child(2),
                                    start_states=s_occ, start_actions=a_occ)
        q_hat = discounted_sum(qroll.rewards + reward.beta * qroll.kl_terms, gamma)
        scores = grad_log_prob(policy, s_occ, a_occ)
        grad += (scores * q_hat[:, None]).sum(axis=0) / ((1.0 - gamma) * n)

    if reward.beta != 0.0:
        kl_batch = sample_trajectories(env, policy, policy_ref, reward, batch, horizon, rng.child(3))
        per_sample = grad_log_prob(policy, kl_batch.states, kl_batch.actions)
        per_sample = per_sample * (1.0 + kl_batch.kl_terms)[:, :, None]
        weights = gamma ** np.arange(horizon)
        grad += reward.beta * np.einsum("h,bhd->d", weights, per_sample) / batch

    return LowerGradEstimate(grad=grad, n_used=n, B_used=batch, H_used=horizon)


def reward_grad_estimate(env, policy, policy_ref, reward: RewardModel,
                         batch: int, horizon: int, rng: RngStream) -> RewardGradEstimate:
    """Sampled grad_phi of the return: discounted grad_phi r along B rollouts."""
    if min(batch, horizon) < 1:
        raise ValueError("batch and horizon must be >= 1")
    traj = sample_trajectories(env, policy, policy_ref, reward, batch, horizon, rng)
    grads = reward.grad_rewards(traj.states, traj.actions)
    weights = env.gamma ** np.arange(horizon)
    grad = np.einsum("h,bhd->d", weights, grads) / batch
    return RewardGradEstimate(grad=grad, B_used=batch, H_used=horizon)
