"""Exact finite-MDP quantities via linear solves and enumeration.

These are the deterministic oracles every sampled estimator is tested against:
regularized returns and Q-values from the Bellman linear system, per-step and
discounted state-action occupancies, and the exact parameter gradients of the
return with respect to both the policy and the reward parameters.
"""

from __future__ import annotations

import numpy as np

from .mdp import require_finite_env
from .policies import RewardModel, SoftmaxPolicy


def regularized_reward_table(policy: SoftmaxPolicy, policy_ref: SoftmaxPolicy,
                             reward: RewardModel) -> np.ndarray:
    """(S, A) table of r(s, a) + beta * log(pi(a|s) / pi_ref(a|s))."""
    c = reward.reward_table().copy()
    if reward.beta != 0.0:
        c = c + reward.beta * (policy.log_prob_table() - policy_ref.log_prob_table())
    return c


def exact_q_table(env, policy, policy_ref, reward) -> np.ndarray:
    """(S, A) regularized Q-values from the Bellman linear system."""
    env = require_finite_env(env)
    pi = policy.prob_table()
    c = regularized_reward_table(policy, policy_ref, reward)
    p_pi = np.einsum("sax,sa->sx", env.transition, pi)
    c_pi = (pi * c).sum(axis=1)
    v = np.linalg.solve(np.eye(env.n_states) - env.gamma * p_pi, c_pi)
    return c + env.gamma * np.einsum("sax,x->sa", env.transition, v)


def exact_q(env, policy, policy_ref, reward, state: int, action: int) -> float:
    return float(exact_q_table(env, policy, policy_ref, reward)[state, action])


def exact_return(env, policy, policy_ref, reward) -> float:
    """J = E_{s~nu, a~pi}[Q(s, a)], exact up to the linear solve."""
    env = require_finite_env(env)
    q = exact_q_table(env, policy, policy_ref, reward)
    pi = policy.prob_table()
    return float(env.init_dist @ (pi * q).sum(axis=1))


def occupancy_enumerate(env, policy, horizon: int) -> np.ndarray:
    """(H, S, A) exact distribution of (s_i, a_i) for steps i = 1..H."""
    env = require_finite_env(env)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    pi = policy.prob_table()
    occ = np.empty((horizon, env.n_states, env.n_actions))
    p_state = env.init_dist.copy()
    for i in range(horizon):
        occ[i] = p_state[:, None] * pi
        if i + 1 < horizon:
            p_state = np.einsum("sa,sax->x", occ[i], env.transition)
    return occ


def discounted_occupancy(env, policy) -> np.ndarray:
    """(S, A) unnormalized discounted occupancy sum_i gamma^(i-1) P(s_i, a_i).

    Entries sum to 1/(1 - gamma).
    """
    env = require_finite_env(env)
    pi = policy.prob_table()
    p_pi = np.einsum("sax,sa->sx", env.transition, pi)
    rho = np.linalg.solve(np.eye(env.n_states) - env.gamma * p_pi.T, env.init_dist)
    return rho[:, None] * pi


def exact_policy_grad(env, policy, policy_ref, reward) -> np.ndarray:
    """Exact grad_lam of the regularized return.

    Equal to the occupancy-weighted score expectation
    sum_{s,a} D(s,a) * grad_lam log pi(a|s) * Q(s,a) with Q built on the
    regularized reward; the pointwise derivative of the KL term averages to
    zero under the policy, so this single term is the full gradient for any
    beta.
    """
    occ = discounted_occupancy(env, policy)
    q = exact_q_table(env, policy, policy_ref, reward)
    scores = policy.grad_log_table()
    return np.einsum("sa,sad->d", occ * q, scores)


def exact_reward_grad(env, policy, reward, horizon: int | None = None) -> np.ndarray:
    """Exact grad_phi of the return: occupancy-weighted grad_phi r.

    ``horizon=None`` uses the full discounted occupancy; an integer horizon
    truncates the occupancy sum at H (used by the truncation diagnostics).
    The KL part of the return has no phi dependence.
    """
    grad_r = reward.grad_reward_table()
    if horizon is None:
        occ = discounted_occupancy(env, policy)
    else:
        per_step = occupancy_enumerate(env, policy, horizon)
        weights = env.gamma ** np.arange(horizon)
        occ = np.einsum("i,isa->sa", weights, per_step)
    return np.einsum("sa,sad->d", occ, grad_r)
