"""Bilevel RL problem instances: preference upper loss over a reward model,
regularized discounted return as the lower level.

``exact=True`` swaps every oracle for its deterministic counterpart
(enumeration for the preference loss, occupancy/Bellman solves for the
return); only available on finite environments with a short pair horizon.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import exact as ex
from . import preference as pref
from .estimators import policy_grad_estimate, reward_grad_estimate
from .mdp import FiniteMdp, Lq1dMdp, chain_mdp
from .policies import GaussianPolicy, RewardModel, SoftmaxPolicy, tabular_softmax, uniform_policy
from .problems import BilevelProblem
from .rng import RngStream
from .rollouts import discounted_sum, sample_trajectories


@dataclass(frozen=True)
class BrlInstance(BilevelProblem):
    env: FiniteMdp
    policy: SoftmaxPolicy       # parameter template; lam swapped per call
    policy_ref: SoftmaxPolicy
    reward: RewardModel         # parameter template; phi swapped per call
    labeler: pref.Labeler
    pair_horizon: int = 2
    exact: bool = False
    pair_sink: object = None    # optional callable(PairBatch) for persistence
    value_samples: int = 512    # MC budget for values on continuous envs
    value_horizon: int = 200
    lam_box: float = 2.0        # compact policy-parameter set: |lam_i| <= lam_box

    @property
    def phi_dim(self) -> int:
        return self.reward.dim

    @property
    def lam_dim(self) -> int:
        return self.policy.dim

    def exact_variant(self) -> "BrlInstance":
        return replace(self, exact=True, pair_sink=None)

    def clip_lam(self, lam: np.ndarray) -> np.ndarray:
        return np.clip(lam, -self.lam_box, self.lam_box)

    def lam_grid_spec(self, points: int = 81, refine_rounds: int = 2):
        from .diagnostics import GridSpec
        return GridSpec(lo=(-self.lam_box,) * self.lam_dim,
                        hi=(self.lam_box,) * self.lam_dim,
                        points=points, refine_rounds=refine_rounds)

    def _pol(self, lam) -> SoftmaxPolicy:
        return self.policy.with_params(lam)

    def _rew(self, phi) -> RewardModel:
        return self.reward.with_params(phi)

    # --- objective values (exact on finite envs, fixed-budget MC otherwise) ---

    def upper_value(self, phi, lam, rng: RngStream | None = None) -> float:
        pol, rew = self._pol(lam), self._rew(phi)
        if self.env.finite:
            return pref.exact_preference_value(self.env, pol, rew, self.labeler,
                                               self.pair_horizon)
        if rng is None:
            raise ValueError("continuous instance needs an rng for value estimation")
        batch = pref.sample_pair_batch(self.env, pol, self.policy_ref, self.labeler,
                                       self.value_samples, self.pair_horizon, rng.child(0))
        return pref.pair_batch_loss(rew, batch)

    def lower_value(self, phi, lam, rng: RngStream | None = None) -> float:
        pol, rew = self._pol(lam), self._rew(phi)
        if self.env.finite:
            return ex.exact_return(self.env, pol, self.policy_ref, rew)
        if rng is None:
            raise ValueError("continuous instance needs an rng for value estimation")
        traj = sample_trajectories(self.env, pol, self.policy_ref, rew,
                                   self.value_samples, self.value_horizon, rng.child(1))
        totals = discounted_sum(traj.rewards + rew.beta * traj.kl_terms, self.env.gamma)
        return float(totals.mean())

    # --- gradient oracles ---

    def grad_upper_phi(self, phi, lam, cfg, rng: RngStream) -> np.ndarray:
        pol, rew = self._pol(lam), self._rew(phi)
        if self.exact:
            return pref.exact_preference_reward_grad(self.env, pol, rew, self.labeler,
                                                     self.pair_horizon)
        batch = pref.sample_pair_batch(self.env, pol, self.policy_ref, self.labeler,
                                       cfg.B, self.pair_horizon, rng)
        if self.pair_sink is not None:
            self.pair_sink(batch)
        return pref.pair_batch_reward_grad(rew, batch)

    def grad_upper_lam(self, phi, lam, cfg, rng: RngStream) -> np.ndarray:
        pol, rew = self._pol(lam), self._rew(phi)
        if self.exact:
            return pref.exact_preference_policy_grad(self.env, pol, rew, self.labeler,
                                                     self.pair_horizon)
        batch = pref.sample_pair_batch(self.env, pol, self.policy_ref, self.labeler,
                                       cfg.B, self.pair_horizon, rng)
        return pref.pair_batch_policy_grad(pol, rew, batch)

    def grad_lower_phi(self, phi, lam, cfg, rng: RngStream) -> np.ndarray:
        pol, rew = self._pol(lam), self._rew(phi)
        if self.exact:
            return ex.exact_reward_grad(self.env, pol, rew)
        return reward_grad_estimate(self.env, pol, self.policy_ref, rew,
                                    cfg.B, cfg.H, rng).grad

    def grad_lower_lam(self, phi, lam, cfg, rng: RngStream) -> np.ndarray:
        pol, rew = self._pol(lam), self._rew(phi)
        if self.exact:
            return ex.exact_policy_grad(self.env, pol, self.policy_ref, rew)
        return policy_grad_estimate(self.env, pol, self.policy_ref, rew,
                                    cfg.n, cfg.B, cfg.H, rng).grad

    def value_curves(self, phi, lam_points: np.ndarray):
        """Vectorized exact (J, G) over an (M, lam_dim) array of policy
        parameters at fixed phi; powers the grid brute-force oracles."""
        from .mdp import require_finite_env
        require_finite_env(self.env)
        lam_points = np.atleast_2d(np.asarray(lam_points, dtype=np.float64))
        rew = self._rew(phi)
        env = self.env
        n_s, n_a = env.n_states, env.n_actions

        logits = np.einsum("sad,md->msa", self.policy.features, lam_points)
        logits -= logits.max(axis=2, keepdims=True)
        sm = np.exp(logits)
        sm /= sm.sum(axis=2, keepdims=True)
        mix = 1.0 - self.policy.eps_floor * n_a
        pi = mix * sm + self.policy.eps_floor  # (M, S, A)

        c = np.broadcast_to(rew.reward_table(), pi.shape).copy()
        if rew.beta != 0.0:
            c += rew.beta * (np.log(pi) - self.policy_ref.log_prob_table())
        p_pi = np.einsum("sax,msa->msx", env.transition, pi)
        c_pi = (pi * c).sum(axis=2)
        eye = np.eye(n_s)
        v = np.linalg.solve(eye[None, :, :] - env.gamma * p_pi, c_pi[:, :, None])[:, :, 0]
        j_vals = v @ env.init_dist

        states, actions, base_probs = _path_structure(env, self.pair_horizon)
        log_pi_paths = np.log(pi[:, states, actions]).sum(axis=2)  # (M, n_paths)
        path_probs = base_probs[None, :] * np.exp(log_pi_paths)

        model_totals = rew.rewards(states, actions).sum(axis=1)
        true_totals = self.labeler.reward.rewards(states, actions).sum(axis=1)
        diff = model_totals[:, None] - model_totals[None, :]
        p_model = 1.0 / (1.0 + np.exp(-np.clip(diff, -500, 500)))
        if self.labeler.mode == "argmax":
            p_true = (true_totals[:, None] >= true_totals[None, :]).astype(np.float64)
        else:
            tdiff = true_totals[:, None] - true_totals[None, :]
            p_true = 1.0 / (1.0 + np.exp(-np.clip(tdiff, -500, 500)))
        w = p_true * p_model + (1.0 - p_true) * (1.0 - p_model)
        g_vals = -np.einsum("mi,ij,mj->m", path_probs, w, path_probs)
        return j_vals, g_vals


def _path_structure(env: FiniteMdp, horizon: int):
    """Policy-independent path skeleton: all (s, a) sequences reachable under
    positive transition probability, with base probability
    nu(s_1) * prod transition(s_{i+1} | s_i, a_i) (softmax policies put
    positive mass on every action, so action branching is exhaustive)."""
    states = np.zeros((1, 0), dtype=np.int64)
    actions = np.zeros((1, 0), dtype=np.int64)
    probs = np.ones(1)
    last = None
    for i in range(horizon):
        new_s, new_a, new_p, new_last = [], [], [], []
        for j in range(len(probs)):
            dist = env.init_dist if i == 0 else env.transition[last[j][0], last[j][1]]
            for s in np.nonzero(dist)[0]:
                for a in range(env.n_actions):
                    new_s.append(np.append(states[j], s))
                    new_a.append(np.append(actions[j], a))
                    new_p.append(probs[j] * dist[s])
                    new_last.append((s, a))
        states = np.asarray(new_s, dtype=np.int64)
        actions = np.asarray(new_a, dtype=np.int64)
        probs = np.asarray(new_p)
        last = new_last
    return states, actions, probs


# reward features for the 2-state chain: one reward-parameter coordinate per
# state, opposite sign per action, scaled so moderate phi values separate the
# actions decisively.  This keeps the lower level well-conditioned in both
# policy coordinates (each state's action gap is controlled by its own phi
# entry) and gives preferences desk-scale signal at short pair horizons.
CHAIN2_REWARD_FEATURES = np.array([
    [[-1.25, 0.0], [1.25, 0.0]],
    [[0.0, -1.25], [0.0, 1.25]],
])

CHAIN2_TRUE_PHI = np.array([2.0, -1.5])


def chain2_brl_instance(gamma: float = 0.9, beta: float = 0.0, slip: float = 0.1,
                        eps_floor: float = 0.02, pair_horizon: int = 3,
                        labeler_mode: str = "bernoulli", true_phi=None,
                        exact: bool = False, pair_sink=None) -> BrlInstance:
    """Desk-scale BRL instance: 2-state chain, per-state logit policy (lam in
    R^2), logistic reward head on 2-D features (phi in R^2)."""
    env = chain_mdp(2, slip=slip, gamma=gamma)
    policy = tabular_softmax(2, 2, eps_floor=eps_floor)
    policy_ref = uniform_policy(2, 2)
    reward = RewardModel(phi=np.zeros(2), psi=CHAIN2_REWARD_FEATURES, beta=beta)
    phi_star = CHAIN2_TRUE_PHI if true_phi is None else np.asarray(true_phi, dtype=np.float64)
    true_reward = RewardModel(phi=phi_star, psi=CHAIN2_REWARD_FEATURES, beta=0.0)
    labeler = pref.Labeler(reward=true_reward, mode=labeler_mode)
    return BrlInstance(env=env, policy=policy, policy_ref=policy_ref, reward=reward,
                       labeler=labeler, pair_horizon=pair_horizon, exact=exact,
                       pair_sink=pair_sink)


def _lq1d_features(states, actions):
    return np.stack([np.tanh(states), np.tanh(actions)], axis=-1)


def lq1d_brl_instance(gamma: float = 0.9, beta: float = 0.0, stdev: float = 0.5,
                      pair_horizon: int = 4, labeler_mode: str = "bernoulli",
                      true_phi=None, pair_sink=None) -> BrlInstance:
    """Continuous-state BRL instance: Gaussian policy on the clipped linear
    environment, bounded tanh reward features.  Values fall back to Monte
    Carlo; exact oracles are unavailable."""
    env = Lq1dMdp(gamma=gamma)
    policy = GaussianPolicy(lam=np.zeros(2), stdev=stdev)
    policy_ref = GaussianPolicy(lam=np.zeros(2), stdev=stdev)
    reward = RewardModel(phi=np.zeros(2), psi=_lq1d_features, beta=beta)
    phi_star = CHAIN2_TRUE_PHI if true_phi is None else np.asarray(true_phi, dtype=np.float64)
    true_reward = RewardModel(phi=phi_star, psi=_lq1d_features, beta=0.0)
    labeler = pref.Labeler(reward=true_reward, mode=labeler_mode)
    return BrlInstance(env=env, policy=policy, policy_ref=policy_ref, reward=reward,
                       labeler=labeler, pair_horizon=pair_horizon, pair_sink=pair_sink)
