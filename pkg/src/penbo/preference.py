"""Trajectory-preference upper objective (Bradley-Terry form).

The upper loss scores a reward model against labeled trajectory pairs:
loss = -E[y * P(tau0 > tau1) + (1 - y) * (1 - P(tau0 > tau1))] with
P = exp(R0) / (exp(R0) + exp(R1)) on undiscounted per-pair reward totals.
Labels come from a synthetic labeler backed by a hidden true reward.
Pair datasets round-trip bit-exactly through a line-oriented text format.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mdp import require_finite_env
from .policies import RewardModel, grad_log_prob, _sigmoid
from .rng import RngStream
from .rollouts import Trajectory, sample_trajectories

DATASET_HEADER = "penbo-pairs v1"


@dataclass
class PreferencePair:
    traj0: Trajectory
    traj1: Trajectory
    label: int  # 1 means traj0 preferred

    def __post_init__(self):
        if self.traj0.horizon != self.traj1.horizon:
            raise ValueError("paired trajectories must share a horizon")
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")


@dataclass(frozen=True)
class Labeler:
    """Synthetic preference source; ``mode`` is 'bernoulli' or 'argmax'.

    bernoulli draws y ~ Bern(P_true(tau0 > tau1)); argmax sets y = 1 iff
    R_true(tau0) >= R_true(tau1) (ties break to 1).
    """

    reward: RewardModel
    mode: str = "bernoulli"

    def __post_init__(self):
        if self.mode not in ("bernoulli", "argmax"):
            raise ValueError(f"unknown labeler mode {self.mode!r}")

    def label_batch(self, r0: np.ndarray, r1: np.ndarray, gen: np.random.Generator) -> np.ndarray:
        """Labels from true-reward totals r0, r1 of each pair."""
        if self.mode == "argmax":
            return (r0 >= r1).astype(np.int64)
        p = _sigmoid(r0 - r1)
        return (gen.random(p.shape) < p).astype(np.int64)


def total_reward(reward: RewardModel, traj: Trajectory) -> float:
    return float(reward.rewards(traj.states, traj.actions).sum())


def bt_probability(reward: RewardModel, traj0: Trajectory, traj1: Trajectory) -> float:
    """P(tau0 > tau1) = sigmoid(R0 - R1); always inside (0, 1)."""
    if traj0.horizon != traj1.horizon:
        raise ValueError("trajectories must share a horizon")
    return float(_sigmoid(total_reward(reward, traj0) - total_reward(reward, traj1)))


def preference_loss(reward: RewardModel, pairs: list[PreferencePair]) -> float:
    """Mean of -(y*P + (1-y)*(1-P)) over the pairs; lies in [-1, 0]."""
    if not pairs:
        raise ValueError("preference_loss needs a non-empty pair set")
    total = 0.0
    for pair in pairs:
        p = bt_probability(reward, pair.traj0, pair.traj1)
        total += -(pair.label * p + (1 - pair.label) * (1.0 - p))
    return total / len(pairs)


def _pair_grad(reward: RewardModel, pair: PreferencePair) -> np.ndarray:
    p = bt_probability(reward, pair.traj0, pair.traj1)
    g0 = reward.grad_rewards(pair.traj0.states, pair.traj0.actions).sum(axis=0)
    g1 = reward.grad_rewards(pair.traj1.states, pair.traj1.actions).sum(axis=0)
    return -(2 * pair.label - 1) * p * (1.0 - p) * (g0 - g1)


def preference_reward_grad(reward: RewardModel, pairs: list[PreferencePair],
                           batch: int | None = None, rng: RngStream | None = None) -> np.ndarray:
    """grad_phi of the preference loss.

    With ``batch`` set, averages over a without-replacement subsample of that
    size (requires batch <= len(pairs) and an rng); otherwise uses all pairs.
    """
    if not pairs:
        raise ValueError("preference_reward_grad needs a non-empty pair set")
    chosen = pairs
    if batch is not None:
        if batch > len(pairs):
            raise ValueError(f"batch {batch} exceeds available pairs {len(pairs)}")
        idx = rng.generator().choice(len(pairs), size=batch, replace=False)
        chosen = [pairs[i] for i in idx]
    grad = np.zeros(reward.dim)
    for pair in chosen:
        grad += _pair_grad(reward, pair)
    return grad / len(chosen)


def preference_policy_grad(policy, reward: RewardModel, pairs: list[PreferencePair]) -> np.ndarray:
    """Score-function grad_lam of the preference loss over freshly drawn pairs.

    (1/B) sum ell * (score(tau0) + score(tau1)) with ell the per-pair loss;
    unbiased for grad_lam of the loss when the pairs were sampled from
    ``policy`` (labels may depend on anything but lam).
    """
    if not pairs:
        raise ValueError("preference_policy_grad needs a non-empty pair set")
    grad = np.zeros(policy.dim)
    for pair in pairs:
        p = bt_probability(reward, pair.traj0, pair.traj1)
        ell = -(pair.label * p + (1 - pair.label) * (1.0 - p))
        score = grad_log_prob(policy, pair.traj0.states, pair.traj0.actions).sum(axis=0)
        score += grad_log_prob(policy, pair.traj1.states, pair.traj1.actions).sum(axis=0)
        grad += ell * score
    return grad / len(pairs)


@dataclass
class PairBatch:
    """Array-of-pairs form used by the hot estimator paths: (count, H) state
    and action arrays per side plus (count,) labels."""

    states0: np.ndarray
    actions0: np.ndarray
    states1: np.ndarray
    actions1: np.ndarray
    labels: np.ndarray

    @property
    def count(self) -> int:
        return self.labels.shape[0]

    @property
    def horizon(self) -> int:
        return self.states0.shape[1]

    def to_pairs(self) -> list[PreferencePair]:
        out = []
        for i in range(self.count):
            out.append(PreferencePair(
                traj0=Trajectory(states=self.states0[i].copy(), actions=self.actions0[i].copy()),
                traj1=Trajectory(states=self.states1[i].copy(), actions=self.actions1[i].copy()),
                label=int(self.labels[i]),
            ))
        return out


def sample_pair_batch(env, policy, policy_ref, labeler: Labeler, count: int, horizon: int,
                      rng: RngStream) -> PairBatch:
    """``count`` labeled pairs of independent rollouts from ``policy``,
    kept in array form."""
    if count < 1:
        raise ValueError("count must be >= 1")
    batch = sample_trajectories(env, policy, policy_ref, labeler.reward, 2 * count, horizon,
                                rng.child(0))
    true_totals = labeler.reward.rewards(batch.states, batch.actions).sum(axis=1)
    labels = labeler.label_batch(true_totals[:count], true_totals[count:],
                                 rng.child(1).generator())
    return PairBatch(states0=batch.states[:count], actions0=batch.actions[:count],
                     states1=batch.states[count:], actions1=batch.actions[count:],
                     labels=labels)


def make_pairs(env, policy, policy_ref, labeler: Labeler, count: int, horizon: int,
               rng: RngStream) -> list[PreferencePair]:
    """Sample ``count`` labeled pairs of independent rollouts from ``policy``."""
    return sample_pair_batch(env, policy, policy_ref, labeler, count, horizon, rng).to_pairs()


def _batch_probs(reward: RewardModel, batch: PairBatch) -> np.ndarray:
    r0 = reward.rewards(batch.states0, batch.actions0).sum(axis=1)
    r1 = reward.rewards(batch.states1, batch.actions1).sum(axis=1)
    return _sigmoid(r0 - r1)


def pair_batch_loss(reward: RewardModel, batch: PairBatch) -> float:
    p = _batch_probs(reward, batch)
    y = batch.labels
    return float(-(y * p + (1 - y) * (1.0 - p)).mean())


def pair_batch_reward_grad(reward: RewardModel, batch: PairBatch) -> np.ndarray:
    """Vectorized full-batch grad_phi of the preference loss."""
    p = _batch_probs(reward, batch)
    g0 = reward.grad_rewards(batch.states0, batch.actions0).sum(axis=1)
    g1 = reward.grad_rewards(batch.states1, batch.actions1).sum(axis=1)
    coef = -(2 * batch.labels - 1) * p * (1.0 - p)
    return (coef[:, None] * (g0 - g1)).mean(axis=0)


def pair_batch_policy_grad(policy, reward: RewardModel, batch: PairBatch) -> np.ndarray:
    """Vectorized score-function grad_lam of the preference loss (pairs must
    have been freshly sampled from ``policy``)."""
    p = _batch_probs(reward, batch)
    y = batch.labels
    ell = -(y * p + (1 - y) * (1.0 - p))
    score = grad_log_prob(policy, batch.states0, batch.actions0).sum(axis=1)
    score += grad_log_prob(policy, batch.states1, batch.actions1).sum(axis=1)
    return (ell[:, None] * score).mean(axis=0)


def pair_batch_accuracy(reward: RewardModel, batch: PairBatch) -> float:
    """Fraction of labels matched by thresholding the model's BT probability
    at 1/2 (ties predict label 1, mirroring the argmax labeler)."""
    predicted = (_batch_probs(reward, batch) >= 0.5).astype(np.int64)
    return float((predicted == batch.labels).mean())


def append_pair_batch(path, batch: PairBatch) -> None:
    """Append a PairBatch to a dataset file (header written if new)."""
    path = Path(path)
    new = not path.exists()
    with open(path, "a") as fh:
        if new:
            fh.write(DATASET_HEADER + "\n")
        for i in range(batch.count):
            fields = [str(batch.horizon), str(int(batch.labels[i]))]
            for states, actions in ((batch.states0[i], batch.actions0[i]),
                                    (batch.states1[i], batch.actions1[i])):
                for s, a in zip(states, actions):
                    fields.append(_fmt(s))
                    fields.append(_fmt(a))
            fh.write(" ".join(fields) + "\n")


def save_pairs(path, pairs: list[PreferencePair], append: bool = False) -> None:
    """Write pairs as one text record per line: H, label, then the two
    state-action sequences (interleaved s a s a ...)."""
    path = Path(path)
    mode = "a" if append and path.exists() else "w"
    with open(path, mode) as fh:
        if mode == "w":
            fh.write(DATASET_HEADER + "\n")
        for pair in pairs:
            fields = [str(pair.traj0.horizon), str(pair.label)]
            for traj in (pair.traj0, pair.traj1):
                for s, a in zip(traj.states, traj.actions):
                    fields.append(_fmt(s))
                    fields.append(_fmt(a))
            fh.write(" ".join(fields) + "\n")


def load_pairs(path) -> list[PreferencePair]:
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        if header != DATASET_HEADER:
            raise ValueError(f"unrecognized dataset header {header!r}")
        pairs = []
        for line_no, line in enumerate(fh, start=2):
            fields = line.split()
            if not fields:
                continue
            horizon, label = int(fields[0]), int(fields[1])
            body = fields[2:]
            if len(body) != 4 * horizon:
                raise ValueError(f"line {line_no}: expected {4 * horizon} values")
            half = 2 * horizon
            pairs.append(PreferencePair(
                traj0=_parse_traj(body[:half]),
                traj1=_parse_traj(body[half:]),
                label=label,
            ))
    return pairs


def _fmt(x) -> str:
    if float(x) == int(x):
        return str(int(x))
    return repr(float(x))


def _parse_traj(flat: list[str]) -> Trajectory:
    vals = [float(v) for v in flat]
    states = np.asarray(vals[0::2])
    actions = np.asarray(vals[1::2])
    if np.all(states == states.astype(np.int64)) and np.all(actions == actions.astype(np.int64)):
        states = states.astype(np.int64)
        actions = actions.astype(np.int64)
    return Trajectory(states=states, actions=actions)


# --- exact enumeration oracles (finite env, short pair horizon) ---------


def enumerate_trajectories(env, policy, horizon: int):
    """All positive-probability (s, a) paths of the given length.

    Returns (states (M, H) int, actions (M, H) int, probs (M,)).  Intended
    for short horizons on small tabular environments.
    """
    env = require_finite_env(env)
    pi = policy.prob_table()
    states = np.zeros((1, 0), dtype=np.int64)
    actions = np.zeros((1, 0), dtype=np.int64)
    probs = np.ones(1)
    last = None
    for i in range(horizon):
        if i == 0:
            step_dist = np.broadcast_to(env.init_dist, (len(probs), env.n_states))
        else:
            step_dist = env.transition[last[:, 0], last[:, 1]]
        new_states, new_actions, new_probs, new_last = [], [], [], []
        for j in range(len(probs)):
            for s in range(env.n_states):
                ps = step_dist[j, s]
                if ps == 0.0:
                    continue
                for a in range(env.n_actions):
                    pa = pi[s, a]
                    if pa == 0.0:
                        continue
                    new_states.append(np.append(states[j], s))
                    new_actions.append(np.append(actions[j], a))
                    new_probs.append(probs[j] * ps * pa)
                    new_last.append((s, a))
        states = np.asarray(new_states, dtype=np.int64)
        actions = np.asarray(new_actions, dtype=np.int64)
        probs = np.asarray(new_probs)
        last = np.asarray(new_last, dtype=np.int64)
    return states, actions, probs


def _enumerated_tables(env, policy, reward, labeler, horizon):
    states, actions, probs = enumerate_trajectories(env, policy, horizon)
    model_totals = reward.rewards(states, actions).sum(axis=1)
    true_totals = labeler.reward.rewards(states, actions).sum(axis=1)
    p_model = _sigmoid(model_totals[:, None] - model_totals[None, :])
    if labeler.mode == "argmax":
        p_true = (true_totals[:, None] >= true_totals[None, :]).astype(np.float64)
    else:
        p_true = _sigmoid(true_totals[:, None] - true_totals[None, :])
    return states, actions, probs, p_model, p_true


def exact_preference_value(env, policy, reward, labeler, horizon: int) -> float:
    """Exact upper loss: pair-enumeration expectation of the BT objective."""
    _, _, probs, p_model, p_true = _enumerated_tables(env, policy, reward, labeler, horizon)
    w = probs[:, None] * probs[None, :]
    return float(-(w * (p_true * p_model + (1.0 - p_true) * (1.0 - p_model))).sum())


def exact_preference_reward_grad(env, policy, reward, labeler, horizon: int) -> np.ndarray:
    states, actions, probs, p_model, p_true = _enumerated_tables(env, policy, reward, labeler, horizon)
    grad_totals = reward.grad_rewards(states, actions).sum(axis=1)  # (M, d)
    w = probs[:, None] * probs[None, :]
    coef = -w * (2.0 * p_true - 1.0) * p_model * (1.0 - p_model)
    # sum_ij coef_ij (g_i - g_j)
    row = coef.sum(axis=1)
    col = coef.sum(axis=0)
    return (row - col) @ grad_totals


def exact_preference_policy_grad(env, policy, reward, labeler, horizon: int) -> np.ndarray:
    states, actions, probs, p_model, p_true = _enumerated_tables(env, policy, reward, labeler, horizon)
    scores = grad_log_prob(policy, states, actions).sum(axis=1)  # (M, d)
    w = probs[:, None] * probs[None, :]
    ell = -(p_true * p_model + (1.0 - p_true) * (1.0 - p_model))
    coef = w * ell
    row = coef.sum(axis=1)
    col = coef.sum(axis=0)
    return (row + col) @ scores
