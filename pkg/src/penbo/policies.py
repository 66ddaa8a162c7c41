"""Parameterized policies and reward models.

Finite environments use a linear-feature softmax policy mixed with the uniform
distribution so every action keeps probability >= eps_floor (needed for the
KL-gradient bound to hold).  The continuous environment uses a Gaussian policy
with a linear-in-state mean and fixed stdev.  Reward models squash a linear
feature score through a logistic so the base reward stays inside (0, 1) with a
bounded, smooth parameter gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionError
from .vecs import as_vec


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass(frozen=True)
class SoftmaxPolicy:
    """pi(a|s) = (1 - A*eps_floor) * softmax(lam . xi(s, a)) + eps_floor."""

    lam: np.ndarray
    features: np.ndarray  # (S, A, d)
    eps_floor: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "lam", as_vec(self.lam))
        xi = np.asarray(self.features, dtype=np.float64)
        object.__setattr__(self, "features", xi)
        if xi.ndim != 3:
            raise DimensionError(f"features must be (S, A, d), got {xi.shape}")
        if self.lam.shape[0] != xi.shape[2]:
            raise DimensionError("lam dim must match feature dim")
        n_actions = xi.shape[1]
        if not 0.0 <= self.eps_floor * n_actions < 1.0:
            raise ValueError("need 0 <= eps_floor * n_actions < 1")

    @property
    def dim(self) -> int:
        return self.lam.shape[0]

    @property
    def n_states(self) -> int:
        return self.features.shape[0]

    @property
    def n_actions(self) -> int:
        return self.features.shape[1]

    def with_params(self, lam) -> "SoftmaxPolicy":
        return replace(self, lam=as_vec(lam))

    def prob_table(self) -> np.ndarray:
        """(S, A) action probabilities."""
        sm = np.exp(_log_softmax(self.features @ self.lam))
        mix = 1.0 - self.eps_floor * self.n_actions
        return mix * sm + self.eps_floor

    def log_prob_table(self) -> np.ndarray:
        return np.log(self.prob_table())

    def grad_log_table(self) -> np.ndarray:
        """(S, A, d) table of grad_lam log pi(a|s)."""
        sm = np.exp(_log_softmax(self.features @ self.lam))
        mean_feat = np.einsum("sa,sad->sd", sm, self.features)
        grad_sm = sm[:, :, None] * (self.features - mean_feat[:, None, :])
        mix = 1.0 - self.eps_floor * self.n_actions
        pi = mix * sm + self.eps_floor
        return mix * grad_sm / pi[:, :, None]


def tabular_softmax(n_states: int, n_actions: int, lam=None, eps_floor: float = 0.0) -> SoftmaxPolicy:
    """One logit per (state, non-reference action); for 2 actions, d = S."""
    d = n_states * (n_actions - 1)
    xi = np.zeros((n_states, n_actions, d))
    for s in range(n_states):
        for a in range(1, n_actions):
            xi[s, a, s * (n_actions - 1) + (a - 1)] = 1.0
    if lam is None:
        lam = np.zeros(d)
    return SoftmaxPolicy(lam=lam, features=xi, eps_floor=eps_floor)


def uniform_policy(n_states: int, n_actions: int) -> SoftmaxPolicy:
    return tabular_softmax(n_states, n_actions, eps_floor=0.0)


@dataclass(frozen=True)
class GaussianPolicy:
    """a ~ Normal(lam . xi(s), stdev^2) with xi(s) = [s, 1]."""

    lam: np.ndarray
    stdev: float = 0.5

    def __post_init__(self):
        lam = as_vec(self.lam)
        object.__setattr__(self, "lam", lam)
        if lam.shape[0] != 2:
            raise DimensionError("GaussianPolicy uses features [s, 1], lam dim 2")
        if self.stdev <= 0:
            raise ValueError("stdev must be positive")

    @property
    def dim(self) -> int:
        return 2

    def with_params(self, lam) -> "GaussianPolicy":
        return replace(self, lam=as_vec(lam))

    def state_features(self, states: np.ndarray) -> np.ndarray:
        return np.stack([states, np.ones_like(states)], axis=-1)

    def mean(self, states: np.ndarray) -> np.ndarray:
        return self.state_features(states) @ self.lam

    def sample_actions(self, states: np.ndarray, gen: np.random.Generator) -> np.ndarray:
        return self.mean(states) + gen.normal(0.0, self.stdev, size=np.shape(states))

    def log_prob(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        z = (actions - self.mean(states)) / self.stdev
        return -0.5 * z**2 - np.log(self.stdev * np.sqrt(2.0 * np.pi))

    def grad_log_prob(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        z = (actions - self.mean(states)) / self.stdev**2
        return z[..., None] * self.state_features(states)


@dataclass(frozen=True)
class RewardModel:
    """Base reward r(s, a) = logistic(phi . psi(s, a)) plus a KL penalty weight.

    ``psi`` is a (S, A, d) table for finite environments or a callable
    psi(states, actions) -> (..., d) for continuous ones.  The regularized
    reward used by returns and Q-values is r + beta * log(pi/pi_ref).
    """

    phi: np.ndarray
    psi: object
    beta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "phi", as_vec(self.phi))
        if isinstance(self.psi, np.ndarray) and self.psi.ndim != 3:
            raise DimensionError(f"tabular psi must be (S, A, d), got {self.psi.shape}")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")

    @property
    def dim(self) -> int:
        return self.phi.shape[0]

    @property
    def tabular(self) -> bool:
        return isinstance(self.psi, np.ndarray)

    def with_params(self, phi) -> "RewardModel":
        return replace(self, phi=as_vec(phi))

    def scores(self, states=None, actions=None) -> np.ndarray:
        if self.tabular:
            return self.psi @ self.phi
        return self.psi(states, actions) @ self.phi

    def reward_table(self) -> np.ndarray:
        """(S, A) base rewards (finite case)."""
        return _sigmoid(self.scores())

    def grad_reward_table(self) -> np.ndarray:
        """(S, A, d) table of grad_phi r(s, a)."""
        r = self.reward_table()
        return (r * (1.0 - r))[:, :, None] * self.psi

    def rewards(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        if self.tabular:
            return self.reward_table()[states, actions]
        return _sigmoid(self.psi(states, actions) @ self.phi)

    def grad_rewards(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        if self.tabular:
            return self.grad_reward_table()[states, actions]
        feats = self.psi(states, actions)
        r = _sigmoid(feats @ self.phi)
        return (r * (1.0 - r))[..., None] * feats


def grad_log_prob(policy, states, actions) -> np.ndarray:
    """Score function grad_lam log pi(a|s) for batches of (s, a) pairs."""
    if isinstance(policy, SoftmaxPolicy):
        return policy.grad_log_table()[states, actions]
    if isinstance(policy, GaussianPolicy):
        return policy.grad_log_prob(states, actions)
    raise TypeError(f"unknown policy type {type(policy)!r}")


def _sigmoid(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    t = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + t), t / (1.0 + t))
