"""Discounted MDP environments.

Two families are built in: finite tabular MDPs (exactly solvable, used by all
brute-force oracles) and a 1-D continuous-state environment with clipped
linear dynamics (exercises the continuous-space code paths).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedEnvError

_ROW_TOL = 1e-12


@dataclass(frozen=True)
class FiniteMdp:
    """Tabular MDP: transition (S, A, S), initial distribution (S,)."""

    transition: np.ndarray
    init_dist: np.ndarray
    gamma: float

    def __post_init__(self):
        p = np.asarray(self.transition, dtype=np.float64)
        nu = np.asarray(self.init_dist, dtype=np.float64)
        object.__setattr__(self, "transition", p)
        object.__setattr__(self, "init_dist", nu)
        if p.ndim != 3 or p.shape[0] != p.shape[2]:
            raise ValueError(f"transition must be (S, A, S), got {p.shape}")
        if nu.shape != (p.shape[0],):
            raise ValueError("init_dist length must match state count")
        if np.max(np.abs(p.sum(axis=2) - 1.0)) > _ROW_TOL:
            raise ValueError("transition rows must sum to 1")
        if abs(nu.sum() - 1.0) > _ROW_TOL or np.any(nu < 0):
            raise ValueError("init_dist must be a probability vector")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def finite(self) -> bool:
        return True


@dataclass(frozen=True)
class Lq1dMdp:
    """1-D continuous state, scalar action: s' = clip(a_coef*s + b_coef*a + w).

    States are clipped to [box_lo, box_hi]; the initial state is uniform on
    that box, process noise is Gaussian with stdev noise_std.
    """

    gamma: float
    a_coef: float = 0.9
    b_coef: float = 0.5
    noise_std: float = 0.1
    box_lo: float = -2.0
    box_hi: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.box_lo >= self.box_hi:
            raise ValueError("state box is empty")

    @property
    def finite(self) -> bool:
        return False

    def initial_states(self, count: int, gen: np.random.Generator) -> np.ndarray:
        return gen.uniform(self.box_lo, self.box_hi, size=count)

    def step(self, states: np.ndarray, actions: np.ndarray, gen: np.random.Generator) -> np.ndarray:
        nxt = self.a_coef * states + self.b_coef * actions
        nxt = nxt + gen.normal(0.0, self.noise_std, size=states.shape)
        return np.clip(nxt, self.box_lo, self.box_hi)


def chain_mdp(n_states: int, slip: float = 0.1, gamma: float = 0.9) -> FiniteMdp:
    """K-state chain with two actions: 0 moves left, 1 moves right.

    A move succeeds with probability 1 - slip (else the state stays put);
    moves off either end stay in place.  The initial distribution is uniform.
    """
    if n_states < 1:
        raise ValueError("need at least one state")
    if not 0.0 <= slip < 1.0:
        raise ValueError("slip must lie in [0, 1)")
    p = np.zeros((n_states, 2, n_states))
    for s in range(n_states):
        left = max(s - 1, 0)
        right = min(s + 1, n_states - 1)
        p[s, 0, left] += 1.0 - slip
        p[s, 0, s] += slip
        p[s, 1, right] += 1.0 - slip
        p[s, 1, s] += slip
    nu = np.full(n_states, 1.0 / n_states)
    return FiniteMdp(transition=p, init_dist=nu, gamma=gamma)


def cycle_mdp(n_states: int, gamma: float = 0.9) -> FiniteMdp:
    """Deterministic cycle: every action moves s -> (s+1) mod n; starts at 0."""
    if n_states < 1:
        raise ValueError("need at least one state")
    p = np.zeros((n_states, 2, n_states))
    for s in range(n_states):
        p[s, :, (s + 1) % n_states] = 1.0
    nu = np.zeros(n_states)
    nu[0] = 1.0
    return FiniteMdp(transition=p, init_dist=nu, gamma=gamma)


def require_finite_env(env) -> FiniteMdp:
    if not getattr(env, "finite", False):
        raise UnsupportedEnvError("operation needs a finite tabular environment")
    return env
