import numpy as np
import pytest

from penbo.brl import chain2_brl_instance
from penbo.mdp import chain_mdp
from penbo.policies import RewardModel, tabular_softmax, uniform_policy
from penbo.rng import RngStream


@pytest.fixture
def rng():
    return RngStream(12345)


@pytest.fixture
def chain2():
    return chain_mdp(2, slip=0.1, gamma=0.9)


@pytest.fixture
def chain2_setup(chain2):
    """(env, policy, policy_ref, reward) at fixed parameters."""
    policy = tabular_softmax(2, 2, lam=np.array([0.6, -0.4]), eps_floor=0.02)
    ref = uniform_policy(2, 2)
    reward = RewardModel(phi=np.array([0.8, -0.3]),
                         psi=np.array([[[0.0, 0.75], [2.5, -0.5]],
                                       [[1.0, 2.5], [-1.25, 1.5]]]),
                         beta=0.0)
    return chain2, policy, ref, reward


@pytest.fixture
def brl_instance():
    return chain2_brl_instance(gamma=0.9, beta=0.0)
