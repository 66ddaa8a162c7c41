"""penbo: first-order penalty method for bilevel RL and stochastic bilevel
optimization, with oracle-backed gradient diagnostics."""

from .brl import BrlInstance, chain2_brl_instance, lq1d_brl_instance
from .diagnostics import (GridSpec, brute_force_inner, brute_force_proxy_value,
                          central_fd_grad, error_decomposition, truncation_curve)
from .estimators import mc_q_estimate, policy_grad_estimate, reward_grad_estimate
from .exact import (discounted_occupancy, exact_policy_grad, exact_q, exact_return,
                    exact_reward_grad, occupancy_enumerate)
from .mdp import FiniteMdp, Lq1dMdp, chain_mdp, cycle_mdp
from .penalty import (PenaltyConfig, RunRecord, ScheduleConstants, inner_loops,
                      penalty_hypergradient, run_penalty_method, schedule_from_epsilon)
from .plsgd import BiasedOracle, measure_pl_constant, run_biased_sgd
from .policies import GaussianPolicy, RewardModel, SoftmaxPolicy, tabular_softmax, uniform_policy
from .preference import (Labeler, PreferencePair, bt_probability, make_pairs,
                         preference_loss, preference_policy_grad, preference_reward_grad)
from .problems import BilevelProblem
from .rng import RngStream, spawn_stream
from .rollouts import Trajectory, sample_trajectories, sample_trajectory
from .synthetic import SyntheticProblem, make_pl_instance, noisy_grad
from .vecs import axpy, norm

__version__ = "0.1.0"
