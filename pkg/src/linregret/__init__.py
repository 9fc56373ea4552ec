"""Optimistic exploration with linear function approximation on episodic MDPs."""

from .linalg import GramState, elliptical_potential_bound
from .lsvi import LsviUcb, lsvi_act, lsvi_beta, union_bound_delta
from .mdp import (HardInstanceSpec, LinearMdpEnv, LinearMixtureEnv, TabularMdp, env_from_json,
                  env_to_json, make_hard_instance, make_random_linear_mdp,
                  make_random_linear_mixture, tabular_one_hot_embed, transition_prob,
                  value_features)
from .oracle import (ExactSolution, PolicyValue, episode_regret, evaluate_policy,
                     expected_gap_sum, solve_optimal)
from .vtr import UcrlVtr, vtr_act, vtr_beta

__version__ = "0.1.0"
