"""Delay-optimal transmission scheduling over a two-state Markov channel with
ACK/NACK-only feedback: exact belief-space dynamic programming, threshold
policy structure tools, a model-free actor-critic learner, and an experiment
CLI."""

from .actor_critic import (LearnerState, NumericDivergenceError, TrainResult,
                           ac_step, advantage_approx, policy_probs,
                           sample_action, score_features, sigmoid_feature,
                           train)
from .channel import (BeliefSpace, ChannelParams, belief_update,
                      enumerate_belief_space, stationary_dist, step_channel,
                      tau_map)
from .config import ConfigError, ExperimentConfig, load_config
from .model import (ArrivalDist, CostModel, State, SystemModel,
                    UnstableModelError, build_model, instantaneous_cost,
                    queue_next, reward, stability_check, transition_law)
from .policies import (StructureReport, ThresholdPolicy, ValuePropertyReport,
                       baseline_always_one, baseline_iid_mdp,
                       check_value_properties, extract_thresholds,
                       verify_threshold_structure)
from .sim import (CalibrationReport, ParametricPolicy, RngSpec, RunStats,
                  TablePolicy, belief_calibration, simulate)
from .solvers import (RviResult, SolverError, ViResult, discounted_backup,
                      evaluate_policy_exact, greedy_policy_from_h, rvi,
                      value_iteration)

__version__ = "0.1.0"
