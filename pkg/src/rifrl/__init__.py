"""Rescale-invariant federated policy-gradient training for V2X links."""

from .brio import ScaleSet, UnsupportedActivationError, compute_scales, rescale
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import (EvalSettings, RunConfig, config_digest, desk_profile,
                     load_run_config, full_profile)
from .env import (Action, ChannelState, ConfigError, EpisodeFinishedError,
                  LinkBookkeeping, ScenarioConfig, V2XEnv, VehicleState,
                  action_from_index, action_to_index, dbm_to_watt, rates,
                  shared_reward, sinr_v2i, sinr_v2v, street_grid,
                  update_mobility)
from .experiment import DeliveryResult, evaluate_delivery, sweep
from .federation import (Method, NanDivergenceError, TrainResult,
                         TrainSettings, aggregate, run_episode, run_training)
from .gradcheck import run_gradcheck
from .metrics import (EpisodeRecord, EvalRecord, RunMetrics,
                      read_sweep_csv, read_training_csv, tail_moving_average,
                      write_sweep_csv, write_training_csv)
from .policy import (Gradients, MlpParams, OptimizerState, Trajectory,
                     forward, grad_log_prob, init_params, policy_gradient,
                     raw_outputs, rmsprop_step, sample_action, softmax)

__version__ = "0.1.0"
