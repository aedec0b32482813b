"""znav: time- and energy-optimal point-to-point navigation in 2D flows.

Subpackages:
  flowfield  divergence-free flows (analytic, synthetic turbulence, gridded)
  flowio     flow-field persistence
  navigator  vessel dynamics, optimal steering, shooting, episodes
  rl         tile-coded one-step actor-critic training and evaluation
  stats      ensemble distributions, occupancy maps, separation growth
  config     declarative experiment configuration
  cli        command-line front end (see `znav --help`)
"""

from .flowfield import (AnalyticFlow, FlowField, FlowSample, FourierMode,
                        GriddedFlow, ModeSumFlow, SpectrumSpec,
                        fit_spectrum_slope, generate_snapshot,
                        generate_unsteady, measure_spectrum,
                        okubo_weiss_grid, okubo_weiss_parameter)
from .flowio import FlowFormatError, FlowVersionError, export_flow, import_flow
from .navigator import (ControllerContractError, EpisodeGeometry,
                        OutcomeRecord, ShootingResult, Trajectory,
                        VesselState, free_flight_time, integrate_on,
                        make_geometry, on_rhs, on_shooting, run_episode,
                        sample_disc, step_vessel)
from .rl import (ActionSet, PolicyFormatError, PolicyParams,
                 PolicyVersionError, RewardConfig, TileCoder, TrainConfig,
                 TrainLog, actor_critic_update, evaluate, load_policy,
                 make_controller, policy_probs, reward_step, save_policy,
                 train)
from .stats import (EnsembleSummary, OccupancyGrid, SeparationCurve,
                    occupancy, sensitivity, summarize)

__version__ = "0.1.0"
