"""Particle filtering for jump-diffusion signal-observation systems.

The package simulates coupled signal-observation pairs whose observation
carries a Brownian component plus small (compensated) and large jumps with a
state-dependent thinning intensity, runs unnormalised (Zakai) and normalised
(Kushner-Stratonovich) particle filters on them, and ships a verification
harness for the identities that make the two filters two views of the same
object: likelihood martingales, the reweighting bridge, second-moment
duality, and pathwise/joint-law uniqueness probes.
"""

from .measures import (MassDegeneracy, ParticleMeasure, distance_bl,
                       effective_sample_size, integrate, normalize, resample)
from .model import (AssumptionBounds, InitialLaw, MarkSpace, ModelReport,
                    ModelSpec, TestFunction, apply_generator, constant_one,
                    gaussian_bell, model_from_config, polynomial_1d, preset,
                    PRESET_NAMES, smooth_bump, validate_model)
from .pathsim import (BatchObservations, JumpEvents, NoiseRecord,
                      ObservationRecord, SystemPath, TimeGrid,
                      extract_observation_events, load_path,
                      reference_observation_batch, save_path,
                      simulate_decoupled, simulate_system)
from .zakai import (FilterRun, LikelihoodProcess, inverse_likelihood_batch,
                    ks_oracle, ks_oracle_table, likelihood_process, run_zakai,
                    zakai_step)
from .ks import InnovationRecord, ks_step, reweight_ks_to_zakai, run_ks
from .verify import (DualityModel, VerificationReport, check_duality,
                     check_joint_law, check_martingale,
                     check_pathwise_uniqueness, constant_coefficient_rate,
                     dual_moment_mc, filter_moment_mc)

__version__ = "0.1.0"
