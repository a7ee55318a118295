"""Two-stage cascaded channel estimation for RIS-aided multi-user mmWave uplinks."""

from .baselines import BaselineConfig, direct_omp_estimate, genie_ls_estimate
from .channel import ArrayGeometry, Scene, make_scene, sample_scene, steering_matrix, steering_vector
from .codebook import stage1_codebook, stage2_codebook
from .errors import *  # noqa: F401,F403
from .harness import ExperimentConfig, SweepReport, emit_csv, load_config, nmse, run_trial, sweep
from .stage1 import estimate_stage1
from .stage2 import EstimatorConfig, TwoStageEstimate, estimate_all
from .transmission import ReceivedBlock, calibrate_noise, simulate_stage1_rx, simulate_stage2_rx

__version__ = "0.1.0"
