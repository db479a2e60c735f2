"""Hybrid analog/digital beamforming for sparse mmWave MIMO channels."""

from .beamform import (HybridPrecoder, PartitionSpec, SolveTrace, StoppingRule, aree_solve, design_combiner,
                       design_precoder, omp_baseline, optimal_combiner, optimal_precoder, pe_omp_init,
                       pe_smd_init, phase_extract, random_init)
from .channel import DESK_CONFIG, FULL_CONFIG, ChannelRealization, SystemConfig, sample_channel, steering_vector
from .errors import (CalibrationError, DegenerateRankError, HybridBFError, InfeasibleStreamsError,
                     InvalidArgumentError, NumericalFailureError)
from .harness import ExperimentConfig, MethodSpec, calibrate_noise, run_experiment
from .metrics import (beam_pattern, channel_gap, equivalent_channel, link_report, mutual_information,
                      nmse_unitary, realized_snr, spectral_efficiency)
from .svd import gc_svd, pinv, thin_svd

__version__ = "0.1.0"
