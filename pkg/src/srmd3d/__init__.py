"""Sparse random mode decomposition in the time-frequency-chirprate domain."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("srmd3d")
except PackageNotFoundError:
    __version__ = "0.0.0"

from .baseline import ClusterLabeling, SrmdResult, dbscan, match_modes, srmd_decompose
from .features import (AtomBatch, FeatureAtom, FeatureDictionary, build_dictionary,
                       evaluate_atom, sample_concentrated_3d, sample_uniform_2d)
from .noise import NoiseEstimate, estimate_noise_variance
from .pipeline import (DecompositionConfig, DecompositionResult, PipelineError,
                       benchmark_snr_sweep, complexity_probe, decompose_3d)
from .ridges import RidgeCurve, RidgeError, detect_ridges, estimate_ridges, refine_cr_from_if
from .signal import (ModeSet, ModeSpec, NyquistError, Signal, add_white_noise,
                     crossover_chirp_pair, paper_simulated_signal, snr_db, synth_mode, tones)
from .solver import (BpdnProblem, SolverError, SparseSolution, project_l1, solve_bpdn,
                     solve_lasso)
from .tfa import (COLAError, Spectrogram, STFTGrid, TFCRepresentation, chirplet_transform,
                  check_cola, default_cr_axis, istft, stft)
