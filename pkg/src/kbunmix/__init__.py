"""Blind hyperspectral unmixing with kurtosis-based smooth NMF (KbSNMF)."""

__version__ = "0.1.0"

from .errors import UnmixError
from .kbsnmf import normalize_endmembers, smoothing_matrix, solve
from .kurtosis import average_kurtosis, grad_average_kurtosis, kurtosis
from .metrics import EvaluationReport, evaluate, match_and_evaluate, rmse, sad
from .model import AbundanceMatrix, EndmemberMatrix, SolverConfig, SpectralCube, UnmixResult
from .nmf import solve_baseline
from .synth import SynthSpec, add_noise, bundled_library, generate_cube

__all__ = [
    "AbundanceMatrix",
    "EndmemberMatrix",
    "EvaluationReport",
    "SolverConfig",
    "SpectralCube",
    "SynthSpec",
    "UnmixError",
    "UnmixResult",
    "add_noise",
    "average_kurtosis",
    "bundled_library",
    "evaluate",
    "generate_cube",
    "grad_average_kurtosis",
    "kurtosis",
    "match_and_evaluate",
    "normalize_endmembers",
    "rmse",
    "sad",
    "smoothing_matrix",
    "solve",
    "solve_baseline",
]
