from .config import ExperimentConfig, load_config
from .diagnostics import IGMAnalyzer, igma_analyze, run_training_with_diagnostics
from .simplex_geometry import ProbabilityVector, fisher_rao_distance, fsi, fsi_max
from .visualization_handler import Visualization

from ._version import __version__
from .interface import FisherMoE

__all__ = [
    "__version__",
    "ExperimentConfig",
    "FisherMoE",
    "IGMAnalyzer",
    "ProbabilityVector",
    "Visualization",
    "fisher_rao_distance",
    "fsi",
    "fsi_max",
    "igma_analyze",
    "load_config",
    "run_training_with_diagnostics",
]
