"""Theory-independent tomography of a decohering two-level system.

Simulate prepare-and-measure frequency tables, fit rank-k probability tables
by a weighted see-saw, factor them into GPT state/effect spaces, compute
consistent duals and sphere reparametrizations, and track contextuality
robustness, state-space volumes and non-Markovianity over the waiting time.
"""

from .synthdata import ChannelParams, BumpParams, fibonacci_directions, sample_frequency_table
from .tables import FrequencyTable, StackedFrequencyTable
from .tomofit import FitOptions, FitResult, RankScan, chi_squared, fit_rank_k, rank_scan, select_rank, stack_tables
from .gptmodel import GptModel, factorize, purity_lower_bound
from .polytope import HPolytope, VPolytope, consistent_dual, volume
from .nonclassicality import EmbeddingProblem, RobustnessResult, build_problem, robustness
from .pipeline import PipelineConfig, run_full_pipeline

__all__ = [
    "ChannelParams",
    "BumpParams",
    "fibonacci_directions",
    "sample_frequency_table",
    "FrequencyTable",
    "StackedFrequencyTable",
    "FitOptions",
    "FitResult",
    "RankScan",
    "chi_squared",
    "fit_rank_k",
    "rank_scan",
    "select_rank",
    "stack_tables",
    "GptModel",
    "factorize",
    "purity_lower_bound",
    "HPolytope",
    "VPolytope",
    "consistent_dual",
    "volume",
    "EmbeddingProblem",
    "RobustnessResult",
    "build_problem",
    "robustness",
    "PipelineConfig",
    "run_full_pipeline",
]

__version__ = "0.1.0"
