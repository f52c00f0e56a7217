"""Hermite chaos surrogates with cheap epistemic (variance) post-processing."""
from .config import ConfigError, RunConfig
from .ddreduce import DDResult, Partition, block_partition, run_dd
from .epistemic import RescaleOperator, rescale, rescale_matrix, tau_sweep
from .estimators import DomainDecompositionSurrogate, EpistemicSurrogate, GpcSurrogate
from .mcref import estimate_density, mc_moments, normal_block
from .models import (CachedModel, DiffusionModel, FunctionModel, Model, ModelError,
                     SyntheticModel)
from .polychaos import GpcExpansion, MultiIndex, gpc_moments, total_degree_indices
from .randfield import CovarianceSpec, KlBasis, discrete_kl
from .sparsegrid import QuadratureRule, smolyak

__version__ = "0.1.0"

__all__ = [
    "CachedModel", "ConfigError", "CovarianceSpec", "DDResult", "DiffusionModel",
    "DomainDecompositionSurrogate", "EpistemicSurrogate", "FunctionModel", "GpcExpansion",
    "GpcSurrogate", "KlBasis", "Model", "ModelError", "MultiIndex", "Partition",
    "QuadratureRule", "RescaleOperator", "RunConfig", "SyntheticModel", "block_partition",
    "discrete_kl", "estimate_density", "gpc_moments", "mc_moments", "normal_block", "rescale",
    "rescale_matrix", "run_dd", "smolyak", "tau_sweep", "total_degree_indices",
]
