"""Non-local video attention (NVAN / STE-NVAN) kernels, cost model and Re-ID metrics."""

from .backbone import BackboneConfig, VideoFeatures, build_model, forward_video, temporal_halve
from .errors import ConfigError, ContractError, DimensionError, NumericError
from .evaluation import EmbeddingSet, cmc_rank1, mean_average_precision, pairwise_distances
from .flops import CostReport, flops_model
from .fpl import PooledFeature, fpl_forward
from .nonlocal_layer import (
    NonLocalParams,
    StripeConfig,
    make_stripes,
    nonlocal_backward,
    nonlocal_forward,
    stripe_nonlocal_forward,
)

__all__ = [
    "BackboneConfig",
    "ConfigError",
    "ContractError",
    "CostReport",
    "DimensionError",
    "EmbeddingSet",
    "NonLocalParams",
    "NumericError",
    "PooledFeature",
    "StripeConfig",
    "VideoFeatures",
    "build_model",
    "cmc_rank1",
    "flops_model",
    "forward_video",
    "fpl_forward",
    "make_stripes",
    "mean_average_precision",
    "nonlocal_backward",
    "nonlocal_forward",
    "pairwise_distances",
    "stripe_nonlocal_forward",
    "temporal_halve",
]
