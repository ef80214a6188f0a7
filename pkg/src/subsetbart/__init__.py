"""Bayesian sum-of-trees regression whose categorical splits send arbitrary level subsets left.

Network-structured categorical predictors split into connected pieces of
the network, using spectral or spanning-tree partitions.
"""

from .data import ColumnSpec, Dataset, OutcomeScaling, PredictorSchema, load_dataset, load_schema
from .graph import Network, load_network
from .prior import LevelPartition, PriorConfig
from .sampler import ChainConfig, PosteriorSamples, predict, run_chain
from .tree import DecisionRule, RegressionTree

__version__ = "0.1.0"

__all__ = [
    "ChainConfig",
    "ColumnSpec",
    "Dataset",
    "DecisionRule",
    "LevelPartition",
    "Network",
    "OutcomeScaling",
    "PosteriorSamples",
    "PredictorSchema",
    "PriorConfig",
    "RegressionTree",
    "load_dataset",
    "load_network",
    "load_schema",
    "predict",
    "run_chain",
]
