"""Bayesian staged trees: structure learning by collapsed MCMC and causal effects."""
from importlib.metadata import PackageNotFoundError, version

from .causal import CausalQuery, EffectPosterior, effect_posterior
from .partition import Partition
from .priors import NIG, PriorSpec
from .sampler import ChainConfig, PosteriorSampleSet, run_chain
from .simulate import GeneratingTree, random_staged_tree, sample_dataset
from .summaries import coclustering, credible_ball, point_estimate
from .tree import Dataset, EventTree, build_event_tree, count_contexts, read_csv

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

__all__ = [
    "CausalQuery", "ChainConfig", "Dataset", "EffectPosterior", "EventTree", "GeneratingTree", "NIG",
    "Partition", "PosteriorSampleSet", "PriorSpec", "build_event_tree", "coclustering", "count_contexts",
    "credible_ball", "effect_posterior", "point_estimate", "random_staged_tree", "read_csv", "run_chain",
    "sample_dataset",
]
