"""Social recommendation on decentralized rating statistics.

The pipeline: ingest ratings and trust, split, compute per-user/per-item
average ratings, build interaction and social graphs, then train an
attention-aggregating scoring network whose final prediction adds the
learned residual back onto the alpha-weighted averages. Includes the
matrix-factorization baselines, the full metric suite, and a CLI runner.
"""

from .data import (DecentralizedStats, IdMap, RatingRecord, RatingTable,
                   SplitDataset, TrustEdges, compute_stats, difference_level,
                   load_ratings, load_trust, split_dataset)
from .errors import ConfigError, DataError, DivergenceError
from .graphs import (InteractionGraph, NeighborSample, SampleSet, SocialGraph,
                     build_interaction_graph, compute_relationship_coefficients,
                     sample_neighbors)
from .metrics import MetricsReport, ranking_metrics, rating_metrics, report_from_predictions
from .model import GDSRec, ModelConfig
from .params import ParamStore
from .training import (EarlyStopper, TrainConfig, TrainResult, evaluate_model,
                       run_ablation, run_experiment, train)
from .baselines import MFConfig, MFParams, train_funksvd, train_pmf

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataError", "DivergenceError",
    "RatingRecord", "RatingTable", "TrustEdges", "SplitDataset", "DecentralizedStats", "IdMap",
    "load_ratings", "load_trust", "split_dataset", "compute_stats", "difference_level",
    "InteractionGraph", "SocialGraph", "NeighborSample", "SampleSet",
    "build_interaction_graph", "compute_relationship_coefficients", "sample_neighbors",
    "MetricsReport", "rating_metrics", "ranking_metrics", "report_from_predictions",
    "GDSRec", "ModelConfig", "ParamStore",
    "TrainConfig", "TrainResult", "EarlyStopper", "train", "evaluate_model",
    "run_experiment", "run_ablation",
    "MFConfig", "MFParams", "train_pmf", "train_funksvd",
]
