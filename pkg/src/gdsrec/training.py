"""Mini-batch training with validation-driven early stopping, plus the
evaluation and ablation drivers.

Training monitors validation MAE+RMSE after every epoch and stops once the
sum has increased for ``patience`` successive epochs; the parameters from
the best-validation epoch are what the run returns. A non-finite loss
aborts immediately with the last finite checkpoint.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape
from .data import RatingTable, SplitDataset, TrustEdges, compute_stats
from .errors import ConfigError, DataError
from .graphs import (InteractionGraph, SampleSet, build_interaction_graph,
                     compute_relationship_coefficients)
from .metrics import MetricsReport, rating_metrics, report_from_predictions
from .model import GDSRec, ModelConfig
from .params import make_optimizer

log = logging.getLogger(__name__)

_SHUFFLE_SALT = 101  # keeps the batch-shuffle stream apart from neighbor sampling


@dataclass
class TrainConfig:
    learning_rate: float = 5e-4
    batch_size: int = 128
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    optimizer: str = "adam"
    loss: str = "mse"

    def validate(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ConfigError("batch_size, max_epochs and patience must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"optimizer must be adam or sgd, got {self.optimizer!r}")
        if self.loss not in ("mse", "mae"):
            raise ConfigError(f"loss must be mse or mae, got {self.loss!r}")
        return self


class EarlyStopper:
    """Signals a stop after `patience` successive increases of a monitored
    value (strict increases; a plateau resets the streak)."""

    def __init__(self, patience: int):
        self.patience = patience
        self.streak = 0
        self._prev = None

    def update(self, value: float) -> bool:
        if self._prev is not None and value > self._prev:
            self.streak += 1
        else:
            self.streak = 0
        self._prev = value
        return self.streak >= self.patience


@dataclass
class TrainResult:
    history: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_sum: float = float("inf")
    stopped_early: bool = False
    diverged: bool = False


def _batches(order: np.ndarray, batch_size: int):
    for start in range(0, len(order), batch_size):
        yield order[start:start + batch_size]


def train(model: GDSRec, split: SplitDataset, graph: InteractionGraph,
          tcfg: TrainConfig) -> TrainResult:
    """Optimize the model in place; leaves the best-validation parameters
    loaded and returns the epoch history."""
    tcfg.validate()
    train_tab = split.train
    if len(train_tab) == 0:
        raise DataError("training split is empty")
    monitor_tab = split.validation if len(split.validation) > 0 else train_tab
    if monitor_tab is train_tab:
        log.warning("validation split is empty; early stopping monitors the training set")

    opt = make_optimizer(tcfg.optimizer, model.params, tcfg.learning_rate)
    stopper = EarlyStopper(tcfg.patience)
    result = TrainResult()
    best_snapshot = model.params.snapshot()
    n = len(train_tab)
    k = model.config.reservation
    eval_samples = SampleSet(graph, k, tcfg.seed, epoch=0)

    for epoch in range(1, tcfg.max_epochs + 1):
        samples = SampleSet(graph, k, tcfg.seed, epoch=epoch)
        rng = np.random.default_rng(np.random.SeedSequence([tcfg.seed, _SHUFFLE_SALT, epoch]))
        order = rng.permutation(n)
        running = 0.0
        for batch in _batches(order, tcfg.batch_size):
            model.params.zero_grad()
            with Tape() as tape:
                loss = model.batch_loss(train_tab.users[batch], train_tab.items[batch],
                                        train_tab.ratings[batch], samples, tcfg.loss)
                value = loss.item()
                if not np.isfinite(value):
                    log.error("non-finite loss at epoch %d; restoring best checkpoint", epoch)
                    model.params.restore(best_snapshot)
                    result.diverged = True
                    return result
                tape.backward(loss)
            opt.step()
            running += value * len(batch)

        preds = model.predict_many(monitor_tab.users, monitor_tab.items, eval_samples)
        val_mae, val_rmse = rating_metrics(preds, monitor_tab.ratings)
        val_sum = val_mae + val_rmse
        result.history.append({
            "epoch": epoch,
            "train_loss": running / n,
            "val_mae": val_mae,
            "val_rmse": val_rmse,
        })
        if val_sum < result.best_val_sum:
            result.best_val_sum = val_sum
            result.best_epoch = epoch
            best_snapshot = model.params.snapshot()
        if stopper.update(val_sum):
            result.stopped_early = True
            break

    model.params.restore(best_snapshot)
    return result


def evaluate_model(model: GDSRec, table: RatingTable, graph: InteractionGraph,
                   seed: int, positive_thresholds=(3, 4), clip: bool = False) -> MetricsReport:
    """Rating and ranking metrics on a held-out table (epoch-0 samples)."""
    if len(table) == 0:
        raise DataError("evaluation table is empty")
    samples = SampleSet(graph, model.config.reservation, seed, epoch=0)
    preds = model.predict_many(table.users, table.items, samples)
    return report_from_predictions(table.users, table.items, table.ratings, preds,
                                   positive_thresholds, clip=clip)


def prepare_structures(split: SplitDataset, trust: TrustEdges | None, cfg: ModelConfig):
    """Statistics plus interaction/social graphs consistent with a config."""
    stats = compute_stats(split.train)
    graph = build_interaction_graph(split.train, stats, cfg.use_rating_difference)
    social = None
    if cfg.use_social:
        if trust is None:
            raise ConfigError("model config enables the social channel but no trust data was given")
        social = compute_relationship_coefficients(split.train, trust, cfg.delta,
                                                   uniform=not cfg.use_relationship_coeff)
    return stats, graph, social


def run_experiment(split: SplitDataset, trust: TrustEdges | None, mcfg: ModelConfig,
                   tcfg: TrainConfig, clip: bool = False):
    """Train one configuration from scratch and evaluate it on the test split."""
    stats, graph, social = prepare_structures(split, trust, mcfg)
    model = GDSRec(mcfg, split.train.n_users, split.train.n_items, stats, social,
                   seed=tcfg.seed)
    result = train(model, split, graph, tcfg)
    report = evaluate_model(model, split.test, graph, tcfg.seed, clip=clip)
    report.history = result.history
    return model, result, report


def run_ablation(variant: str, split: SplitDataset, trust: TrustEdges | None,
                 mcfg: ModelConfig, tcfg: TrainConfig, clip: bool = False):
    """Apply one named substitution and run the otherwise-identical experiment."""
    return run_experiment(split, trust, mcfg.for_variant(variant), tcfg, clip=clip)
