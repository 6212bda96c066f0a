"""Rating-error and top-k ranking metrics.

Ranking follows the observed-data protocol: each user's *own* test items
are ranked by predicted score (descending, ties broken by item id
ascending); nothing outside the test set is ranked. An item is a positive
when its true rating reaches the threshold F. Recall@k is the fraction of
the user's positives found in the top k; NDCG@k discounts positions with
1/log2(pos+1) over binary gains. Both are macro-averaged over users that
have at least one positive.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def rating_metrics(predictions, truths) -> tuple[float, float]:
    """Mean absolute error and root mean square error."""
    predictions = np.asarray(predictions, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if predictions.shape != truths.shape or predictions.size == 0:
        raise ValueError("predictions and truths must be equal-length and non-empty")
    err = predictions - truths
    mae = float(np.abs(err).mean())
    rmse = float(np.sqrt((err * err).mean()))
    return mae, rmse


def _dcg(relevant: np.ndarray) -> float:
    positions = np.arange(1, len(relevant) + 1)
    return float((relevant / np.log2(positions + 1)).sum())


def ranking_metrics(users, items, truths, scores, positive_threshold: float,
                    k: int = 5) -> tuple[float, float]:
    """(Recall@k, NDCG@k) macro-averaged over users with >= 1 positive."""
    users = np.asarray(users)
    items = np.asarray(items)
    truths = np.asarray(truths, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)

    recalls = []
    ndcgs = []
    for u in np.unique(users):
        mask = users == u
        u_items = items[mask]
        u_truths = truths[mask]
        u_scores = scores[mask]
        n_pos = int((u_truths >= positive_threshold).sum())
        if n_pos == 0:
            continue
        # primary key: score descending; tie break: item id ascending
        order = np.lexsort((u_items, -u_scores))
        top = order[:k]
        relevant = (u_truths[top] >= positive_threshold).astype(np.float64)
        recalls.append(float(relevant.sum()) / n_pos)
        ideal = np.ones(min(k, n_pos))
        ndcgs.append(_dcg(relevant) / _dcg(ideal))
    if not recalls:
        return 0.0, 0.0
    return float(np.mean(recalls)), float(np.mean(ndcgs))


@dataclass
class MetricsReport:
    """One configuration's evaluation results; construction enforces the
    power-mean ordering mae <= rmse."""

    mae: float
    rmse: float
    recall_at_5: dict = field(default_factory=dict)  # positive threshold -> value
    ndcg_at_5: dict = field(default_factory=dict)
    history: list = field(default_factory=list)

    def __post_init__(self):
        if self.mae > self.rmse + 1e-12:
            raise AssertionError(f"MAE {self.mae} exceeds RMSE {self.rmse}")
        for d in (self.recall_at_5, self.ndcg_at_5):
            for val in d.values():
                if not (0.0 <= val <= 1.0 + 1e-12):
                    raise AssertionError(f"ranking metric {val} outside [0,1]")

    def to_dict(self) -> dict:
        return {
            "mae": self.mae,
            "rmse": self.rmse,
            "recall_at_5": {str(f): v for f, v in sorted(self.recall_at_5.items())},
            "ndcg_at_5": {str(f): v for f, v in sorted(self.ndcg_at_5.items())},
        }

    def csv_rows(self):
        """4-decimal rows (metric, threshold, value) for table-style export."""
        rows = [("mae", "", f"{self.mae:.4f}"), ("rmse", "", f"{self.rmse:.4f}")]
        for f in sorted(self.recall_at_5):
            rows.append(("recall_at_5", str(f), f"{self.recall_at_5[f]:.4f}"))
        for f in sorted(self.ndcg_at_5):
            rows.append(("ndcg_at_5", str(f), f"{self.ndcg_at_5[f]:.4f}"))
        return rows


def report_from_predictions(users, items, truths, predictions,
                            positive_thresholds=(3, 4), k: int = 5,
                            clip: bool = False) -> MetricsReport:
    """Full report; ``clip`` bounds the rating-error predictions into [1,5]
    but ranking always consumes the raw scores."""
    predictions = np.asarray(predictions, dtype=np.float64)
    rated = np.clip(predictions, 1.0, 5.0) if clip else predictions
    mae, rmse = rating_metrics(rated, truths)
    recall = {}
    ndcg = {}
    for f in positive_thresholds:
        r, n = ranking_metrics(users, items, truths, predictions, f, k)
        recall[f] = r
        ndcg[f] = n
    return MetricsReport(mae=mae, rmse=rmse, recall_at_5=recall, ndcg_at_5=ndcg)
