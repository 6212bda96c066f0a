"""Matrix-factorization reference models: plain inner-product (PMF) and the
bias-extended variant (FunkSVD).

Both share the split, metric suite, and early-stopping rule of the main
model so comparisons stay apples-to-apples. Updates are per-sample
stochastic gradient steps on squared error with L2 shrinkage; the analytic
per-sample gradients are exposed for finite-difference verification.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .data import SplitDataset
from .errors import ConfigError, DataError
from .metrics import rating_metrics
from .training import EarlyStopper, TrainResult

log = logging.getLogger(__name__)

MF_MODELS = ("pmf", "funksvd")


@dataclass
class MFConfig:
    n_factors: int = 32
    learning_rate: float = 0.01
    reg: float = 0.05
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0

    def validate(self):
        if self.n_factors < 1:
            raise ConfigError(f"n_factors must be positive, got {self.n_factors}")
        if self.learning_rate <= 0 or self.reg < 0:
            raise ConfigError("learning_rate must be positive and reg non-negative")
        if self.max_epochs < 1 or self.patience < 1:
            raise ConfigError("max_epochs and patience must be positive")
        return self


@dataclass
class MFParams:
    model: str
    user_factors: np.ndarray  # U x D
    item_factors: np.ndarray  # V x D
    global_mean: float = 0.0
    user_bias: np.ndarray | None = None
    item_bias: np.ndarray | None = None

    def predict(self, users, items) -> np.ndarray:
        users = np.asarray(users)
        items = np.asarray(items)
        out = np.einsum("ij,ij->i", self.user_factors[users], self.item_factors[items])
        if self.model == "funksvd":
            out = out + self.global_mean + self.user_bias[users] + self.item_bias[items]
        return out

    def snapshot(self):
        return (self.user_factors.copy(), self.item_factors.copy(),
                None if self.user_bias is None else self.user_bias.copy(),
                None if self.item_bias is None else self.item_bias.copy())

    def restore(self, snap):
        self.user_factors[...] = snap[0]
        self.item_factors[...] = snap[1]
        if self.user_bias is not None:
            self.user_bias[...] = snap[2]
            self.item_bias[...] = snap[3]


def pmf_sample_grads(p: np.ndarray, q: np.ndarray, r: float, reg: float):
    """Gradients of 0.5*(p.q - r)^2 + 0.5*reg*(|p|^2 + |q|^2)."""
    e = float(p @ q) - r
    return e * q + reg * p, e * p + reg * q


def funksvd_sample_grads(p, q, b_u: float, b_v: float, mu: float, r: float, reg: float):
    """Gradients of the biased squared error with L2 on factors and biases."""
    e = mu + b_u + b_v + float(p @ q) - r
    return e * q + reg * p, e * p + reg * q, e + reg * b_u, e + reg * b_v


def _init_params(model: str, n_users: int, n_items: int, mean: float,
                 cfg: MFConfig) -> MFParams:
    rng = np.random.default_rng(cfg.seed)
    d = cfg.n_factors
    if model == "pmf":
        # center the initial inner products near the global mean; PMF has no
        # bias terms to absorb it
        loc = np.sqrt(max(mean, 1e-6) / d)
        uf = rng.uniform(0.5 * loc, 1.5 * loc, size=(n_users, d))
        vf = rng.uniform(0.5 * loc, 1.5 * loc, size=(n_items, d))
        return MFParams("pmf", uf, vf)
    uf = rng.uniform(-0.05, 0.05, size=(n_users, d))
    vf = rng.uniform(-0.05, 0.05, size=(n_items, d))
    return MFParams("funksvd", uf, vf, global_mean=mean,
                    user_bias=np.zeros(n_users), item_bias=np.zeros(n_items))


def train_mf(model: str, split: SplitDataset, cfg: MFConfig) -> tuple[MFParams, TrainResult]:
    """SGD training with validation-monitored early stopping."""
    if model not in MF_MODELS:
        raise ConfigError(f"unknown baseline model: {model!r}")
    cfg.validate()
    train_tab = split.train
    if len(train_tab) == 0:
        raise DataError("training split is empty")
    monitor_tab = split.validation if len(split.validation) > 0 else train_tab

    params = _init_params(model, train_tab.n_users, train_tab.n_items,
                          float(train_tab.ratings.mean()), cfg)
    lr, reg = cfg.learning_rate, cfg.reg
    stopper = EarlyStopper(cfg.patience)
    result = TrainResult()
    best_snapshot = params.snapshot()
    n = len(train_tab)

    for epoch in range(1, cfg.max_epochs + 1):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, epoch]))
        order = rng.permutation(n)
        sq_sum = 0.0
        for i in order:
            u = train_tab.users[i]
            v = train_tab.items[i]
            r = train_tab.ratings[i]
            p = params.user_factors[u]
            q = params.item_factors[v]
            if model == "pmf":
                gp, gq = pmf_sample_grads(p, q, r, reg)
                e = float(p @ q) - r
            else:
                b_u = params.user_bias[u]
                b_v = params.item_bias[v]
                gp, gq, gbu, gbv = funksvd_sample_grads(p, q, b_u, b_v, params.global_mean, r, reg)
                e = params.global_mean + b_u + b_v + float(p @ q) - r
                params.user_bias[u] -= lr * gbu
                params.item_bias[v] -= lr * gbv
            params.user_factors[u] = p - lr * gp
            params.item_factors[v] = q - lr * gq
            sq_sum += e * e
        if not np.isfinite(sq_sum):
            log.error("baseline %s diverged at epoch %d; restoring best checkpoint", model, epoch)
            params.restore(best_snapshot)
            result.diverged = True
            return params, result

        val_mae, val_rmse = rating_metrics(
            params.predict(monitor_tab.users, monitor_tab.items), monitor_tab.ratings)
        val_sum = val_mae + val_rmse
        result.history.append({
            "epoch": epoch,
            "train_loss": 0.5 * sq_sum / n,
            "val_mae": val_mae,
            "val_rmse": val_rmse,
        })
        if val_sum < result.best_val_sum:
            result.best_val_sum = val_sum
            result.best_epoch = epoch
            best_snapshot = params.snapshot()
        if stopper.update(val_sum):
            result.stopped_early = True
            break

    params.restore(best_snapshot)
    return params, result


def train_pmf(split: SplitDataset, cfg: MFConfig) -> tuple[MFParams, TrainResult]:
    return train_mf("pmf", split, cfg)


def train_funksvd(split: SplitDataset, cfg: MFConfig) -> tuple[MFParams, TrainResult]:
    return train_mf("funksvd", split, cfg)
