"""The rating-offset scoring network.

For a (user, item) pair the network aggregates the user's sampled
interaction neighbors (item embedding joined with the edge's level
embedding) under learned attention into a latent offset h_u, mirrors the
construction for the item side, scores the pair with an MLP over
h_u (+) h_v, optionally corrects that score with the coefficient-weighted
preference scores of trusted neighbors, and finally adds back the
alpha-weighted average-rating benchmark.

Latents are memoized per batch cache: a node reused by several examples
contributes one tape subgraph whose gradient collects every use.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, constant
from .data import MAX_LEVEL, DecentralizedStats
from .errors import ConfigError
from .graphs import MODE_DIFFERENCE, MODE_RAW, SampleSet, SocialGraph
from .params import ParamStore

ATTENTION_MODES = ("softmax", "avg", "max")
ACTIVATIONS = ("relu", "logistic")

N_DIFFERENCE_LEVELS = 2 * MAX_LEVEL + 1  # signed levels -4..+4
N_RATING_LEVELS = 5  # raw ratings 1..5, used by the raw-rating variant


@dataclass
class ModelConfig:
    embedding_size: int = 64  # D
    reservation: int = 10  # K, per-epoch cap on aggregated interaction neighbors
    delta: int = 1
    alpha: float = 1.0  # weight on the reconstructed average-rating term
    attention_mode: str = "softmax"
    use_social: bool = True
    use_relationship_coeff: bool = True
    use_rating_difference: bool = True
    social_mix: float = 0.5  # share of the own preference score in the fusion
    attention_hidden: int = 0  # 0 -> embedding_size
    fusion_hidden: int = 0  # 0 -> embedding_size
    activation: str = "relu"
    l2: float = 0.0

    def validate(self):
        if self.embedding_size < 1:
            raise ConfigError(f"embedding_size must be positive, got {self.embedding_size}")
        if self.reservation < 1:
            raise ConfigError(f"reservation must be positive, got {self.reservation}")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be non-negative, got {self.alpha}")
        if self.attention_mode not in ATTENTION_MODES:
            raise ConfigError(f"attention_mode must be one of {ATTENTION_MODES}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}")
        if not (0.0 <= self.social_mix <= 1.0):
            raise ConfigError(f"social_mix must lie in [0,1], got {self.social_mix}")
        if self.l2 < 0:
            raise ConfigError(f"l2 must be non-negative, got {self.l2}")
        return self

    def for_variant(self, variant: str) -> "ModelConfig":
        """Apply one named ablation substitution."""
        if variant == "full":
            return replace(self)
        if variant == "RC":
            return replace(self, use_relationship_coeff=False)
        if variant == "SN":
            return replace(self, use_social=False)
        if variant == "RD":
            return replace(self, use_rating_difference=False)
        if variant in ("avg", "max"):
            return replace(self, attention_mode=variant)
        raise ConfigError(f"unknown variant: {variant!r}")


class GDSRec:
    """Scoring network bound to one dataset's statistics and social graph."""

    def __init__(self, config: ModelConfig, n_users: int, n_items: int,
                 stats: DecentralizedStats, social: SocialGraph | None = None,
                 seed: int = 0):
        config.validate()
        if config.use_social and social is None:
            raise ConfigError("use_social requires a social graph")
        self.config = config
        self.n_users = n_users
        self.n_items = n_items
        self.stats = stats
        self.social = social
        self.params = self._init_params(seed)
        self._act = ad.relu if config.activation == "relu" else ad.sigmoid

    def _init_params(self, seed: int) -> ParamStore:
        cfg = self.config
        d = cfg.embedding_size
        att_h = cfg.attention_hidden or d
        fus_h = cfg.fusion_hidden or d
        store = ParamStore()
        emb_bound = 1.0 / np.sqrt(d)
        store.add_uniform("user_emb", (self.n_users, d), emb_bound, seed)
        store.add_uniform("item_emb", (self.n_items, d), emb_bound, seed)
        if cfg.use_rating_difference:
            store.add_uniform("level_emb", (N_DIFFERENCE_LEVELS, d), emb_bound, seed)
        else:
            store.add_uniform("level_emb", (N_RATING_LEVELS, d), emb_bound, seed)

        def affine_pair(name, out_dim, in_dim):
            bound = 1.0 / np.sqrt(in_dim)
            store.add_uniform(f"{name}_w", (out_dim, in_dim), bound, seed)
            store.add_uniform(f"{name}_b", (out_dim,), bound, seed)

        for side in ("user", "item"):
            affine_pair(f"{side}_agg", d, 2 * d)
            affine_pair(f"{side}_att1", att_h, 2 * d)
            affine_pair(f"{side}_att2", 1, att_h)
            affine_pair(f"{side}_out", d, d)
            store.add_uniform(f"{side}_cold", (d,), emb_bound, seed)
        affine_pair("pref1", fus_h, 2 * d)
        affine_pair("pref2", 1, fus_h)
        return store

    # -- neighborhood aggregation -------------------------------------------

    def _level_indices(self, levels: np.ndarray, mode: str) -> np.ndarray:
        if self.config.use_rating_difference:
            if mode != MODE_DIFFERENCE:
                raise ConfigError("graph was built with raw ratings but the model expects difference levels")
            return levels + MAX_LEVEL
        if mode != MODE_RAW:
            raise ConfigError("graph was built with difference levels but the model expects raw ratings")
        return levels - 1

    def attention_weights(self, feats: Tensor, center: Tensor, side: str, n: int) -> Tensor:
        if self.config.attention_mode == "avg":
            return constant(np.full(n, 1.0 / n))
        p = self.params
        paired = ad.hstack(feats, ad.tile_rows(center, n))
        hidden = self._act(ad.affine(paired, p[f"{side}_att1_w"], p[f"{side}_att1_b"]))
        scores = ad.reshape(ad.affine(hidden, p[f"{side}_att2_w"], p[f"{side}_att2_b"]), (n,))
        weights = ad.softmax(scores)
        if self.config.attention_mode == "max":
            weights = ad.broadcast_max(weights)
        return weights

    def _latent(self, side: str, node: int, neighbor_emb: str, neighbors: np.ndarray,
                levels: np.ndarray, mode: str, center_emb: str) -> Tensor:
        p = self.params
        if len(neighbors) == 0:
            return p[f"{side}_cold"]
        idx = self._level_indices(levels, mode)
        joined = ad.hstack(ad.gather(p[neighbor_emb], neighbors), ad.gather(p["level_emb"], idx))
        feats = self._act(ad.affine(joined, p[f"{side}_agg_w"], p[f"{side}_agg_b"]))
        weights = self.attention_weights(feats, ad.gather(p[center_emb], node), side, len(neighbors))
        agg = ad.weighted_sum(weights, feats)
        return self._act(ad.affine(agg, p[f"{side}_out_w"], p[f"{side}_out_b"]))

    def user_latent(self, u: int, samples: SampleSet, cache: dict | None = None) -> Tensor:
        """Latent offset h_u aggregated from u's sampled rated items."""
        key = ("u", u)
        if cache is not None and key in cache:
            return cache[key]
        items, levels = samples.user(u)
        h = self._latent("user", u, "item_emb", items, levels, samples.graph.mode, "user_emb")
        if cache is not None:
            cache[key] = h
        return h

    def item_latent(self, v: int, samples: SampleSet, cache: dict | None = None) -> Tensor:
        """Latent offset h_v aggregated from the sampled users who rated v."""
        key = ("i", v)
        if cache is not None and key in cache:
            return cache[key]
        users, levels = samples.item(v)
        h = self._latent("item", v, "user_emb", users, levels, samples.graph.mode, "item_emb")
        if cache is not None:
            cache[key] = h
        return h

    # -- scoring --------------------------------------------------------------

    def preference_score(self, h_u: Tensor, h_v: Tensor) -> Tensor:
        """Scalar decentralized preference for a pair of latent offsets.

        Unbounded on purpose: it predicts a residual against the averages,
        which is frequently negative.
        """
        p = self.params
        hidden = self._act(ad.affine(ad.concat(h_u, h_v), p["pref1_w"], p["pref1_b"]))
        return ad.reshape(ad.affine(hidden, p["pref2_w"], p["pref2_b"]), ())

    def _pair_preference(self, u: int, v: int, samples: SampleSet, cache: dict | None) -> Tensor:
        key = ("pref", u, v)
        if cache is not None and key in cache:
            return cache[key]
        s = self.preference_score(self.user_latent(u, samples, cache),
                                  self.item_latent(v, samples, cache))
        if cache is not None:
            cache[key] = s
        return s

    def fused_score(self, u: int, v: int, samples: SampleSet, cache: dict | None = None) -> Tensor:
        """Own preference mixed with the coefficient-weighted neighbor view.

        Without the social channel (or for users with no trusted neighbors)
        this is exactly the own preference score.
        """
        own = self._pair_preference(u, v, samples, cache)
        if not self.config.use_social or self.social.degree(u) == 0:
            return own
        nbrs = self.social.neighbor_ids[u]
        lams = self.social.neighbor_weights[u]
        nbr_scores = ad.stack([self._pair_preference(int(k), v, samples, cache) for k in nbrs])
        social_view = ad.dot(nbr_scores, constant(lams))
        beta = self.config.social_mix
        return ad.add(ad.scale(own, beta), ad.scale(social_view, 1.0 - beta))

    def benchmark(self, u: int, v: int) -> float:
        """The reconstructed average term added back onto the residual."""
        return 0.5 * self.config.alpha * (self.stats.user_avg[u] + self.stats.item_avg[v])

    def predict_score(self, u: int, v: int, samples: SampleSet, cache: dict | None = None) -> Tensor:
        return ad.add_const(self.fused_score(u, v, samples, cache), self.benchmark(u, v))

    def predict_many(self, users, items, samples: SampleSet) -> np.ndarray:
        """Raw predictions for aligned id arrays (no clipping)."""
        cache: dict = {}
        return np.array([
            self.predict_score(int(u), int(v), samples, cache).item()
            for u, v in zip(users, items)
        ])

    def batch_loss(self, users, items, targets, samples: SampleSet, loss: str = "mse") -> Tensor:
        """Mean squared (or absolute) error over a batch, plus optional L2."""
        if len(users) == 0:
            raise ValueError("batch_loss of an empty batch")
        cache: dict = {}
        preds = ad.stack([
            self.predict_score(int(u), int(v), samples, cache)
            for u, v in zip(users, items)
        ])
        diff = ad.sub_const(preds, np.asarray(targets, dtype=np.float64))
        n = len(users)
        if loss == "mse":
            out = ad.scale(ad.dot(diff, diff), 0.5 / n)
        elif loss == "mae":
            out = ad.scale(ad.tsum(ad.absval(diff)), 1.0 / n)
        else:
            raise ConfigError(f"unknown loss: {loss!r}")
        if self.config.l2 > 0.0:
            penalty = None
            for t in self.params.tensors():
                sq = ad.tsum(ad.mul(t, t))
                penalty = sq if penalty is None else ad.add(penalty, sq)
            out = ad.add(out, ad.scale(penalty, 0.5 * self.config.l2))
        return out


def fuse_scores(own: float, neighbor_scores, lambdas, mix: float = 0.5) -> float:
    """Plain-arithmetic reference for the fusion rule (used by reports/tests)."""
    neighbor_scores = np.asarray(neighbor_scores, dtype=np.float64)
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if len(neighbor_scores) == 0:
        return float(own)
    return float(mix * own + (1.0 - mix) * (lambdas @ neighbor_scores))
