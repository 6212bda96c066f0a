"""Interaction and social adjacency construction, plus per-epoch neighbor
sampling (node dropout with a reservation cap K).

Interaction edges carry integer levels: by default the signed gap between
the edge's rating and the *other* side's average (user-side edges difference
against the item average and vice versa); a variant flag stores the raw
rating instead.

Social ties get relationship coefficients: the strength of (i -> k) counts
co-rated items whose ratings differ by at most delta, normalized over i's
neighborhood. Users whose neighborhood has zero total strength fall back to
uniform weights rather than losing the social channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DecentralizedStats, RatingTable, TrustEdges, difference_levels
from .errors import ConfigError

MODE_DIFFERENCE = "difference"
MODE_RAW = "raw"

_USER_SIDE_SALT = 0
_ITEM_SIDE_SALT = 1


@dataclass
class InteractionGraph:
    user_items: list  # per user: np.ndarray of item ids
    user_levels: list  # per user: np.ndarray of levels aligned with user_items
    item_users: list  # per item: np.ndarray of user ids
    item_levels: list
    mode: str = MODE_DIFFERENCE


@dataclass
class SocialGraph:
    neighbor_ids: list  # per user: np.ndarray of trusted user ids
    neighbor_weights: list  # per user: np.ndarray of coefficients summing to 1

    def degree(self, u: int) -> int:
        return len(self.neighbor_ids[u])


@dataclass
class NeighborSample:
    node_id: int
    kept: np.ndarray  # sorted indices into the node's full neighbor list
    epoch: int
    seed: int


def _group_by(keys: np.ndarray, count: int):
    """Split positions 0..len(keys) into per-key index arrays."""
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]
    boundaries = np.searchsorted(sorted_keys, np.arange(count + 1))
    return [order[boundaries[k]:boundaries[k + 1]] for k in range(count)]


def build_interaction_graph(train: RatingTable, stats: DecentralizedStats,
                            use_rating_difference: bool = True) -> InteractionGraph:
    """Bipartite adjacency with per-edge levels.

    With ``use_rating_difference`` (the default), each direction stores a
    signed difference level; otherwise both directions store the raw rating
    (the variant that learns from undecentralized data).
    """
    if use_rating_difference:
        user_side = difference_levels(train.ratings, stats.item_avg[train.items])
        item_side = difference_levels(train.ratings, stats.user_avg[train.users])
        mode = MODE_DIFFERENCE
    else:
        user_side = train.ratings.astype(np.int64)
        item_side = user_side
        mode = MODE_RAW

    by_user = _group_by(train.users, train.n_users)
    by_item = _group_by(train.items, train.n_items)
    return InteractionGraph(
        user_items=[train.items[ix] for ix in by_user],
        user_levels=[user_side[ix] for ix in by_user],
        item_users=[train.users[ix] for ix in by_item],
        item_levels=[item_side[ix] for ix in by_item],
        mode=mode,
    )


def compute_relationship_coefficients(train: RatingTable, trust: TrustEdges,
                                      delta: int, uniform: bool = False) -> SocialGraph:
    """Normalized tie strengths over each user's trusted neighbors.

    strength(i -> k) = number of items both rated whose ratings differ by at
    most ``delta`` (counted on the training split, raw ratings). Weights are
    strength / total strength over the neighborhood; a zero total (or the
    ``uniform`` ablation flag) yields 1/degree for every neighbor.
    """
    if not isinstance(delta, (int, np.integer)) or delta < 0:
        raise ConfigError(f"delta must be a non-negative integer, got {delta!r}")
    n_users = train.n_users
    neighbors: list[list[int]] = [[] for _ in range(n_users)]
    for a, b in trust.pairs:
        neighbors[a].append(int(b))

    by_user = _group_by(train.users, n_users)
    rated: list[dict] = [
        dict(zip(train.items[ix].tolist(), train.ratings[ix].tolist())) for ix in by_user
    ]

    ids: list[np.ndarray] = []
    weights: list[np.ndarray] = []
    empty_i = np.empty(0, dtype=np.int64)
    empty_w = np.empty(0, dtype=np.float64)
    for i in range(n_users):
        nbrs = neighbors[i]
        if not nbrs:
            ids.append(empty_i)
            weights.append(empty_w)
            continue
        nbr_arr = np.array(nbrs, dtype=np.int64)
        if uniform:
            ids.append(nbr_arr)
            weights.append(np.full(len(nbrs), 1.0 / len(nbrs)))
            continue
        mine = rated[i]
        strengths = np.zeros(len(nbrs))
        for j, k in enumerate(nbrs):
            theirs = rated[k]
            if len(theirs) < len(mine):
                small, big = theirs, mine
            else:
                small, big = mine, theirs
            t = 0
            for item, r in small.items():
                other = big.get(item)
                if other is not None and abs(r - other) <= delta:
                    t += 1
            strengths[j] = t
        total = strengths.sum()
        if total == 0.0:
            weights.append(np.full(len(nbrs), 1.0 / len(nbrs)))
        else:
            weights.append(strengths / total)
        ids.append(nbr_arr)
    return SocialGraph(neighbor_ids=ids, neighbor_weights=weights)


def export_social_csv(social: SocialGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("user,neighbor,lambda\n")
        for u, (ids, ws) in enumerate(zip(social.neighbor_ids, social.neighbor_weights)):
            for k, w in zip(ids, ws):
                fh.write(f"{u},{k},{w:.10g}\n")


def sample_neighbors(full_list, k: int, seed: int, epoch: int, node_id: int,
                     salt: int = 0) -> NeighborSample:
    """Reservation sampling: keep at most ``k`` neighbors, resampled per epoch.

    The draw is keyed by (seed, epoch, node_id, salt), so a fixed key always
    yields the same subset; evaluation freezes epoch 0.
    """
    if k <= 0:
        raise ConfigError(f"neighbor reservation k must be positive, got {k}")
    n = len(full_list)
    if n <= k:
        kept = np.arange(n, dtype=np.int64)
    else:
        rng = np.random.default_rng(np.random.SeedSequence([seed, epoch, node_id, salt]))
        kept = np.sort(rng.choice(n, size=k, replace=False)).astype(np.int64)
    return NeighborSample(node_id=node_id, kept=kept, epoch=epoch, seed=seed)


class SampleSet:
    """Frozen neighbor samples for one (seed, epoch), cached per node."""

    def __init__(self, graph: InteractionGraph, k: int, seed: int, epoch: int):
        self.graph = graph
        self.k = k
        self.seed = seed
        self.epoch = epoch
        self._user_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._item_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def user(self, u: int):
        """Sampled (item ids, levels) for user u."""
        hit = self._user_cache.get(u)
        if hit is None:
            items = self.graph.user_items[u]
            s = sample_neighbors(items, self.k, self.seed, self.epoch, u, _USER_SIDE_SALT)
            hit = (items[s.kept], self.graph.user_levels[u][s.kept])
            self._user_cache[u] = hit
        return hit

    def item(self, v: int):
        """Sampled (user ids, levels) for item v."""
        hit = self._item_cache.get(v)
        if hit is None:
            users = self.graph.item_users[v]
            s = sample_neighbors(users, self.k, self.seed, self.epoch, v, _ITEM_SIDE_SALT)
            hit = (users[s.kept], self.graph.item_levels[v][s.kept])
            self._item_cache[v] = hit
        return hit
