"""Rating and trust ingestion, train/validation/test splitting, and the
decentralization statistics (per-user / per-item average ratings).

Ratings arrive as CSV lines ``user_id,item_id,rating`` with integer fields
and an optional header; trust as ``trustor_id,trustee_id``. Raw ids may be
arbitrary integers and are re-indexed to contiguous ranges.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

log = logging.getLogger(__name__)

RATING_MIN = 1
RATING_MAX = 5

# widest representable signed gap between a rating and a rounded average
MAX_LEVEL = RATING_MAX - RATING_MIN


@dataclass(frozen=True)
class RatingRecord:
    user_id: int
    item_id: int
    rating: float


class IdMap:
    """Raw id -> contiguous index, growable until all loading is done."""

    def __init__(self):
        self._raw_to_idx: dict[int, int] = {}

    def add(self, raw: int) -> int:
        idx = self._raw_to_idx.get(raw)
        if idx is None:
            idx = len(self._raw_to_idx)
            self._raw_to_idx[raw] = idx
        return idx

    def get(self, raw: int):
        return self._raw_to_idx.get(raw)

    def __len__(self) -> int:
        return len(self._raw_to_idx)

    def __contains__(self, raw: int) -> bool:
        return raw in self._raw_to_idx

    def to_dict(self) -> dict[str, int]:
        return {str(raw): idx for raw, idx in self._raw_to_idx.items()}


class RatingTable:
    """Observed (user, item, rating) triples with id vocabularies.

    Vocabulary sizes come from the id maps when present, so a trust file
    that introduces rating-less users grows ``n_users`` for every view that
    shares the map.
    """

    def __init__(self, users, items, ratings, n_users=None, n_items=None,
                 user_ids: IdMap | None = None, item_ids: IdMap | None = None):
        self.users = np.asarray(users, dtype=np.int64)
        self.items = np.asarray(items, dtype=np.int64)
        self.ratings = np.asarray(ratings, dtype=np.float64)
        if not (len(self.users) == len(self.items) == len(self.ratings)):
            raise DataError("rating columns have mismatched lengths")
        self.user_ids = user_ids
        self.item_ids = item_ids
        self._n_users = n_users
        self._n_items = n_items

    @property
    def n_users(self) -> int:
        return len(self.user_ids) if self.user_ids is not None else self._n_users

    @property
    def n_items(self) -> int:
        return len(self.item_ids) if self.item_ids is not None else self._n_items

    def __len__(self) -> int:
        return len(self.ratings)

    def records(self):
        for u, v, r in zip(self.users, self.items, self.ratings):
            yield RatingRecord(int(u), int(v), float(r))

    def view(self, index) -> "RatingTable":
        return RatingTable(self.users[index], self.items[index], self.ratings[index],
                           n_users=self._n_users, n_items=self._n_items,
                           user_ids=self.user_ids, item_ids=self.item_ids)


@dataclass
class TrustEdges:
    """Directed (trustor, trustee) pairs; no self-loops, no duplicates."""

    pairs: np.ndarray  # (m, 2) int64
    n_self_loops_dropped: int = 0
    n_duplicates_dropped: int = 0

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass
class SplitDataset:
    train: RatingTable
    validation: RatingTable
    test: RatingTable
    split_seed: int
    train_fraction: float


@dataclass
class DecentralizedStats:
    """Average rating per user / item, with the global train mean as the
    fallback for entities that never appear in the training split."""

    user_avg: np.ndarray
    item_avg: np.ndarray
    global_avg: float


def _parse_int(field: str, path, lineno: int, what: str) -> int:
    try:
        return int(field.strip())
    except ValueError:
        raise DataError(f"{path}:{lineno}: malformed {what} field: {field!r}") from None


def load_ratings(path, columns=("user", "item", "rating"), delimiter: str = ",") -> RatingTable:
    """Parse a ratings CSV into a contiguously re-indexed table.

    The header line is optional. A duplicate (user, item) pair keeps the
    last rating seen. Any malformed line or out-of-range rating is fatal,
    reported with its line number.
    """
    cols = list(columns)
    if sorted(cols) != ["item", "rating", "user"]:
        raise ConfigError(f"rating column spec must name user/item/rating, got {columns}")
    u_at, v_at, r_at = cols.index("user"), cols.index("item"), cols.index("rating")

    path = Path(path)
    if not path.exists():
        raise DataError(f"ratings file not found: {path}")
    user_ids, item_ids = IdMap(), IdMap()
    by_pair: dict[tuple[int, int], float] = {}
    with open(path, encoding="utf-8-sig", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(delimiter)
            if lineno == 1 and any(not f.strip().lstrip("+-").isdigit() for f in fields):
                continue  # header
            if len(fields) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(fields)}")
            raw_u = _parse_int(fields[u_at], path, lineno, "user id")
            raw_v = _parse_int(fields[v_at], path, lineno, "item id")
            rating = _parse_int(fields[r_at], path, lineno, "rating")
            if not (RATING_MIN <= rating <= RATING_MAX):
                raise DataError(f"{path}:{lineno}: rating {rating} outside [{RATING_MIN},{RATING_MAX}]")
            u = user_ids.add(raw_u)
            v = item_ids.add(raw_v)
            by_pair[(u, v)] = float(rating)
    if not by_pair:
        raise DataError(f"{path}: no rating records")
    users = np.fromiter((k[0] for k in by_pair), dtype=np.int64, count=len(by_pair))
    items = np.fromiter((k[1] for k in by_pair), dtype=np.int64, count=len(by_pair))
    ratings = np.fromiter(by_pair.values(), dtype=np.float64, count=len(by_pair))
    table = RatingTable(users, items, ratings, user_ids=user_ids, item_ids=item_ids)
    log.info("loaded %d ratings: %d users, %d items", len(table), table.n_users, table.n_items)
    return table


def load_trust(path, user_ids: IdMap) -> TrustEdges:
    """Parse trustor,trustee pairs against (and extending) the user vocabulary.

    Self-loops are dropped with a warning count; duplicate pairs are
    deduplicated. Users that appear only in the trust file are added to the
    vocabulary so they stay addressable (they simply have no ratings).
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"trust file not found: {path}")
    seen: dict[tuple[int, int], None] = {}
    self_loops = 0
    duplicates = 0
    with open(path, encoding="utf-8-sig", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if lineno == 1 and any(not f.strip().lstrip("+-").isdigit() for f in fields):
                continue
            if len(fields) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 fields, got {len(fields)}")
            raw_a = _parse_int(fields[0], path, lineno, "trustor id")
            raw_b = _parse_int(fields[1], path, lineno, "trustee id")
            if raw_a == raw_b:
                self_loops += 1
                continue
            pair = (user_ids.add(raw_a), user_ids.add(raw_b))
            if pair in seen:
                duplicates += 1
            else:
                seen[pair] = None
    if self_loops:
        log.warning("dropped %d self-loop trust pairs", self_loops)
    pairs = np.array(list(seen), dtype=np.int64).reshape(-1, 2)
    return TrustEdges(pairs, n_self_loops_dropped=self_loops, n_duplicates_dropped=duplicates)


def split_dataset(table: RatingTable, train_fraction: float, seed: int) -> SplitDataset:
    """Shuffle by seed and cut into train plus equal-as-possible val/test."""
    if not (0.0 < train_fraction < 1.0):
        raise ConfigError(f"train_fraction must lie in (0,1), got {train_fraction}")
    n = len(table)
    if n == 0:
        raise DataError("cannot split an empty rating table")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = math.floor(train_fraction * n)
    rest = n - n_train
    n_val = rest // 2
    return SplitDataset(
        train=table.view(perm[:n_train]),
        validation=table.view(perm[n_train:n_train + n_val]),
        test=table.view(perm[n_train + n_val:]),
        split_seed=seed,
        train_fraction=train_fraction,
    )


def compute_stats(train: RatingTable) -> DecentralizedStats:
    """Arithmetic-mean ratings per user and item over the training split only.

    Entities with no training ratings fall back to the global train mean so
    they remain predictable at evaluation time.
    """
    if len(train) == 0:
        raise DataError("cannot compute statistics from an empty training split")
    global_avg = float(train.ratings.mean())

    def side_avg(ids, count):
        sums = np.bincount(ids, weights=train.ratings, minlength=count)
        cnts = np.bincount(ids, minlength=count)
        avg = np.full(count, global_avg)
        seen = cnts > 0
        avg[seen] = sums[seen] / cnts[seen]
        return avg

    return DecentralizedStats(
        user_avg=side_avg(train.users, train.n_users),
        item_avg=side_avg(train.items, train.n_items),
        global_avg=global_avg,
    )


def difference_levels(ratings: np.ndarray, avgs: np.ndarray) -> np.ndarray:
    """Vectorized signed gap between ratings and rounded-up averages.

    This is the single home of the rounding rule: the average is rounded up
    to the next integer before differencing, and the result is clamped to
    [-MAX_LEVEL, MAX_LEVEL]. For in-range inputs the clamp is never active.
    """
    d = np.asarray(ratings, dtype=np.int64) - np.ceil(avgs).astype(np.int64)
    return np.clip(d, -MAX_LEVEL, MAX_LEVEL)


def difference_level(rating: int, avg: float) -> int:
    """Scalar form of :func:`difference_levels`; index offset +MAX_LEVEL maps
    the signed result into the difference-embedding vocabulary."""
    return int(difference_levels(np.array([rating]), np.array([avg]))[0])
