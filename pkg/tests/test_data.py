"""Ingestion, splitting, statistics, and the difference-level rule."""

import math

import numpy as np
import pytest

from gdsrec import (DataError, RatingTable, compute_stats, difference_level,
                    load_ratings, load_trust, split_dataset)
from gdsrec.errors import ConfigError


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadRatings:
    def test_three_line_file(self, tmp_path):
        p = write(tmp_path / "r.csv", "10,100,5\n10,200,3\n20,100,4\n")
        table = load_ratings(p)
        assert table.n_users == 2
        assert table.n_items == 2
        assert len(table) == 3

    def test_header_is_optional(self, tmp_path):
        p = write(tmp_path / "r.csv", "user_id,item_id,rating\n1,2,3\n")
        assert len(load_ratings(p)) == 1

    def test_crlf_accepted(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_bytes(b"1,2,3\r\n4,5,2\r\n")
        assert len(load_ratings(p)) == 2

    def test_rating_out_of_range_reports_line(self, tmp_path):
        p = write(tmp_path / "r.csv", "1,2,3\n1,3,6\n")
        with pytest.raises(DataError, match=":2"):
            load_ratings(p)

    def test_malformed_line_reports_line(self, tmp_path):
        p = write(tmp_path / "r.csv", "1,2,3\n1,x,4\n")
        with pytest.raises(DataError, match=":2"):
            load_ratings(p)

    def test_empty_file_is_fatal(self, tmp_path):
        p = write(tmp_path / "r.csv", "")
        with pytest.raises(DataError):
            load_ratings(p)

    def test_duplicate_pair_keeps_last(self, tmp_path):
        p = write(tmp_path / "r.csv", "1,2,3\n1,2,5\n")
        table = load_ratings(p)
        assert len(table) == 1
        assert table.ratings[0] == 5.0

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_ratings(tmp_path / "nope.csv")

    def test_column_spec_permutation(self, tmp_path):
        p = write(tmp_path / "r.csv", "5,1,2\n")  # rating first
        table = load_ratings(p, columns=("rating", "user", "item"))
        assert table.ratings[0] == 5.0
        assert len(table) == 1


class TestLoadTrust:
    def test_directed_pairs(self, tmp_path):
        rp = write(tmp_path / "r.csv", "1,9,3\n2,9,4\n")
        table = load_ratings(rp)
        tp = write(tmp_path / "t.csv", "1,2\n2,1\n")
        trust = load_trust(tp, table.user_ids)
        assert len(trust) == 2

    def test_self_loops_dropped_and_counted(self, tmp_path):
        rp = write(tmp_path / "r.csv", "1,9,3\n2,9,4\n")
        table = load_ratings(rp)
        tp = write(tmp_path / "t.csv", "1,1\n1,2\n")
        trust = load_trust(tp, table.user_ids)
        assert len(trust) == 1
        assert trust.n_self_loops_dropped == 1

    def test_duplicates_deduplicated(self, tmp_path):
        rp = write(tmp_path / "r.csv", "1,9,3\n2,9,4\n")
        table = load_ratings(rp)
        tp = write(tmp_path / "t.csv", "1,2\n1,2\n")
        trust = load_trust(tp, table.user_ids)
        assert len(trust) == 1
        assert trust.n_duplicates_dropped == 1

    def test_unknown_users_extend_vocabulary(self, tmp_path):
        rp = write(tmp_path / "r.csv", "1,9,3\n")
        table = load_ratings(rp)
        assert table.n_users == 1
        tp = write(tmp_path / "t.csv", "1,777\n")
        trust = load_trust(tp, table.user_ids)
        assert len(trust) == 1
        assert table.n_users == 2  # rating-less user retained

    def test_malformed_is_fatal(self, tmp_path):
        rp = write(tmp_path / "r.csv", "1,9,3\n")
        table = load_ratings(rp)
        tp = write(tmp_path / "t.csv", "1\n")
        with pytest.raises(DataError):
            load_trust(tp, table.user_ids)


def make_table(n, seed=0):
    rng = np.random.default_rng(seed)
    return RatingTable(rng.integers(0, 50, n), rng.integers(0, 80, n),
                       rng.integers(1, 6, n), n_users=50, n_items=80)


class TestSplit:
    def test_8_1_1(self):
        s = split_dataset(make_table(10), 0.8, seed=1)
        assert (len(s.train), len(s.validation), len(s.test)) == (8, 1, 1)

    def test_ciao_sized_arithmetic(self):
        # oracle: floor(0.6 * 283319) = 169991; the remaining 113328 halves evenly
        n = 283319
        assert math.floor(0.6 * n) == 169991
        table = RatingTable(np.zeros(n, dtype=np.int64), np.zeros(n, dtype=np.int64),
                            np.ones(n), n_users=1, n_items=1)
        s = split_dataset(table, 0.6, seed=0)
        assert (len(s.train), len(s.validation), len(s.test)) == (169991, 56664, 56664)

    def test_same_seed_identical(self):
        t = make_table(101)
        a = split_dataset(t, 0.6, seed=9)
        b = split_dataset(t, 0.6, seed=9)
        np.testing.assert_array_equal(a.train.users, b.train.users)
        np.testing.assert_array_equal(a.test.items, b.test.items)

    def test_partition_property(self):
        t = make_table(137)
        s = split_dataset(t, 0.63, seed=4)
        assert len(s.train) + len(s.validation) + len(s.test) == len(t)
        assert abs(len(s.validation) - len(s.test)) <= 1
        whole = sorted(zip(t.users, t.items, t.ratings))
        parts = sorted(
            list(zip(s.train.users, s.train.items, s.train.ratings))
            + list(zip(s.validation.users, s.validation.items, s.validation.ratings))
            + list(zip(s.test.users, s.test.items, s.test.ratings)))
        assert whole == parts

    def test_bad_fraction(self):
        with pytest.raises(ConfigError):
            split_dataset(make_table(10), 1.0, seed=0)

    def test_empty_table(self):
        empty = RatingTable([], [], [], n_users=0, n_items=0)
        with pytest.raises(DataError):
            split_dataset(empty, 0.8, seed=0)


class TestStats:
    def test_single_rating_mean(self):
        t = RatingTable([0], [0], [4], n_users=1, n_items=1)
        assert compute_stats(t).user_avg[0] == 4.0

    def test_three_rating_mean(self):
        t = RatingTable([0, 0, 0], [0, 1, 2], [5, 3, 4], n_users=1, n_items=3)
        assert compute_stats(t).user_avg[0] == 4.0

    def test_absent_item_falls_back_to_global(self):
        t = RatingTable([0, 1], [0, 0], [2, 4], n_users=2, n_items=2)
        stats = compute_stats(t)
        assert stats.item_avg[1] == stats.global_avg == 3.0

    def test_user_mean_bounded_by_own_ratings(self):
        rng = np.random.default_rng(5)
        t = make_table(400, seed=5)
        stats = compute_stats(t)
        for u in np.unique(t.users):
            mine = t.ratings[t.users == u]
            assert mine.min() <= stats.user_avg[u] <= mine.max()

    def test_empty_train_is_fatal(self):
        empty = RatingTable([], [], [], n_users=0, n_items=0)
        with pytest.raises(DataError):
            compute_stats(empty)


class TestDifferenceLevel:
    def test_ceiling_arithmetic(self):
        assert difference_level(5, 3.4) == 1  # benchmark rounds up to 4

    def test_identity_case(self):
        assert difference_level(3, 3.0) == 0

    def test_extreme_attains_clamp_boundary(self):
        assert difference_level(1, 5.0) == -4
        assert difference_level(5, 1.0) == 4

    def test_antisymmetric_around_rounded_average(self):
        for rating in range(1, 6):
            for avg10 in range(10, 51):
                avg = avg10 / 10.0
                mirrored = 2 * math.ceil(avg) - rating
                if 1 <= mirrored <= 5:
                    assert difference_level(rating, avg) == -difference_level(mirrored, avg)


def test_records_iteration_matches_arrays():
    t = RatingTable([0, 1], [2, 3], [4, 5], n_users=2, n_items=4)
    recs = list(t.records())
    assert (recs[0].user_id, recs[0].item_id, recs[0].rating) == (0, 2, 4.0)
    assert (recs[1].user_id, recs[1].item_id, recs[1].rating) == (1, 3, 5.0)
