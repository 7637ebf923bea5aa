"""Interaction loading, k-core filtering, splitting and dataset statistics."""

import numpy as np
import pytest

from src.corpus.filtering import k_core_filter
from src.corpus.interactions import InteractionLog, external_sort_key, load_interactions
from src.corpus.splitting import SplitPlan, simulate_cold_start, split, validation_split
from src.corpus.stats import dataset_stats
from src.corpus.synthetic import planted_corpus
from src.utils.errors import (
    ArgumentError,
    DegenerateSplitError,
    EmptyAfterFilterError,
    EmptyCorpusError,
    ParseError,
)
from tests.helpers import write_lines


def _log(events):
    """Events as (user, item, timestamp) with rating 1."""
    return InteractionLog.from_records((u, i, 1.0, t) for u, i, t in events)


def _random_log(rng):
    n_events = int(rng.integers(1, 30))
    users = rng.integers(1, 9, size=n_events)
    items = rng.integers(1, 9, size=n_events)
    stamps = rng.integers(0, 20, size=n_events)
    return _log((str(u), str(i), int(t)) for u, i, t in zip(users, items, stamps))


class TestLoading:
    def test_duplicates_collapse_to_latest(self, four_line_tsv):
        log = load_interactions(four_line_tsv)
        assert log.n_users == 2 and log.n_items == 2 and log.n_events == 3
        rows = {(log.users[u], log.items[i]): r for u, i, r in zip(log.user_idx, log.item_idx, log.ratings)}
        assert rows[("2", "10")] == 5.0
        assert rows[("1", "11")] == 4.0

    def test_movielens_line(self, tmp_path):
        path = write_lines(tmp_path / "ratings.dat", ["1::1193::5::978300760"])
        log = load_interactions(path, "movielens_dat")
        assert log.users == ("1",) and log.items == ("1193",)
        assert log.ratings.tolist() == [5.0]
        assert log.timestamps.tolist() == [978300760]

    def test_csv_header_skipped(self, tmp_path):
        path = write_lines(tmp_path / "ratings.csv", ["userId,movieId,rating,timestamp", "1,2,3.5,10"])
        assert load_interactions(path, "csv").n_events == 1

    def test_empty_file(self, tmp_path):
        path = write_lines(tmp_path / "empty.tsv", [])
        with pytest.raises(EmptyCorpusError):
            load_interactions(path)

    def test_bad_line_names_position(self, tmp_path):
        path = write_lines(tmp_path / "bad.tsv", ["1\t2\t3\t4", "1\t2\tx\t4"])
        with pytest.raises(ParseError) as info:
            load_interactions(path)
        assert info.value.line == 2

    def test_unknown_format(self, four_line_tsv):
        with pytest.raises(ArgumentError):
            load_interactions(four_line_tsv, "parquet")

    def test_numeric_ids_sort_numerically(self):
        assert sorted(["10", "9", "a", "100"], key=external_sort_key) == ["9", "10", "100", "a"]


class TestKCore:
    def test_k1_is_identity(self):
        log = _log([("1", "a", 1), ("2", "b", 2), ("2", "a", 3)])
        assert k_core_filter(log, 1) == log

    def test_fixpoint(self):
        log = _log([("u1", "a", 1), ("u1", "b", 2), ("u2", "a", 3), ("u3", "a", 4), ("u3", "b", 5)])
        filtered = k_core_filter(log, 2)
        assert filtered.users == ("u1", "u3")
        assert filtered.items == ("a", "b")
        assert filtered.n_events == 4

    def test_star_graph_empties(self):
        log = _log([("1", str(i), i) for i in range(5)])
        with pytest.raises(EmptyAfterFilterError):
            k_core_filter(log, 2)

    def test_rejects_nonpositive_k(self):
        with pytest.raises(ArgumentError):
            k_core_filter(_log([("1", "a", 1)]), 0)


class TestSplit:
    def test_temporal_holds_out_latest(self):
        log = _log([("1", "a", 3), ("1", "b", 1), ("2", "a", 4), ("2", "b", 2)])
        plan = split(log, "temporal", 0.25, seed=0)
        assert plan.test_indices.tolist() == [2]

    def test_per_user_latest_event(self):
        log = _log([("1", "a", 1), ("1", "b", 2)])
        plan = split(log, "per_user", 0.5, seed=0)
        assert log.timestamps[plan.train_indices].tolist() == [1]
        assert log.timestamps[plan.test_indices].tolist() == [2]

    @pytest.mark.parametrize("strategy", ["random", "temporal"])
    @pytest.mark.parametrize(
        "n_events, ratio, n_test",
        [(10, 0.2, 2), (10, 0.25, 3), (3, 0.9, 3), (1, 0.5, 1)],
    )
    def test_test_fold_size_is_ceiling(self, strategy, n_events, ratio, n_test):
        log = _log([(str(e % 3), str(e), e) for e in range(n_events)])
        plan = split(log, strategy, ratio, seed=0)
        assert len(plan.test_indices) == n_test
        assert len(plan.train_indices) == n_events - n_test

    def test_random_is_seeded(self):
        log = planted_corpus(n_users=20, n_items=15, per_user=5, seed=1).log
        assert split(log, "random", 0.2, seed=4) == split(log, "random", 0.2, seed=4)
        assert split(log, "random", 0.2, seed=4) != split(log, "random", 0.2, seed=5)

    @pytest.mark.parametrize("ratio", [0.0, 1.0, -0.1])
    def test_ratio_bounds(self, ratio):
        with pytest.raises(ArgumentError):
            split(_log([("1", "a", 1), ("1", "b", 2)]), "random", ratio, seed=0)

    def test_validation_fold_stays_inside_train(self):
        log = planted_corpus(n_users=20, n_items=15, per_user=5, seed=1).log
        plan = split(log, "random", 0.2, seed=0)
        validation = validation_split(log, plan, 0.1, seed=0)
        assert validation.test_set <= plan.train_set
        assert validation.train_set | validation.test_set == plan.train_set
        assert not validation.test_set & plan.test_set


class TestColdStart:
    def test_zero_fraction_is_identity(self):
        log = _log([("1", "a", 1), ("1", "b", 2), ("2", "a", 3)])
        plan = split(log, "random", 0.3, seed=0)
        assert simulate_cold_start(plan, log, 0.0, seed=0) == plan

    def test_one_of_two_items_goes_cold(self):
        log = _log([("1", "a", 1), ("1", "b", 2), ("2", "a", 3), ("2", "b", 4), ("3", "c", 5)])
        plan = SplitPlan(train_indices=[0, 1, 4], test_indices=[2, 3], strategy="random", test_ratio=0.4, seed=0)
        cold = simulate_cold_start(plan, log, 0.5, seed=0)
        assert len(cold.cold_items) == 1
        train_items = set(log.item_idx[cold.train_indices].tolist())
        (item,) = cold.cold_items
        assert item not in train_items
        assert train_items & {log.item_index["a"], log.item_index["b"]}

    def test_user_losing_every_train_event_stays_in_test(self):
        log = _log([("1", "a", 1), ("2", "a", 2), ("2", "b", 3)])
        plan = SplitPlan(train_indices=[0, 2], test_indices=[1], strategy="random", test_ratio=0.3, seed=0)
        cold = simulate_cold_start(plan, log, 0.5, seed=0)
        assert log.user_index["1"] not in set(log.user_idx[cold.train_indices].tolist())
        assert log.user_index["1"] in set(log.user_idx[cold.test_indices].tolist())

    def test_no_train_left(self):
        log = _log([("1", "a", 1), ("2", "a", 2)])
        plan = SplitPlan(train_indices=[0], test_indices=[1], strategy="random", test_ratio=0.5, seed=0)
        with pytest.raises(DegenerateSplitError):
            simulate_cold_start(plan, log, 0.5, seed=0)


class TestInvariants:
    def test_randomized_corpora(self):
        rng = np.random.default_rng(2024)
        for trial in range(1000):
            log = _random_log(rng)
            everything = set(range(log.n_events))
            strategy = ("random", "temporal", "per_user")[trial % 3]
            ratio = float(rng.uniform(0.05, 0.95))
            plan = split(log, strategy, ratio, seed=trial)

            assert plan.train_set | plan.test_set == everything
            assert not plan.train_set & plan.test_set
            if strategy == "temporal" and len(plan.test_indices) and len(plan.train_indices):
                assert log.timestamps[plan.train_indices].max() <= log.timestamps[plan.test_indices].min()
            if strategy == "per_user":
                for user in range(log.n_users):
                    events = np.flatnonzero(log.user_idx == user)
                    if len(events) >= 2:
                        assert set(events.tolist()) & plan.train_set

            k = int(rng.integers(1, 4))
            try:
                core = k_core_filter(log, k)
            except EmptyAfterFilterError:
                pass
            else:
                assert np.bincount(core.user_idx).min() >= k
                assert np.bincount(core.item_idx).min() >= k
                assert k_core_filter(core, k) == core

            if len(plan.test_indices):
                try:
                    cold = simulate_cold_start(plan, log, float(rng.uniform(0.1, 0.9)), seed=trial)
                except DegenerateSplitError:
                    continue
                assert cold.train_set | cold.test_set == everything
                assert not cold.cold_items & set(log.item_idx[cold.train_indices].tolist())


class TestStats:
    def test_fixture_counts(self, four_line_tsv):
        stats = dataset_stats(load_interactions(four_line_tsv))
        assert (stats.n_interactions, stats.n_users, stats.n_items) == (3, 2, 2)
        assert stats.avg_per_user == 1.5
        assert stats.avg_per_item == 1.5
        assert stats.density == 0.75

    def test_single_event(self):
        stats = dataset_stats(_log([("1", "a", 1)]))
        assert stats.density == 1.0 and stats.avg_per_user == 1.0

    def test_half_density(self):
        stats = dataset_stats(_log([("1", "a", 1), ("1", "b", 2), ("2", "c", 3)]))
        assert stats.density == 0.5

    def test_empty_log(self):
        log = _log([("1", "a", 1)]).take([])
        with pytest.raises(EmptyCorpusError):
            dataset_stats(log)
