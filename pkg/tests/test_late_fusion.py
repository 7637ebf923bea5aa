"""Rank aggregation rules, weight schedules and the ranked-list interchange file."""

import itertools
from fractions import Fraction

import numpy as np
import pytest

from src.fusion.late import (
    FusionInput,
    aggregate,
    average_rank,
    borda,
    fuse_ranked_files,
    fuse_user_lists,
    read_ranked_lists,
    rrf,
    weight_schedule,
    weighted_borda,
    write_ranked_lists,
)
from src.models.base import RankedList
from src.utils.errors import ArgumentError, ParseError
from tests.helpers import write_lines

A, B, C, D = 0, 1, 2, 3


def _input(lists, catalog_size=None, **kwargs):
    lists = [RankedList(0, tuple(items)) for items in lists]
    if catalog_size is None:
        catalog_size = max(max((len(lst.items) for lst in lists), default=1), 1)
    return FusionInput(lists=lists, catalog_size=catalog_size, **kwargs)


def _oracle(rule, lists, catalog_size, weights=None, rrf_k=60):
    """Naive exact recomputation of each rule over the union of listed items."""

    def rank(items, item):
        return items.index(item) + 1 if item in items else len(items) + 1

    union = sorted({item for items in lists for item in items})
    scores = {}
    for item in union:
        ranks = [rank(list(items), item) for items in lists]
        if rule == "borda":
            scores[item] = sum(catalog_size - r + 1 for r in ranks)
        elif rule == "wborda":
            scores[item] = sum(Fraction(w) * (catalog_size - r + 1) for w, r in zip(weights, ranks))
        elif rule == "avgrank":
            scores[item] = Fraction(sum(ranks), len(ranks))
        else:
            scores[item] = sum(Fraction(1, rrf_k + r) for r in ranks)
    if rule == "avgrank":
        return [item for item in sorted(union, key=lambda i: (scores[i], i))]
    return [item for item in sorted(union, key=lambda i: (-scores[i], i))]


def _arrangements(n_items):
    """Every non-empty ordered list drawn from ``n_items`` items."""
    items = range(n_items)
    return [p for size in range(1, n_items + 1) for p in itertools.permutations(items, size)]


def _dyadic_weights(m):
    return {1: (1.0,), 2: (0.75, 0.25), 3: (0.5, 0.25, 0.25)}[m]


def _check_all_rules(lists, catalog_size):
    fusion = _input(lists, catalog_size)
    weights = _dyadic_weights(len(lists))
    for rule in ("borda", "avgrank", "rrf"):
        assert list(aggregate(rule, fusion).items) == _oracle(rule, lists, catalog_size), (rule, lists)
    weighted = _input(lists, catalog_size, weights=weights)
    assert list(weighted_borda(weighted).items) == _oracle("wborda", lists, catalog_size, weights), lists


class TestOracleEquivalence:
    @pytest.mark.parametrize("n_items,n_systems", [(1, 3), (2, 3), (3, 3), (4, 2)])
    def test_exhaustive(self, n_items, n_systems):
        arrangements = _arrangements(n_items)
        for lists in itertools.product(arrangements, repeat=n_systems):
            _check_all_rules(lists, n_items)

    def test_sampled_five_items(self):
        rng = np.random.default_rng(5)
        arrangements = _arrangements(5)
        for _ in range(1500):
            n_systems = int(rng.integers(1, 4))
            lists = [arrangements[j] for j in rng.integers(0, len(arrangements), size=n_systems)]
            _check_all_rules(lists, int(rng.integers(5, 9)))


class TestBorda:
    def test_tie_broken_by_index(self):
        meta = borda(_input([[A, B, C], [B, A, C]], 3))
        assert meta.items == (A, B, C)
        assert meta.fused_scores == (5.0, 5.0, 2.0)

    def test_single_list_is_identity(self):
        assert borda(_input([[C, A, B]], 3)).items == (C, A, B)

    def test_missing_item_takes_list_length_plus_one(self):
        meta = borda(_input([[A, B], [C, D]], 4))
        assert dict(zip(meta.items, meta.fused_scores))[A] == 6.0

    def test_catalog_missing_rank(self):
        meta = borda(_input([[A, B], [C, D]], 4, missing_rank="catalog"))
        assert dict(zip(meta.items, meta.fused_scores))[A] == 5.0

    def test_catalog_smaller_than_list(self):
        with pytest.raises(ArgumentError):
            borda(_input([[A, B, C]], 2))


class TestWeightedBorda:
    def test_degenerate_weights_follow_first_list(self):
        assert weighted_borda(_input([[C, A, B], [A, B, C]], 3, weights=(1.0, 0.0))).items == (C, A, B)

    def test_uniform_weights_match_borda(self):
        lists = [[A, B, C], [B, C, A], [C, A]]
        uniform = weighted_borda(_input(lists, 4, weights=(1 / 3, 1 / 3, 1 / 3)))
        assert uniform.items == borda(_input(lists, 4)).items

    def test_hand_arithmetic(self):
        meta = weighted_borda(_input([[A, B], [B, A]], 2, weights=(0.9, 0.1)))
        assert meta.items == (A, B)
        np.testing.assert_allclose(meta.fused_scores, [1.9, 1.1])

    def test_weights_required(self):
        with pytest.raises(ArgumentError):
            weighted_borda(_input([[A], [B]], 2))

    @pytest.mark.parametrize("weights", [(0.5, 0.6), (1.5, -0.5), (1.0,)])
    def test_invalid_weights(self, weights):
        with pytest.raises(ArgumentError):
            _input([[A], [B]], 2, weights=weights)


class TestAverageRank:
    def test_symmetric_tie(self):
        meta = average_rank(_input([[A, B], [B, A]]))
        assert meta.items == (A, B)
        assert meta.fused_scores == (1.5, 1.5)

    def test_hand_arithmetic(self):
        meta = average_rank(_input([[A, B, C], [C, A, B]]))
        assert meta.items == (A, C, B)
        assert meta.fused_scores == (1.5, 2.0, 2.5)

    def test_unanimous_first(self):
        assert average_rank(_input([[D, A], [D, B], [D, C]], 4)).items[0] == D


class TestRrf:
    def test_single_list(self):
        meta = rrf(_input([[B, A, C]]))
        assert meta.items == (B, A, C)
        assert meta.fused_scores == (1 / 61, 1 / 62, 1 / 63)

    def test_unanimous_top_item(self):
        meta = rrf(_input([[A, B], [A, C]], 3))
        assert meta.items[0] == A
        assert meta.fused_scores[0] == pytest.approx(2 / 61)
        assert meta.fused_scores[0] == pytest.approx(0.032787, abs=1e-6)

    def test_zero_k(self):
        assert rrf(_input([[A, B], [B, C]], 3, rrf_k=0)).items == (B, A, C)

    def test_negative_k(self):
        with pytest.raises(ArgumentError):
            _input([[A]], 1, rrf_k=-1)


class TestInvariants:
    def test_permuting_systems(self):
        rng = np.random.default_rng(9)
        arrangements = _arrangements(5)
        for _ in range(300):
            lists = [arrangements[j] for j in rng.integers(0, len(arrangements), size=3)]
            weights = (0.5, 0.3, 0.2)
            for rule in ("borda", "avgrank", "rrf"):
                expected = aggregate(rule, _input(lists, 5))
                for order in itertools.permutations(range(3)):
                    shuffled = _input([lists[j] for j in order], 5)
                    assert aggregate(rule, shuffled) == expected
            expected = weighted_borda(_input(lists, 5, weights=weights)).items
            for order in itertools.permutations(range(3)):
                shuffled = _input([lists[j] for j in order], 5, weights=tuple(weights[j] for j in order))
                assert weighted_borda(shuffled).items == expected

    def test_identical_lists(self):
        lists = [[D, B, A, C]] * 3
        for rule in ("borda", "avgrank", "rrf"):
            assert aggregate(rule, _input(lists, 4)).items == (D, B, A, C)
        assert weighted_borda(_input(lists, 4, weights=(0.2, 0.3, 0.5))).items == (D, B, A, C)

    def test_output_covers_union(self):
        meta = rrf(_input([[A, C], [D]], 4))
        assert sorted(meta.items) == [A, C, D]

    def test_repeated_item_rejected(self):
        with pytest.raises(ArgumentError):
            _input([[A, A]], 2)

    def test_unknown_rule(self):
        with pytest.raises(ArgumentError):
            aggregate("condorcet", _input([[A]], 1))


class TestWeightSchedule:
    def test_uniform(self):
        assert weight_schedule("uniform", 4) == (0.25, 0.25, 0.25, 0.25)

    def test_linear_favours_earlier_systems(self):
        assert weight_schedule("linear", 3) == pytest.approx((0.5, 1 / 3, 1 / 6))

    def test_proportional(self):
        assert weight_schedule("proportional", 2, scores=[0.3, 0.1]) == pytest.approx((0.75, 0.25))

    def test_proportional_needs_scores(self):
        with pytest.raises(ArgumentError):
            weight_schedule("proportional", 2)

    def test_callable(self):
        weights = weight_schedule(lambda j, m: 1.0 / (j + 1), 2)
        assert weights == pytest.approx((2 / 3, 1 / 3))
        assert sum(weights) == pytest.approx(1.0)

    def test_zero_total(self):
        with pytest.raises(ArgumentError):
            weight_schedule("proportional", 2, scores=[0.0, 0.0])

    def test_unknown(self):
        with pytest.raises(ArgumentError):
            weight_schedule("harmonic", 2)


class TestUserLists:
    def test_missing_system_list_counts_as_empty(self):
        first = {0: RankedList(0, (A, B)), 1: RankedList(1, (C,))}
        second = {0: RankedList(0, (B, A))}
        fused = fuse_user_lists([first, second], catalog_size=4, rule="borda", depth=1)
        assert fused[0].items == (A,)
        assert fused[1].items == (C,)


class TestInterchangeFiles:
    def test_write_then_read(self, tmp_path):
        rankings = {1: RankedList(1, (2, 0), (0.5, 0.25)), 0: RankedList(0, (1,), (3.0,))}
        write_ranked_lists(tmp_path / "lists.tsv", rankings, ("u1", "u2"), ("i1", "i2", "i3"))
        lines = (tmp_path / "lists.tsv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "u1\ti2\t1\t3.0"
        assert read_ranked_lists(tmp_path / "lists.tsv") == {"u1": [("i2", 3.0)], "u2": [("i3", 0.5), ("i1", 0.25)]}

    def test_ranks_reorder_lines(self, tmp_path):
        path = write_lines(tmp_path / "lists.tsv", ["u\tb\t2\t0.1", "u\ta\t1\t0.9"])
        assert read_ranked_lists(path) == {"u": [("a", 0.9), ("b", 0.1)]}

    @pytest.mark.parametrize(
        "lines",
        [
            ["u\ta\t1"],
            ["u\ta\tone\t0.5"],
            ["u\ta\t0\t0.5"],
            ["u\ta\t1\t0.5", "u\tb\t1\t0.4"],
            ["u\ta\t1\t0.5", "u\ta\t2\t0.4"],
        ],
    )
    def test_malformed(self, tmp_path, lines):
        path = write_lines(tmp_path / "lists.tsv", lines)
        with pytest.raises(ParseError):
            read_ranked_lists(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_ranked_lists(tmp_path / "absent.tsv")

    def test_fuse_files_matches_in_process_rrf(self, tmp_path):
        first = write_lines(tmp_path / "a.tsv", ["1\t10\t1\t0.9", "1\t11\t2\t0.8", "2\t12\t1\t0.7"])
        second = write_lines(tmp_path / "b.tsv", ["1\t11\t1\t0.6", "1\t12\t2\t0.5", "2\t10\t1\t0.4"])
        fused, user_ids, item_ids = fuse_ranked_files([first, second], rule="rrf")
        assert user_ids == ("1", "2") and item_ids == ("10", "11", "12")

        expected = rrf(_input([[0, 1], [1, 2]], 3))
        assert fused[0].items == expected.items
        assert [item_ids[i] for i in fused[0].items] == ["11", "10", "12"]
        assert [item_ids[i] for i in fused[1].items] == ["10", "12"]
