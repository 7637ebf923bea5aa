"""Train/test splitting and item cold-start simulation."""

import math
from dataclasses import dataclass, replace
from typing import FrozenSet

import numpy as np

from src.corpus.interactions import InteractionLog
from src.utils.errors import ArgumentError, DegenerateSplitError, EmptyCorpusError
from src.utils.log import get_logger

logger = get_logger(__name__)

STRATEGIES = ("random", "temporal", "per_user")


@dataclass(frozen=True, eq=False)
class SplitPlan:
    """Disjoint train/test event index sets over one InteractionLog."""

    train_indices: np.ndarray
    test_indices: np.ndarray
    strategy: str
    test_ratio: float
    seed: int
    cold_items: FrozenSet[int] = frozenset()

    def __post_init__(self):
        for name in ("train_indices", "test_indices"):
            array = np.sort(np.asarray(getattr(self, name), dtype=np.int64))
            array.setflags(write=False)
            object.__setattr__(self, name, array)
        object.__setattr__(self, "cold_items", frozenset(int(i) for i in self.cold_items))

    @property
    def train_set(self) -> FrozenSet[int]:
        return frozenset(self.train_indices.tolist())

    @property
    def test_set(self) -> FrozenSet[int]:
        return frozenset(self.test_indices.tolist())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SplitPlan):
            return NotImplemented
        return (
            np.array_equal(self.train_indices, other.train_indices)
            and np.array_equal(self.test_indices, other.test_indices)
            and self.strategy == other.strategy
            and self.test_ratio == other.test_ratio
            and self.seed == other.seed
            and self.cold_items == other.cold_items
        )

    __hash__ = None


def _ceil_count(ratio: float, n: int) -> int:
    # round first so that 0.2 * 10 stays 2 instead of 2.0000000000000004 -> 3
    return math.ceil(round(ratio * n, 9))


def _check_ratio(test_ratio: float):
    if not 0 < test_ratio < 1:
        raise ArgumentError(f"test_ratio must lie in (0, 1), got {test_ratio}")


def split(log: InteractionLog, strategy: str, test_ratio: float, seed: int) -> SplitPlan:
    """
    Partition the events of a log into train and test.

    Args:
        log: Interaction log to split
        strategy: ``random``, ``temporal`` or ``per_user``
        test_ratio: Fraction of events (per user for ``per_user``) held out
        seed: Seed for the ``random`` strategy

    Returns:
        SplitPlan whose train and test indices partition every event
    """
    _check_ratio(test_ratio)
    if strategy not in STRATEGIES:
        raise ArgumentError(f"unknown split strategy '{strategy}' (allowed: {', '.join(STRATEGIES)})")
    n = log.n_events
    if n == 0:
        raise EmptyCorpusError("cannot split an empty log")

    positions = np.arange(n)
    if strategy == "random":
        n_test = _ceil_count(test_ratio, n)
        rng = np.random.default_rng(seed)
        test = rng.choice(n, size=n_test, replace=False)
    elif strategy == "temporal":
        n_test = _ceil_count(test_ratio, n)
        chronological = np.lexsort((positions, log.timestamps))
        test = chronological[n - n_test:]
    else:
        order = np.lexsort((positions, log.timestamps, log.user_idx))
        boundaries = np.flatnonzero(np.diff(log.user_idx[order])) + 1
        held_out = []
        for events in np.split(order, boundaries):
            n_user = len(events)
            if n_user < 2:
                continue
            n_test = min(_ceil_count(test_ratio, n_user), n_user - 1)
            held_out.append(events[n_user - n_test:])
        test = np.concatenate(held_out) if held_out else np.array([], dtype=np.int64)

    is_test = np.zeros(n, dtype=bool)
    is_test[test] = True
    plan = SplitPlan(
        train_indices=np.flatnonzero(~is_test),
        test_indices=np.flatnonzero(is_test),
        strategy=strategy,
        test_ratio=test_ratio,
        seed=seed,
    )
    logger.info(f"{strategy} split: {len(plan.train_indices)} train / {len(plan.test_indices)} test events")
    return plan


def simulate_cold_start(plan: SplitPlan, log: InteractionLog, item_fraction: float, seed: int) -> SplitPlan:
    """
    Turn a fraction of the test items into cold items.

    Samples ``ceil(item_fraction * |items with test events|)`` items and moves
    every one of their train events into the test fold, so that they are
    unseen during training.
    """
    if not 0 <= item_fraction < 1:
        raise ArgumentError(f"item_fraction must lie in [0, 1), got {item_fraction}")
    if item_fraction == 0:
        return plan

    candidates = np.unique(log.item_idx[plan.test_indices])
    n_cold = min(_ceil_count(item_fraction, len(candidates)), len(candidates))
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(candidates, size=n_cold, replace=False))

    is_cold = np.zeros(log.n_items, dtype=bool)
    is_cold[chosen] = True
    evicted = is_cold[log.item_idx[plan.train_indices]]
    train = plan.train_indices[~evicted]
    if len(train) == 0:
        raise DegenerateSplitError(
            f"cold-start fraction {item_fraction} leaves no training events"
        )
    test = np.union1d(plan.test_indices, plan.train_indices[evicted])

    logger.info(f"Cold-start simulation: {n_cold} cold items, {int(evicted.sum())} train events evicted")
    return replace(
        plan,
        train_indices=train,
        test_indices=test,
        cold_items=plan.cold_items | frozenset(chosen.tolist()),
    )


def validation_split(log: InteractionLog, plan: SplitPlan, ratio: float = 0.1, seed: int = 0) -> SplitPlan:
    """
    Carve a validation fold out of a plan's train events.

    The returned plan indexes the same log: its ``test_indices`` are the
    validation events and its ``train_indices`` the remaining train events.
    The original test fold is excluded from both.
    """
    train_log = log.take(plan.train_indices)
    inner = split(train_log, plan.strategy, ratio, seed)
    return SplitPlan(
        train_indices=plan.train_indices[inner.train_indices],
        test_indices=plan.train_indices[inner.test_indices],
        strategy=plan.strategy,
        test_ratio=ratio,
        seed=seed,
    )
