"""Evaluation inputs and the per-run metric report."""

from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.corpus.interactions import InteractionLog
from src.corpus.splitting import SplitPlan
from src.utils.errors import ArgumentError

METRICS = ("recall", "precision", "ndcg", "hitrate", "coverage", "coldrate", "novelty", "ild", "calibration_bias")
BOUNDED = ("recall", "precision", "ndcg", "hitrate", "coverage", "coldrate", "calibration_bias")
COLDRATE_LEVELS = ("item", "user")

GenreDistribution = Mapping[str, float]


@dataclass(frozen=True, eq=False)
class EvalContext:
    """
    Everything the metrics need besides the ranked lists.

    Args:
        relevance: Held-out test items per user index
        popularity: Train interaction count per item index
        catalog_size: Number of items in the catalogue
        k: Cutoff
        item_features: Feature vector per item index (diversity)
        item_genres: Genre distribution per item index (calibration)
        history: Train items per user index (calibration)
    """

    relevance: Mapping[int, FrozenSet[int]]
    popularity: np.ndarray
    catalog_size: int
    k: int = 10
    item_features: Optional[Mapping[int, np.ndarray]] = None
    item_genres: Optional[Mapping[int, GenreDistribution]] = None
    history: Optional[Mapping[int, Sequence[int]]] = None

    def __post_init__(self):
        if self.k < 1:
            raise ArgumentError(f"k must be positive, got {self.k}")
        if self.catalog_size < 1:
            raise ArgumentError(f"catalog_size must be positive, got {self.catalog_size}")
        popularity = np.asarray(self.popularity, dtype=np.int64)
        if np.any(popularity < 0):
            raise ArgumentError("popularity counts must be non-negative")
        object.__setattr__(self, "popularity", popularity)
        object.__setattr__(self, "relevance", {int(u): frozenset(items) for u, items in self.relevance.items()})
        for item, distribution in (self.item_genres or {}).items():
            if distribution and abs(sum(distribution.values()) - 1.0) > 1e-9:
                raise ArgumentError(f"genre distribution of item {item} does not sum to 1")

    @classmethod
    def from_split(
        cls,
        log: InteractionLog,
        plan: SplitPlan,
        k: int = 10,
        item_features: Optional[Mapping[int, np.ndarray]] = None,
        item_genres: Optional[Mapping[int, GenreDistribution]] = None,
    ) -> "EvalContext":
        """Relevance from the test fold, popularity and history from the train fold."""
        relevance: Dict[int, set] = {}
        for row in plan.test_indices:
            relevance.setdefault(int(log.user_idx[row]), set()).add(int(log.item_idx[row]))
        history: Dict[int, list] = {}
        for row in plan.train_indices:
            history.setdefault(int(log.user_idx[row]), []).append(int(log.item_idx[row]))
        popularity = np.bincount(log.item_idx[plan.train_indices], minlength=log.n_items)
        return cls(
            relevance={user: frozenset(items) for user, items in relevance.items()},
            popularity=popularity,
            catalog_size=log.n_items,
            k=k,
            item_features=item_features,
            item_genres=item_genres,
            history=history,
        )


def genre_distributions(genres_by_item: Mapping[int, Sequence[str]]) -> Dict[int, Dict[str, float]]:
    """Spread each item's unit mass uniformly over its distinct genres; genre-less items are left out."""
    distributions = {}
    for item, genres in genres_by_item.items():
        distinct = list(dict.fromkeys(genres))
        if distinct:
            distributions[item] = {genre: 1.0 / len(distinct) for genre in distinct}
    return distributions


@dataclass(frozen=True)
class MetricReport:
    """
    Metric values at cutoff ``k``; ``None`` marks an undefined metric.

    ``extra`` holds the metrics that stay out of the results CSV
    (popularity bias, user-level cold rate).
    """

    k: int
    values: Dict[str, Optional[float]]
    users_evaluated: int = 0
    users_without_relevance: int = 0
    users_without_history: int = 0
    metadata: Dict[str, Any] = field(default_factory=dict)
    extra: Dict[str, Optional[float]] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Optional[float]:
        return self.values[name]

    def label(self, name: str) -> str:
        return f"{name}@{self.k}"

    def as_table(self) -> Sequence[Tuple[str, str]]:
        rows = []
        for name in METRICS:
            value = self.values.get(name)
            rows.append((self.label(name), "n/a" if value is None else f"{value:.4f}"))
        return rows
