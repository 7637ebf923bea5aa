"""Dataset characteristics."""

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from src.corpus.interactions import InteractionLog
from src.utils.errors import EmptyCorpusError


@dataclass(frozen=True)
class DatasetStats:
    n_interactions: int
    n_users: int
    n_items: int
    avg_per_user: float
    avg_per_item: float
    density: float

    def as_table(self) -> List[Tuple[str, str]]:
        """Rows in the layout of the dataset characteristics table."""
        return [
            ("Total Interactions (|R|)", f"{self.n_interactions:,}"),
            ("Number of Users (|U|)", f"{self.n_users:,}"),
            ("Number of Items (|I|)", f"{self.n_items:,}"),
            ("Avg. Ratings per User (|R|/|U|)", f"{self.avg_per_user:.2f}"),
            ("Avg. Ratings per Item (|R|/|I|)", f"{self.avg_per_item:.2f}"),
            ("Density (|R|/(|U|*|I|), fraction)", f"{self.density:.4f}"),
        ]


def dataset_stats(log: InteractionLog) -> DatasetStats:
    """Count interactions, users and items that actually carry events."""
    if log.n_events == 0:
        raise EmptyCorpusError("dataset statistics need at least one interaction")
    n = log.n_events
    n_users = len(np.unique(log.user_idx))
    n_items = len(np.unique(log.item_idx))
    return DatasetStats(
        n_interactions=n,
        n_users=n_users,
        n_items=n_items,
        avg_per_user=n / n_users,
        avg_per_item=n / n_items,
        density=n / (n_users * n_items),
    )
