"""k-core filtering of the user–item interaction graph."""

import numpy as np

from src.corpus.interactions import InteractionLog
from src.utils.errors import ArgumentError, EmptyAfterFilterError
from src.utils.log import get_logger

logger = get_logger(__name__)


def k_core_filter(log: InteractionLog, k: int) -> InteractionLog:
    """
    Return the maximal sublog where every user and every item has >= k events.

    Users and items below the threshold are removed repeatedly until nothing
    changes; the vocabularies of the result are re-densified.
    """
    if k < 1:
        raise ArgumentError(f"k must be a positive integer, got {k}")

    keep = np.ones(log.n_events, dtype=bool)
    rounds = 0
    while True:
        rounds += 1
        user_degree = np.bincount(log.user_idx[keep], minlength=log.n_users)
        item_degree = np.bincount(log.item_idx[keep], minlength=log.n_items)
        refined = keep & (user_degree[log.user_idx] >= k) & (item_degree[log.item_idx] >= k)
        if refined.sum() == keep.sum():
            break
        keep = refined

    if not keep.any():
        raise EmptyAfterFilterError(k)

    filtered = log.take(np.flatnonzero(keep)).compact()
    logger.info(
        f"{k}-core reached after {rounds} round(s): kept {filtered.n_events}/{log.n_events} events, "
        f"{filtered.n_users} users, {filtered.n_items} items"
    )
    return filtered
