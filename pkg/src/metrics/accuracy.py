"""Top-K accuracy metrics: recall, precision, nDCG and hit rate."""

import math
from typing import Callable, List, Mapping, Optional, Sequence, Tuple

from src.metrics.context import EvalContext

Lists = Mapping[int, object]


def mean_or_none(values: List[float]) -> Optional[float]:
    return sum(values) / len(values) if values else None


def top_k(ranking, k: int) -> Sequence[int]:
    return ranking.items[:k]


def evaluable_users(lists: Lists, ctx: EvalContext) -> Tuple[List[int], List[int]]:
    """Users with a non-empty relevance set, and the users skipped for lacking one."""
    kept, skipped = [], []
    for user in sorted(lists):
        (kept if ctx.relevance.get(user) else skipped).append(user)
    return kept, skipped


def _per_user(lists: Lists, ctx: EvalContext, term: Callable[[Sequence[int], frozenset, int], float]) -> Optional[float]:
    users, _ = evaluable_users(lists, ctx)
    return mean_or_none([term(top_k(lists[user], ctx.k), ctx.relevance[user], ctx.k) for user in users])


def _recall(top: Sequence[int], relevant: frozenset, k: int) -> float:
    hits = sum(1 for item in top if item in relevant)
    return hits / min(k, len(relevant))


def _precision(top: Sequence[int], relevant: frozenset, k: int) -> float:
    return sum(1 for item in top if item in relevant) / k


def _ndcg(top: Sequence[int], relevant: frozenset, k: int) -> float:
    dcg = sum(1.0 / math.log2(position + 1) for position, item in enumerate(top, 1) if item in relevant)
    idcg = sum(1.0 / math.log2(j + 1) for j in range(1, min(k, len(relevant)) + 1))
    return dcg / idcg


def _hit(top: Sequence[int], relevant: frozenset, k: int) -> float:
    return 1.0 if any(item in relevant for item in top) else 0.0


def recall_at_k(lists: Lists, ctx: EvalContext) -> Optional[float]:
    """Mean of ``|top-K & relevant| / min(K, |relevant|)`` over users with relevant items."""
    return _per_user(lists, ctx, _recall)


def precision_at_k(lists: Lists, ctx: EvalContext) -> Optional[float]:
    """Mean of ``|top-K & relevant| / K``; short lists are not credited for missing slots."""
    return _per_user(lists, ctx, _precision)


def ndcg_at_k(lists: Lists, ctx: EvalContext) -> Optional[float]:
    """Binary-gain nDCG with a ``log2(pos + 1)`` discount."""
    return _per_user(lists, ctx, _ndcg)


def hitrate_at_k(lists: Lists, ctx: EvalContext) -> Optional[float]:
    return _per_user(lists, ctx, _hit)
