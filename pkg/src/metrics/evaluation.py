"""Compute every metric for one set of ranked lists."""

from typing import Any, Dict, Optional

from src.metrics.accuracy import Lists, evaluable_users, hitrate_at_k, ndcg_at_k, precision_at_k, recall_at_k
from src.metrics.beyond import (
    calibration_bias_at_k,
    calibration_users,
    coldrate_at_k,
    coverage_at_k,
    ild_at_k,
    novelty_at_k,
    popularity_bias_at_k,
)
from src.metrics.context import EvalContext, MetricReport
from src.utils.log import get_logger

logger = get_logger(__name__)


def evaluate(
    lists: Lists,
    ctx: EvalContext,
    metadata: Optional[Dict[str, Any]] = None,
    coldrate_level: str = "item",
) -> MetricReport:
    """
    Score ranked lists on accuracy and beyond-accuracy metrics.

    ILD needs ``ctx.item_features`` and calibration needs
    ``ctx.item_genres``; without them those metrics are reported as None.
    """
    evaluated, skipped = evaluable_users(lists, ctx)
    if skipped:
        logger.info(f"{len(skipped)} users without test items skipped for accuracy metrics")
    without_history = len(lists) - len(calibration_users(lists, ctx)) if ctx.history is not None else len(lists)

    values = {
        "recall": recall_at_k(lists, ctx),
        "precision": precision_at_k(lists, ctx),
        "ndcg": ndcg_at_k(lists, ctx),
        "hitrate": hitrate_at_k(lists, ctx),
        "coverage": coverage_at_k(lists, ctx),
        "coldrate": coldrate_at_k(lists, ctx, level=coldrate_level),
        "novelty": novelty_at_k(lists, ctx),
        "ild": ild_at_k(lists, ctx) if ctx.item_features is not None else None,
        "calibration_bias": calibration_bias_at_k(lists, ctx),
    }
    extra = {
        "popularity_bias": popularity_bias_at_k(lists, ctx),
        "coldrate_user": coldrate_at_k(lists, ctx, level="user"),
        "coldrate_item": coldrate_at_k(lists, ctx, level="item"),
    }
    return MetricReport(
        k=ctx.k,
        values=values,
        users_evaluated=len(evaluated),
        users_without_relevance=len(skipped),
        users_without_history=without_history,
        metadata=dict(metadata or {}),
        extra=extra,
    )
