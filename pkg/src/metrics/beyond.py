"""Beyond-accuracy metrics over users' top-K lists."""

import math
from typing import Dict, List, Optional

import numpy as np

from src.metrics.accuracy import Lists, mean_or_none, top_k
from src.metrics.context import COLDRATE_LEVELS, EvalContext
from src.utils.errors import ArgumentError, PreconditionError


def coverage_at_k(lists: Lists, ctx: EvalContext) -> float:
    """Share of the catalogue appearing in at least one top-K list."""
    recommended = set()
    for user in lists:
        recommended.update(top_k(lists[user], ctx.k))
    return len(recommended) / ctx.catalog_size


def coldrate_at_k(lists: Lists, ctx: EvalContext, level: str = "item") -> Optional[float]:
    """
    Cold-start rate.

    ``item``: share of recommended slots holding an item with no train
    interaction. ``user``: share of users whose top-K holds at least one.
    """
    if level not in COLDRATE_LEVELS:
        raise ArgumentError(f"unknown coldrate level '{level}' (allowed: {', '.join(COLDRATE_LEVELS)})")
    if level == "item":
        slots = [bool(ctx.popularity[item] == 0) for user in sorted(lists) for item in top_k(lists[user], ctx.k)]
        return sum(slots) / len(slots) if slots else None
    users = [any(bool(ctx.popularity[item] == 0) for item in top_k(lists[user], ctx.k)) for user in sorted(lists)]
    return sum(users) / len(users) if users else None


def novelty_at_k(lists: Lists, ctx: EvalContext) -> Optional[float]:
    """Mean ``-log2((count + 1) / (total + |I|))`` over recommended slots; None without slots."""
    denominator = int(ctx.popularity.sum()) + ctx.catalog_size
    slots = [
        -math.log2((int(ctx.popularity[item]) + 1) / denominator)
        for user in sorted(lists)
        for item in top_k(lists[user], ctx.k)
    ]
    return mean_or_none(slots)


def _feature(ctx: EvalContext, item: int) -> np.ndarray:
    if ctx.item_features is None or item not in ctx.item_features:
        raise PreconditionError(f"item {item} has no feature row", item_id=str(item))
    return np.asarray(ctx.item_features[item], dtype=np.float64)


def _cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    norm = float(np.linalg.norm(a)) * float(np.linalg.norm(b))
    if norm == 0.0:
        return 1.0
    return 1.0 - min(1.0, max(-1.0, float(np.dot(a, b)) / norm))


def ild_at_k(lists: Lists, ctx: EvalContext) -> Optional[float]:
    """Mean pairwise cosine distance within each top-K list; lists shorter than 2 are skipped."""
    per_user = []
    for user in sorted(lists):
        top = list(top_k(lists[user], ctx.k))
        if len(top) < 2:
            continue
        vectors = [_feature(ctx, item) for item in top]
        distances = [
            _cosine_distance(vectors[a], vectors[b])
            for a in range(len(top))
            for b in range(a + 1, len(top))
        ]
        per_user.append(sum(distances) / len(distances))
    return mean_or_none(per_user)


def _genre_mass(items, ctx: EvalContext) -> Dict[str, float]:
    mass: Dict[str, float] = {}
    for item in items:
        for genre, share in ctx.item_genres.get(item, {}).items():
            mass[genre] = mass.get(genre, 0.0) + share
    return mass


def calibration_users(lists: Lists, ctx: EvalContext) -> List[int]:
    """Users with a non-empty train history."""
    history = ctx.history or {}
    return [user for user in sorted(lists) if history.get(user)]


def calibration_bias_at_k(lists: Lists, ctx: EvalContext) -> Optional[float]:
    """
    Mean total-variation distance between the genre distributions of each
    user's top-K and train history. Users without history, or whose items
    carry no genres on either side, are skipped.
    """
    if ctx.item_genres is None:
        return None
    per_user = []
    for user in calibration_users(lists, ctx):
        recommended = _genre_mass(top_k(lists[user], ctx.k), ctx)
        historical = _genre_mass(ctx.history[user], ctx)
        rec_total, hist_total = sum(recommended.values()), sum(historical.values())
        if rec_total == 0 or hist_total == 0:
            continue
        genres = sorted(set(recommended) | set(historical))
        distance = 0.5 * sum(
            abs(recommended.get(g, 0.0) / rec_total - historical.get(g, 0.0) / hist_total) for g in genres
        )
        per_user.append(distance)
    return mean_or_none(per_user)


def popularity_bias_at_k(lists: Lists, ctx: EvalContext) -> Optional[float]:
    """Mean train count of recommended items relative to the most popular item."""
    peak = int(ctx.popularity.max()) if ctx.popularity.size else 0
    slots = [
        (int(ctx.popularity[item]) / peak) if peak else 0.0
        for user in sorted(lists)
        for item in top_k(lists[user], ctx.k)
    ]
    return mean_or_none(slots)
