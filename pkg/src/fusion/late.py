"""
Rank-level late fusion of several recommenders' top-N lists.

Ranks are 1-based. An item missing from a system's list takes rank
``len(list) + 1`` (or the catalogue size with ``missing_rank="catalog"``).
Every rule breaks ties by ascending item index.
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from src.corpus.interactions import external_sort_key
from src.models.base import RankedList
from src.utils.errors import ArgumentError, ParseError
from src.utils.log import get_logger

logger = get_logger(__name__)

RULES = ("borda", "wborda", "avgrank", "rrf")
MISSING_RANKS = ("list", "catalog")
SCHEDULES = ("uniform", "linear", "proportional")
DEFAULT_RRF_K = 60

WeightFunction = Callable[[int, int], float]


@dataclass(frozen=True)
class FusionInput:
    """The M lists of one user plus the rule settings."""

    lists: Tuple[RankedList, ...]
    catalog_size: int
    weights: Optional[Tuple[float, ...]] = None
    rrf_k: int = DEFAULT_RRF_K
    missing_rank: str = "list"

    def __post_init__(self):
        object.__setattr__(self, "lists", tuple(self.lists))
        if not self.lists:
            raise ArgumentError("fusion needs at least one ranked list")
        if self.catalog_size < 1:
            raise ArgumentError(f"catalog_size must be positive, got {self.catalog_size}")
        if self.rrf_k < 0:
            raise ArgumentError(f"rrf_k must be non-negative, got {self.rrf_k}")
        if self.missing_rank not in MISSING_RANKS:
            raise ArgumentError(f"unknown missing_rank '{self.missing_rank}' (allowed: {', '.join(MISSING_RANKS)})")
        for ranked in self.lists:
            if len(set(ranked.items)) != len(ranked.items):
                raise ArgumentError(f"ranked list for user {ranked.user} repeats an item")
        if self.weights is not None:
            weights = tuple(float(w) for w in self.weights)
            _check_weights(weights, len(self.lists))
            object.__setattr__(self, "weights", weights)

    @property
    def user(self) -> int:
        return self.lists[0].user


@dataclass(frozen=True)
class MetaRanking:
    user: int
    items: Tuple[int, ...]
    fused_scores: Tuple[float, ...]

    @property
    def scores(self) -> Tuple[float, ...]:
        return self.fused_scores

    def __len__(self) -> int:
        return len(self.items)

    def truncated(self, n: int) -> "MetaRanking":
        return MetaRanking(self.user, self.items[:n], self.fused_scores[:n])


def _check_weights(weights: Sequence[float], m: int):
    if len(weights) != m:
        raise ArgumentError(f"expected {m} weights, got {len(weights)}")
    if any(w < 0 or not math.isfinite(w) for w in weights):
        raise ArgumentError(f"weights must be finite and non-negative, got {list(weights)}")
    if abs(math.fsum(weights) - 1.0) > 1e-9:
        raise ArgumentError(f"weights must sum to 1, got {math.fsum(weights)}")


def _rank_table(fusion: FusionInput) -> Tuple[np.ndarray, np.ndarray]:
    """Union of listed items (ascending) and the M x U matrix of their ranks."""
    union = np.array(sorted({item for ranked in fusion.lists for item in ranked.items}), dtype=np.int64)
    column = {int(item): col for col, item in enumerate(union)}
    ranks = np.empty((len(fusion.lists), union.size), dtype=np.int64)
    for m, ranked in enumerate(fusion.lists):
        ranks[m] = fusion.catalog_size if fusion.missing_rank == "catalog" else len(ranked.items) + 1
        for position, item in enumerate(ranked.items, 1):
            ranks[m, column[item]] = position
    return union, ranks


def _check_catalog(fusion: FusionInput):
    longest = max(len(ranked.items) for ranked in fusion.lists)
    if fusion.catalog_size < longest:
        raise ArgumentError(f"catalog size {fusion.catalog_size} is smaller than a list of length {longest}")


def _meta(user: int, items: np.ndarray, scores: np.ndarray, descending: bool) -> MetaRanking:
    keys = -scores if descending else scores
    order = np.lexsort((items, keys))
    return MetaRanking(
        user=user,
        items=tuple(int(item) for item in items[order]),
        fused_scores=tuple(float(score) for score in scores[order]),
    )


def _borda_points(fusion: FusionInput, ranks: np.ndarray) -> np.ndarray:
    return fusion.catalog_size - ranks + 1


def borda(fusion: FusionInput) -> MetaRanking:
    """Sum over systems of ``|I| - rank + 1``."""
    _check_catalog(fusion)
    items, ranks = _rank_table(fusion)
    scores = _borda_points(fusion, ranks).sum(axis=0).astype(np.float64)
    return _meta(fusion.user, items, scores, descending=True)


def weighted_borda(fusion: FusionInput) -> MetaRanking:
    """Borda points weighted per system; the weights must sum to 1."""
    if fusion.weights is None:
        raise ArgumentError("weighted Borda needs per-system weights")
    _check_catalog(fusion)
    items, ranks = _rank_table(fusion)
    points = _borda_points(fusion, ranks).astype(np.float64)
    weights = fusion.weights
    if len(set(weights)) == 1:
        # equal weights: scale the exact integer totals once
        scores = weights[0] * points.sum(axis=0)
    else:
        scores = np.array([
            math.fsum(w * p for w, p in zip(weights, points[:, col])) for col in range(items.size)
        ])
    return _meta(fusion.user, items, scores, descending=True)


def average_rank(fusion: FusionInput) -> MetaRanking:
    """Mean rank across systems, ascending."""
    items, ranks = _rank_table(fusion)
    scores = ranks.sum(axis=0) / len(fusion.lists)
    return _meta(fusion.user, items, scores, descending=False)


def rrf(fusion: FusionInput) -> MetaRanking:
    """Reciprocal rank fusion: sum of ``1 / (k + rank)``."""
    items, ranks = _rank_table(fusion)
    # fsum keeps the total independent of system order
    scores = np.array([math.fsum(1.0 / (fusion.rrf_k + r) for r in ranks[:, col]) for col in range(items.size)])
    return _meta(fusion.user, items, scores, descending=True)


_RULES = {"borda": borda, "wborda": weighted_borda, "avgrank": average_rank, "rrf": rrf}


def aggregate(rule: str, fusion: FusionInput) -> MetaRanking:
    if rule not in _RULES:
        raise ArgumentError(f"unknown fusion rule '{rule}' (allowed: {', '.join(RULES)})")
    return _RULES[rule](fusion)


def weight_schedule(
    schedule: Union[str, WeightFunction],
    m: int,
    scores: Optional[Sequence[float]] = None,
) -> Tuple[float, ...]:
    """
    Per-system weights summing to 1.

    Args:
        schedule: ``uniform``; ``linear`` (system j of m gets weight
            proportional to m - j, so earlier systems weigh more);
            ``proportional`` (to ``scores``, e.g. validation nDCG); or a
            callable ``f(j, m)`` returning a non-negative raw weight for the
            0-based system j
        m: Number of systems
        scores: Per-system scores for ``proportional``

    Returns:
        Normalised weights
    """
    if m < 1:
        raise ArgumentError(f"need at least one system, got {m}")
    if callable(schedule):
        raw = [float(schedule(j, m)) for j in range(m)]
    elif schedule == "uniform":
        raw = [1.0] * m
    elif schedule == "linear":
        raw = [float(m - j) for j in range(m)]
    elif schedule == "proportional":
        if scores is None or len(scores) != m:
            raise ArgumentError(f"proportional weights need {m} system scores")
        raw = [float(s) for s in scores]
    else:
        raise ArgumentError(f"unknown weight schedule '{schedule}' (allowed: {', '.join(SCHEDULES)})")

    if any(w < 0 or not math.isfinite(w) for w in raw):
        raise ArgumentError(f"raw weights must be finite and non-negative, got {raw}")
    total = math.fsum(raw)
    if total <= 0:
        raise ArgumentError("raw weights sum to zero")
    if len(set(raw)) == 1:
        return tuple([1.0 / m] * m)
    return tuple(w / total for w in raw)


def fuse_user_lists(
    per_system: Sequence[Mapping[int, RankedList]],
    catalog_size: int,
    rule: str = "borda",
    weights: Optional[Sequence[float]] = None,
    rrf_k: int = DEFAULT_RRF_K,
    missing_rank: str = "list",
    depth: Optional[int] = None,
) -> Dict[int, MetaRanking]:
    """
    Fuse every user's lists across systems.

    A system without a list for a user contributes an empty list there.

    Returns:
        Meta-ranking per user, truncated to ``depth`` when given
    """
    if not per_system:
        raise ArgumentError("fusion needs at least one system")
    users = sorted({user for lists in per_system for user in lists})
    fused = {}
    for user in users:
        lists = tuple(lists.get(user, RankedList(user, ())) for lists in per_system)
        meta = aggregate(rule, FusionInput(
            lists=lists,
            catalog_size=catalog_size,
            weights=tuple(weights) if weights is not None else None,
            rrf_k=rrf_k,
            missing_rank=missing_rank,
        ))
        fused[user] = meta.truncated(depth) if depth is not None else meta
    logger.info(f"Fused {len(per_system)} systems with {rule} for {len(fused)} users")
    return fused


Ranking = Union[RankedList, MetaRanking]


def write_ranked_lists(
    path: Union[str, Path],
    rankings: Mapping[int, Ranking],
    user_ids: Sequence[str],
    item_ids: Sequence[str],
):
    """Write ``user_id<TAB>item_id<TAB>rank<TAB>score`` lines with external ids."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for user in sorted(rankings):
            ranking = rankings[user]
            for position, (item, value) in enumerate(zip(ranking.items, ranking.scores), 1):
                f.write(f"{user_ids[user]}\t{item_ids[item]}\t{position}\t{value!r}\n")


def read_ranked_lists(path: Union[str, Path]) -> Dict[str, List[Tuple[str, float]]]:
    """
    Read an interchange file into ``{user_id: [(item_id, score), ...]}``
    ordered by rank.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"ranked-list file not found: {path}")
    rows: Dict[str, Dict[int, Tuple[str, float]]] = {}
    with open(path, encoding="utf-8") as f:
        for number, raw in enumerate(f, 1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 4:
                raise ParseError(str(path), number, f"expected 4 tab-separated fields, got {len(fields)}")
            user_id, item_id, rank, value = (field.strip() for field in fields)
            try:
                rank, value = int(rank), float(value)
            except ValueError:
                raise ParseError(str(path), number, "rank must be an integer and score a number")
            if rank < 1:
                raise ParseError(str(path), number, f"rank must be >= 1, got {rank}")
            ranked = rows.setdefault(user_id, {})
            if rank in ranked:
                raise ParseError(str(path), number, f"user '{user_id}' repeats rank {rank}")
            if any(existing == item_id for existing, _ in ranked.values()):
                raise ParseError(str(path), number, f"user '{user_id}' repeats item '{item_id}'")
            ranked[rank] = (item_id, value)
    return {user_id: [ranked[rank] for rank in sorted(ranked)] for user_id, ranked in rows.items()}


def fuse_ranked_files(
    paths: Sequence[Union[str, Path]],
    rule: str = "borda",
    catalog_size: Optional[int] = None,
    weights: Optional[Sequence[float]] = None,
    rrf_k: int = DEFAULT_RRF_K,
    missing_rank: str = "list",
) -> Tuple[Dict[int, MetaRanking], Tuple[str, ...], Tuple[str, ...]]:
    """
    Fuse lists produced outside the engine.

    Items and users are indexed by external id order over the union of all
    files; the catalogue defaults to that item union.

    Returns:
        Meta-rankings per user index, the user ids and the item ids
    """
    systems = [read_ranked_lists(path) for path in paths]
    user_ids = tuple(sorted({user for system in systems for user in system}, key=external_sort_key))
    item_ids = tuple(sorted(
        {item for system in systems for ranked in system.values() for item, _ in ranked},
        key=external_sort_key,
    ))
    user_index = {user: u for u, user in enumerate(user_ids)}
    item_index = {item: i for i, item in enumerate(item_ids)}

    per_system = []
    for system in systems:
        per_system.append({
            user_index[user]: RankedList(
                user=user_index[user],
                items=tuple(item_index[item] for item, _ in ranked),
                scores=tuple(value for _, value in ranked),
            )
            for user, ranked in system.items()
        })
    fused = fuse_user_lists(
        per_system,
        catalog_size=catalog_size or len(item_ids),
        rule=rule,
        weights=weights,
        rrf_k=rrf_k,
        missing_rank=missing_rank,
    )
    return fused, user_ids, item_ids
