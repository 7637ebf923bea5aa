"""Shared model types: hyper-parameters, the train view, ranked lists and the recommender base."""

from dataclasses import asdict, dataclass, replace
from functools import cached_property
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np
from scipy import sparse

from src.corpus.interactions import InteractionLog
from src.corpus.splitting import SplitPlan
from src.utils.errors import ArgumentError

FAMILIES = ("mf", "vaecf", "vbpr", "vmf", "amr")
CONTENT_FAMILIES = ("vbpr", "vmf", "amr")
OPTIMIZERS = ("sgd", "adam")

# optimiser used when HyperParams.optimizer is left unset
DEFAULT_OPTIMIZER = {"mf": "sgd", "vbpr": "sgd", "vmf": "sgd", "amr": "sgd", "vaecf": "adam"}


@dataclass(frozen=True)
class HyperParams:
    """
    Training settings shared by every backbone.

    ``beta``, ``hidden_dim`` and ``z_dim`` only matter to VAECF;
    ``negatives`` only to the pairwise (BPR) models.
    """

    latent_dim: int = 16
    learning_rate: float = 0.01
    reg: float = 0.001
    epochs: int = 20
    batch_size: int = 256
    negatives: int = 1
    beta: float = 1.0
    hidden_dim: int = 64
    z_dim: int = 16
    init_std: float = 0.01
    optimizer: Optional[str] = None
    frozen: Tuple[str, ...] = ()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "frozen", tuple(self.frozen))
        for name in ("latent_dim", "epochs", "batch_size", "negatives", "hidden_dim", "z_dim"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
                raise ArgumentError(f"{name} must be a positive integer, got {value!r}")
        if not self.learning_rate > 0:
            raise ArgumentError(f"learning_rate must be positive, got {self.learning_rate}")
        for name in ("reg", "beta", "init_std"):
            if getattr(self, name) < 0:
                raise ArgumentError(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.optimizer is not None and self.optimizer not in OPTIMIZERS:
            raise ArgumentError(f"unknown optimizer '{self.optimizer}' (allowed: {', '.join(OPTIMIZERS)})")

    def replace(self, **changes) -> "HyperParams":
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        record = asdict(self)
        record["frozen"] = list(self.frozen)
        return record

    @classmethod
    def from_dict(cls, record: Dict[str, Any]) -> "HyperParams":
        known = {name for name in cls.__dataclass_fields__}
        unknown = set(record) - known
        if unknown:
            raise ArgumentError(f"unknown hyper-parameters: {', '.join(sorted(unknown))}")
        return cls(**record)

    def optimizer_for(self, family: str) -> str:
        return self.optimizer or DEFAULT_OPTIMIZER[family]


@dataclass(frozen=True)
class RankedList:
    """Top-N items for one user, best first."""

    user: int
    items: Tuple[int, ...]
    scores: Tuple[float, ...] = ()

    def __len__(self) -> int:
        return len(self.items)

    def truncated(self, n: int) -> "RankedList":
        return RankedList(self.user, self.items[:n], self.scores[:n])


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """The train side of a split, indexed like its interaction log."""

    n_users: int
    n_items: int
    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    item_ids: Tuple[str, ...] = ()
    user_ids: Tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("users", "items"):
            array = np.asarray(getattr(self, name), dtype=np.int64)
            array.setflags(write=False)
            object.__setattr__(self, name, array)
        ratings = np.asarray(self.ratings, dtype=np.float64)
        ratings.setflags(write=False)
        object.__setattr__(self, "ratings", ratings)

    @classmethod
    def from_split(cls, log: InteractionLog, plan: SplitPlan) -> "TrainingSet":
        rows = plan.train_indices
        return cls(
            n_users=log.n_users,
            n_items=log.n_items,
            users=log.user_idx[rows],
            items=log.item_idx[rows],
            ratings=log.ratings[rows],
            item_ids=log.items,
            user_ids=log.users,
        )

    @classmethod
    def from_log(cls, log: InteractionLog) -> "TrainingSet":
        return cls(
            n_users=log.n_users,
            n_items=log.n_items,
            users=log.user_idx,
            items=log.item_idx,
            ratings=log.ratings,
            item_ids=log.items,
            user_ids=log.users,
        )

    @property
    def n_events(self) -> int:
        return len(self.users)

    @cached_property
    def matrix(self) -> sparse.csr_matrix:
        """Binary user x item matrix of train interactions."""
        data = np.ones(self.n_events)
        matrix = sparse.csr_matrix((data, (self.users, self.items)), shape=(self.n_users, self.n_items))
        matrix.sum_duplicates()
        matrix.data[:] = 1.0
        return matrix

    @cached_property
    def popularity(self) -> np.ndarray:
        return np.bincount(self.items, minlength=self.n_items).astype(np.int64)

    @cached_property
    def user_counts(self) -> np.ndarray:
        return np.bincount(self.users, minlength=self.n_users).astype(np.int64)

    def user_items(self, user: int) -> np.ndarray:
        matrix = self.matrix
        return matrix.indices[matrix.indptr[user]:matrix.indptr[user + 1]]

    def has_user(self, user: int) -> bool:
        return bool(self.user_counts[user] > 0)


class Recommender:
    """
    Base class of every trained backbone.

    Subclasses implement ``_score_known(user)`` returning a score per item.
    Users without train events fall back to item popularity unless the
    subclass handles them itself (``handles_cold_users``).
    """

    family: str = ""
    handles_cold_users: bool = False

    def __init__(self, params: Dict[str, np.ndarray], hp: HyperParams, seen: sparse.csr_matrix, popularity: np.ndarray):
        self.params = params
        self.hp = hp
        self.seen = seen.tocsr()
        self.popularity = np.asarray(popularity, dtype=np.int64)
        self.loss_trace: List[float] = []

    @property
    def n_users(self) -> int:
        return self.seen.shape[0]

    @property
    def n_items(self) -> int:
        return self.seen.shape[1]

    def __getattr__(self, name: str) -> np.ndarray:
        params = self.__dict__.get("params", {})
        if name in params:
            return params[name]
        raise AttributeError(name)

    def _check_user(self, user: int):
        if not 0 <= user < self.n_users:
            raise ArgumentError(f"user index {user} out of range [0, {self.n_users})")

    def _check_item(self, item: int):
        if not 0 <= item < self.n_items:
            raise ArgumentError(f"item index {item} out of range [0, {self.n_items})")

    def is_cold(self, user: int) -> bool:
        return self.seen.indptr[user + 1] == self.seen.indptr[user]

    def history(self, user: int) -> np.ndarray:
        return self.seen.indices[self.seen.indptr[user]:self.seen.indptr[user + 1]]

    def _score_known(self, user: int) -> np.ndarray:
        raise NotImplementedError

    def score_items(self, user: int) -> np.ndarray:
        """Scores of every catalogue item for ``user``."""
        self._check_user(user)
        if self.is_cold(user) and not self.handles_cold_users:
            return self.popularity.astype(np.float64)
        return self._score_known(user)

    def score(self, user: int, item: int) -> float:
        self._check_item(item)
        return float(self.score_items(user)[item])


def recommend_topk(
    model: Recommender,
    user: int,
    n: int,
    exclude: Optional[Iterable[int]] = None,
) -> RankedList:
    """
    Rank every non-excluded item by descending score.

    Args:
        model: Trained recommender
        user: Internal user index
        n: List length
        exclude: Items to skip; defaults to the user's train items

    Returns:
        RankedList of at most ``n`` items, ties broken by ascending item index
    """
    if n <= 0:
        raise ArgumentError(f"n must be positive, got {n}")
    scores = model.score_items(user)
    allowed = np.ones(model.n_items, dtype=bool)
    excluded = model.history(user) if exclude is None else np.fromiter(exclude, dtype=np.int64)
    allowed[excluded] = False

    candidates = np.flatnonzero(allowed)
    candidate_scores = scores[candidates]
    order = np.lexsort((candidates, -candidate_scores))[:n]
    return RankedList(
        user=user,
        items=tuple(int(item) for item in candidates[order]),
        scores=tuple(float(score) for score in candidate_scores[order]),
    )


def recommend_all(
    model: Recommender,
    users: Iterable[int],
    n: int,
) -> Dict[int, RankedList]:
    """Top-``n`` lists for many users, excluding each user's train items."""
    return {int(user): recommend_topk(model, int(user), n) for user in users}


def score(model: Recommender, user: int, item: int) -> float:
    """Predicted affinity of ``user`` for ``item``."""
    return model.score(user, item)
