"""Interaction log container and file loaders."""

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, Sequence, Tuple, Union

import numpy as np

from src.utils.errors import ArgumentError, EmptyCorpusError, ParseError
from src.utils.log import get_logger

logger = get_logger(__name__)

FORMATS = ("tsv", "movielens_dat", "csv")
_DELIMITERS = {"tsv": "\t", "movielens_dat": "::", "csv": ","}

Record = Tuple[str, str, float, int]


def external_sort_key(external_id: str):
    """Order numeric ids numerically and place every other id after them."""
    if external_id.isascii() and external_id.isdigit():
        return (0, int(external_id), "")
    return (1, 0, external_id)


@dataclass(frozen=True, eq=False)
class InteractionLog:
    """
    Immutable set of (user, item, rating, timestamp) events.

    Users and items are dense 0-based indices into the ``users`` and
    ``items`` vocabularies, which hold the external ids in
    ``external_sort_key`` order.
    """

    users: Tuple[str, ...]
    items: Tuple[str, ...]
    user_idx: np.ndarray
    item_idx: np.ndarray
    ratings: np.ndarray
    timestamps: np.ndarray

    def __post_init__(self):
        dtypes = {
            "user_idx": np.int64,
            "item_idx": np.int64,
            "ratings": np.float64,
            "timestamps": np.int64,
        }
        for name, dtype in dtypes.items():
            array = np.array(getattr(self, name), dtype=dtype)
            array.setflags(write=False)
            object.__setattr__(self, name, array)
        object.__setattr__(self, "users", tuple(self.users))
        object.__setattr__(self, "items", tuple(self.items))

        n = len(self.user_idx)
        if not (len(self.item_idx) == len(self.ratings) == len(self.timestamps) == n):
            raise ArgumentError("event arrays must share one length")
        if n and (self.user_idx.min() < 0 or self.user_idx.max() >= len(self.users)):
            raise ArgumentError("user index outside the user vocabulary")
        if n and (self.item_idx.min() < 0 or self.item_idx.max() >= len(self.items)):
            raise ArgumentError("item index outside the item vocabulary")

    @classmethod
    def from_records(cls, records: Iterable[Record]) -> "InteractionLog":
        """
        Build a log from external-id records.

        Duplicate (user, item) pairs keep the record with the latest
        timestamp; on equal timestamps the later record wins. Retained events
        keep the source order of the winning records.
        """
        latest: Dict[Tuple[str, str], Tuple[int, float, int]] = {}
        for position, (user, item, rating, timestamp) in enumerate(records):
            key = (user, item)
            previous = latest.get(key)
            if previous is None or timestamp >= previous[2]:
                latest[key] = (position, float(rating), int(timestamp))

        ordered = sorted(latest.items(), key=lambda entry: entry[1][0])
        users = sorted({user for (user, _), _ in ordered}, key=external_sort_key)
        items = sorted({item for (_, item), _ in ordered}, key=external_sort_key)
        user_pos = {user: index for index, user in enumerate(users)}
        item_pos = {item: index for index, item in enumerate(items)}

        return cls(
            users=tuple(users),
            items=tuple(items),
            user_idx=np.array([user_pos[u] for (u, _), _ in ordered], dtype=np.int64),
            item_idx=np.array([item_pos[i] for (_, i), _ in ordered], dtype=np.int64),
            ratings=np.array([value[1] for _, value in ordered], dtype=np.float64),
            timestamps=np.array([value[2] for _, value in ordered], dtype=np.int64),
        )

    @property
    def n_events(self) -> int:
        return len(self.user_idx)

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_items(self) -> int:
        return len(self.items)

    @cached_property
    def user_index(self) -> Dict[str, int]:
        return {user: index for index, user in enumerate(self.users)}

    @cached_property
    def item_index(self) -> Dict[str, int]:
        return {item: index for index, item in enumerate(self.items)}

    def take(self, event_indices: Sequence[int]) -> "InteractionLog":
        """Return the sublog of the given events, keeping both vocabularies."""
        indices = np.asarray(event_indices, dtype=np.int64)
        return InteractionLog(
            users=self.users,
            items=self.items,
            user_idx=self.user_idx[indices],
            item_idx=self.item_idx[indices],
            ratings=self.ratings[indices],
            timestamps=self.timestamps[indices],
        )

    def compact(self) -> "InteractionLog":
        """Drop vocabulary entries without events and re-densify indices."""
        used_users = np.unique(self.user_idx)
        used_items = np.unique(self.item_idx)
        user_map = np.full(self.n_users, -1, dtype=np.int64)
        item_map = np.full(self.n_items, -1, dtype=np.int64)
        user_map[used_users] = np.arange(len(used_users))
        item_map[used_items] = np.arange(len(used_items))
        return InteractionLog(
            users=tuple(self.users[u] for u in used_users),
            items=tuple(self.items[i] for i in used_items),
            user_idx=user_map[self.user_idx],
            item_idx=item_map[self.item_idx],
            ratings=self.ratings,
            timestamps=self.timestamps,
        )

    def restrict_items(self, item_ids: Iterable[str]) -> "InteractionLog":
        """Keep only events on the given external item ids, re-densified."""
        allowed = set(item_ids)
        mask = np.array([item in allowed for item in self.items], dtype=bool)
        keep = np.flatnonzero(mask[self.item_idx]) if self.n_events else np.array([], dtype=np.int64)
        if len(keep) == 0:
            raise EmptyCorpusError("no interaction references an item with features")
        return self.take(keep).compact()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, InteractionLog):
            return NotImplemented
        return (
            self.users == other.users
            and self.items == other.items
            and np.array_equal(self.user_idx, other.user_idx)
            and np.array_equal(self.item_idx, other.item_idx)
            and np.array_equal(self.ratings, other.ratings)
            and np.array_equal(self.timestamps, other.timestamps)
        )

    __hash__ = None


def _parse_line(path: str, number: int, line: str, delimiter: str) -> Record:
    fields = line.split(delimiter)
    if len(fields) != 4:
        raise ParseError(path, number, f"expected 4 fields separated by {delimiter!r}, found {len(fields)}")
    user, item, rating, timestamp = (field.strip() for field in fields)
    if not user or not item:
        raise ParseError(path, number, "empty user or item id")
    try:
        return user, item, float(rating), int(timestamp)
    except ValueError as e:
        raise ParseError(path, number, str(e)) from e


def load_interactions(path: Union[str, Path], format: str = "tsv") -> InteractionLog:
    """
    Load an interaction file.

    Args:
        path: File with one ``user, item, rating, timestamp`` event per line
        format: ``tsv`` (tab separated), ``movielens_dat`` (``::`` separated)
            or ``csv`` (comma separated, optional header line)

    Returns:
        InteractionLog with dense vocabularies and duplicates collapsed
    """
    if format not in FORMATS:
        raise ArgumentError(f"unknown interaction format '{format}' (allowed: {', '.join(FORMATS)})")
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"interaction file not found: {path}")

    delimiter = _DELIMITERS[format]
    records = []
    with open(path, encoding="utf-8") as f:
        for number, raw in enumerate(f, 1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            if format == "csv" and number == 1 and not line.split(",")[0].strip().isdigit():
                continue
            records.append(_parse_line(str(path), number, line, delimiter))

    if not records:
        raise EmptyCorpusError(f"no interactions in {path}")

    log = InteractionLog.from_records(records)
    dropped = len(records) - log.n_events
    logger.info(
        f"Loaded {log.n_events} interactions ({log.n_users} users, {log.n_items} items) from {path}"
        + (f"; collapsed {dropped} duplicates" if dropped else "")
    )
    return log
