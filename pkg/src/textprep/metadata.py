"""Item metadata and the non-augmented canonical text view."""

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from src.utils.errors import ArgumentError, ParseError

TEXT_MODES = ("NA", "A")

# '|', '::' and tab count as structural delimiters
_STRUCTURAL = re.compile(r"\||::|\t")
_WHITESPACE = re.compile(r"\s+")


@dataclass(frozen=True)
class ItemMetadata:
    item_id: str
    title: str
    genres: Tuple[str, ...] = ()
    tags: Tuple[str, ...] = ()

    def __post_init__(self):
        if not self.title.strip():
            raise ArgumentError(f"item '{self.item_id}' has an empty title")
        object.__setattr__(self, "genres", tuple(self.genres))
        object.__setattr__(self, "tags", tuple(self.tags))

    @classmethod
    def from_source(cls, item_id: str, title: str, genres: str = "", tags: Tuple[str, ...] = ()) -> "ItemMetadata":
        """Build metadata from a '|'-delimited genre field."""
        return cls(
            item_id=item_id,
            title=title,
            genres=tuple(g for g in genres.split("|") if g.strip()),
            tags=tuple(tags),
        )


@dataclass(frozen=True)
class CanonicalText:
    item_id: str
    mode: str
    text: str
    provenance: Optional[str] = None
    fallback: bool = False

    def __post_init__(self):
        if self.mode not in TEXT_MODES:
            raise ArgumentError(f"unknown text mode '{self.mode}'")


def _clean(segment: str) -> str:
    return _WHITESPACE.sub(" ", _STRUCTURAL.sub(" ", segment.lower())).strip()


def canonical_text_na(meta: ItemMetadata) -> CanonicalText:
    """Lower-cased title, genres and tags joined by single spaces, delimiters removed."""
    segments = (
        _clean(meta.title),
        _clean(" ".join(meta.genres)),
        _clean(" ".join(meta.tags)),
    )
    return CanonicalText(
        item_id=meta.item_id,
        mode="NA",
        text=" ".join(segment for segment in segments if segment),
    )


def _read_tags(path: Path, format: str, encoding: str) -> Dict[str, List[str]]:
    tags: Dict[str, List[str]] = {}
    with open(path, encoding=encoding) as f:
        for number, raw in enumerate(f, 1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            if format == "movielens_dat":
                fields = line.split("::")
                if len(fields) != 4:
                    raise ParseError(str(path), number, "expected user::item::tag::timestamp")
                item_id, tag = fields[1].strip(), fields[2].strip()
            else:
                fields = line.split("\t")
                if len(fields) != 2:
                    raise ParseError(str(path), number, "expected item<TAB>tag")
                item_id, tag = fields[0].strip(), fields[1].strip()
            bucket = tags.setdefault(item_id, [])
            if tag and tag not in bucket:
                bucket.append(tag)
    return tags


def load_item_metadata(
    path: Union[str, Path],
    format: str = "movielens_dat",
    tags_path: Optional[Union[str, Path]] = None,
    encoding: Optional[str] = None,
) -> Dict[str, ItemMetadata]:
    """
    Load item titles, genres and optional tags.

    Args:
        path: ``id::title::g1|g2`` (movielens_dat) or ``id<TAB>title<TAB>g1|g2`` (tsv)
        format: ``movielens_dat`` or ``tsv``; also used for the tags file
        tags_path: ``user::item::tag::ts`` (movielens_dat) or ``item<TAB>tag`` (tsv)
        encoding: File encoding; MovieLens .dat files default to latin-1

    Returns:
        Mapping from item id to metadata, in file order
    """
    if format not in ("movielens_dat", "tsv"):
        raise ArgumentError(f"unknown metadata format '{format}'")
    encoding = encoding or ("latin-1" if format == "movielens_dat" else "utf-8")
    delimiter = "::" if format == "movielens_dat" else "\t"
    tags = _read_tags(Path(tags_path), format, encoding) if tags_path else {}

    catalogue: Dict[str, ItemMetadata] = {}
    with open(path, encoding=encoding) as f:
        for number, raw in enumerate(f, 1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split(delimiter)
            if len(fields) != 3:
                raise ParseError(str(path), number, f"expected 3 fields separated by {delimiter!r}")
            item_id, title, genres = (field.strip() for field in fields)
            if not title:
                raise ParseError(str(path), number, f"item '{item_id}' has an empty title")
            catalogue[item_id] = ItemMetadata.from_source(item_id, title, genres, tuple(tags.get(item_id, ())))
    return catalogue
