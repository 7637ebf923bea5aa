"""Per-modality item embedding tables."""

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np

from src.utils.errors import (
    ArgumentError,
    DimensionMismatchError,
    DuplicateKeyError,
    EmptyCorpusError,
    ParseError,
)
from src.utils.log import get_logger

logger = get_logger(__name__)

MODALITIES = ("audio", "visual", "text")


@dataclass(frozen=True, eq=False)
class EmbeddingTable:
    """Item id -> vector map for one modality variant, stored as a matrix."""

    modality: str
    variant: str
    item_ids: Tuple[str, ...]
    matrix: np.ndarray
    zero_rows: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ArgumentError(f"unknown modality '{self.modality}' (allowed: {', '.join(MODALITIES)})")
        matrix = np.array(self.matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != len(self.item_ids):
            raise ArgumentError("matrix must have one row per item id")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "item_ids", tuple(self.item_ids))

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def label(self) -> str:
        return f"{self.modality}:{self.variant}"

    def __len__(self) -> int:
        return len(self.item_ids)

    @cached_property
    def index(self) -> Dict[str, int]:
        return {item_id: row for row, item_id in enumerate(self.item_ids)}

    @property
    def rows(self) -> Dict[str, np.ndarray]:
        return {item_id: self.matrix[row] for row, item_id in enumerate(self.item_ids)}

    def row(self, item_id: str) -> np.ndarray:
        return self.matrix[self.index[item_id]]


def load_embedding_table(path: Union[str, Path], modality: str, variant: str) -> EmbeddingTable:
    """
    Load an ``item_id<TAB>v1<TAB>...<TAB>vd`` table.

    The width of the first row fixes ``dim``; every other row must match it.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"embedding file not found: {path}")

    item_ids = []
    vectors = []
    seen = set()
    dim = None
    with open(path, encoding="utf-8") as f:
        for number, raw in enumerate(f, 1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            cells = line.split("\t")
            item_id, values = cells[0].strip(), cells[1:]
            if dim is None:
                dim = len(values)
                if dim == 0:
                    raise ParseError(str(path), number, f"item '{item_id}' has no values")
            if len(values) != dim:
                raise DimensionMismatchError(item_id, dim, len(values))
            if item_id in seen:
                raise DuplicateKeyError(item_id)
            try:
                vector = [float(cell) for cell in values]
            except ValueError:
                column = next(j for j, cell in enumerate(values, 1) if not _is_float(cell))
                raise ParseError(str(path), number, f"item '{item_id}' column {column}: not a number {values[column - 1]!r}")
            seen.add(item_id)
            item_ids.append(item_id)
            vectors.append(vector)

    if not item_ids:
        raise EmptyCorpusError(f"no embedding rows in {path}")

    table = EmbeddingTable(modality=modality, variant=variant, item_ids=tuple(item_ids), matrix=np.array(vectors))
    logger.info(f"Loaded {table.label} embeddings: {len(table)} items x {table.dim} dims")
    return table


def _is_float(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def l2_normalize(table: EmbeddingTable) -> EmbeddingTable:
    """Scale every non-zero row to unit length; zero rows stay zero and are listed in ``zero_rows``."""
    norms = np.linalg.norm(table.matrix, axis=1)
    nonzero = norms > 0
    matrix = table.matrix.copy()
    matrix[nonzero] /= norms[nonzero, None]
    zero_rows = tuple(item_id for item_id, ok in zip(table.item_ids, nonzero) if not ok)
    if zero_rows:
        logger.warning(f"{table.label}: {len(zero_rows)} zero rows left unnormalized")
    return EmbeddingTable(
        modality=table.modality,
        variant=table.variant,
        item_ids=table.item_ids,
        matrix=matrix,
        zero_rows=zero_rows,
    )


def drop_rows(table: EmbeddingTable, item_ids) -> EmbeddingTable:
    """Table without the given items."""
    dropped = set(item_ids)
    keep = [row for row, item_id in enumerate(table.item_ids) if item_id not in dropped]
    return EmbeddingTable(
        modality=table.modality,
        variant=table.variant,
        item_ids=tuple(table.item_ids[row] for row in keep),
        matrix=table.matrix[keep],
    )


def save_embedding_table(table: EmbeddingTable, path: Union[str, Path]):
    """Write a table in the loader's TSV layout."""
    save_feature_table(table.item_ids, table.matrix, path)


def save_feature_table(item_ids, matrix: np.ndarray, path: Union[str, Path]):
    """Write ``item_id<TAB>v1...`` rows; values use round-trip float repr."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for item_id, vector in zip(item_ids, matrix):
            f.write(item_id + "\t" + "\t".join(repr(float(v)) for v in vector) + "\n")
