"""Fitted PCA/CCA projections and their on-disk record."""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from src.utils.errors import ArgumentError

FORMAT_VERSION = 1
KINDS = ("pca", "cca")


@dataclass(frozen=True, eq=False)
class FusionProjection:
    """
    A fitted linear projection of concatenated item features.

    ``columns`` selects the input columns the projection consumes (all of
    them for PCA, view 1 for CCA). Inputs are centred by ``means`` and, where
    ``stds`` is non-zero, scaled by it; zero-std columns map to 0.
    ``spectrum`` holds every eigenvalue (PCA) or canonical correlation (CCA);
    the first ``retained`` columns of ``loadings`` are used.
    """

    kind: str
    params: Dict[str, Any]
    columns: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    loadings: np.ndarray
    retained: int
    spectrum: np.ndarray
    view2_columns: Optional[np.ndarray] = None
    view2_means: Optional[np.ndarray] = None
    view2_loadings: Optional[np.ndarray] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ArgumentError(f"unknown projection kind '{self.kind}'")
        for name in ("columns", "view2_columns"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, np.asarray(value, dtype=np.int64))
        for name in ("means", "stds", "loadings", "spectrum", "view2_means", "view2_loadings"):
            value = getattr(self, name)
            if value is not None:
                array = np.array(value, dtype=np.float64)
                array.setflags(write=False)
                object.__setattr__(self, name, array)

    def _standardize(self, matrix: np.ndarray) -> np.ndarray:
        centred = matrix[:, self.columns] - self.means
        scale = np.where(self.stds > 0, self.stds, 1.0)
        standardized = centred / scale
        if self.kind == "pca":
            standardized[:, self.stds == 0] = 0.0
        return standardized

    def transform(self, matrix: np.ndarray) -> np.ndarray:
        """Project rows laid out like the matrix the projection was fitted on."""
        matrix = np.asarray(matrix, dtype=np.float64)
        return self._standardize(matrix) @ self.loadings

    def transform_view2(self, matrix: np.ndarray) -> np.ndarray:
        """CCA only: canonical variates of the second view."""
        if self.kind != "cca":
            raise ArgumentError("only CCA projections have a second view")
        matrix = np.asarray(matrix, dtype=np.float64)
        return (matrix[:, self.view2_columns] - self.view2_means) @ self.view2_loadings

    def to_record(self) -> Dict[str, Any]:
        def listed(value):
            return None if value is None else value.tolist()

        return {
            "format_version": FORMAT_VERSION,
            "kind": self.kind,
            "params": self.params,
            "columns": listed(self.columns),
            "means": listed(self.means),
            "stds": listed(self.stds),
            "loadings": listed(self.loadings),
            "retained": self.retained,
            "spectrum": listed(self.spectrum),
            "view2_columns": listed(self.view2_columns),
            "view2_means": listed(self.view2_means),
            "view2_loadings": listed(self.view2_loadings),
            "extra": self.extra,
        }

    @classmethod
    def from_record(cls, record: Dict[str, Any]) -> "FusionProjection":
        version = record.get("format_version")
        if version != FORMAT_VERSION:
            raise ArgumentError(f"unsupported projection record version {version}")

        def array(key, width=None):
            value = record.get(key)
            if value is None:
                return None
            result = np.array(value, dtype=np.float64)
            # an empty loadings list loses its row count
            return result.reshape(-1, width) if width is not None and result.size == 0 else result

        return cls(
            kind=record["kind"],
            params=record["params"],
            columns=np.array(record["columns"], dtype=np.int64),
            means=array("means"),
            stds=array("stds"),
            loadings=array("loadings", record["retained"]),
            retained=record["retained"],
            spectrum=array("spectrum"),
            view2_columns=None if record.get("view2_columns") is None else np.array(record["view2_columns"], dtype=np.int64),
            view2_means=array("view2_means"),
            view2_loadings=array("view2_loadings"),
            extra=record.get("extra", {}),
        )


def save_projections(
    projections: Sequence[FusionProjection],
    path: Union[str, Path],
    metadata: Optional[Dict[str, Any]] = None,
):
    """Write fitted projections as one JSON document (floats round-trip exactly)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {
        "format_version": FORMAT_VERSION,
        **(metadata or {}),
        "projections": [projection.to_record() for projection in projections],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(document, f, indent=2)


def load_projections(path: Union[str, Path]) -> List[FusionProjection]:
    with open(path, encoding="utf-8") as f:
        document = json.load(f)
    if document.get("format_version") != FORMAT_VERSION:
        raise ArgumentError(f"unsupported fusion record version {document.get('format_version')}")
    return [FusionProjection.from_record(record) for record in document["projections"]]
