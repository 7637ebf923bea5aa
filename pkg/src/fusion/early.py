"""
Modality alignment and the deterministic early/mid fusion operators.

Every operator works on the aligned item set (items, not interactions), so
fitting never sees user feedback.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from src.corpus.interactions import external_sort_key
from src.fusion.projection import FusionProjection
from src.textprep.embeddings import MODALITIES, EmbeddingTable
from src.utils.errors import (
    ArgumentError,
    InsufficientDataError,
    NoCommonItemsError,
    PreconditionError,
)
from src.utils.log import get_logger

logger = get_logger(__name__)

OPERATORS = ("concat", "pca", "cca")
STAGES = ("early", "mid", "late")
CCA_SPLITS = ("half", "modality")

# eigenvalues below this fraction of the largest are treated as zero
_EIGEN_FLOOR = 1e-12
_CCA_RIDGE = 1e-6


@dataclass(frozen=True, eq=False)
class FeatureBlock:
    modality: str
    variant: str
    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=np.float64)
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def label(self) -> str:
        return f"{self.modality}:{self.variant}"


@dataclass(frozen=True, eq=False)
class AlignedFeatures:
    """Blocks sharing one item order; ``dropped`` counts keys each table lost."""

    item_ids: Tuple[str, ...]
    blocks: Tuple[FeatureBlock, ...]
    dropped: Dict[str, int] = field(default_factory=dict)

    @property
    def block_dims(self) -> List[int]:
        return [block.dim for block in self.blocks]

    @property
    def n_items(self) -> int:
        return len(self.item_ids)


@dataclass(frozen=True, eq=False)
class FusedFeatures:
    """
    One feature row per aligned item.

    ``blocks`` keeps per-modality matrices whose concatenation equals
    ``matrix`` when the operator preserves modality boundaries (concat and
    mid fusion); it is empty otherwise. ``block_projections`` holds the
    per-modality projections of mid fusion.
    """

    item_ids: Tuple[str, ...]
    matrix: np.ndarray
    operator: str
    params: Dict[str, Any]
    projection: Optional[FusionProjection] = None
    stage: str = "early"
    blocks: Tuple[FeatureBlock, ...] = ()
    block_projections: Tuple[FusionProjection, ...] = ()

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=np.float64)
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def projections(self) -> List[FusionProjection]:
        if self.projection is not None:
            return [self.projection]
        return list(self.block_projections)


def align(tables: Sequence[EmbeddingTable]) -> AlignedFeatures:
    """
    Intersect the item keys of every table.

    Args:
        tables: One or more non-empty embedding tables

    Returns:
        AlignedFeatures ordered by external id, blocks in input order
    """
    if not tables:
        raise ArgumentError("align needs at least one embedding table")
    for table in tables:
        if len(table) == 0:
            raise ArgumentError(f"embedding table {table.label} is empty")

    common = set(tables[0].item_ids)
    for table in tables[1:]:
        common &= set(table.item_ids)
    if not common:
        raise NoCommonItemsError(
            "embedding tables share no item id: " + ", ".join(table.label for table in tables)
        )

    item_ids = tuple(sorted(common, key=external_sort_key))
    blocks = []
    dropped = {}
    for table in tables:
        rows = [table.index[item_id] for item_id in item_ids]
        blocks.append(FeatureBlock(table.modality, table.variant, table.matrix[rows]))
        dropped[table.label] = len(table) - len(item_ids)
        if dropped[table.label]:
            logger.info(f"Alignment dropped {dropped[table.label]} items from {table.label}")
    return AlignedFeatures(item_ids=item_ids, blocks=tuple(blocks), dropped=dropped)


def _ordered_blocks(blocks: Sequence[FeatureBlock]) -> List[FeatureBlock]:
    modalities = [block.modality for block in blocks]
    if len(blocks) == len(MODALITIES) and sorted(modalities) == sorted(MODALITIES):
        return sorted(blocks, key=lambda block: MODALITIES.index(block.modality))
    return list(blocks)


def _concatenated(aligned: AlignedFeatures) -> Tuple[np.ndarray, List[FeatureBlock]]:
    if not aligned.blocks or aligned.n_items == 0:
        raise ArgumentError("aligned features are empty")
    blocks = _ordered_blocks(aligned.blocks)
    return np.hstack([block.matrix for block in blocks]), blocks


def fuse_concat(aligned: AlignedFeatures) -> FusedFeatures:
    """Block-wise concatenation (audio; visual; text when all three are present)."""
    matrix, blocks = _concatenated(aligned)
    return FusedFeatures(
        item_ids=aligned.item_ids,
        matrix=matrix,
        operator="concat",
        params={},
        blocks=tuple(blocks),
    )


def _zscore(matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    means = matrix.mean(axis=0)
    stds = matrix.std(axis=0)
    # rounding leaves constant columns with a tiny non-zero spread
    constant = stds <= 1e-12 * np.maximum(1.0, np.abs(means))
    stds = np.where(constant, 0.0, stds)
    standardized = (matrix - means) / np.where(constant, 1.0, stds)
    standardized[:, constant] = 0.0
    return standardized, means, stds


def _sign_flips(loadings: np.ndarray) -> np.ndarray:
    """Per-column signs making the largest-magnitude coefficient of each column positive."""
    if loadings.size == 0:
        return np.ones(loadings.shape[1])
    pivots = np.argmax(np.abs(loadings), axis=0)
    signs = np.sign(loadings[pivots, np.arange(loadings.shape[1])])
    signs[signs == 0] = 1.0
    return signs


def fit_apply_pca(aligned: AlignedFeatures, rho: float) -> FusedFeatures:
    """
    PCA over the z-scored concatenation, keeping the fewest components whose
    cumulative variance ratio reaches ``rho``.

    Args:
        aligned: Aligned modality blocks
        rho: Variance retention target in (0, 1]

    Returns:
        FusedFeatures with ``d_rho`` columns and the fitted projection
    """
    if not 0.0 < rho <= 1.0:
        raise ArgumentError(f"rho must be in (0, 1], got {rho}")
    matrix, _ = _concatenated(aligned)
    n, width = matrix.shape
    if n < 2:
        raise InsufficientDataError(f"PCA needs at least 2 items, got {n}")

    standardized, means, stds = _zscore(matrix)
    active = np.flatnonzero(stds > 0)
    if active.size == 0:
        raise InsufficientDataError("every feature column is constant")

    reduced = standardized[:, active]
    covariance = reduced.T @ reduced / n
    eigenvalues, eigenvectors = linalg.eigh(covariance)
    order = np.argsort(-eigenvalues, kind="stable")
    eigenvalues = eigenvalues[order]
    eigenvectors = eigenvectors[:, order]
    eigenvalues = np.where(eigenvalues > _EIGEN_FLOOR * eigenvalues[0], eigenvalues, 0.0)

    ratios = np.cumsum(eigenvalues) / eigenvalues.sum()
    retained = min(int(np.searchsorted(ratios, rho - 1e-12, side="left")) + 1, len(eigenvalues))

    loadings = np.zeros((width, retained))
    loadings[active] = eigenvectors[:, :retained]
    loadings = loadings * _sign_flips(loadings)

    spectrum = np.zeros(width)
    spectrum[: eigenvalues.size] = eigenvalues
    projection = FusionProjection(
        kind="pca",
        params={"rho": rho},
        columns=np.arange(width),
        means=means,
        stds=stds,
        loadings=loadings,
        retained=retained,
        spectrum=spectrum,
    )
    logger.debug(f"PCA rho={rho}: kept {retained} of {width} dims")
    return FusedFeatures(
        item_ids=aligned.item_ids,
        matrix=standardized @ loadings,
        operator="pca",
        params={"rho": rho},
        projection=projection,
    )


def _inverse_sqrt(covariance: np.ndarray) -> np.ndarray:
    eigenvalues, eigenvectors = linalg.eigh(covariance)
    eigenvalues = np.maximum(eigenvalues, np.finfo(np.float64).tiny)
    return (eigenvectors / np.sqrt(eigenvalues)) @ eigenvectors.T


def _ridge(covariance: np.ndarray) -> np.ndarray:
    dim = covariance.shape[0]
    scale = np.trace(covariance) / dim
    epsilon = _CCA_RIDGE * (scale if scale > 0 else 1.0)
    return covariance + epsilon * np.eye(dim)


def _cca_views(aligned: AlignedFeatures, blocks: List[FeatureBlock], width: int, split: str):
    if split == "half":
        cut = math.ceil(width / 2)
        return np.arange(cut), np.arange(cut, width)
    if split != "modality":
        raise ArgumentError(f"unknown CCA split '{split}' (allowed: {', '.join(CCA_SPLITS)})")

    text_columns, other_columns = [], []
    start = 0
    for block in blocks:
        columns = range(start, start + block.dim)
        (text_columns if block.modality == "text" else other_columns).extend(columns)
        start += block.dim
    if not text_columns or not other_columns:
        raise ArgumentError("modality-split CCA needs a text block and at least one other block")
    return np.array(text_columns), np.array(other_columns)


def fit_apply_cca(aligned: AlignedFeatures, k: int, split: str = "half") -> FusedFeatures:
    """
    Two-view CCA over the concatenation, keeping the first ``k`` view-1 variates.

    Args:
        aligned: Aligned modality blocks
        k: Number of canonical dimensions to keep
        split: ``half`` (first ceil(d/2) columns vs the rest) or ``modality``
            (text vs every other block)

    Returns:
        FusedFeatures with ``k`` columns and the fitted projection
    """
    matrix, blocks = _concatenated(aligned)
    n, width = matrix.shape
    view1, view2 = _cca_views(aligned, blocks, width, split)
    if view1.size == 0 or view2.size == 0:
        raise ArgumentError(f"CCA needs two non-empty views, got dims {view1.size} and {view2.size}")
    if k < 1 or k > min(view1.size, view2.size):
        raise ArgumentError(f"k={k} must be in [1, {min(view1.size, view2.size)}] for view dims {view1.size} and {view2.size}")
    if n <= max(width / 2, k):
        raise InsufficientDataError(f"CCA needs more than {max(width / 2, k)} items, got {n}")

    x1, x2 = matrix[:, view1], matrix[:, view2]
    means1, means2 = x1.mean(axis=0), x2.mean(axis=0)
    centred1, centred2 = x1 - means1, x2 - means2
    whiten1 = _inverse_sqrt(_ridge(centred1.T @ centred1 / n))
    whiten2 = _inverse_sqrt(_ridge(centred2.T @ centred2 / n))
    cross = centred1.T @ centred2 / n

    left, correlations, right_t = linalg.svd(whiten1 @ cross @ whiten2, full_matrices=False)
    weights1 = whiten1 @ left
    weights2 = whiten2 @ right_t.T
    # view 2 takes the view-1 flips so paired variates stay positively correlated
    flips = _sign_flips(weights1)
    weights1 = weights1 * flips
    weights2 = weights2 * flips

    correlations = np.clip(correlations, 0.0, 1.0)
    params = {"k": k, "split": split}
    projection = FusionProjection(
        kind="cca",
        params=params,
        columns=view1,
        means=means1,
        stds=np.ones(view1.size),
        loadings=weights1[:, :k],
        retained=k,
        spectrum=correlations,
        view2_columns=view2,
        view2_means=means2,
        view2_loadings=weights2[:, :k],
    )
    logger.debug(f"CCA k={k} ({split}): leading correlation {correlations[0]:.4f}")
    return FusedFeatures(
        item_ids=aligned.item_ids,
        matrix=centred1 @ weights1[:, :k],
        operator="cca",
        params=params,
        projection=projection,
    )


def fuse_mid(
    aligned: AlignedFeatures,
    operator: str,
    rho: Optional[float] = None,
    k: Optional[int] = None,
) -> FusedFeatures:
    """
    Mid fusion: project each modality on its own, then concatenate.

    CCA inside a single modality splits that block's columns in half.
    """
    if operator not in ("pca", "cca"):
        raise ArgumentError(f"mid fusion needs pca or cca, got '{operator}'")

    projected: List[FeatureBlock] = []
    projections: List[FusionProjection] = []
    for block in _ordered_blocks(aligned.blocks):
        if operator == "cca" and block.dim < 2:
            raise PreconditionError(
                f"mid CCA splits each block into two views; block {block.label} has dimension {block.dim}"
            )
        single = AlignedFeatures(item_ids=aligned.item_ids, blocks=(block,))
        if operator == "pca":
            fused = fit_apply_pca(single, rho)
        else:
            fused = fit_apply_cca(single, k, split="half")
        projected.append(FeatureBlock(block.modality, block.variant, fused.matrix))
        projections.append(fused.projection)

    params = {"rho": rho} if operator == "pca" else {"k": k}
    return FusedFeatures(
        item_ids=aligned.item_ids,
        matrix=np.hstack([block.matrix for block in projected]),
        operator=operator,
        params=params,
        stage="mid",
        blocks=tuple(projected),
        block_projections=tuple(projections),
    )


def fuse(
    aligned: AlignedFeatures,
    operator: str = "concat",
    rho: Optional[float] = None,
    k: Optional[int] = None,
    stage: str = "early",
    cca_split: str = "half",
) -> FusedFeatures:
    """Dispatch to the configured operator; ``late`` feeds systems early-fused features."""
    if operator not in OPERATORS:
        raise ArgumentError(f"unknown fusion operator '{operator}' (allowed: {', '.join(OPERATORS)})")
    if stage not in STAGES:
        raise ArgumentError(f"unknown fusion stage '{stage}' (allowed: {', '.join(STAGES)})")
    if operator == "pca" and rho is None:
        raise ArgumentError("pca fusion needs rho")
    if operator == "cca" and k is None:
        raise ArgumentError("cca fusion needs k")

    if stage == "mid" and operator != "concat":
        return fuse_mid(aligned, operator, rho=rho, k=k)
    if operator == "concat":
        fused = fuse_concat(aligned)
    elif operator == "pca":
        fused = fit_apply_pca(aligned, rho)
    else:
        fused = fit_apply_cca(aligned, k, split=cca_split)
    if stage != "early":
        fused = FusedFeatures(
            item_ids=fused.item_ids,
            matrix=fused.matrix,
            operator=fused.operator,
            params=fused.params,
            projection=fused.projection,
            stage=stage,
            blocks=fused.blocks,
        )
    logger.info(f"Fused {len(aligned.blocks)} blocks with {operator} ({stage}): {fused.matrix.shape[0]} items x {fused.dim} dims")
    return fused


def _rows_for(item_ids: Sequence[str], source_ids: Sequence[str]) -> np.ndarray:
    index = {item_id: row for row, item_id in enumerate(source_ids)}
    rows = []
    for item_id in item_ids:
        if item_id not in index:
            raise PreconditionError(f"item '{item_id}' has no feature row", item_id=item_id)
        rows.append(index[item_id])
    return np.array(rows, dtype=np.int64)


def item_feature_matrix(
    features: Union[FusedFeatures, AlignedFeatures, EmbeddingTable],
    item_ids: Sequence[str],
) -> np.ndarray:
    """Feature rows in the order of ``item_ids`` (e.g. a log's item vocabulary)."""
    if isinstance(features, AlignedFeatures):
        matrix, _ = _concatenated(features)
    else:
        matrix = features.matrix
    return matrix[_rows_for(item_ids, features.item_ids)]


def item_feature_blocks(
    features: Union[FusedFeatures, AlignedFeatures],
    item_ids: Sequence[str],
) -> List[np.ndarray]:
    """
    Per-modality matrices in the order of ``item_ids``.

    Features without modality blocks (early PCA/CCA) come back as one block.
    """
    rows = _rows_for(item_ids, features.item_ids)
    blocks = features.blocks if isinstance(features, FusedFeatures) else _ordered_blocks(features.blocks)
    if not blocks:
        return [features.matrix[rows]]
    return [block.matrix[rows] for block in blocks]
