"""Results CSV schema, run collection and tradeoff tables."""

from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import pandas as pd

from src.metrics.context import METRICS, MetricReport
from src.metrics.tradeoff import tradeoff_auc
from src.utils.errors import ArgumentError, DegenerateCurveError, ParseError
from src.utils.log import get_logger

logger = get_logger(__name__)

RUN_COLUMNS = ["model", "fusion", "stage", "text_variant", "augmented", "audio_variant", "visual_variant", "seed", "k"]
RESULTS_COLUMNS = RUN_COLUMNS + list(METRICS) + ["train_seconds"]
RESULTS_FILE = "results.csv"
TRADEOFF_AXES = ("coldrate", "coverage")
TRADEOFF_COLUMNS = ["model", "axis", "points", "auc"]


def results_row(report: MetricReport, run: Mapping[str, Any], train_seconds: float) -> Dict[str, Any]:
    """One results row from a metric report and the run description."""
    row = {column: run.get(column, "") for column in RUN_COLUMNS}
    row["k"] = report.k
    for name in METRICS:
        row[name] = report.values.get(name)
    row["train_seconds"] = round(float(train_seconds), 3)
    return row


def write_results(rows: Sequence[Mapping[str, Any]], path: Union[str, Path]):
    """Write rows with the fixed column order; undefined metrics stay empty."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame([{column: row.get(column) for column in RESULTS_COLUMNS} for row in rows], columns=RESULTS_COLUMNS)
    frame.to_csv(path, index=False, lineterminator="\n")


def read_results(path: Union[str, Path]) -> pd.DataFrame:
    """
    Read a results CSV and check its header.

    Raises:
        ParseError: When the header differs from the fixed schema
    """
    frame = pd.read_csv(path, keep_default_na=True, dtype={"text_variant": str, "audio_variant": str, "visual_variant": str})
    if list(frame.columns) != RESULTS_COLUMNS:
        raise ParseError(str(path), 1, f"unexpected header {','.join(frame.columns)}")
    return frame


def collect_results(runs_dir: Union[str, Path]) -> pd.DataFrame:
    """Concatenate every ``results.csv`` under ``runs_dir`` (sorted by path)."""
    runs_dir = Path(runs_dir)
    if not runs_dir.is_dir():
        raise FileNotFoundError(f"runs directory not found: {runs_dir}")
    frames = []
    for path in sorted(runs_dir.rglob(RESULTS_FILE)):
        frame = read_results(path)
        frame.insert(0, "run", str(path.parent.relative_to(runs_dir)))
        frames.append(frame)
    if not frames:
        raise ArgumentError(f"no {RESULTS_FILE} found under {runs_dir}")
    logger.info(f"Collected {len(frames)} result files from {runs_dir}")
    return pd.concat(frames, ignore_index=True)


def tradeoff_table(results: pd.DataFrame, axes: Sequence[str] = TRADEOFF_AXES, accuracy: str = "ndcg") -> pd.DataFrame:
    """
    Tradeoff AUC per (model, axis).

    Every results row of a model is one (axis value, accuracy) point. Groups
    with fewer than two distinct axis values get an empty AUC.
    """
    rows: List[Dict[str, Any]] = []
    for model, group in results.groupby("model", sort=True):
        for axis in axes:
            points = group[[axis, accuracy]].dropna()
            auc: Optional[float]
            try:
                auc = tradeoff_auc(zip(points[axis], points[accuracy]))
            except DegenerateCurveError as e:
                logger.info(f"No tradeoff curve for {model} on {axis}: {e}")
                auc = None
            rows.append({"model": model, "axis": axis, "points": len(points), "auc": auc})
    return pd.DataFrame(rows, columns=TRADEOFF_COLUMNS)


def write_report(runs_dir: Union[str, Path], out_path: Optional[Union[str, Path]] = None) -> pd.DataFrame:
    """Collect runs and write ``tradeoff.csv`` next to them (or to ``out_path``)."""
    results = collect_results(runs_dir)
    table = tradeoff_table(results)
    out_path = Path(out_path) if out_path else Path(runs_dir) / "tradeoff.csv"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(out_path, index=False, lineterminator="\n")
    return table
