"""
End-to-end experiment pipeline.

Stages run in a fixed order (ingest, textprep, align, split, fuse, train,
recommend, evaluate). Each is timed for the manifest; the first failure is
re-raised as a StageError naming the stage, partial outputs are removed and
the manifest is written with status ``failed``.
"""

import json
import platform
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from src.bench.config import ExperimentConfig, config_hash, config_to_dict, dump_config, load_config_with_warnings
from src.bench.reporting import RESULTS_FILE, results_row, write_results
from src.bench.search import GridSpec, grid_search
from src.corpus.filtering import k_core_filter
from src.corpus.interactions import InteractionLog, load_interactions
from src.corpus.splitting import SplitPlan, simulate_cold_start, split, validation_split
from src.fusion.early import AlignedFeatures, FusedFeatures, align, fuse, item_feature_matrix
from src.fusion.late import fuse_user_lists, weight_schedule, write_ranked_lists
from src.fusion.projection import save_projections
from src.metrics.accuracy import ndcg_at_k
from src.metrics.context import EvalContext, MetricReport, genre_distributions
from src.metrics.evaluation import evaluate
from src.models.base import CONTENT_FAMILIES, HyperParams, Recommender, TrainingSet, recommend_all
from src.models.registry import train_model
from src.textprep.augment import TranscriptLog, build_canonical_texts, write_texts
from src.textprep.embeddings import drop_rows, l2_normalize, load_embedding_table, save_feature_table
from src.textprep.metadata import load_item_metadata
from src.textprep.providers import make_provider
from src.utils.errors import ArgumentError, StageError
from src.utils.log import get_logger

logger = get_logger(__name__)

STAGE_ORDER = ("ingest", "textprep", "align", "split", "fuse", "train", "recommend", "evaluate")
ARTIFACTS = (RESULTS_FILE, "ranked_lists.tsv", "fusion.json", "texts.jsonl", "transcript.jsonl")
MANIFEST_FILE = "manifest.json"


def package_version() -> str:
    try:
        return metadata.version("mmrec-bench")
    except metadata.PackageNotFoundError:
        return "0.1.0"


@dataclass
class RunResult:
    """What a finished run produced."""

    report: MetricReport
    run_dir: Path
    manifest: Dict[str, Any]
    best: Optional[Any] = None


@dataclass
class _RunState:
    config: ExperimentConfig
    run_dir: Path
    warnings: List[str] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)
    seeds: Dict[str, Any] = field(default_factory=dict)
    log: Optional[InteractionLog] = None
    genres: Optional[Dict[str, tuple]] = None
    aligned: Optional[AlignedFeatures] = None
    plan: Optional[SplitPlan] = None
    validation: Optional[SplitPlan] = None
    features: Optional[FusedFeatures] = None
    models: Dict[str, Recommender] = field(default_factory=dict)
    system_scores: Dict[str, float] = field(default_factory=dict)
    lists: Dict[int, Any] = field(default_factory=dict)
    best: Optional[Any] = None
    train_seconds: float = 0.0

    def warn(self, message: str):
        self.warnings.append(message)
        logger.warning(message)


def run_directory(config: ExperimentConfig) -> Path:
    """``<output_dir>/<dataset>-<model>-<hash prefix>``; identical configs share a directory."""
    family = "+".join(config.fusion.late.systems) if config.fusion.stage == "late" else config.model.family
    return config.resolve(config.runtime.output_dir) / f"{config.dataset.name}-{family}-{config_hash(config)[:12]}"


@contextmanager
def _stage(state: _RunState, name: str):
    logger.info(f"[{STAGE_ORDER.index(name) + 1}/{len(STAGE_ORDER)}] {name}")
    started = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        state.timings[name] = round(time.perf_counter() - started, 6)
        raise StageError(name, e) from e
    state.timings[name] = round(time.perf_counter() - started, 6)


def _ingest(state: _RunState):
    config = state.config
    log = load_interactions(config.resolve(config.dataset.path), config.dataset.format)
    if config.split.k_core and config.split.k_core_stage == "before_alignment":
        log = k_core_filter(log, config.split.k_core)
    state.log = log


def _textprep(state: _RunState):
    config = state.config
    if not config.dataset.items_path:
        return
    tags_path = config.resolve(config.dataset.tags_path) if config.dataset.tags_path else None
    catalogue = load_item_metadata(config.resolve(config.dataset.items_path), config.dataset.items_format, tags_path)
    state.genres = {item_id: meta.genres for item_id, meta in catalogue.items()}

    items = [catalogue[item_id] for item_id in state.log.items if item_id in catalogue]
    if config.modality.augmentation:
        provider = make_provider(config.synopsis.provider)
        transcript = TranscriptLog(state.run_dir / Path(config.synopsis.transcript).name)
        texts = build_canonical_texts(
            items,
            mode="A",
            provider=provider,
            transcript=transcript,
            fallback_to_na=config.synopsis.fallback_to_na,
            workers=config.synopsis.workers,
        )
        fallbacks = sum(text.fallback for text in texts)
        if fallbacks:
            state.warn(f"{fallbacks} synopses fell back to the NA text")
    else:
        texts = build_canonical_texts(items, mode="NA")
    write_texts(texts, state.run_dir / "texts.jsonl")


def load_aligned(config: ExperimentConfig, warn: Callable[[str], None] = logger.warning) -> AlignedFeatures:
    """Load, normalise and align the enabled modality tables."""
    modality = config.modality
    tables = []
    for name in modality.enabled:
        table = load_embedding_table(config.resolve(modality.path_for(name)), name, modality.variant(name))
        if modality.normalize:
            table = l2_normalize(table)
        if modality.drop_zero_rows:
            zero = table.zero_rows or tuple(
                item_id for item_id, row in zip(table.item_ids, table.matrix) if not np.any(row)
            )
            if zero:
                warn(f"{table.label}: dropping {len(zero)} zero rows")
                table = drop_rows(table, zero)
        tables.append(table)
    aligned = align(tables)
    for label, count in aligned.dropped.items():
        if count:
            warn(f"{label}: {count} items without a row in every enabled modality were dropped")
    return aligned


def fuse_only(config: ExperimentConfig, out_path: Optional[Union[str, Path]] = None) -> Tuple[FusedFeatures, Path]:
    """
    Align and fuse the configured modalities without touching interactions.

    Writes the fused table (``item_id<TAB>v1...``) and, when a projection was
    fitted, ``fusion.json`` beside it.
    """
    if not config.modality.enabled:
        raise ArgumentError("fusion needs at least one enabled modality")
    fusion = config.fusion
    stage = "early" if fusion.stage == "late" else fusion.stage
    features = fuse(load_aligned(config), fusion.operator, fusion.rho, fusion.k, stage, fusion.cca_split)
    out_path = Path(out_path) if out_path else run_directory(config) / "fused_features.tsv"
    save_feature_table(features.item_ids, features.matrix, out_path)
    if features.projections:
        save_projections(
            features.projections,
            out_path.parent / "fusion.json",
            metadata={"operator": fusion.operator, "stage": stage, "item_ids": list(features.item_ids)},
        )
    return features, out_path


def _align(state: _RunState):
    config = state.config
    if not config.modality.enabled:
        return
    aligned = load_aligned(config, state.warn)

    log = state.log.restrict_items(aligned.item_ids)
    if log.n_items < state.log.n_items:
        state.warn(f"{state.log.n_items - log.n_items} interacted items have no features and were removed")
    if config.split.k_core and config.split.k_core_stage == "after_alignment":
        log = k_core_filter(log, config.split.k_core)
    state.log = log
    state.aligned = aligned


def _split(state: _RunState):
    config = state.config
    seed = config.runtime.seed
    plan = split(state.log, config.split.strategy, config.split.test_ratio, seed)
    if config.split.simulate_cold_start:
        plan = simulate_cold_start(plan, state.log, config.split.cold_fraction, seed)
    state.plan = plan
    state.seeds["split"] = seed
    needs_validation = bool(config.model.grid) or (
        config.fusion.stage == "late" and config.fusion.late.schedule == "proportional"
    )
    if needs_validation:
        state.validation = validation_split(state.log, plan, config.split.validation_ratio, seed)


def _fuse(state: _RunState):
    config = state.config
    if state.aligned is None:
        return
    fusion = config.fusion
    if not config.uses_features:
        # interaction-only models: plain concatenation, used for diversity only
        state.features = fuse(state.aligned, "concat")
        return
    state.features = fuse(state.aligned, fusion.operator, fusion.rho, fusion.k, fusion.stage, fusion.cca_split)
    if state.features.projections:
        save_projections(
            state.features.projections,
            state.run_dir / "fusion.json",
            metadata={"operator": fusion.operator, "stage": fusion.stage, "item_ids": list(state.features.item_ids)},
        )


def _systems(config: ExperimentConfig) -> List[str]:
    return list(config.fusion.late.systems) if config.fusion.stage == "late" else [config.model.family]


def _features_for(state: _RunState, family: str):
    return state.features if family in CONTENT_FAMILIES else None


def _train(state: _RunState):
    config = state.config
    hp = config.hyperparams()
    training = TrainingSet.from_split(state.log, state.plan)

    if config.model.grid and config.fusion.stage == "late":
        state.warn("model.grid is not searched for late fusion; every system uses model.hyperparams")
    elif config.model.grid:
        family = config.model.family
        fixed = ("epochs",) if config.runtime.fast_prototype else ()
        state.best = grid_search(
            family,
            GridSpec(dict(config.model.grid)),
            state.validation,
            state.log,
            base=hp,
            features=_features_for(state, family),
            master_seed=config.runtime.seed,
            objective=config.evaluation.objective,
            k=config.evaluation.k,
            workers=config.runtime.workers if config.runtime.parallel_hpo else 1,
            fixed=fixed,
        )
        hp = state.best.hp
        state.seeds["trials"] = [trial.seed for trial in state.best.trials]

    started = time.perf_counter()
    for family in _systems(config):
        state.models[family] = train_model(family, training, _features_for(state, family), hp)
    state.train_seconds = time.perf_counter() - started
    state.seeds["model"] = hp.seed
    state.seeds["hyperparams"] = hp.to_dict()

    if config.fusion.stage == "late" and config.fusion.late.schedule == "proportional":
        state.system_scores = _validation_scores(state, hp)


def _validation_scores(state: _RunState, hp: HyperParams) -> Dict[str, float]:
    """Validation nDCG per late-fusion system, used as proportional weights."""
    config = state.config
    training = TrainingSet.from_split(state.log, state.validation)
    ctx = EvalContext.from_split(state.log, state.validation, k=config.evaluation.k)
    users = sorted(ctx.relevance)
    scores = {}
    for family in _systems(config):
        model = train_model(family, training, _features_for(state, family), hp)
        scores[family] = ndcg_at_k(recommend_all(model, users, config.evaluation.k), ctx) or 0.0
    return scores


def _recommend(state: _RunState):
    config = state.config
    k = config.evaluation.k
    users = sorted({int(u) for u in state.log.user_idx[state.plan.test_indices]})
    if config.fusion.stage != "late":
        state.lists = recommend_all(state.models[config.model.family], users, k)
    else:
        late = config.fusion.late
        systems = _systems(config)
        depth = max(k, config.evaluation.late_depth)
        per_system = [recommend_all(state.models[family], users, depth) for family in systems]
        weights = late.weights
        if weights is None and late.rule == "wborda":
            scores = [state.system_scores.get(family, 0.0) for family in systems] if late.schedule == "proportional" else None
            weights = weight_schedule(late.schedule, len(systems), scores)
        state.lists = fuse_user_lists(
            per_system,
            state.log.n_items,
            rule=late.rule,
            weights=weights,
            rrf_k=late.rrf_k,
            missing_rank=late.missing_rank,
            depth=k,
        )
    write_ranked_lists(state.run_dir / "ranked_lists.tsv", state.lists, state.log.users, state.log.items)


def _item_features(state: _RunState) -> Optional[Dict[int, np.ndarray]]:
    if state.features is None:
        return None
    matrix = item_feature_matrix(state.features, state.log.items)
    return {item: matrix[item] for item in range(state.log.n_items)}


def _item_genres(state: _RunState) -> Optional[Dict[int, Dict[str, float]]]:
    if state.genres is None:
        return None
    by_index = {
        item: state.genres[item_id]
        for item, item_id in enumerate(state.log.items)
        if item_id in state.genres
    }
    return genre_distributions(by_index)


def _evaluate(state: _RunState) -> MetricReport:
    config = state.config
    ctx = EvalContext.from_split(
        state.log,
        state.plan,
        k=config.evaluation.k,
        item_features=_item_features(state),
        item_genres=_item_genres(state),
    )
    run = describe_run(config)
    report = evaluate(state.lists, ctx, metadata=run, coldrate_level=config.evaluation.coldrate_level)
    write_results([results_row(report, run, state.train_seconds)], state.run_dir / RESULTS_FILE)
    return report


def describe_run(config: ExperimentConfig) -> Dict[str, Any]:
    """The descriptive columns of a results row."""
    modality = config.modality
    late = config.fusion.stage == "late"
    uses_features = config.uses_features
    return {
        "model": "+".join(config.fusion.late.systems) if late else config.model.family,
        "fusion": config.fusion.late.rule if late else (config.fusion.operator if uses_features else "none"),
        "stage": config.fusion.stage if uses_features or late else "none",
        "text_variant": (modality.text_variant or "") if "text" in modality.enabled else "",
        "augmented": bool(modality.augmentation) if "text" in modality.enabled else False,
        "audio_variant": modality.audio_variant if "audio" in modality.enabled else "",
        "visual_variant": modality.visual_variant if "visual" in modality.enabled else "",
        "seed": config.runtime.seed,
        "k": config.evaluation.k,
    }


def _write_manifest(state: _RunState, status: str, report: Optional[MetricReport] = None, error: Optional[StageError] = None) -> Dict[str, Any]:
    manifest: Dict[str, Any] = {
        "status": status,
        "config_hash": config_hash(state.config),
        "version": package_version(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "seeds": state.seeds,
        "stage_seconds": state.timings,
        "warnings": state.warnings,
        "config": config_to_dict(state.config),
    }
    if report is not None:
        manifest["metrics"] = report.values
        manifest["extra_metrics"] = report.extra
        manifest["users"] = {
            "evaluated": report.users_evaluated,
            "without_relevance": report.users_without_relevance,
            "without_history": report.users_without_history,
        }
    if state.best is not None:
        manifest["grid_search"] = {
            "objective": state.best.objective,
            "best": state.best.trial.as_row(),
            "trials": state.best.table(),
        }
    if state.system_scores:
        manifest["system_validation_ndcg"] = state.system_scores
    if error is not None:
        manifest["failed_stage"] = error.stage
        manifest["error"] = str(error.cause)
    with open(state.run_dir / MANIFEST_FILE, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, default=str)
    return manifest


def run_experiment(config: ExperimentConfig, warnings: Optional[List[str]] = None) -> RunResult:
    """
    Run every stage of one experiment.

    Args:
        config: Validated experiment config
        warnings: Warnings gathered while loading the config, copied into the manifest

    Returns:
        RunResult with the metric report, the run directory and the manifest

    Raises:
        StageError: When a stage fails; ``stage`` names it and ``cause`` holds the original error
    """
    run_dir = run_directory(config)
    run_dir.mkdir(parents=True, exist_ok=True)
    state = _RunState(config=config, run_dir=run_dir, warnings=list(warnings or []))
    if config.runtime.fast_prototype:
        state.warn("fast_prototype is on: every model trains for a single epoch")
    dump_config(config, run_dir / "config.yaml")
    logger.info(f"Run directory: {run_dir}")

    try:
        with _stage(state, "ingest"):
            _ingest(state)
        with _stage(state, "textprep"):
            _textprep(state)
        with _stage(state, "align"):
            _align(state)
        with _stage(state, "split"):
            _split(state)
        with _stage(state, "fuse"):
            _fuse(state)
        with _stage(state, "train"):
            _train(state)
        with _stage(state, "recommend"):
            _recommend(state)
        with _stage(state, "evaluate"):
            report = _evaluate(state)
    except StageError as e:
        logger.error(f"Run failed: {e}")
        for name in ARTIFACTS:
            (run_dir / name).unlink(missing_ok=True)
        _write_manifest(state, "failed", error=e)
        raise

    manifest = _write_manifest(state, "complete", report)
    return RunResult(report=report, run_dir=run_dir, manifest=manifest, best=state.best)


def run_from_path(path: Union[str, Path]) -> RunResult:
    config, warnings = load_config_with_warnings(path)
    return run_experiment(config, warnings)
