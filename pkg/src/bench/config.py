"""
Declarative experiment configuration.

One YAML document describes a whole run. It is parsed into frozen
dataclasses with defaults filled in; enum values are checked against closed
sets and unknown keys are rejected (strict mode, the default) or logged and
dropped (``strict: false``).
"""

import hashlib
import json
from dataclasses import MISSING, asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import yaml

from src.corpus.interactions import FORMATS
from src.corpus.splitting import STRATEGIES
from src.fusion.early import CCA_SPLITS, OPERATORS, STAGES
from src.fusion.late import MISSING_RANKS, RULES, SCHEDULES
from src.metrics.context import COLDRATE_LEVELS
from src.models.base import CONTENT_FAMILIES, FAMILIES, HyperParams
from src.textprep.embeddings import MODALITIES
from src.textprep.providers import PROVIDERS
from src.utils.errors import ConfigError
from src.utils.log import get_logger

logger = get_logger(__name__)

AUDIO_VARIANTS = ("blf", "i_vec")
VISUAL_VARIANTS = ("cnn", "avf")
K_CORE_STAGES = ("before_alignment", "after_alignment")
OBJECTIVES = ("ndcg", "recall")
METADATA_FORMATS = ("movielens_dat", "tsv")

# accepted for compatibility with existing configs, never used
IGNORED_RUNTIME_KEYS = ("gpu_id", "use_gpu")

# excluded from the config hash: they change where or how fast a run goes, not what it computes
_UNHASHED = {("runtime", "output_dir"), ("runtime", "workers"), ("runtime", "parallel_hpo"), ("synopsis", "workers"), ("strict",)}


@dataclass(frozen=True)
class DatasetConfig:
    path: str
    name: str = "dataset"
    format: str = "tsv"
    items_path: Optional[str] = None
    items_format: str = "movielens_dat"
    tags_path: Optional[str] = None


@dataclass(frozen=True)
class SplitConfig:
    strategy: str = "random"
    test_ratio: float = 0.2
    k_core: Optional[int] = None
    k_core_stage: str = "before_alignment"
    simulate_cold_start: bool = False
    cold_fraction: float = 0.2
    validation_ratio: float = 0.1


@dataclass(frozen=True)
class ModalityConfig:
    enabled: Tuple[str, ...] = ()
    text_variant: Optional[str] = None
    augmentation: bool = False
    audio_variant: str = "blf"
    visual_variant: str = "cnn"
    embeddings_dir: str = "."
    paths: Dict[str, str] = field(default_factory=dict)
    normalize: bool = True
    drop_zero_rows: bool = False

    def variant(self, modality: str) -> str:
        if modality == "audio":
            return self.audio_variant
        if modality == "visual":
            return self.visual_variant
        return f"{self.text_variant}_{'A' if self.augmentation else 'NA'}"

    def path_for(self, modality: str) -> str:
        return self.paths.get(modality) or str(Path(self.embeddings_dir) / f"{modality}_{self.variant(modality)}.tsv")


@dataclass(frozen=True)
class LateFusionConfig:
    systems: Tuple[str, ...] = ()
    rule: str = "rrf"
    weights: Optional[Tuple[float, ...]] = None
    schedule: str = "uniform"
    rrf_k: int = 60
    missing_rank: str = "list"


@dataclass(frozen=True)
class FusionConfig:
    operator: str = "concat"
    rho: Optional[float] = None
    k: Optional[int] = None
    stage: str = "early"
    cca_split: str = "half"
    late: LateFusionConfig = field(default_factory=LateFusionConfig)


@dataclass(frozen=True)
class ModelConfig:
    family: str
    hyperparams: Dict[str, Any] = field(default_factory=dict)
    grid: Dict[str, List[Any]] = field(default_factory=dict)


@dataclass(frozen=True)
class EvaluationConfig:
    k: int = 10
    objective: str = "ndcg"
    coldrate_level: str = "item"
    late_depth: int = 100


@dataclass(frozen=True)
class SynopsisConfig:
    provider: str = "stub"
    fallback_to_na: bool = False
    transcript: str = "transcript.jsonl"
    workers: int = 1


@dataclass(frozen=True)
class RuntimeConfig:
    seed: int = 42
    epochs: Optional[int] = None
    fast_prototype: bool = False
    parallel_hpo: bool = False
    workers: int = 1
    output_dir: str = "runs"


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig
    model: ModelConfig
    root_path: str = "."
    split: SplitConfig = field(default_factory=SplitConfig)
    modality: ModalityConfig = field(default_factory=ModalityConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    synopsis: SynopsisConfig = field(default_factory=SynopsisConfig)
    runtime: RuntimeConfig = field(default_factory=RuntimeConfig)
    strict: bool = True

    def resolve(self, path: Union[str, Path]) -> Path:
        """Resolve a configured path against ``root_path``."""
        path = Path(path)
        return path if path.is_absolute() else Path(self.root_path) / path

    @property
    def uses_features(self) -> bool:
        if self.fusion.stage == "late":
            return any(system in CONTENT_FAMILIES for system in self.fusion.late.systems)
        return self.model.family in CONTENT_FAMILIES

    def hyperparams(self, family: Optional[str] = None) -> HyperParams:
        """
        Hyper-parameters for the final model.

        ``model.hyperparams.epochs`` takes precedence over ``runtime.epochs``;
        ``fast_prototype`` forces a single epoch. The run seed is used unless
        the hyper-parameters set their own.
        """
        values = dict(self.model.hyperparams)
        if "epochs" not in values and self.runtime.epochs is not None:
            values["epochs"] = self.runtime.epochs
        if self.runtime.fast_prototype:
            values["epochs"] = 1
        values.setdefault("seed", self.runtime.seed)
        return HyperParams.from_dict(values)


class _Parser:
    """Walks the raw YAML mapping, collecting warnings for ignored keys."""

    def __init__(self, strict: bool):
        self.strict = strict
        self.warnings: List[str] = []

    def mapping(self, raw: Any, key: str) -> Dict[str, Any]:
        if raw is None:
            return {}
        if not isinstance(raw, dict):
            raise ConfigError(key, f"expected a mapping, got {type(raw).__name__}")
        return raw

    def unknown(self, raw: Dict[str, Any], allowed, key: str):
        extra = sorted(set(raw) - set(allowed))
        if not extra:
            return
        where = f"{key}." if key else ""
        if self.strict:
            raise ConfigError(f"{where}{extra[0]}", "unknown key", allowed=sorted(allowed))
        for name in extra:
            message = f"ignoring unknown config key '{where}{name}'"
            self.warnings.append(message)
            logger.warning(message)

    def section(self, cls, raw: Any, key: str, **nested) -> Any:
        raw = self.mapping(raw, key)
        names = [f.name for f in fields(cls)]
        self.unknown(raw, names, key)
        values = {name: raw[name] for name in names if name in raw and name not in nested}
        values.update(nested)
        try:
            return cls(**values)
        except TypeError as e:
            missing = [f.name for f in fields(cls) if f.name not in values and f.default is MISSING and f.default_factory is MISSING]
            raise ConfigError(f"{key}.{missing[0]}" if missing else key, f"missing required key ({e})")


def _choice(key: str, value: Any, allowed) -> Any:
    if value not in allowed:
        raise ConfigError(key, f"invalid value {value!r}", allowed=allowed)
    return value


def _number(key: str, value: Any, kind=float, low=None, high=None, low_open=False) -> Any:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or (kind is int and not isinstance(value, int)):
        raise ConfigError(key, f"expected {kind.__name__}, got {value!r}")
    if low is not None and (value <= low if low_open else value < low):
        raise ConfigError(key, f"must be {'>' if low_open else '>='} {low}, got {value}")
    if high is not None and value > high:
        raise ConfigError(key, f"must be <= {high}, got {value}")
    return kind(value)


def _flag(key: str, value: Any) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(key, f"expected true or false, got {value!r}")
    return value


def _validate(config: ExperimentConfig) -> ExperimentConfig:
    dataset = config.dataset
    _choice("dataset.format", dataset.format, FORMATS)
    _choice("dataset.items_format", dataset.items_format, METADATA_FORMATS)

    split = config.split
    _choice("split.strategy", split.strategy, STRATEGIES)
    _choice("split.k_core_stage", split.k_core_stage, K_CORE_STAGES)
    split = replace(
        split,
        test_ratio=_number("split.test_ratio", split.test_ratio, low=0.0, high=1.0, low_open=True),
        cold_fraction=_number("split.cold_fraction", split.cold_fraction, low=0.0, high=1.0),
        validation_ratio=_number("split.validation_ratio", split.validation_ratio, low=0.0, high=1.0, low_open=True),
        simulate_cold_start=_flag("split.simulate_cold_start", split.simulate_cold_start),
        k_core=None if split.k_core is None else _number("split.k_core", split.k_core, kind=int, low=1),
    )
    if split.test_ratio >= 1.0:
        raise ConfigError("split.test_ratio", f"must be < 1, got {split.test_ratio}")

    modality = config.modality
    enabled = tuple(modality.enabled or ())
    for name in enabled:
        _choice("modality.enabled", name, MODALITIES)
    _choice("modality.audio_variant", modality.audio_variant, AUDIO_VARIANTS)
    _choice("modality.visual_variant", modality.visual_variant, VISUAL_VARIANTS)
    if "text" in enabled and not modality.text_variant and "text" not in modality.paths:
        raise ConfigError("modality.text_variant", "required when the text modality is enabled")
    for name in modality.paths:
        _choice("modality.paths", name, MODALITIES)
    modality = replace(
        modality,
        enabled=enabled,
        paths=dict(modality.paths),
        augmentation=_flag("modality.augmentation", modality.augmentation),
        normalize=_flag("modality.normalize", modality.normalize),
        drop_zero_rows=_flag("modality.drop_zero_rows", modality.drop_zero_rows),
    )

    fusion = config.fusion
    _choice("fusion.operator", fusion.operator, OPERATORS)
    _choice("fusion.stage", fusion.stage, STAGES)
    _choice("fusion.cca_split", fusion.cca_split, CCA_SPLITS)
    if fusion.operator == "pca":
        if fusion.rho is None:
            raise ConfigError("fusion.rho", "required when fusion.operator is pca")
        fusion = replace(fusion, rho=_number("fusion.rho", fusion.rho, low=0.0, high=1.0, low_open=True))
    if fusion.operator == "cca":
        if fusion.k is None:
            raise ConfigError("fusion.k", "required when fusion.operator is cca")
        fusion = replace(fusion, k=_number("fusion.k", fusion.k, kind=int, low=1))

    late = fusion.late
    systems = tuple(late.systems or ())
    for system in systems:
        _choice("fusion.late.systems", system, FAMILIES)
    _choice("fusion.late.rule", late.rule, RULES)
    _choice("fusion.late.schedule", late.schedule, SCHEDULES)
    _choice("fusion.late.missing_rank", late.missing_rank, MISSING_RANKS)
    weights = None if late.weights is None else tuple(
        _number("fusion.late.weights", w, low=0.0) for w in late.weights
    )
    if weights is not None and len(weights) != len(systems):
        raise ConfigError("fusion.late.weights", f"expected one weight per system ({len(systems)}), got {len(weights)}")
    late = replace(late, systems=systems, weights=weights, rrf_k=_number("fusion.late.rrf_k", late.rrf_k, kind=int, low=0))
    if fusion.stage == "late" and not systems:
        raise ConfigError("fusion.late.systems", "late fusion needs at least one system")
    fusion = replace(fusion, late=late)

    model = config.model
    _choice("model.family", model.family, FAMILIES)
    try:
        HyperParams.from_dict(dict(model.hyperparams))
    except (ValueError, TypeError) as e:
        raise ConfigError("model.hyperparams", str(e))
    grid = {}
    for name, values in (model.grid or {}).items():
        if name not in HyperParams.__dataclass_fields__:
            raise ConfigError(f"model.grid.{name}", "not a hyper-parameter", allowed=list(HyperParams.__dataclass_fields__))
        if not isinstance(values, list) or not values:
            raise ConfigError(f"model.grid.{name}", "expected a non-empty list of candidates")
        grid[name] = list(values)
    model = replace(model, hyperparams=dict(model.hyperparams), grid=grid)

    evaluation = config.evaluation
    _choice("evaluation.objective", evaluation.objective, OBJECTIVES)
    _choice("evaluation.coldrate_level", evaluation.coldrate_level, COLDRATE_LEVELS)
    evaluation = replace(
        evaluation,
        k=_number("evaluation.k", evaluation.k, kind=int, low=1),
        late_depth=_number("evaluation.late_depth", evaluation.late_depth, kind=int, low=1),
    )

    synopsis = config.synopsis
    _choice("synopsis.provider", synopsis.provider, PROVIDERS)
    synopsis = replace(synopsis, workers=_number("synopsis.workers", synopsis.workers, kind=int, low=1))

    runtime = config.runtime
    runtime = replace(
        runtime,
        seed=_number("runtime.seed", runtime.seed, kind=int),
        epochs=None if runtime.epochs is None else _number("runtime.epochs", runtime.epochs, kind=int, low=1),
        workers=_number("runtime.workers", runtime.workers, kind=int, low=1),
        fast_prototype=_flag("runtime.fast_prototype", runtime.fast_prototype),
        parallel_hpo=_flag("runtime.parallel_hpo", runtime.parallel_hpo),
    )

    config = replace(
        config,
        split=split,
        modality=modality,
        fusion=fusion,
        model=model,
        evaluation=evaluation,
        synopsis=synopsis,
        runtime=runtime,
    )
    if config.uses_features and not modality.enabled:
        raise ConfigError("modality.enabled", "content models need at least one enabled modality")
    return config


def parse_config(raw: Dict[str, Any], base_dir: Union[str, Path] = ".") -> Tuple[ExperimentConfig, List[str]]:
    """
    Build a validated config from a parsed YAML mapping.

    Returns:
        The config and the warnings raised while parsing (ignored keys)
    """
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "the config document must be a mapping")
    strict = raw.get("strict", True)
    if not isinstance(strict, bool):
        raise ConfigError("strict", f"expected true or false, got {strict!r}")
    parser = _Parser(strict)

    for key in ("dataset", "model"):
        if key not in raw:
            raise ConfigError(key, "missing required section")

    raw_runtime = dict(parser.mapping(raw.get("runtime"), "runtime"))
    for key in IGNORED_RUNTIME_KEYS:
        if key in raw_runtime:
            raw_runtime.pop(key)
            message = f"runtime.{key} is accepted for compatibility and ignored (training runs on CPU)"
            parser.warnings.append(message)
            logger.warning(message)

    raw_model = raw["model"]
    if isinstance(raw_model, str):
        raw_model = {"family": raw_model}
    raw_fusion = dict(parser.mapping(raw.get("fusion"), "fusion"))
    late = parser.section(LateFusionConfig, raw_fusion.get("late"), "fusion.late")

    root_path = Path(raw.get("root_path", "."))
    if not root_path.is_absolute():
        root_path = (Path(base_dir) / root_path).resolve()

    parser.unknown(raw, [f.name for f in fields(ExperimentConfig)], "")
    config = ExperimentConfig(
        dataset=parser.section(DatasetConfig, raw["dataset"], "dataset"),
        model=parser.section(ModelConfig, raw_model, "model"),
        root_path=str(root_path),
        split=parser.section(SplitConfig, raw.get("split"), "split"),
        modality=parser.section(ModalityConfig, raw.get("modality"), "modality"),
        fusion=parser.section(FusionConfig, raw_fusion, "fusion", late=late),
        evaluation=parser.section(EvaluationConfig, raw.get("evaluation"), "evaluation"),
        synopsis=parser.section(SynopsisConfig, raw.get("synopsis"), "synopsis"),
        runtime=parser.section(RuntimeConfig, raw_runtime, "runtime"),
        strict=strict,
    )
    config = _validate(config)

    if config.fusion.stage != "late" and config.model.family not in CONTENT_FAMILIES and "fusion" in raw:
        message = f"model {config.model.family} uses interactions only; the fusion block is ignored"
        parser.warnings.append(message)
        logger.warning(message)
    return config, parser.warnings


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Load and validate a YAML experiment config.

    Raises:
        FileNotFoundError: When the file does not exist
        ConfigError: On invalid values, missing required keys or unknown keys in strict mode
    """
    config, _ = load_config_with_warnings(path)
    return config


def load_config_with_warnings(path: Union[str, Path]) -> Tuple[ExperimentConfig, List[str]]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as f:
        try:
            raw = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError("<root>", f"invalid YAML: {e}")
    return parse_config(raw, base_dir=path.parent)


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {key: _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    return value


def config_to_dict(config: ExperimentConfig) -> Dict[str, Any]:
    """Plain nested mapping of every config field (tuples become lists)."""
    return _plain(asdict(config))


def dump_config(config: ExperimentConfig, path: Union[str, Path]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(config_to_dict(config), f, sort_keys=False)


def config_hash(config: ExperimentConfig) -> str:
    """sha256 over the semantic fields; key order and comments never matter."""
    record = config_to_dict(config)
    for path in _UNHASHED:
        section = record
        for key in path[:-1]:
            section = section[key]
        section.pop(path[-1], None)
    canonical = json.dumps(record, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
