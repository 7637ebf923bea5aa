"""Seeded hyper-parameter grid search on a validation fold carved from train."""

import hashlib
import itertools
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence

from src.corpus.interactions import InteractionLog
from src.corpus.splitting import SplitPlan
from src.metrics.accuracy import ndcg_at_k, recall_at_k
from src.metrics.context import EvalContext
from src.models.base import HyperParams, TrainingSet, recommend_all
from src.models.registry import train_model
from src.utils.errors import ArgumentError, BenchError, NoViableTrialError
from src.utils.log import get_logger

logger = get_logger(__name__)

TrialFn = Callable[[HyperParams], Dict[str, Optional[float]]]


@dataclass(frozen=True)
class GridSpec:
    """Candidate values per hyper-parameter, enumerated in declaration order."""

    axes: Dict[str, List[Any]]

    def __post_init__(self):
        if not self.axes:
            raise ArgumentError("grid must name at least one hyper-parameter")
        for name, values in self.axes.items():
            if name not in HyperParams.__dataclass_fields__:
                raise ArgumentError(f"'{name}' is not a hyper-parameter")
            if not values:
                raise ArgumentError(f"grid axis '{name}' has no candidates")

    @classmethod
    def single(cls, hp: HyperParams) -> "GridSpec":
        return cls({"seed": [hp.seed]})

    def __len__(self) -> int:
        size = 1
        for values in self.axes.values():
            size *= len(values)
        return size

    def points(self) -> List[Dict[str, Any]]:
        names = list(self.axes)
        return [dict(zip(names, combo)) for combo in itertools.product(*(self.axes[name] for name in names))]


@dataclass(frozen=True)
class Trial:
    index: int
    overrides: Dict[str, Any]
    seed: int
    metrics: Dict[str, Optional[float]] = field(default_factory=dict)
    objective: Optional[float] = None
    error: Optional[str] = None
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.error is None and self.objective is not None

    def as_row(self) -> Dict[str, Any]:
        row = {"trial": self.index, "seed": self.seed, **self.overrides}
        row.update({name: value for name, value in self.metrics.items()})
        row["error"] = self.error or ""
        return row


@dataclass(frozen=True)
class BestHyper:
    """The winning grid point, its validation scores and the full trial table."""

    hp: HyperParams
    trial: Trial
    trials: List[Trial]
    objective: str = "ndcg"

    @property
    def recall(self) -> Optional[float]:
        return self.trial.metrics.get("recall")

    @property
    def ndcg(self) -> Optional[float]:
        return self.trial.metrics.get("ndcg")

    def table(self) -> List[Dict[str, Any]]:
        return [trial.as_row() for trial in self.trials]


def trial_seed(master_seed: int, overrides: Mapping[str, Any]) -> int:
    """Stable 32-bit seed from the run seed and a trial's parameters."""
    payload = json.dumps({"seed": master_seed, "params": dict(overrides)}, sort_keys=True, default=str)
    return int(hashlib.sha256(payload.encode("utf-8")).hexdigest(), 16) % (2**32)


def run_trials(
    grid: GridSpec,
    base: HyperParams,
    trial_fn: TrialFn,
    master_seed: int,
    objective: str = "ndcg",
    workers: int = 1,
) -> BestHyper:
    """
    Evaluate every grid point and pick the argmax of ``objective``.

    Each trial's seed depends only on the master seed and its parameters
    (unless the grid itself varies ``seed``), so the outcome does not depend
    on ``workers`` or completion order. Ties go to the earlier grid point.

    Raises:
        NoViableTrialError: When every trial failed or produced no objective
    """
    points = grid.points()

    def run(index: int) -> Trial:
        overrides = points[index]
        seed = overrides["seed"] if "seed" in overrides else trial_seed(master_seed, overrides)
        started = time.perf_counter()
        try:
            hp = base.replace(**{**overrides, "seed": seed})
            metrics = trial_fn(hp)
        except BenchError as e:
            logger.warning(f"Trial {index} {overrides} failed: {e}")
            return Trial(index, overrides, seed, error=str(e), seconds=time.perf_counter() - started)
        return Trial(index, overrides, seed, metrics, metrics.get(objective), seconds=time.perf_counter() - started)

    logger.info(f"Grid search: {len(points)} trials, objective {objective}, {workers} worker(s)")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trials = list(pool.map(run, range(len(points))))
    else:
        trials = [run(index) for index in range(len(points))]

    viable = [trial for trial in trials if trial.ok]
    if not viable:
        raise NoViableTrialError([trial.as_row() for trial in trials])
    best = max(viable, key=lambda trial: (trial.objective, -trial.index))
    logger.info(f"Best trial {best.index} {best.overrides}: {objective}={best.objective:.4f}")
    return BestHyper(base.replace(**{**best.overrides, "seed": best.seed}), best, trials, objective)


def validation_scorer(
    family: str,
    log: InteractionLog,
    validation: SplitPlan,
    features=None,
    k: int = 10,
) -> TrialFn:
    """Train on train-minus-validation and score recall and nDCG on the validation fold."""
    training = TrainingSet.from_split(log, validation)
    # materialise the cached views before trials share them across threads
    training.matrix, training.popularity, training.user_counts
    ctx = EvalContext.from_split(log, validation, k=k)
    users = sorted(ctx.relevance)

    def score(hp: HyperParams) -> Dict[str, Optional[float]]:
        model = train_model(family, training, features, hp)
        lists = recommend_all(model, users, k)
        return {"recall": recall_at_k(lists, ctx), "ndcg": ndcg_at_k(lists, ctx)}

    return score


def grid_search(
    family: str,
    grid: GridSpec,
    validation: SplitPlan,
    log: InteractionLog,
    base: Optional[HyperParams] = None,
    features=None,
    master_seed: int = 42,
    objective: str = "ndcg",
    k: int = 10,
    workers: int = 1,
    fixed: Sequence[str] = (),
) -> BestHyper:
    """
    Pick hyper-parameters for ``family`` on a validation plan.

    Args:
        family: Model family to tune
        grid: Candidate values
        validation: Plan from ``validation_split``; its test fold is the
            validation fold and never overlaps the real test events
        log: The log both plans index
        base: Values for parameters the grid does not vary
        features: Item features for the content families
        master_seed: Run seed the trial seeds derive from
        objective: ``ndcg`` or ``recall``
        k: Cutoff for the validation metrics
        workers: Concurrent trials
        fixed: Hyper-parameter names to pin to ``base`` even if the grid lists them

    Returns:
        BestHyper with the winning hyper-parameters and the trial table
    """
    if fixed:
        axes = {name: values for name, values in grid.axes.items() if name not in fixed}
        grid = GridSpec(axes) if axes else GridSpec.single(base or HyperParams())
    scorer = validation_scorer(family, log, validation, features, k)
    return run_trials(grid, base or HyperParams(), scorer, master_seed, objective, workers)
