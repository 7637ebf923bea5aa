"""Exception hierarchy shared by every pipeline stage."""

from typing import Any, Dict, List, Optional, Sequence


class BenchError(Exception):
    """Base class for all benchmark errors."""


# Input parsing and validation


class ParseError(BenchError, ValueError):
    """A line or cell of an input file could not be parsed."""

    def __init__(self, path: str, line: int, message: str):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class EmptyCorpusError(BenchError, ValueError):
    """The interaction source holds no events."""


class EmptyAfterFilterError(BenchError, ValueError):
    """k-core filtering removed every event."""

    def __init__(self, k: int):
        self.k = k
        super().__init__(f"k-core filtering with k={k} removed every interaction")


class ArgumentError(BenchError, ValueError):
    """An operation received an argument outside its domain."""


class DegenerateSplitError(BenchError, ValueError):
    """A split left one side with no events."""


class DimensionMismatchError(BenchError, ValueError):
    """Embedding rows do not share a width."""

    def __init__(self, item_id: str, expected: int, found: int):
        self.item_id = item_id
        super().__init__(
            f"row '{item_id}' has {found} values, expected {expected}"
        )


class DuplicateKeyError(BenchError, ValueError):
    """An embedding table repeats an item id."""

    def __init__(self, item_id: str):
        self.item_id = item_id
        super().__init__(f"duplicate item id '{item_id}'")


class NoCommonItemsError(BenchError, ValueError):
    """Embedding tables share no item id."""


class InsufficientDataError(BenchError, ValueError):
    """Too few rows to fit a projection."""


class PreconditionError(BenchError, ValueError):
    """Input violates an operation's precondition."""

    def __init__(self, message: str, item_id: Optional[str] = None):
        self.item_id = item_id
        super().__init__(message)


MissingFeatureError = PreconditionError


class DegenerateCurveError(BenchError, ValueError):
    """A tradeoff curve has fewer than two distinct x values."""


class ConfigError(BenchError, ValueError):
    """The experiment configuration failed validation."""

    def __init__(self, key: str, message: str, allowed: Optional[Sequence[Any]] = None):
        self.key = key
        self.allowed = list(allowed) if allowed is not None else None
        detail = f"{key}: {message}"
        if self.allowed is not None:
            detail += f" (allowed: {', '.join(map(str, self.allowed))})"
        super().__init__(detail)


# Runtime failures


class ProviderError(BenchError, RuntimeError):
    """A synopsis provider failed for an item."""

    def __init__(self, item_id: str, message: str):
        self.item_id = item_id
        super().__init__(f"synopsis provider failed for item '{item_id}': {message}")


class DivergenceError(BenchError, RuntimeError):
    """Training loss became NaN or infinite."""

    def __init__(self, epoch: int, learning_rate: float):
        self.epoch = epoch
        self.learning_rate = learning_rate
        super().__init__(
            f"training diverged at epoch {epoch} (learning_rate={learning_rate})"
        )


class NoViableTrialError(BenchError, RuntimeError):
    """Every grid-search trial failed."""

    def __init__(self, trials: List[Dict[str, Any]]):
        self.trials = trials
        super().__init__(f"all {len(trials)} grid-search trials failed")


class StageError(BenchError, RuntimeError):
    """A pipeline stage failed; wraps the original error."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
