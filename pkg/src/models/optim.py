"""In-place optimisers over named parameter blocks."""

from typing import Callable, Dict, Iterable, Iterator, List, Tuple

import numpy as np

from src.models.base import HyperParams
from src.utils.errors import ArgumentError, DivergenceError
from src.utils.log import get_logger

logger = get_logger(__name__)


class Optimizer:
    def __init__(self, params: Dict[str, np.ndarray], learning_rate: float, frozen: Iterable[str] = ()):
        self.params = params
        self.learning_rate = learning_rate
        self.frozen = frozenset(frozen)
        unknown = self.frozen - set(params)
        if unknown:
            raise ArgumentError(f"cannot freeze unknown parameter blocks: {', '.join(sorted(unknown))}")

    def step(self, grads: Dict[str, np.ndarray]):
        for name, grad in grads.items():
            if name not in self.frozen:
                self._update(name, grad)

    def _update(self, name: str, grad: np.ndarray):
        raise NotImplementedError


class SGD(Optimizer):
    def _update(self, name: str, grad: np.ndarray):
        self.params[name] -= self.learning_rate * grad


class Adam(Optimizer):
    """Adam with bias correction; one step counter shared by all blocks."""

    def __init__(
        self,
        params: Dict[str, np.ndarray],
        learning_rate: float,
        frozen: Iterable[str] = (),
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        super().__init__(params, learning_rate, frozen)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.first = {name: np.zeros_like(value) for name, value in params.items()}
        self.second = {name: np.zeros_like(value) for name, value in params.items()}
        self.t = 0

    def step(self, grads: Dict[str, np.ndarray]):
        self.t += 1
        super().step(grads)

    def _update(self, name: str, grad: np.ndarray):
        first = self.first[name]
        second = self.second[name]
        first *= self.beta1
        first += (1 - self.beta1) * grad
        second *= self.beta2
        second += (1 - self.beta2) * grad * grad
        first_hat = first / (1 - self.beta1 ** self.t)
        second_hat = second / (1 - self.beta2 ** self.t)
        self.params[name] -= self.learning_rate * first_hat / (np.sqrt(second_hat) + self.eps)


def make_optimizer(name: str, params: Dict[str, np.ndarray], learning_rate: float, frozen: Iterable[str] = ()) -> Optimizer:
    if name == "sgd":
        return SGD(params, learning_rate, frozen)
    if name == "adam":
        return Adam(params, learning_rate, frozen)
    raise ArgumentError(f"unknown optimizer '{name}'")


def run_training(
    params: Dict[str, np.ndarray],
    loss_and_grads: Callable[[Dict[str, np.ndarray], Dict[str, np.ndarray]], Tuple[float, Dict[str, np.ndarray]]],
    batches: Callable[[np.random.Generator], Iterator[Dict[str, np.ndarray]]],
    hp: HyperParams,
    family: str,
    rng: np.random.Generator,
) -> List[float]:
    """
    Minimise a batch objective for ``hp.epochs`` epochs.

    Args:
        params: Parameter blocks, updated in place
        loss_and_grads: Mean batch loss and its gradient per block
        batches: Yields one epoch of batches; each batch has a ``size`` entry
        hp: Hyper-parameters (optimizer, learning rate, frozen blocks, epochs)
        family: Model family, picks the default optimizer
        rng: Generator shared by batching and any noise draws

    Returns:
        Mean loss per epoch

    Raises:
        DivergenceError: When a loss or a parameter stops being finite
    """
    optimizer = make_optimizer(hp.optimizer_for(family), params, hp.learning_rate, hp.frozen)
    trace: List[float] = []
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for epoch in range(1, hp.epochs + 1):
            total, count = 0.0, 0
            for batch in batches(rng):
                loss, grads = loss_and_grads(params, batch)
                if not np.isfinite(loss):
                    logger.warning(f"{family}: loss is {loss} at epoch {epoch}")
                    raise DivergenceError(epoch, hp.learning_rate)
                optimizer.step(grads)
                size = int(batch["size"])
                total += loss * size
                count += size
            if not all(np.all(np.isfinite(value)) for value in params.values()):
                raise DivergenceError(epoch, hp.learning_rate)
            trace.append(total / max(count, 1))
            logger.debug(f"{family} epoch {epoch}/{hp.epochs}: loss {trace[-1]:.6f}")
    return trace


def minibatches(n: int, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    """Shuffled index slices covering ``range(n)`` once."""
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]
