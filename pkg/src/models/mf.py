"""Biased matrix factorisation trained on squared rating error."""

from typing import Dict, Iterator, Tuple

import numpy as np

from src.models.base import HyperParams, Recommender, TrainingSet
from src.models.optim import minibatches, run_training
from src.utils.errors import ArgumentError
from src.utils.log import get_logger

logger = get_logger(__name__)


class MfModel(Recommender):
    """Scores ``mu + b_u + b_i + p_u . q_i``."""

    family = "mf"

    def _score_known(self, user: int) -> np.ndarray:
        return self.mu[0] + self.b_user[user] + self.b_item + self.Q @ self.P[user]


def init_mf(training: TrainingSet, hp: HyperParams, rng: np.random.Generator) -> Dict[str, np.ndarray]:
    return {
        "mu": np.array([training.ratings.mean()]),
        "b_user": np.zeros(training.n_users),
        "b_item": np.zeros(training.n_items),
        "P": rng.normal(0.0, hp.init_std, size=(training.n_users, hp.latent_dim)),
        "Q": rng.normal(0.0, hp.init_std, size=(training.n_items, hp.latent_dim)),
    }


def mf_loss_and_grads(
    params: Dict[str, np.ndarray],
    batch: Dict[str, np.ndarray],
    reg: float,
) -> Tuple[float, Dict[str, np.ndarray]]:
    """
    Mean over the batch of ``(r - r_hat)^2 + reg * (|p_u|^2 + |q_i|^2)``.

    Biases and the global mean are not regularised.
    """
    users, items, ratings = batch["users"], batch["items"], batch["ratings"]
    size = len(users)
    P, Q = params["P"], params["Q"]
    p, q = P[users], Q[items]

    error = params["mu"][0] + params["b_user"][users] + params["b_item"][items] + np.sum(p * q, axis=1) - ratings
    penalty = np.sum(p * p, axis=1) + np.sum(q * q, axis=1)
    loss = float(np.mean(error ** 2 + reg * penalty))

    g = 2.0 * error / size
    grad_P = np.zeros_like(P)
    grad_Q = np.zeros_like(Q)
    np.add.at(grad_P, users, g[:, None] * q + (2.0 * reg / size) * p)
    np.add.at(grad_Q, items, g[:, None] * p + (2.0 * reg / size) * q)
    grads = {
        "mu": np.array([g.sum()]),
        "b_user": np.bincount(users, weights=g, minlength=len(params["b_user"])),
        "b_item": np.bincount(items, weights=g, minlength=len(params["b_item"])),
        "P": grad_P,
        "Q": grad_Q,
    }
    return loss, grads


def train_mf(training: TrainingSet, hp: HyperParams) -> MfModel:
    """
    Fit biased MF on the observed train ratings.

    Args:
        training: Train view of a split
        hp: Hyper-parameters; ``seed`` fixes initialisation and shuffling

    Returns:
        Trained MfModel with its per-epoch loss trace
    """
    if training.n_events == 0:
        raise ArgumentError("MF needs at least one train event")
    rng = np.random.default_rng(hp.seed)
    params = init_mf(training, hp, rng)

    def batches(rng: np.random.Generator) -> Iterator[Dict[str, np.ndarray]]:
        for rows in minibatches(training.n_events, hp.batch_size, rng):
            yield {
                "users": training.users[rows],
                "items": training.items[rows],
                "ratings": training.ratings[rows],
                "size": len(rows),
            }

    trace = run_training(
        params,
        lambda params, batch: mf_loss_and_grads(params, batch, hp.reg),
        batches,
        hp,
        "mf",
        rng,
    )
    model = MfModel(params, hp, training.matrix, training.popularity)
    model.loss_trace = trace
    logger.info(f"Trained MF (d={hp.latent_dim}, {hp.epochs} epochs): final loss {trace[-1]:.4f}")
    return model
