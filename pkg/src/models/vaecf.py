"""Variational autoencoder for implicit feedback with a multinomial likelihood."""

from typing import Dict, Iterator, Tuple

import numpy as np
from scipy.special import log_softmax, softmax

from src.models.base import HyperParams, Recommender, TrainingSet
from src.models.optim import minibatches, run_training
from src.utils.errors import ArgumentError
from src.utils.log import get_logger

logger = get_logger(__name__)


def gaussian_kl(mu: np.ndarray, logvar: np.ndarray) -> np.ndarray:
    """KL(N(mu, exp(logvar)) || N(0, I)) summed over the last axis."""
    return 0.5 * np.sum(mu ** 2 + np.exp(logvar) - 1.0 - logvar, axis=-1)


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.where(norms > 0, norms, 1.0)


def encode(params: Dict[str, np.ndarray], x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Hidden activations, posterior mean and log-variance for interaction rows ``x``."""
    normalized = _normalize_rows(x)
    hidden = np.tanh(normalized @ params["W_enc"] + params["b_enc"])
    mu = hidden @ params["W_mu"] + params["b_mu"]
    logvar = hidden @ params["W_logvar"] + params["b_logvar"]
    return normalized, hidden, mu, logvar


def decode(params: Dict[str, np.ndarray], z: np.ndarray) -> np.ndarray:
    return z @ params["W_dec"] + params["b_dec"]


class VaecfModel(Recommender):
    """Scores are decoder logits at the posterior mean; cold users encode a zero row."""

    family = "vaecf"
    handles_cold_users = True

    def _score_known(self, user: int) -> np.ndarray:
        x = self.seen[user].toarray()
        _, _, mu, _ = encode(self.params, x)
        return decode(self.params, mu)[0]

    def reconstruction_loglik(self, users=None) -> float:
        """Mean multinomial log-likelihood of users' train rows at the posterior mean."""
        users = np.flatnonzero(np.diff(self.seen.indptr) > 0) if users is None else np.asarray(users)
        x = self.seen[users].toarray()
        _, _, mu, _ = encode(self.params, x)
        return float(np.mean(np.sum(x * log_softmax(decode(self.params, mu), axis=1), axis=1)))


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / (fan_in + fan_out)), size=(fan_in, fan_out))


def init_vaecf(n_items: int, hp: HyperParams, rng: np.random.Generator) -> Dict[str, np.ndarray]:
    return {
        "W_enc": _xavier(rng, n_items, hp.hidden_dim),
        "b_enc": np.zeros(hp.hidden_dim),
        "W_mu": _xavier(rng, hp.hidden_dim, hp.z_dim),
        "b_mu": np.zeros(hp.z_dim),
        "W_logvar": _xavier(rng, hp.hidden_dim, hp.z_dim),
        "b_logvar": np.zeros(hp.z_dim),
        "W_dec": _xavier(rng, hp.z_dim, n_items),
        "b_dec": np.zeros(n_items),
    }


def vaecf_loss_and_grads(
    params: Dict[str, np.ndarray],
    batch: Dict[str, np.ndarray],
    beta: float,
) -> Tuple[float, Dict[str, np.ndarray]]:
    """
    Negative ELBO per user, averaged over the batch, with a fixed noise draw.

    ``batch["x"]`` holds interaction rows and ``batch["noise"]`` the standard
    normal draws of the reparameterisation.
    """
    x, noise = batch["x"], batch["noise"]
    size = x.shape[0]
    normalized, hidden, mu, logvar = encode(params, x)
    sigma = np.exp(0.5 * logvar)
    z = mu + sigma * noise
    logits = decode(params, z)

    nll = -np.sum(x * log_softmax(logits, axis=1), axis=1)
    kl = gaussian_kl(mu, logvar)
    loss = float(np.mean(nll + beta * kl))

    d_logits = (softmax(logits, axis=1) * x.sum(axis=1, keepdims=True) - x) / size
    d_z = d_logits @ params["W_dec"].T
    d_mu = d_z + beta * mu / size
    d_logvar = d_z * noise * 0.5 * sigma + beta * 0.5 * (np.exp(logvar) - 1.0) / size
    d_hidden = d_mu @ params["W_mu"].T + d_logvar @ params["W_logvar"].T
    d_pre = d_hidden * (1.0 - hidden ** 2)

    grads = {
        "W_dec": z.T @ d_logits,
        "b_dec": d_logits.sum(axis=0),
        "W_mu": hidden.T @ d_mu,
        "b_mu": d_mu.sum(axis=0),
        "W_logvar": hidden.T @ d_logvar,
        "b_logvar": d_logvar.sum(axis=0),
        "W_enc": normalized.T @ d_pre,
        "b_enc": d_pre.sum(axis=0),
    }
    return loss, grads


def train_vaecf(training: TrainingSet, hp: HyperParams) -> VaecfModel:
    """
    Maximise the ELBO with one Monte-Carlo sample per user and step.

    Args:
        training: Train view of a split
        hp: Hyper-parameters (``beta``, ``hidden_dim``, ``z_dim``, ``seed``)

    Returns:
        Trained VaecfModel; ``loss_trace`` holds the negative ELBO per epoch
    """
    matrix = training.matrix
    active = np.flatnonzero(np.diff(matrix.indptr) > 0)
    if active.size == 0:
        raise ArgumentError("VAECF needs at least one user with a train item")
    rng = np.random.default_rng(hp.seed)
    params = init_vaecf(training.n_items, hp, rng)

    def batches(rng: np.random.Generator) -> Iterator[Dict[str, np.ndarray]]:
        for rows in minibatches(active.size, hp.batch_size, rng):
            yield {
                "x": matrix[active[rows]].toarray(),
                "noise": rng.standard_normal((len(rows), hp.z_dim)),
                "size": len(rows),
            }

    trace = run_training(
        params,
        lambda params, batch: vaecf_loss_and_grads(params, batch, hp.beta),
        batches,
        hp,
        "vaecf",
        rng,
    )
    model = VaecfModel(params, hp, matrix, training.popularity)
    model.loss_trace = trace
    logger.info(f"Trained VAECF (z={hp.z_dim}, beta={hp.beta}, {hp.epochs} epochs): final -ELBO {trace[-1]:.4f}")
    return model
