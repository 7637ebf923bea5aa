"""
Content-aware pairwise models: VBPR, VMF and AMR.

All three are trained with the BPR surrogate: for each observed (u, i+) one
item i- is drawn uniformly from the items u has not seen, and the mean of
``-ln sigmoid(r_hat(u, i+) - r_hat(u, i-))`` plus L2 penalties is minimised.
"""

from typing import Dict, Iterator, List, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.special import expit, log_expit, softmax

from src.fusion.early import AlignedFeatures, FusedFeatures, item_feature_blocks, item_feature_matrix
from src.models.base import CONTENT_FAMILIES, HyperParams, Recommender, TrainingSet
from src.models.optim import minibatches, run_training
from src.utils.errors import ArgumentError, PreconditionError
from src.utils.log import get_logger

logger = get_logger(__name__)

Features = Union[np.ndarray, Sequence[np.ndarray]]


def amr_gate(blocks: Sequence[np.ndarray], vectors: Sequence[np.ndarray], items: np.ndarray):
    """
    Modality gate for ``items``.

    Each modality m contributes ``s_m = a_m . e_m``; the gate returns
    ``g = sum_m alpha_m s_m`` with ``alpha = softmax(s)``, together with the
    attention weights and ``dg/ds_m = alpha_m (1 + s_m - g)``.
    """
    scores = np.stack([block[items] @ vector for block, vector in zip(blocks, vectors)], axis=1)
    attention = softmax(scores, axis=1)
    gate = np.sum(attention * scores, axis=1)
    slopes = attention * (1.0 + scores - gate[:, None])
    return gate, attention, slopes


class ContentModel(Recommender):
    """
    A trained VBPR, VMF or AMR model.

    ``features`` holds the item feature matrices in catalogue order: one
    matrix for VBPR/VMF, one per modality for AMR.
    """

    def __init__(self, variant: str, params, hp, seen, popularity, features: Sequence[np.ndarray]):
        if variant not in CONTENT_FAMILIES:
            raise ArgumentError(f"unknown content variant '{variant}' (allowed: {', '.join(CONTENT_FAMILIES)})")
        super().__init__(params, hp, seen, popularity)
        self.family = variant
        self.features = [np.asarray(block, dtype=np.float64) for block in features]

    @property
    def variant(self) -> str:
        return self.family

    def gate_vectors(self) -> List[np.ndarray]:
        return [self.params[f"a_{m}"] for m in range(len(self.features))]

    def _score_known(self, user: int) -> np.ndarray:
        if self.family == "vbpr":
            return self.Q @ self.P[user] + self.features[0] @ self.W[user]
        if self.family == "vmf":
            return self.mu[0] + self.b_user[user] + self.b_item + self.features[0] @ (self.H.T @ self.P[user])
        gate, _, _ = amr_gate(self.features, self.gate_vectors(), np.arange(self.n_items))
        return self.Q @ self.P[user] + gate

    def attention(self, item: int) -> np.ndarray:
        """AMR only: modality weights for ``item`` (they sum to 1)."""
        if self.family != "amr":
            raise ArgumentError("attention weights exist only for AMR")
        self._check_item(item)
        _, attention, _ = amr_gate(self.features, self.gate_vectors(), np.array([item]))
        return attention[0]


def init_content(
    variant: str,
    n_users: int,
    n_items: int,
    features: Sequence[np.ndarray],
    hp: HyperParams,
    rng: np.random.Generator,
) -> Dict[str, np.ndarray]:
    d = hp.latent_dim
    params = {"P": rng.normal(0.0, hp.init_std, size=(n_users, d))}
    if variant == "vbpr":
        params["Q"] = rng.normal(0.0, hp.init_std, size=(n_items, d))
        params["W"] = rng.normal(0.0, hp.init_std, size=(n_users, features[0].shape[1]))
    elif variant == "vmf":
        params["mu"] = np.zeros(1)
        params["b_user"] = np.zeros(n_users)
        params["b_item"] = np.zeros(n_items)
        params["H"] = rng.normal(0.0, hp.init_std, size=(d, features[0].shape[1]))
    else:
        params["Q"] = rng.normal(0.0, hp.init_std, size=(n_items, d))
        for m, block in enumerate(features):
            params[f"a_{m}"] = rng.normal(0.0, hp.init_std, size=block.shape[1])
    return params


def bpr_loss_and_grads(
    params: Dict[str, np.ndarray],
    batch: Dict[str, np.ndarray],
    variant: str,
    features: Sequence[np.ndarray],
    reg: float,
) -> Tuple[float, Dict[str, np.ndarray]]:
    """
    Mean BPR loss of the batch triples and its gradients.

    Per triple the penalty is ``reg`` times the squared norms of the user and
    item rows involved; the shared blocks (H for VMF, the gate vectors for
    AMR) are penalised once per batch.
    """
    users, positives, negatives = batch["users"], batch["positives"], batch["negatives"]
    size = len(users)
    P = params["P"]
    p = P[users]
    grads = {name: np.zeros_like(value) for name, value in params.items()}
    scale = 2.0 * reg / size

    if variant == "vbpr":
        Q, W, E = params["Q"], params["W"], features[0]
        q_pos, q_neg, w = Q[positives], Q[negatives], W[users]
        e_diff = E[positives] - E[negatives]
        x = np.sum(p * (q_pos - q_neg), axis=1) + np.sum(w * e_diff, axis=1)
        penalty = (np.sum(p * p + q_pos * q_pos + q_neg * q_neg, axis=1) + np.sum(w * w, axis=1)).sum() / size
        c = -expit(-x) / size
        np.add.at(grads["P"], users, c[:, None] * (q_pos - q_neg) + scale * p)
        np.add.at(grads["Q"], positives, c[:, None] * p + scale * q_pos)
        np.add.at(grads["Q"], negatives, -c[:, None] * p + scale * q_neg)
        np.add.at(grads["W"], users, c[:, None] * e_diff + scale * w)
        shared = 0.0
    elif variant == "vmf":
        H, E, b_item = params["H"], features[0], params["b_item"]
        e_diff = E[positives] - E[negatives]
        projected = e_diff @ H.T
        x = b_item[positives] - b_item[negatives] + np.sum(p * projected, axis=1)
        penalty = (np.sum(p * p, axis=1) + b_item[positives] ** 2 + b_item[negatives] ** 2).sum() / size
        shared = float(np.sum(H * H))
        c = -expit(-x) / size
        np.add.at(grads["P"], users, c[:, None] * projected + scale * p)
        np.add.at(grads["b_item"], positives, c + scale * b_item[positives])
        np.add.at(grads["b_item"], negatives, -c + scale * b_item[negatives])
        grads["H"] = (c[:, None] * p).T @ e_diff + 2.0 * reg * H
    else:
        Q = params["Q"]
        vectors = [params[f"a_{m}"] for m in range(len(features))]
        q_pos, q_neg = Q[positives], Q[negatives]
        gate_pos, _, slopes_pos = amr_gate(features, vectors, positives)
        gate_neg, _, slopes_neg = amr_gate(features, vectors, negatives)
        x = np.sum(p * (q_pos - q_neg), axis=1) + gate_pos - gate_neg
        penalty = np.sum(p * p + q_pos * q_pos + q_neg * q_neg, axis=1).sum() / size
        shared = float(sum(np.sum(vector * vector) for vector in vectors))
        c = -expit(-x) / size
        np.add.at(grads["P"], users, c[:, None] * (q_pos - q_neg) + scale * p)
        np.add.at(grads["Q"], positives, c[:, None] * p + scale * q_pos)
        np.add.at(grads["Q"], negatives, -c[:, None] * p + scale * q_neg)
        for m, (block, vector) in enumerate(zip(features, vectors)):
            weighted_pos = (c * slopes_pos[:, m])[:, None] * block[positives]
            weighted_neg = (c * slopes_neg[:, m])[:, None] * block[negatives]
            grads[f"a_{m}"] = weighted_pos.sum(axis=0) - weighted_neg.sum(axis=0) + 2.0 * reg * vector

    loss = float(-np.mean(log_expit(x)) + reg * penalty + reg * shared)
    return loss, grads


class NegativeSampler:
    """Uniform negatives from each user's unseen items, by vectorised rejection."""

    def __init__(self, matrix: sparse.csr_matrix):
        self.n_items = matrix.shape[1]
        coo = matrix.tocoo()
        self.codes = np.sort(coo.row.astype(np.int64) * self.n_items + coo.col)

    def _seen(self, users: np.ndarray, items: np.ndarray) -> np.ndarray:
        if self.codes.size == 0:
            return np.zeros(len(users), dtype=bool)
        queries = users.astype(np.int64) * self.n_items + items
        slots = np.minimum(np.searchsorted(self.codes, queries), self.codes.size - 1)
        return self.codes[slots] == queries

    def sample(self, users: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        negatives = rng.integers(self.n_items, size=len(users))
        pending = np.flatnonzero(self._seen(users, negatives))
        while pending.size:
            negatives[pending] = rng.integers(self.n_items, size=pending.size)
            pending = pending[self._seen(users[pending], negatives[pending])]
        return negatives


def _resolve_features(features, training: TrainingSet, variant: str) -> List[np.ndarray]:
    if isinstance(features, (FusedFeatures, AlignedFeatures)):
        if variant == "amr":
            blocks = item_feature_blocks(features, training.item_ids)
        else:
            blocks = [item_feature_matrix(features, training.item_ids)]
    elif isinstance(features, np.ndarray):
        blocks = [features]
    else:
        blocks = list(features)
        if variant != "amr":
            blocks = [np.hstack(blocks)]

    blocks = [np.asarray(block, dtype=np.float64) for block in blocks]
    for block in blocks:
        if block.ndim != 2 or block.shape[0] != training.n_items:
            raise ArgumentError(f"feature matrix must have {training.n_items} rows, got shape {block.shape}")
        bad = np.flatnonzero(~np.all(np.isfinite(block), axis=1))
        if bad.size:
            item = training.item_ids[bad[0]] if training.item_ids else str(bad[0])
            raise PreconditionError(f"item '{item}' has a non-finite feature row", item_id=item)
    return blocks


def train_content(
    training: TrainingSet,
    features: Union[Features, FusedFeatures, AlignedFeatures],
    variant: str,
    hp: HyperParams,
) -> ContentModel:
    """
    Train VBPR, VMF or AMR with uniform negative sampling.

    Args:
        training: Train view of a split
        features: Fused features (resolved against the log's item ids), or
            feature matrices already in catalogue order
        variant: ``vbpr``, ``vmf`` or ``amr``
        hp: Hyper-parameters; ``negatives`` triples are drawn per positive

    Returns:
        Trained ContentModel with its per-epoch loss trace
    """
    if variant not in CONTENT_FAMILIES:
        raise ArgumentError(f"unknown content variant '{variant}' (allowed: {', '.join(CONTENT_FAMILIES)})")
    if training.n_events == 0:
        raise ArgumentError(f"{variant} needs at least one train event")
    blocks = _resolve_features(features, training, variant)

    # users who have seen every item have no negatives
    eligible = training.user_counts[training.users] < training.n_items
    pos_users = np.repeat(training.users[eligible], hp.negatives)
    pos_items = np.repeat(training.items[eligible], hp.negatives)
    if pos_users.size == 0:
        raise ArgumentError("no user has an unobserved item to sample")
    sampler = NegativeSampler(training.matrix)

    rng = np.random.default_rng(hp.seed)
    params = init_content(variant, training.n_users, training.n_items, blocks, hp, rng)

    def batches(rng: np.random.Generator) -> Iterator[Dict[str, np.ndarray]]:
        for rows in minibatches(pos_users.size, hp.batch_size, rng):
            users = pos_users[rows]
            yield {
                "users": users,
                "positives": pos_items[rows],
                "negatives": sampler.sample(users, rng),
                "size": len(rows),
            }

    trace = run_training(
        params,
        lambda params, batch: bpr_loss_and_grads(params, batch, variant, blocks, hp.reg),
        batches,
        hp,
        variant,
        rng,
    )
    model = ContentModel(variant, params, hp, training.matrix, training.popularity, blocks)
    model.loss_trace = trace
    logger.info(
        f"Trained {variant.upper()} (d={hp.latent_dim}, features {'+'.join(str(b.shape[1]) for b in blocks)}, "
        f"{hp.epochs} epochs): final loss {trace[-1]:.4f}"
    )
    return model
