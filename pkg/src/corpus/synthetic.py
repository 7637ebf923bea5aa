"""Synthetic corpora with planted preference structure."""

from dataclasses import dataclass

import numpy as np

from src.corpus.interactions import InteractionLog


@dataclass(frozen=True)
class PlantedCorpus:
    """A generated log plus the item features that drive part of it.

    ``item_features`` row i belongs to internal item index i; ``content_users``
    flags users whose preferences are linear in those features (the others
    follow a latent taste model the features do not see).
    """

    log: InteractionLog
    item_features: np.ndarray
    content_users: np.ndarray


def planted_corpus(
    n_users: int = 300,
    n_items: int = 200,
    n_features: int = 8,
    per_user: int = 20,
    content_share: float = 1.0,
    latent_dim: int = 8,
    noise: float = 0.05,
    seed: int = 0,
) -> PlantedCorpus:
    """
    Generate implicit feedback where each user picks their top-scoring items.

    Content users score items by ``taste_u . feature_i``; latent users by
    ``p_u . q_i`` with item factors unrelated to the features. Every event
    has rating 1 and a distinct random timestamp.
    """
    rng = np.random.default_rng(seed)
    features = rng.normal(size=(n_items, n_features))
    features /= np.linalg.norm(features, axis=1, keepdims=True)

    taste = rng.normal(size=(n_users, n_features))
    user_latent = rng.normal(size=(n_users, latent_dim))
    item_latent = rng.normal(size=(n_items, latent_dim)) / np.sqrt(latent_dim)

    content_users = np.zeros(n_users, dtype=bool)
    content_users[rng.permutation(n_users)[: int(round(content_share * n_users))]] = True

    scores = np.where(
        content_users[:, None],
        taste @ features.T,
        user_latent @ item_latent.T,
    )
    scores = scores + noise * rng.normal(size=scores.shape)
    chosen = np.argsort(-scores, axis=1, kind="stable")[:, :per_user]

    users = np.repeat(np.arange(n_users), per_user)
    items = chosen.ravel()
    timestamps = 1_000_000 + rng.permutation(len(users))

    log = InteractionLog(
        users=tuple(str(u + 1) for u in range(n_users)),
        items=tuple(str(i + 1) for i in range(n_items)),
        user_idx=users,
        item_idx=items,
        ratings=np.ones(len(users)),
        timestamps=timestamps,
    )
    return PlantedCorpus(log=log, item_features=features, content_users=content_users)
