"""Shared fixtures: small corpora, embedding files and a minimal experiment layout."""

from pathlib import Path

import numpy as np
import pytest
import yaml

from src.corpus.synthetic import planted_corpus
from src.textprep.embeddings import save_feature_table
from tests.helpers import base_config, write_lines


@pytest.fixture
def four_line_tsv(tmp_path):
    return write_lines(tmp_path / "ratings.tsv", ["1\t10\t5\t100", "1\t11\t4\t101", "2\t10\t3\t102", "2\t10\t5\t103"])


@pytest.fixture(scope="session")
def small_planted():
    return planted_corpus(n_users=40, n_items=30, n_features=4, per_user=6, seed=3)


@pytest.fixture
def experiment_dir(tmp_path, small_planted):
    """Interactions, an item catalogue and two modality tables for the planted corpus."""
    corpus = small_planted
    log = corpus.log
    ratings = [
        f"{log.users[u]}\t{log.items[i]}\t{r:g}\t{t}"
        for u, i, r, t in zip(log.user_idx, log.item_idx, log.ratings, log.timestamps)
    ]
    write_lines(tmp_path / "data" / "ratings.tsv", ratings)

    genres = ["Comedy", "Drama", "Action|Comedy", "Horror"]
    write_lines(
        tmp_path / "data" / "items.tsv",
        [f"{item_id}\tMovie {item_id} (1999)\t{genres[i % len(genres)]}" for i, item_id in enumerate(log.items)],
    )

    rng = np.random.default_rng(0)
    save_feature_table(log.items, corpus.item_features, tmp_path / "emb" / "visual_cnn.tsv")
    save_feature_table(log.items, rng.normal(size=(log.n_items, 3)), tmp_path / "emb" / "audio_blf.tsv")
    return tmp_path


@pytest.fixture
def write_config(experiment_dir):
    """Factory writing a YAML config into the experiment directory; top-level sections can be replaced."""

    def write(name: str = "config.yaml", **sections) -> Path:
        config = base_config()
        config.update(sections)
        path = experiment_dir / name
        path.write_text(yaml.safe_dump(config, sort_keys=False), encoding="utf-8")
        return path

    return write
