"""Small file-writing helpers for tests."""

from pathlib import Path


def write_lines(path: Path, lines) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


def base_config():
    """Smallest runnable experiment over the ``experiment_dir`` layout."""
    return {
        "dataset": {"name": "toy", "path": "data/ratings.tsv", "items_path": "data/items.tsv", "items_format": "tsv"},
        "model": {"family": "mf", "hyperparams": {"epochs": 2, "latent_dim": 4}},
        "runtime": {"seed": 7, "output_dir": "runs"},
    }
