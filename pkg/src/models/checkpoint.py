"""Model checkpoints: one ``.npz`` archive with a JSON header."""

import json
from pathlib import Path
from typing import Union

import numpy as np
from scipy import sparse

from src.models.base import HyperParams, Recommender
from src.models.content import ContentModel
from src.models.mf import MfModel
from src.models.vaecf import VaecfModel
from src.utils.errors import ArgumentError

FORMAT_VERSION = 1

_PARAM = "param__"
_FEATURE = "feature__"


def save_checkpoint(model: Recommender, path: Union[str, Path]):
    """Write every parameter block, feature matrix and hyper-parameter of ``model``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    features = getattr(model, "features", [])
    header = {
        "format_version": FORMAT_VERSION,
        "family": model.family,
        "hp": model.hp.to_dict(),
        "seed": model.hp.seed,
        "shape": [model.n_users, model.n_items],
        "n_features": len(features),
        "loss_trace": list(model.loss_trace),
    }
    arrays = {f"{_PARAM}{name}": value for name, value in model.params.items()}
    arrays.update({f"{_FEATURE}{m}": block for m, block in enumerate(features)})
    with open(path, "wb") as f:
        np.savez(
            f,
            header=np.array(json.dumps(header)),
            seen_indptr=model.seen.indptr,
            seen_indices=model.seen.indices,
            popularity=model.popularity,
            **arrays,
        )


def load_checkpoint(path: Union[str, Path]) -> Recommender:
    """Rebuild a model saved by ``save_checkpoint``; parameters round-trip bit-exactly."""
    with np.load(path, allow_pickle=False) as archive:
        header = json.loads(str(archive["header"]))
        if header.get("format_version") != FORMAT_VERSION:
            raise ArgumentError(f"unsupported checkpoint version {header.get('format_version')}")
        n_users, n_items = header["shape"]
        indices = archive["seen_indices"]
        seen = sparse.csr_matrix(
            (np.ones(indices.size), indices, archive["seen_indptr"]),
            shape=(n_users, n_items),
        )
        params = {key[len(_PARAM):]: archive[key].copy() for key in archive.files if key.startswith(_PARAM)}
        features = [archive[f"{_FEATURE}{m}"].copy() for m in range(header["n_features"])]
        popularity = archive["popularity"].copy()

    hp_record = dict(header["hp"])
    hp_record["frozen"] = tuple(hp_record.get("frozen", ()))
    hp = HyperParams.from_dict(hp_record)
    family = header["family"]
    if family == "mf":
        model = MfModel(params, hp, seen, popularity)
    elif family == "vaecf":
        model = VaecfModel(params, hp, seen, popularity)
    else:
        model = ContentModel(family, params, hp, seen, popularity, features)
    model.loss_trace = header["loss_trace"]
    return model
