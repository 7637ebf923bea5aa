"""Family name -> trainer dispatch."""

from typing import Optional

from src.models.base import CONTENT_FAMILIES, FAMILIES, HyperParams, Recommender, TrainingSet
from src.models.content import train_content
from src.models.mf import train_mf
from src.models.vaecf import train_vaecf
from src.utils.errors import ArgumentError, PreconditionError


def needs_features(family: str) -> bool:
    return family in CONTENT_FAMILIES


def train_model(family: str, training: TrainingSet, features=None, hp: Optional[HyperParams] = None) -> Recommender:
    """
    Train any backbone by name.

    Args:
        family: ``mf``, ``vaecf``, ``vbpr``, ``vmf`` or ``amr``
        training: Train view of a split
        features: Item features for the content families; ignored otherwise
        hp: Hyper-parameters (defaults when omitted)

    Returns:
        The trained model
    """
    if family not in FAMILIES:
        raise ArgumentError(f"unknown model family '{family}' (allowed: {', '.join(FAMILIES)})")
    hp = hp or HyperParams()
    if family == "mf":
        return train_mf(training, hp)
    if family == "vaecf":
        return train_vaecf(training, hp)
    if features is None:
        raise PreconditionError(f"{family} needs item features")
    return train_content(training, features, family, hp)
