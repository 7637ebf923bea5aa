"""Area under an accuracy vs beyond-accuracy tradeoff curve."""

from typing import Iterable, Tuple

import numpy as np
from scipy.integrate import trapezoid

from src.utils.errors import DegenerateCurveError


def tradeoff_auc(points: Iterable[Tuple[float, float]]) -> float:
    """
    Trapezoidal area under min-max normalised (x, y) points.

    Points sharing an x value collapse to their mean y. A constant y maps to
    1 after normalisation.

    Args:
        points: ``(beyond_accuracy_value, ndcg)`` pairs, e.g. one per configuration

    Returns:
        Area in [0, 1]

    Raises:
        DegenerateCurveError: With fewer than two distinct x values
    """
    pairs = np.array([(float(x), float(y)) for x, y in points], dtype=np.float64).reshape(-1, 2)
    xs, ys = pairs[:, 0], pairs[:, 1]
    if xs.size < 2 or np.unique(xs).size < 2:
        raise DegenerateCurveError(f"tradeoff curve needs at least 2 distinct x values, got {np.unique(xs).size}")

    x_norm = (xs - xs.min()) / (xs.max() - xs.min())
    y_range = ys.max() - ys.min()
    y_norm = (ys - ys.min()) / y_range if y_range > 0 else np.ones_like(ys)

    unique_x, inverse = np.unique(x_norm, return_inverse=True)
    mean_y = np.bincount(inverse, weights=y_norm) / np.bincount(inverse)
    return float(trapezoid(mean_y, unique_x))
