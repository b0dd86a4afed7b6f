"""Loss-threshold membership inference.

An example is predicted to be a training member when its per-example loss
falls below a threshold calibrated as the mean loss over a held-out
calibration split.  Reported precision and recall quantify how exposed the
member set still is.
"""
from __future__ import annotations

import numpy as np

from .flcore import GlobalModel

__all__ = ["mia_probe"]


def _per_example_losses(model: GlobalModel, split) -> np.ndarray:
    X, y = split
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    return model.arch.per_example_loss(model.weights, X, y)


def mia_probe(model: GlobalModel, member, nonmember, calibration) -> tuple[float, float]:
    """(precision, recall) of the loss-threshold attack.

    ``member`` and ``nonmember`` are (X, y) splits assumed disjoint;
    ``calibration`` is a held-out split whose mean loss becomes the threshold.
    An empty prediction set yields precision 0.
    """
    calibration_losses = _per_example_losses(model, calibration)
    if calibration_losses.size == 0:
        raise ValueError("degenerate threshold: empty calibration split")
    threshold = float(calibration_losses.mean())

    member_losses = _per_example_losses(model, member)
    nonmember_losses = _per_example_losses(model, nonmember)
    if member_losses.size == 0:
        raise ValueError("empty member split")

    true_positives = int((member_losses < threshold).sum())
    false_positives = int((nonmember_losses < threshold).sum())
    predicted = true_positives + false_positives
    precision = true_positives / predicted if predicted else 0.0
    recall = true_positives / member_losses.size
    return float(precision), float(recall)
