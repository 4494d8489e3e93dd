"""Grasp-set scoring: precision, recall, F1, and penetration depth."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class GraspMetrics:
    ap: float  # precision over predicted positives
    ar: float  # recall over labeled positives
    f1: float  # harmonic mean of ap and ar
    penetration_cm: float
    success_rate: float  # fraction of trials predicting positive
    degenerate: bool  # no positive predictions: ap reported as 0 by convention


def grasp_metrics(predictions, labels, penetrations_m=()) -> GraspMetrics:
    """Score predicted grasp successes against ground-truth labels.

    predictions and labels are parallel boolean sequences; penetrations_m is
    an optional per-trial list of measured penetration depths in meters, of
    which the maximum is reported in centimeters.
    """
    predictions = [bool(p) for p in predictions]
    labels = [bool(l) for l in labels]
    if not predictions:
        raise ValueError("empty trial set")
    if len(predictions) != len(labels):
        raise ValueError("predictions and labels differ in length")
    tp = sum(p and l for p, l in zip(predictions, labels))
    fp = sum(p and not l for p, l in zip(predictions, labels))
    fn = sum(l and not p for p, l in zip(predictions, labels))
    degenerate = (tp + fp) == 0
    ap = 0.0 if degenerate else tp / (tp + fp)
    ar = 0.0 if (tp + fn) == 0 else tp / (tp + fn)
    f1 = 0.0 if (ap + ar) == 0 else 2.0 * ap * ar / (ap + ar)
    pen_cm = 100.0 * max(penetrations_m, default=0.0)
    if pen_cm < 0:
        raise ValueError("penetration depth cannot be negative")
    return GraspMetrics(
        ap=ap,
        ar=ar,
        f1=f1,
        penetration_cm=pen_cm,
        success_rate=sum(predictions) / len(predictions),
        degenerate=degenerate,
    )
