"""Confusion counts and the accuracy / F1 / safety metrics (attack = positive)."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError(f"confusion counts must be non-negative: {self}")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def to_dict(self) -> dict:
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}


@dataclass(frozen=True)
class SafetyWeights:
    """Per-outcome weights; errors weigh eight times a true negative by default."""

    w_tn: Fraction = Fraction(1, 19)
    w_tp: Fraction = Fraction(2, 19)
    w_fp: Fraction = Fraction(8, 19)
    w_fn: Fraction = Fraction(8, 19)

    def __post_init__(self):
        for name in ("w_tn", "w_tp", "w_fp", "w_fn"):
            w = Fraction(getattr(self, name))
            if w < 0:
                raise ValueError(f"{name} must be non-negative")
            object.__setattr__(self, name, w)
        if not any((self.w_tn, self.w_tp, self.w_fp, self.w_fn)):
            raise ValueError("safety weights cannot all be zero")

    def to_dict(self) -> dict:
        return {k: str(getattr(self, k)) for k in ("w_tn", "w_tp", "w_fp", "w_fn")}


def confusion(pred, truth) -> ConfusionMatrix:
    pred = np.asarray(pred).astype(np.int64, copy=False)
    truth = np.asarray(truth).astype(np.int64, copy=False)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise ValueError(f"prediction shape {pred.shape} does not match truth {truth.shape}")
    if pred.size == 0:
        raise ValueError("confusion needs at least one prediction")
    for name, arr in (("pred", pred), ("truth", truth)):
        if not np.isin(arr, (0, 1)).all():
            raise ValueError(f"{name} labels must be 0 or 1")
    return ConfusionMatrix(
        tp=int(np.count_nonzero((pred == 1) & (truth == 1))),
        tn=int(np.count_nonzero((pred == 0) & (truth == 0))),
        fp=int(np.count_nonzero((pred == 1) & (truth == 0))),
        fn=int(np.count_nonzero((pred == 0) & (truth == 1))),
    )


def accuracy(c: ConfusionMatrix) -> float:
    if c.total == 0:
        raise ValueError("accuracy of an empty confusion matrix is undefined")
    return (c.tn + c.tp) / c.total


def f1_degenerate(c: ConfusionMatrix) -> bool:
    """True when F1 is undefined: no attacks predicted and none present."""
    return c.tp + c.fp + c.fn == 0


def f1_score(c: ConfusionMatrix) -> float:
    """``tp / (tp + (fp + fn) / 2)``; 0 when undefined (see :func:`f1_degenerate`)."""
    if f1_degenerate(c):
        return 0.0
    return c.tp / (c.tp + 0.5 * (c.fp + c.fn))


def safety_score(c: ConfusionMatrix, w: SafetyWeights = SafetyWeights()) -> float:
    """Weighted share of correct outcomes, computed exactly then rounded once."""
    num = w.w_tn * c.tn + w.w_tp * c.tp
    den = num + w.w_fp * c.fp + w.w_fn * c.fn
    if den == 0:
        raise ValueError("safety score denominator is zero")
    return float(num / den)
