"""IoU and optimal one-to-one box matching."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DomainError
from .types import BBox

DEFAULT_TAU = 0.5


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0.0 when they are disjoint."""
    iw = min(a.x1, b.x1) - max(a.x0, b.x0)
    ih = min(a.y1, b.y1) - max(a.y0, b.y0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    return min(1.0, inter / union)


def iou_matrix(preds: Sequence[BBox], gts: Sequence[BBox]) -> np.ndarray:
    out = np.zeros((len(preds), len(gts)), dtype=np.float64)
    for i, p in enumerate(preds):
        for j, g in enumerate(gts):
            out[i, j] = iou(p, g)
    return out


@dataclass(frozen=True)
class Matching:
    """Result of matching predictions to ground truth.

    ``pairs`` holds ``(pred_index, gt_index, iou)`` for assigned pairs that
    cleared the threshold. ``assignment_total`` is the summed IoU of the full
    optimal assignment before thresholding.
    """

    pairs: tuple[tuple[int, int, float], ...] = ()
    assignment_total: float = 0.0
    matched_gt_indices: frozenset[int] = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "matched_gt_indices", frozenset(g for _, g, _ in self.pairs))

    @property
    def total_iou(self) -> float:
        return sum(v for _, _, v in self.pairs)


def hungarian_match(preds: Sequence[BBox], gts: Sequence[BBox], tau: float = DEFAULT_TAU) -> Matching:
    """Assign predictions to ground truth maximizing summed IoU, then drop pairs below ``tau``.

    The assignment itself does not depend on ``tau``, so raising the threshold
    can only shrink the matched set.
    """
    if not 0 < tau <= 1:
        raise DomainError(f"tau must lie in (0, 1], got {tau!r}")
    if not preds or not gts:
        return Matching()
    scores = iou_matrix(preds, gts)
    # Rectangular inputs are handled natively: surplus rows or columns stay unassigned.
    rows, cols = linear_sum_assignment(scores, maximize=True)
    total = 0.0
    pairs = []
    for r, c in zip(rows.tolist(), cols.tolist()):
        v = float(scores[r, c])
        total += v
        if v >= tau:
            pairs.append((r, c, v))
    return Matching(pairs=tuple(pairs), assignment_total=total)
