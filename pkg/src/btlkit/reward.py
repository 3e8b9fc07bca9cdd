"""Rule-based reward for blink/think/link completions.

The total reward is the sum of three parts:

* ``r_format``: 1 when the completion passes both the template and the
  content checks, else 0.
* ``r_blink``: credit for predicted ROI boxes that match the annotated ROIs,
  scaled by the priority of the best matched annotation.
* ``r_link``: 1 only when the action type *and* its arguments are correct.

Blink and link rewards are gated on the format reward, since there is
nothing to score without a parse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence, Union

from .errors import DomainError, InvariantError
from .geometry import DEFAULT_TAU, hungarian_match
from .grammar import DEFAULT_LAMBDA_MAX, try_parse
from .types import COORDINATE_ACTIONS, ActionCall, BBox, BtlOutput

DEFAULT_COORDINATE_TOLERANCE = 0.14

# Actions that carry no screen coordinate; an empty blink is correct for them.
NON_INTERACTIVE_ACTIONS = frozenset({"Back", "Home", "Swipe", "Type"})


@dataclass(frozen=True)
class GroundTruthStep:
    """One annotated step: the task context, the expected action and its ROIs.

    ``gt_rois`` is a sequence of ``(bbox, rank)`` with ranks ``1..n``; rank 1
    is the most relevant region.
    """

    instruction: str
    gt_action: ActionCall
    screen_size: tuple[float, float]
    history: tuple[str, ...] = ()
    gt_rois: tuple[tuple[BBox, int], ...] = ()
    gt_element_bbox: Optional[BBox] = None
    id: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "history", tuple(self.history))
        object.__setattr__(self, "gt_rois", tuple((b, r) for b, r in self.gt_rois))
        ranks = sorted(r for _, r in self.gt_rois)
        if ranks != list(range(1, len(ranks) + 1)):
            raise InvariantError(f"ROI priority ranks must be 1..{len(ranks)} without gaps, got {ranks}")
        w, h = self.screen_size
        if not (w > 0 and h > 0):
            raise InvariantError(f"screen size must be positive, got {self.screen_size!r}")
        object.__setattr__(self, "screen_size", (float(w), float(h)))
        b = self.gt_element_bbox
        if b is not None and (b.x1 > w or b.y1 > h):
            raise InvariantError("gt_element_bbox lies outside the screen")

    @property
    def roi_boxes(self) -> list[BBox]:
        return [b for b, _ in self.gt_rois]

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "GroundTruthStep":
        """Build from a JSON record.

        ``gt_rois`` entries are either ``{"bbox": [...], "priority": k}`` or a
        bare ``[x0, y0, x1, y1]`` list, in which case list position is the rank.
        """
        if not isinstance(data, dict):
            raise InvariantError("ground-truth record must be a JSON object")
        try:
            rois = []
            for pos, item in enumerate(data.get("gt_rois") or [], 1):
                if isinstance(item, dict):
                    rois.append((BBox.from_list(item["bbox"]), int(item.get("priority", pos))))
                else:
                    rois.append((BBox.from_list(item), pos))
            element = data.get("gt_element_bbox")
            screen = data["screen_size"]
            if not isinstance(screen, (list, tuple)) or len(screen) != 2:
                raise InvariantError("screen_size must be [width, height]")
            return cls(
                id=None if data.get("id") is None else str(data["id"]),
                instruction=str(data.get("instruction", "")),
                history=tuple(str(h) for h in data.get("history") or ()),
                gt_action=ActionCall.from_dict(data["gt_action"]),
                gt_rois=tuple(rois),
                gt_element_bbox=None if element is None else BBox.from_list(element),
                screen_size=(screen[0], screen[1]),
            )
        except KeyError as exc:
            raise InvariantError(f"ground-truth record is missing {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, InvariantError):
                raise
            raise InvariantError(f"bad ground-truth record: {exc}") from None


@dataclass(frozen=True)
class RewardBreakdown:
    r_format: int
    r_blink: float
    r_link: int

    @property
    def r_total(self) -> float:
        return self.r_format + self.r_blink + self.r_link

    def to_dict(self) -> dict[str, Any]:
        return {
            "r_format": self.r_format,
            "r_blink": self.r_blink,
            "r_link": self.r_link,
            "r_total": self.r_total,
        }


ZERO_BREAKDOWN = RewardBreakdown(0, 0.0, 0)


# -- allocation ---------------------------------------------------------------


def allocation_s(rank: int, total: int) -> float:
    """Linear priority allocation: rank 1 earns 1.0, rank ``total`` earns ``1/total``."""
    if isinstance(rank, bool) or isinstance(total, bool) or not (1 <= rank <= total):
        raise DomainError(f"rank must satisfy 1 <= rank <= total, got rank={rank!r} total={total!r}")
    return (total - rank + 1) / total


Allocation = Callable[[int, int], float]
ALLOCATIONS: dict[str, Allocation] = {"linear": allocation_s}


def _resolve_allocation(allocation: Union[str, Allocation]) -> Allocation:
    if callable(allocation):
        return allocation
    try:
        return ALLOCATIONS[allocation]
    except KeyError:
        raise DomainError(f"unknown allocation {allocation!r}; choose from {sorted(ALLOCATIONS)}") from None


# -- component rewards --------------------------------------------------------


def reward_format(raw: str, lambda_max: int = DEFAULT_LAMBDA_MAX) -> int:
    return int(try_parse(raw, lambda_max) is not None)


def reward_blink(
    output: BtlOutput,
    gt: GroundTruthStep,
    tau: float = DEFAULT_TAU,
    allocation: Union[str, Allocation] = "linear",
) -> float:
    alloc = _resolve_allocation(allocation)
    preds = [el.bbox for el in output.blink]
    if not preds:
        return 1.0 if (not gt.gt_rois or gt.gt_action.function in NON_INTERACTIVE_ACTIONS) else 0.0
    if not gt.gt_rois:
        return 0.0
    matching = hungarian_match(preds, gt.roi_boxes, tau)
    total = len(gt.gt_rois)
    return max((alloc(gt.gt_rois[g][1], total) for g in matching.matched_gt_indices), default=0.0)


def coordinate_correct(
    position: Sequence[float],
    gt: GroundTruthStep,
    tolerance: float = DEFAULT_COORDINATE_TOLERANCE,
) -> bool:
    """Point inside the target element's box, else within ``tolerance * width`` of the gt point."""
    x, y = position
    if gt.gt_element_bbox is not None:
        return gt.gt_element_bbox.contains(x, y)
    gx, gy = gt.gt_action.position  # type: ignore[misc]
    return math.hypot(x - gx, y - gy) <= tolerance * gt.screen_size[0]


def arguments_correct(
    pred: ActionCall,
    gt: GroundTruthStep,
    tolerance: float = DEFAULT_COORDINATE_TOLERANCE,
) -> bool:
    target = gt.gt_action
    fn = target.function
    if fn in ("Back", "Home"):
        return True
    if fn == "Swipe":
        return pred.direction == target.direction
    if fn == "Type":
        return pred.text is not None and pred.text.strip() == (target.text or "").strip()
    if fn in COORDINATE_ACTIONS:
        return pred.position is not None and coordinate_correct(pred.position, gt, tolerance)
    return False


def reward_link(
    pred: ActionCall,
    gt: GroundTruthStep,
    tolerance: float = DEFAULT_COORDINATE_TOLERANCE,
) -> int:
    """1 only when type and arguments are both right; no partial credit."""
    return int(pred.function == gt.gt_action.function and arguments_correct(pred, gt, tolerance))


def score_parsed(
    output: Optional[BtlOutput],
    gt: GroundTruthStep,
    tau: float = DEFAULT_TAU,
    tolerance: float = DEFAULT_COORDINATE_TOLERANCE,
    allocation: Union[str, Allocation] = "linear",
) -> RewardBreakdown:
    if output is None:
        return ZERO_BREAKDOWN
    return RewardBreakdown(
        r_format=1,
        r_blink=reward_blink(output, gt, tau, allocation),
        r_link=reward_link(output.action, gt, tolerance),
    )


def reward_total(
    raw: str,
    gt: GroundTruthStep,
    tau: float = DEFAULT_TAU,
    *,
    lambda_max: int = DEFAULT_LAMBDA_MAX,
    tolerance: float = DEFAULT_COORDINATE_TOLERANCE,
    allocation: Union[str, Allocation] = "linear",
) -> RewardBreakdown:
    return score_parsed(try_parse(raw, lambda_max), gt, tau, tolerance, allocation)
