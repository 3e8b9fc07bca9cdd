"""Step-level GUI agent metrics: action type, grounding and step success."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Optional, Union

from .errors import InvariantError, JoinError
from .grammar import DEFAULT_LAMBDA_MAX, try_parse
from .reward import DEFAULT_COORDINATE_TOLERANCE, GroundTruthStep, coordinate_correct, reward_link
from .types import COORDINATE_ACTIONS, ActionCall, BBox, BtlOutput

REPORT_FIELDS = ("n_steps", "type_acc", "gr_acc", "sr_acc", "grounding_acc")

# Confusion-table label for completions that yield no action.
NO_ACTION = "<invalid>"


class EmptyDatasetError(ValueError):
    pass


@dataclass(frozen=True)
class StepPrediction:
    raw_completion: str
    parsed: Optional[BtlOutput] = None

    @classmethod
    def from_raw(cls, raw: str, lambda_max: int = DEFAULT_LAMBDA_MAX) -> "StepPrediction":
        return cls(raw, try_parse(raw, lambda_max))

    @property
    def action(self) -> Optional[ActionCall]:
        return None if self.parsed is None else self.parsed.action


def metric_type(pred: ActionCall, gt: ActionCall) -> int:
    return int(pred.function == gt.function)


def metric_gr(
    pred: Optional[ActionCall],
    gt: GroundTruthStep,
    tolerance: float = DEFAULT_COORDINATE_TOLERANCE,
) -> Optional[int]:
    """Click-point accuracy; None when the step is not a Tap/LongPress step."""
    if gt.gt_action.function not in COORDINATE_ACTIONS:
        return None
    if pred is None or pred.position is None:
        return 0
    return int(coordinate_correct(pred.position, gt, tolerance))


def metric_sr(
    pred: Optional[ActionCall],
    gt: GroundTruthStep,
    tolerance: float = DEFAULT_COORDINATE_TOLERANCE,
) -> int:
    if pred is None:
        return 0
    return reward_link(pred, gt, tolerance)


def grounding_accuracy(point: tuple[float, float], gt_bbox: BBox) -> int:
    return int(gt_bbox.contains(*point))


@dataclass
class EvalReport:
    n_steps: int
    type_acc: float
    gr_acc: Optional[float]
    sr_acc: float
    grounding_acc: Optional[float] = None
    confusion: dict[str, dict[str, int]] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_steps": self.n_steps,
            "type_acc": self.type_acc,
            "gr_acc": self.gr_acc,
            "sr_acc": self.sr_acc,
            "grounding_acc": self.grounding_acc,
            "confusion": self.confusion,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"


class _Tally:
    def __init__(self) -> None:
        self.n = 0
        self.type_hits = 0
        self.sr_hits = 0
        self.gr_hits = 0
        self.gr_total = 0
        self.ground_hits = 0
        self.ground_total = 0
        self.confusion: dict[str, dict[str, int]] = defaultdict(lambda: defaultdict(int))

    def add(self, pred: Optional[ActionCall], gt: GroundTruthStep, tolerance: float) -> None:
        self.n += 1
        self.type_hits += 0 if pred is None else metric_type(pred, gt.gt_action)
        self.sr_hits += metric_sr(pred, gt, tolerance)
        gr = metric_gr(pred, gt, tolerance)
        if gr is not None:
            self.gr_total += 1
            self.gr_hits += gr
        if gt.gt_element_bbox is not None and gt.gt_action.function in COORDINATE_ACTIONS:
            self.ground_total += 1
            if pred is not None and pred.position is not None:
                self.ground_hits += grounding_accuracy(pred.position, gt.gt_element_bbox)
        label = NO_ACTION if pred is None else pred.function
        self.confusion[gt.gt_action.function][label] += 1

    def report(self) -> EvalReport:
        if self.n == 0:
            raise EmptyDatasetError("cannot evaluate an empty dataset")

        def ratio(hits: int, total: int) -> Optional[float]:
            return float(Fraction(hits, total)) if total else None

        return EvalReport(
            n_steps=self.n,
            type_acc=float(Fraction(self.type_hits, self.n)),
            gr_acc=ratio(self.gr_hits, self.gr_total),
            sr_acc=float(Fraction(self.sr_hits, self.n)),
            grounding_acc=ratio(self.ground_hits, self.ground_total),
            confusion={k: dict(sorted(v.items())) for k, v in sorted(self.confusion.items())},
        )


def evaluate_steps(
    pairs: Iterable[tuple[Optional[ActionCall], GroundTruthStep]],
    tolerance: float = DEFAULT_COORDINATE_TOLERANCE,
) -> EvalReport:
    """Aggregate metrics over ``(predicted action or None, ground truth)`` pairs."""
    tally = _Tally()
    for pred, gt in pairs:
        tally.add(pred, gt, tolerance)
    return tally.report()


def _read_jsonl(path: Union[str, Path]) -> Iterable[tuple[int, dict[str, Any]]]:
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except ValueError as exc:
                raise InvariantError(f"{path}:{n}: invalid JSON ({exc})") from None
            if not isinstance(record, dict):
                raise InvariantError(f"{path}:{n}: record must be a JSON object")
            yield n, record


def load_groundtruth(path: Union[str, Path]) -> dict[str, GroundTruthStep]:
    steps: dict[str, GroundTruthStep] = {}
    for n, record in _read_jsonl(path):
        if record.get("id") is None:
            raise JoinError(f"{path}:{n}: ground-truth record has no id")
        try:
            step = GroundTruthStep.from_dict(record)
        except InvariantError as exc:
            raise InvariantError(f"{path}:{n}: {exc}") from None
        if step.id in steps:
            raise JoinError(f"{path}:{n}: duplicate step id {step.id!r}")
        steps[step.id] = step  # type: ignore[index]
    return steps


def evaluate(
    dataset_path: Union[str, Path],
    predictions_path: Union[str, Path],
    *,
    tolerance: float = DEFAULT_COORDINATE_TOLERANCE,
    lambda_max: int = DEFAULT_LAMBDA_MAX,
) -> EvalReport:
    """Score a predictions file (``{"id", "completion"}`` lines) against a dataset.

    Every dataset step needs exactly one prediction and vice versa, otherwise
    JoinError. Completions that fail to parse score 0 on every metric.
    """
    steps = load_groundtruth(dataset_path)
    seen: set[str] = set()
    tally = _Tally()
    for n, record in _read_jsonl(predictions_path):
        step_id = None if record.get("id") is None else str(record["id"])
        if step_id not in steps:
            raise JoinError(f"{predictions_path}:{n}: no ground truth for step id {step_id!r}")
        if step_id in seen:
            raise JoinError(f"{predictions_path}:{n}: duplicate prediction for step id {step_id!r}")
        seen.add(step_id)
        raw = record.get("completion")
        pred = StepPrediction.from_raw(raw, lambda_max) if isinstance(raw, str) else StepPrediction("")
        tally.add(pred.action, steps[step_id], tolerance)
    missing = sorted(set(steps) - seen)
    if missing:
        raise JoinError(f"no prediction for step id(s) {missing[:5]}{' ...' if len(missing) > 5 else ''}")
    return tally.report()
