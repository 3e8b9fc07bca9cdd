"""Domain types for the blink/think/link completion format."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional

from .errors import InvariantError

CAPTIONS = ("dynamic", "static")
ACTION_FUNCTIONS = ("Back", "Home", "Tap", "Type", "Swipe", "LongPress")
DIRECTIONS = ("up", "down", "left", "right")

# Argument keys each action function must carry, beyond "function".
ACTION_ARGS: dict[str, frozenset[str]] = {
    "Back": frozenset(),
    "Home": frozenset(),
    "Tap": frozenset({"position"}),
    "LongPress": frozenset({"position"}),
    "Type": frozenset({"text"}),
    "Swipe": frozenset({"direction"}),
}

COORDINATE_ACTIONS = frozenset({"Tap", "LongPress"})


def is_number(value: Any) -> bool:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        return False
    try:
        return math.isfinite(float(value))
    except OverflowError:
        return False


@dataclass(frozen=True)
class BBox:
    """Axis-aligned pixel box ``[x0, y0, x1, y1]`` with positive area."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self) -> None:
        coords = (self.x0, self.y0, self.x1, self.y1)
        if not all(is_number(c) for c in coords):
            raise InvariantError(f"bbox coordinates must be finite numbers: {coords!r}")
        if min(coords) < 0:
            raise InvariantError(f"bbox coordinates must be non-negative: {coords!r}")
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise InvariantError(f"bbox must satisfy x0 < x1 and y0 < y1: {coords!r}")
        for name, c in zip(("x0", "y0", "x1", "y1"), coords):
            object.__setattr__(self, name, float(c))

    @classmethod
    def from_list(cls, values: Any) -> "BBox":
        if not isinstance(values, (list, tuple)) or len(values) != 4:
            raise InvariantError(f"bbox must be a list of 4 numbers, got {values!r}")
        return cls(*values)

    def to_list(self) -> list[float]:
        return [self.x0, self.y0, self.x1, self.y1]

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def contains(self, x: float, y: float) -> bool:
        """Boundary-inclusive point test."""
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1


@dataclass(frozen=True)
class BlinkElement:
    id: int
    bbox: BBox
    caption: str

    def __post_init__(self) -> None:
        if isinstance(self.id, bool) or not isinstance(self.id, int) or self.id < 1:
            raise InvariantError(f"element id must be a positive integer, got {self.id!r}")
        if not isinstance(self.bbox, BBox):
            raise InvariantError("element bbox must be a BBox")
        if self.caption not in CAPTIONS:
            raise InvariantError(f"caption must be one of {list(CAPTIONS)}, got {self.caption!r}")


@dataclass(frozen=True)
class ActionCall:
    """A GUI action: a function name plus exactly the arguments it requires."""

    function: str
    position: Optional[tuple[float, float]] = None
    text: Optional[str] = None
    direction: Optional[str] = None

    def __post_init__(self) -> None:
        if self.function not in ACTION_FUNCTIONS:
            raise InvariantError(f"unknown action function {self.function!r}")
        required = ACTION_ARGS[self.function]
        present = {
            name
            for name in ("position", "text", "direction")
            if getattr(self, name) is not None
        }
        if present != required:
            raise InvariantError(
                f"{self.function} takes arguments {sorted(required)}, got {sorted(present)}"
            )
        if self.position is not None:
            pos = self.position
            if (
                not isinstance(pos, (list, tuple))
                or len(pos) != 2
                or not all(is_number(v) and v >= 0 for v in pos)
            ):
                raise InvariantError(f"position must be a non-negative [x, y] pair, got {pos!r}")
            object.__setattr__(self, "position", (float(pos[0]), float(pos[1])))
        if self.text is not None and not isinstance(self.text, str):
            raise InvariantError("text must be a string")
        if self.direction is not None and self.direction not in DIRECTIONS:
            raise InvariantError(f"direction must be one of {list(DIRECTIONS)}, got {self.direction!r}")

    @classmethod
    def from_dict(cls, data: Any) -> "ActionCall":
        if not isinstance(data, dict):
            raise InvariantError("action must be a JSON object")
        function = data.get("function")
        if function not in ACTION_FUNCTIONS:
            raise InvariantError(f"unknown action function {function!r}")
        extra = set(data) - {"function"} - ACTION_ARGS[function]
        if extra:
            raise InvariantError(f"{function} does not accept arguments {sorted(extra)}")
        missing = ACTION_ARGS[function] - set(data)
        if missing:
            raise InvariantError(f"{function} is missing required arguments {sorted(missing)}")
        if "text" in data and not isinstance(data["text"], str):
            raise InvariantError("text must be a string")
        return cls(
            function=function,
            position=data.get("position"),
            text=data.get("text"),
            direction=data.get("direction"),
        )

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"function": self.function}
        if self.position is not None:
            out["position"] = [_compact(v) for v in self.position]
        if self.text is not None:
            out["text"] = self.text
        if self.direction is not None:
            out["direction"] = self.direction
        return out


@dataclass(frozen=True)
class LinkStep:
    plan: str
    action: ActionCall

    def __post_init__(self) -> None:
        if not isinstance(self.plan, str):
            raise InvariantError("plan must be a string")
        if not isinstance(self.action, ActionCall):
            raise InvariantError("action must be an ActionCall")

    def to_dict(self) -> dict[str, Any]:
        return {"Plan": self.plan, "Action": self.action.to_dict()}


@dataclass(frozen=True)
class BtlOutput:
    """A parsed completion.

    ``blink`` is in priority order (first = highest). ``raw`` keeps the source
    text and is ignored by equality so that reparsing a serialization compares
    equal to the original value.
    """

    blink: tuple[BlinkElement, ...]
    think: str
    link: tuple[LinkStep, ...]
    raw: str = field(default="", compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "blink", tuple(self.blink))
        object.__setattr__(self, "link", tuple(self.link))
        if not isinstance(self.think, str) or not self.think.strip():
            raise InvariantError("think text must be non-empty")
        object.__setattr__(self, "think", self.think.strip())
        if not self.link:
            raise InvariantError("link must contain at least one step")
        ids = [el.id for el in self.blink]
        if len(ids) != len(set(ids)):
            raise InvariantError("blink element ids must be unique")

    @property
    def action(self) -> ActionCall:
        """The action that gets scored: the first link step's."""
        return self.link[0].action


@dataclass(frozen=True)
class ValidationReport:
    template_ok: bool
    content_ok: bool
    issues: tuple[tuple[str, str], ...] = ()

    @property
    def ok(self) -> bool:
        return self.template_ok and self.content_ok

    def to_dict(self) -> dict[str, Any]:
        return {
            "template_ok": self.template_ok,
            "content_ok": self.content_ok,
            "issues": [{"location": loc, "message": msg} for loc, msg in self.issues],
        }


def _compact(v: float) -> float | int:
    """Render integral floats as ints so serialized coordinates stay short."""
    if isinstance(v, float) and v.is_integer() and abs(v) < 2**53:
        return int(v)
    return v
