"""Parse, validate and serialize blink/think/link completions.

A completion has the shape::

    <blink> ... </blink>
    <think> ... </think>
    <link> answer([{"Plan": ..., "Action": {"function": ..., ...}}]) </link>

The blink body is either the literal ``None`` or a run of ``<element>``
records; the link body wraps a JSON array of plan/action steps. Every public
check here is driven by the same analysis pass, so ``check_content(raw)``
holding guarantees that ``parse_btl(raw)`` succeeds.
"""

from __future__ import annotations

import json
import re
from typing import Any, Iterable, Optional, Sequence

from .errors import InvariantError, ParseError
from .types import ActionCall, BBox, BlinkElement, BtlOutput, LinkStep, ValidationReport

DEFAULT_LAMBDA_MAX = 5

BLOCKS = ("blink", "think", "link")
_EXPECTED_TAGS = tuple(t for b in BLOCKS for t in (f"<{b}>", f"</{b}>"))
_TAG_RE = re.compile(r"</?(?:blink|think|link)>")

_NUM = r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?"
_BBOX_RE = re.compile(rf"\[\s*({_NUM})\s*,\s*({_NUM})\s*,\s*({_NUM})\s*,\s*({_NUM})\s*\]")
_ELEMENT_FIELDS_RE = re.compile(
    r"\s*<id>(?P<id>[^<]*)</id>"
    r"\s*<bbox>(?P<bbox>[^<]*)</bbox>"
    r"\s*<caption>(?P<caption>[^<]*)</caption>\s*"
)
_ANSWER_RE = re.compile(r"answer\((?P<payload>.*)\)", re.DOTALL)


class _Issues:
    def __init__(self) -> None:
        self.items: list[tuple[str, str]] = []

    def add(self, location: str, message: str) -> None:
        self.items.append((location, message))

    def __bool__(self) -> bool:
        return bool(self.items)


# -- template -----------------------------------------------------------------


def _split_blocks(raw: str, issues: _Issues) -> Optional[dict[str, str]]:
    """Return the three block bodies, or None after recording the template issue."""
    tags = list(_TAG_RE.finditer(raw))
    for i, expected in enumerate(_EXPECTED_TAGS):
        block = BLOCKS[i // 2]
        if i >= len(tags):
            issues.add(block, f"missing {expected}")
            return None
        if tags[i].group() != expected:
            issues.add(block, f"expected {expected}, found {tags[i].group()} at offset {tags[i].start()}")
            return None
    if len(tags) > len(_EXPECTED_TAGS):
        extra = tags[len(_EXPECTED_TAGS)]
        issues.add("template", f"unexpected {extra.group()} at offset {extra.start()}")
        return None

    # Text between consecutive blocks (and at both ends) must be whitespace.
    gaps = [raw[: tags[0].start()]]
    gaps += [raw[tags[i].end() : tags[i + 1].start()] for i in (1, 3)]
    gaps.append(raw[tags[5].end() :])
    for where, gap in zip(("before blink", "between blink and think", "between think and link", "after link"), gaps):
        if gap.strip():
            issues.add("template", f"non-whitespace text {where}")
            return None
    return {BLOCKS[k]: raw[tags[2 * k].end() : tags[2 * k + 1].start()] for k in range(3)}


def check_template(raw: str) -> bool:
    """True iff ``raw`` is exactly one blink, think and link block, in order."""
    if not isinstance(raw, str):
        return False
    return _split_blocks(raw, _Issues()) is not None


# -- content ------------------------------------------------------------------


def _parse_blink(body: str, lambda_max: int, issues: _Issues) -> Optional[tuple[BlinkElement, ...]]:
    text = body.strip()
    if text == "None":
        return ()
    if not text:
        issues.add("blink", "body is empty; use None for zero elements")
        return None

    elements: list[BlinkElement] = []
    pos = 0
    while pos < len(text):
        loc = f"blink.element[{len(elements) + 1}]"
        if not text.startswith("<element>", pos):
            issues.add(loc, "expected <element>")
            return None
        end = text.find("</element>", pos)
        if end < 0:
            issues.add(loc, "unterminated <element>")
            return None
        inner = text[pos + len("<element>") : end]
        pos = end + len("</element>")
        while pos < len(text) and text[pos].isspace():
            pos += 1

        element = _parse_element(inner, loc, issues)
        if element is None:
            return None
        elements.append(element)

    if len(elements) > lambda_max:
        issues.add("blink", f"{len(elements)} elements exceed the limit of {lambda_max}")
        return None
    seen: set[int] = set()
    for i, el in enumerate(elements, 1):
        if el.id in seen:
            issues.add(f"blink.element[{i}].id", f"duplicate id {el.id}")
            return None
        seen.add(el.id)
    return tuple(elements)


def _parse_element(inner: str, loc: str, issues: _Issues) -> Optional[BlinkElement]:
    m = _ELEMENT_FIELDS_RE.fullmatch(inner)
    if m is None:
        issues.add(loc, "element must contain <id>, <bbox> and <caption> in that order")
        return None
    id_text = m["id"].strip()
    if not id_text.isdigit() or not id_text.isascii():
        issues.add(f"{loc}.id", f"id must be a positive integer, got {id_text!r}")
        return None
    bm = _BBOX_RE.fullmatch(m["bbox"].strip())
    if bm is None:
        issues.add(f"{loc}.bbox", f"bbox must look like [x0, y0, x1, y1], got {m['bbox'].strip()!r}")
        return None
    caption = m["caption"].strip()
    try:
        bbox = BBox(*(float(v) for v in bm.groups()))
    except InvariantError as exc:
        issues.add(f"{loc}.bbox", str(exc))
        return None
    try:
        return BlinkElement(id=int(id_text), bbox=bbox, caption=caption)
    except InvariantError as exc:
        field = "caption" if caption not in ("dynamic", "static") else "id"
        issues.add(f"{loc}.{field}", str(exc))
        return None


def _reject_constant(name: str) -> Any:
    raise ValueError(f"non-finite number {name} is not allowed")


def _unique_keys(pairs: list[tuple[str, Any]]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, value in pairs:
        if key in out:
            raise ValueError(f"duplicate key {key!r}")
        out[key] = value
    return out


def _parse_link(body: str, issues: _Issues) -> Optional[tuple[LinkStep, ...]]:
    m = _ANSWER_RE.fullmatch(body.strip())
    if m is None:
        issues.add("link", "body must be answer([...])")
        return None
    payload = m["payload"].strip()
    if not (payload.startswith("[") and payload.endswith("]")):
        issues.add("link", "answer(...) must wrap a JSON array")
        return None
    try:
        data = json.loads(payload, object_pairs_hook=_unique_keys, parse_constant=_reject_constant)
    except ValueError as exc:
        issues.add("link", f"malformed JSON: {exc}")
        return None
    if not isinstance(data, list) or not data:
        issues.add("link", "answer list must contain at least one step")
        return None

    steps = []
    for i, item in enumerate(data, 1):
        loc = f"link.step[{i}]"
        if not isinstance(item, dict) or set(item) != {"Plan", "Action"}:
            issues.add(loc, 'step must be an object with exactly "Plan" and "Action"')
            return None
        if not isinstance(item["Plan"], str):
            issues.add(f"{loc}.Plan", "Plan must be a string")
            return None
        try:
            action = ActionCall.from_dict(item["Action"])
        except InvariantError as exc:
            issues.add(f"{loc}.Action", str(exc))
            return None
        steps.append(LinkStep(plan=item["Plan"], action=action))
    return tuple(steps)


def _analyze(raw: str, lambda_max: int) -> tuple[ValidationReport, Optional[BtlOutput]]:
    issues = _Issues()
    if not isinstance(raw, str):
        return ValidationReport(False, False, (("template", "input is not text"),)), None
    blocks = _split_blocks(raw, issues)
    if blocks is None:
        return ValidationReport(False, False, tuple(issues.items)), None

    blink = _parse_blink(blocks["blink"], lambda_max, issues)
    think = blocks["think"].strip()
    if not think:
        issues.add("think", "reasoning text must be non-empty")
    link = _parse_link(blocks["link"], issues)
    if issues:
        return ValidationReport(True, False, tuple(issues.items)), None
    assert blink is not None and link is not None
    return ValidationReport(True, True), BtlOutput(blink=blink, think=think, link=link, raw=raw)


def check_content(raw: str, lambda_max: int = DEFAULT_LAMBDA_MAX) -> bool:
    """True iff the template holds and the blink XML and link JSON are valid."""
    return _analyze(raw, lambda_max)[0].ok


def validate(raw: str, lambda_max: int = DEFAULT_LAMBDA_MAX) -> ValidationReport:
    return _analyze(raw, lambda_max)[0]


def parse_btl(raw: str, lambda_max: int = DEFAULT_LAMBDA_MAX) -> BtlOutput:
    """Parse a completion, raising ParseError at the first offending location."""
    report, output = _analyze(raw, lambda_max)
    if output is None:
        location, message = report.issues[0]
        raise ParseError(location, message)
    return output


def try_parse(raw: str, lambda_max: int = DEFAULT_LAMBDA_MAX) -> Optional[BtlOutput]:
    return _analyze(raw, lambda_max)[1]


# -- serialization ------------------------------------------------------------


def _num(v: float) -> str:
    if v.is_integer() and abs(v) < 2**53:
        return str(int(v))
    return repr(v)


def serialize_blink(elements: Sequence[BlinkElement]) -> str:
    """Render elements as the blink body: ``None`` or concatenated ``<element>`` records."""
    seen: set[int] = set()
    parts = []
    for el in elements:
        if not isinstance(el, BlinkElement):
            raise InvariantError(f"expected BlinkElement, got {type(el).__name__}")
        # Re-check in case the instance was built around __init__.
        BlinkElement(el.id, BBox(el.bbox.x0, el.bbox.y0, el.bbox.x1, el.bbox.y1), el.caption)
        if el.id in seen:
            raise InvariantError(f"duplicate element id {el.id}")
        seen.add(el.id)
        b = el.bbox
        parts.append(
            f"<element><id>{el.id}</id>"
            f"<bbox>[{_num(b.x0)}, {_num(b.y0)}, {_num(b.x1)}, {_num(b.y1)}]</bbox>"
            f"<caption>{el.caption}</caption></element>"
        )
    return "".join(parts) if parts else "None"


def serialize_link(steps: Iterable[LinkStep]) -> str:
    payload = json.dumps([s.to_dict() for s in steps], ensure_ascii=False)
    # Keep plan text from closing or opening a block; < decodes back to "<".
    payload = _TAG_RE.sub(lambda m: "\\u003c" + m.group()[1:], payload)
    return f"answer({payload})"


def serialize_btl(output: BtlOutput) -> str:
    if not output.think.strip():
        raise InvariantError("think text must be non-empty")
    if _TAG_RE.search(output.think):
        raise InvariantError("think text must not contain block tags")
    if not output.link:
        raise InvariantError("link must contain at least one step")
    return (
        f"<blink>{serialize_blink(output.blink)}</blink>\n"
        f"<think>{output.think}</think>\n"
        f"<link> {serialize_link(output.link)} </link>"
    )
