"""Random generators and brute-force oracles shared by the test modules.

The oracles here deliberately avoid the code paths they check: assignment
optimality is found by enumerating permutations, advantages are recomputed
in arbitrary precision, and the blink reward follows the case analysis
directly instead of calling into ``btlkit.reward``.
"""

from __future__ import annotations

import itertools
import math
import random
import re
import string
from fractions import Fraction

import mpmath

from btlkit.grammar import serialize_btl
from btlkit.types import ActionCall, BBox, BlinkElement, BtlOutput, LinkStep

TAGS = ("<blink>", "</blink>", "<think>", "</think>", "<link>", "</link>")
NON_INTERACTIVE = {"Back", "Home", "Swipe", "Type"}

_TEXT_ALPHABET = string.ascii_letters + string.digits + " .,;:!?'\"\\/<>[]{}()&%$#@-_=+\n\t" + "éü中文"


# -- random domain values -----------------------------------------------------


def random_coord(rng: random.Random, hi: float = 1000.0) -> float:
    kind = rng.random()
    if kind < 0.4:
        return float(rng.randint(0, int(hi)))
    if kind < 0.7:
        return round(rng.uniform(0, hi), rng.randint(1, 3))
    return rng.uniform(0, hi)


def random_bbox(rng: random.Random, hi: float = 1000.0) -> BBox:
    x0, y0 = random_coord(rng, hi), random_coord(rng, hi)
    w = rng.choice([float(rng.randint(1, 200)), rng.uniform(0.5, 200)])
    h = rng.choice([float(rng.randint(1, 200)), rng.uniform(0.5, 200)])
    return BBox(x0, y0, x0 + w, y0 + h)


def random_text(rng: random.Random, lo: int = 0, hi: int = 40) -> str:
    return "".join(rng.choice(_TEXT_ALPHABET) for _ in range(rng.randint(lo, hi)))


def random_think(rng: random.Random) -> str:
    while True:
        text = random_text(rng, 1, 60).strip()
        if text and not any(t in text for t in TAGS):
            return text


def random_action(rng: random.Random, function: str | None = None) -> ActionCall:
    fn = function or rng.choice(["Back", "Home", "Tap", "Type", "Swipe", "LongPress"])
    if fn in ("Tap", "LongPress"):
        return ActionCall(fn, position=(random_coord(rng), random_coord(rng)))
    if fn == "Type":
        return ActionCall(fn, text=random_text(rng, 0, 20))
    if fn == "Swipe":
        return ActionCall(fn, direction=rng.choice(["up", "down", "left", "right"]))
    return ActionCall(fn)


def random_plan(rng: random.Random) -> str:
    text = random_text(rng, 0, 30)
    if rng.random() < 0.1:
        text += rng.choice(TAGS)  # exercised by the serializer's escaping
    return text


def random_output(rng: random.Random, lambda_max: int = 5) -> BtlOutput:
    n = rng.randint(0, lambda_max)
    ids = rng.sample(range(1, 50), n) if rng.random() < 0.3 else list(range(1, n + 1))
    blink = tuple(BlinkElement(i, random_bbox(rng), rng.choice(["dynamic", "static"])) for i in ids)
    link = tuple(LinkStep(random_plan(rng), random_action(rng)) for _ in range(rng.randint(1, 3)))
    return BtlOutput(blink=blink, think=random_think(rng), link=link)


# -- single-edit mutants ------------------------------------------------------


def _delete_in_span(rng: random.Random, text: str, start: int, end: int) -> str:
    i = rng.randrange(start, end)
    return text[:i] + text[i + 1 :]


def _mut_block_tag(rng, raw, out):
    tag = rng.choice(TAGS)
    m = re.search(re.escape(tag), raw)
    name_start = m.start() + (2 if tag.startswith("</") else 1)
    return _delete_in_span(rng, raw, name_start, m.end() - 1)


def _mut_block_order(rng, raw, out):
    blink = raw[: raw.index("</blink>") + 8]
    think = raw[raw.index("<think>") : raw.index("</think>") + 8]
    link = raw[raw.index("<link>") :]
    return rng.choice([think + blink + link, blink + link + think, link + think + blink])


def _mut_duplicate_block(rng, raw, out):
    tag = rng.choice(["blink", "think", "link"])
    block = raw[raw.index(f"<{tag}>") : raw.index(f"</{tag}>") + len(tag) + 3]
    return raw + block if rng.random() < 0.5 else block + raw


def _mut_stray_text(rng, raw, out):
    anchor = rng.choice(["</blink>", "</think>"])
    i = raw.index(anchor) + len(anchor)
    return raw[:i] + " x" + raw[i:]


def _mut_element_tag(rng, raw, out):
    names = [m for m in re.finditer(r"</?(?:element|id|bbox|caption)>", raw)]
    m = rng.choice(names)
    name_start = m.start() + (2 if m.group().startswith("</") else 1)
    return _delete_in_span(rng, raw, name_start, m.end() - 1)


def _mut_caption(rng, raw, out):
    matches = list(re.finditer(r"<caption>(dynamic|static)</caption>", raw))
    m = rng.choice(matches)
    bad = rng.choice(["clickable", "Dynamic", "STATIC", "dynamics", "", "interactive"])
    return raw[: m.start(1)] + bad + raw[m.end(1) :]


def _mut_bbox_swap(rng, raw, out):
    matches = list(re.finditer(r"<bbox>\[([^,\]]+), ([^,\]]+), ([^,\]]+), ([^,\]]+)\]</bbox>", raw))
    m = rng.choice(matches)
    x0, y0, x1, y1 = m.groups()
    swapped = f"<bbox>[{x1}, {y0}, {x0}, {y1}]</bbox>" if rng.random() < 0.5 else f"<bbox>[{x0}, {y1}, {x1}, {y0}]</bbox>"
    return raw[: m.start()] + swapped + raw[m.end() :]


def _mut_none_token(rng, raw, out):
    i = raw.index("None")
    return raw[:i] + rng.choice(["none", "Nne", "NONE", "", "Null"]) + raw[i + 4 :]


def _mut_too_many(rng, raw, out, lambda_max=5):
    used = max((el.id for el in out.blink), default=0)
    extra = "".join(
        f"<element><id>{used + k}</id><bbox>[1, 1, 2, 2]</bbox><caption>static</caption></element>"
        for k in range(1, lambda_max + 2 - len(out.blink))
    )
    if out.blink:
        i = raw.index("</blink>")
        return raw[:i] + extra + raw[i:]
    return raw.replace("None", extra, 1)


def _mut_answer(rng, raw, out):
    i = raw.index("answer(", raw.index("<link>"))
    return _delete_in_span(rng, raw, i, i + 7)


def _link_json_span(raw):
    start = raw.index("answer(", raw.index("<link>")) + 7
    end = raw.rindex(")", 0, raw.index("</link>"))
    return start, end


def _mut_json_structure(rng, raw, out):
    start, end = _link_json_span(raw)
    payload = raw[start:end]
    # Structural positions: brackets, braces, colons and the quotes around keys.
    spots = []
    for m in re.finditer(r'"(Plan|Action|function|position|text|direction)"\s*:', payload):
        spots += [m.start(), m.start() + len(m.group(1)) + 1, m.end() - 1]
    spots += [0, len(payload) - 1]
    i = start + rng.choice(spots)
    return raw[:i] + raw[i + 1 :]


def _mut_function_name(rng, raw, out):
    m = rng.choice(list(re.finditer(r'"function": "(\w+)"', raw)))
    bad = rng.choice(["Click", "tap", "Scroll", "Wait", "", "back"])
    return raw[: m.start(1)] + bad + raw[m.end(1) :]


def _mut_drop_argument(rng, raw, out):
    matches = list(re.finditer(r', "(position|text|direction)": ("(?:[^"\\]|\\.)*"|\[[^\]]*\])', raw))
    m = rng.choice(matches)
    return raw[: m.start()] + raw[m.end() :]


def _mut_extra_argument(rng, raw, out):
    m = rng.choice(list(re.finditer(r'"function": "\w+"', raw)))
    extra = rng.choice([', "foo": 1', ', "position": [1, 2]', ', "direction": "up"', ', "text": "x"'])
    fn = re.search(r'"(\w+)"$', m.group()).group(1)
    needed = {"Tap": "position", "LongPress": "position", "Type": "text", "Swipe": "direction"}.get(fn)
    if needed and needed in extra:
        extra = ', "foo": 1'
    return raw[: m.end()] + extra + raw[m.end() :]


def _mut_direction(rng, raw, out):
    m = rng.choice(list(re.finditer(r'"direction": "(\w+)"', raw)))
    return raw[: m.start(1)] + rng.choice(["north", "Up", "sideways", ""]) + raw[m.end(1) :]


def _mut_empty_think(rng, raw, out):
    return raw[: raw.index("<think>") + 7] + rng.choice(["", " ", "\n"]) + raw[raw.index("</think>") :]


def mutate(rng: random.Random, out: BtlOutput) -> tuple[str, str]:
    """Apply one invalidating edit to the serialization of ``out``."""
    raw = serialize_btl(out)
    ops = [_mut_block_tag, _mut_block_order, _mut_duplicate_block, _mut_stray_text, _mut_answer,
           _mut_json_structure, _mut_function_name, _mut_drop_argument, _mut_extra_argument,
           _mut_empty_think, _mut_too_many]
    if out.blink:
        ops += [_mut_element_tag, _mut_caption, _mut_bbox_swap]
    else:
        ops.append(_mut_none_token)
    if any(step.action.direction is not None for step in out.link):
        ops.append(_mut_direction)
    if not any(step.action.function not in ("Back", "Home") for step in out.link):
        ops.remove(_mut_drop_argument)
    op = rng.choice(ops)
    return op.__name__, op(rng, raw, out)


# -- oracles ------------------------------------------------------------------


def iou_exact(a: BBox, b: BBox) -> Fraction:
    ax0, ay0, ax1, ay1 = map(Fraction, a.to_list())
    bx0, by0, bx1, by1 = map(Fraction, b.to_list())
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return Fraction(0)
    inter = iw * ih
    return inter / ((ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter)


def all_assignments(n_pred: int, n_gt: int):
    """Every one-to-one assignment of maximal size, as lists of (pred, gt)."""
    k = min(n_pred, n_gt)
    if k == 0:
        yield []
        return
    for preds in itertools.combinations(range(n_pred), k):
        for gts in itertools.permutations(range(n_gt), k):
            yield list(zip(preds, gts))


def brute_force_best(P, G, tol: float = 1e-12):
    """Max summed IoU over all assignments, plus every assignment achieving it."""
    scored = []
    for assignment in all_assignments(len(P), len(G)):
        scored.append((sum(float(iou_exact(P[p], G[g])) for p, g in assignment), assignment))
    best = max(s for s, _ in scored)
    return best, [a for s, a in scored if s >= best - tol]


def blink_reward_oracle(P, G, tau: float, action_fn: str) -> set[float]:
    """Possible blink rewards by case analysis; several values only under IoU ties."""
    if not P:
        return {1.0} if (not G or action_fn in NON_INTERACTIVE) else {0.0}
    if not G:
        return {0.0}
    n = len(G)
    _, optimal = brute_force_best(P, G)
    values = set()
    for assignment in optimal:
        ranks = [g + 1 for p, g in assignment if iou_exact(P[p], G[g]) >= Fraction(tau)]
        values.add(max(((n - r + 1) / n for r in ranks), default=0.0))
    return values


def advantages_oracle(rewards, dps: int = 50):
    with mpmath.workdps(dps):
        vals = [mpmath.mpf(r) for r in rewards]
        mean = mpmath.fsum(vals) / len(vals)
        std = mpmath.sqrt(mpmath.fsum((v - mean) ** 2 for v in vals) / len(vals))
        if std == 0:
            return [0.0] * len(vals)
        return [float((v - mean) / std) for v in vals]


def kl_oracle(d: float, dps: int = 60) -> float:
    # Tiny |d| cancels about 2*log10(1/|d|) digits; widen precision to match.
    if d != 0:
        dps += max(0, int(-2 * math.log10(abs(d))))
    with mpmath.workdps(dps):
        x = mpmath.mpf(d)
        return float(mpmath.exp(x) - x - 1)
