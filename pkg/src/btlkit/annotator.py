"""Blink ROI annotation from pre-parsed UI element dumps.

Each input record carries the element list of one screenshot plus the task
instruction and action history. The annotator ranks the elements by task
relevance, keeps the top ``lambda`` and emits them as a blink block. Ranking
comes from a remote analysis model when an endpoint is configured, with a
deterministic text-overlap heuristic as the offline fallback.
"""

from __future__ import annotations

import json
import logging
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import islice
from pathlib import Path
from typing import Any, Callable, Iterator, Optional, Sequence, Union

import httpx

from .errors import InvariantError, ModelUnavailable
from .grammar import DEFAULT_LAMBDA_MAX, serialize_blink
from .types import BBox, BlinkElement

logger = logging.getLogger(__name__)

INTERACTIVE_BONUS = 0.1


@dataclass(frozen=True)
class UiElement:
    id: int
    bbox: BBox
    elem_type: str
    caption: str
    interactivity: bool

    @classmethod
    def from_dict(cls, data: Any) -> "UiElement":
        if not isinstance(data, dict):
            raise InvariantError("element must be a JSON object")
        try:
            el_id = data["id"]
            if isinstance(el_id, bool) or not isinstance(el_id, int):
                raise InvariantError(f"element id must be an integer, got {el_id!r}")
            interactive = data.get("interactivity", False)
            if not isinstance(interactive, bool):
                raise InvariantError("interactivity must be a boolean")
            return cls(
                id=el_id,
                bbox=BBox.from_list(data["bbox"]),
                elem_type=str(data.get("type", "")),
                caption=str(data.get("caption", "")),
                interactivity=interactive,
            )
        except KeyError as exc:
            raise InvariantError(f"element is missing {exc.args[0]!r}") from None

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "bbox": self.bbox.to_list(),
            "type": self.elem_type,
            "caption": self.caption,
            "interactivity": self.interactivity,
        }


@dataclass(frozen=True)
class AnnotationRequest:
    elements: tuple[UiElement, ...]
    instruction: str
    history: tuple[str, ...] = ()
    lambda_: int = DEFAULT_LAMBDA_MAX
    screen_ref: Optional[str] = None
    lambda_max: int = DEFAULT_LAMBDA_MAX

    def __post_init__(self) -> None:
        object.__setattr__(self, "elements", tuple(self.elements))
        object.__setattr__(self, "history", tuple(self.history))
        if not 1 <= self.lambda_ <= self.lambda_max:
            raise InvariantError(f"lambda must lie in 1..{self.lambda_max}, got {self.lambda_}")
        ids = [e.id for e in self.elements]
        if len(ids) != len(set(ids)):
            raise InvariantError("element ids must be unique within a screen")


@dataclass(frozen=True)
class AnnotationResult:
    roi: tuple[BlinkElement, ...]
    provenance: str
    source_ids: tuple[int, ...] = ()
    raw_model_reply: Optional[str] = None

    @property
    def blink(self) -> str:
        return serialize_blink(self.roi)


@dataclass(frozen=True)
class ModelEndpointConfig:
    base_url: str
    auth_token_env_var: Optional[str] = None
    timeout: float = 30.0
    max_retries: int = 3
    backoff: float = 1.0

    def __post_init__(self) -> None:
        if not self.timeout > 0:
            raise InvariantError("timeout must be > 0")
        if self.max_retries < 0:
            raise InvariantError("max_retries must be >= 0")
        if self.backoff < 0:
            raise InvariantError("backoff must be >= 0")


# -- heuristic ranking --------------------------------------------------------

_TOKEN_RE = re.compile(r"[a-z0-9]+")

_STOPWORDS = frozenset(
    "a an the to of in on at for and or then with from into by is it this that my me "
    "please use using go open".split()
)

# Words that name the same on-screen concept. Expanding instruction tokens
# through these lets e.g. "GPS" reach an element captioned "Maps".
_CONCEPTS = (
    ("gps", "map", "navigation", "navigate", "location", "locate", "direction", "route"),
    ("call", "phone", "dial", "dialer"),
    ("message", "sms", "chat", "messaging"),
    ("photo", "picture", "gallery", "image", "album"),
    ("camera", "selfie"),
    ("email", "mail", "gmail", "inbox"),
    ("music", "song", "audio", "radio", "player"),
    ("video", "movie", "youtube"),
    ("setting", "preference", "option", "configure"),
    ("search", "find", "lookup", "query"),
    ("browser", "web", "website", "internet", "chrome"),
    ("calendar", "event", "schedule", "appointment"),
    ("clock", "alarm", "timer"),
    ("ride", "taxi", "cab"),
    ("shop", "shopping", "cart", "buy", "purchase", "store"),
    ("weather", "forecast", "temperature"),
    ("note", "memo", "notepad"),
    ("file", "document", "folder"),
    ("contact", "people", "address"),
)
_EXPANSIONS: dict[str, frozenset[str]] = {}
for _group in _CONCEPTS:
    for _word in _group:
        _EXPANSIONS[_word] = _EXPANSIONS.get(_word, frozenset()) | frozenset(_group)


def _stem(token: str) -> str:
    if len(token) > 4 and token.endswith("ies"):
        return token[:-3] + "y"
    if len(token) > 3 and token.endswith("s") and not token.endswith("ss"):
        return token[:-1]
    return token


def tokenize(text: str) -> set[str]:
    """Lowercased, lightly stemmed content words."""
    return {_stem(t) for t in _TOKEN_RE.findall(text.lower()) if t not in _STOPWORDS}


def _instruction_terms(instruction: str) -> set[str]:
    terms = tokenize(instruction)
    for t in list(terms):
        terms |= _EXPANSIONS.get(t, frozenset())
    return terms


def heuristic_rank(elements: Sequence[UiElement], instruction: str) -> list[tuple[int, float]]:
    """Score elements by overlap with the instruction, best first.

    The score is the fraction of instruction terms found in the element's
    caption and type. Interactive elements that overlap at all get a small
    bonus; elements with no overlap score 0. Ties break by ascending id.
    """
    terms = _instruction_terms(instruction)
    scored = []
    for el in elements:
        hits = len(terms & tokenize(f"{el.caption} {el.elem_type}"))
        score = hits / len(terms) if terms else 0.0
        if hits and el.interactivity:
            score += INTERACTIVE_BONUS
        scored.append((el.id, score))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored


class HeuristicRanker:
    provenance = "heuristic"

    def rank(self, req: AnnotationRequest) -> tuple[list[int], Optional[str]]:
        return [i for i, score in heuristic_rank(req.elements, req.instruction) if score > 0], None


HEURISTIC = HeuristicRanker()


# -- model client -------------------------------------------------------------

_RETRY_STATUSES = frozenset({408, 429, 500, 502, 503, 504})


class ModelClient:
    """Ranks elements by POSTing the request to an analysis-model server.

    The server receives ``{"elements", "instruction", "history", "lambda"}``
    and must answer ``{"ranked_ids": [...]}``, most relevant first.
    Connection failures, timeouts and 408/429/5xx replies are retried with
    exponential backoff; anything else fails immediately.
    """

    provenance = "model"

    def __init__(
        self,
        cfg: ModelEndpointConfig,
        *,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.cfg = cfg
        self._sleep = sleep
        headers = {}
        if cfg.auth_token_env_var:
            token = os.environ.get(cfg.auth_token_env_var)
            if token:
                headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(timeout=cfg.timeout, headers=headers, transport=transport)

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> "ModelClient":
        return self

    def __exit__(self, *exc: Any) -> None:
        self.close()

    def _post(self, body: dict[str, Any]) -> httpx.Response:
        attempts = self.cfg.max_retries + 1
        for attempt in range(attempts):
            try:
                resp = self._client.post(self.cfg.base_url, json=body)
            except httpx.TransportError as exc:
                reason = f"{type(exc).__name__}: {exc}"
            else:
                if resp.status_code < 400:
                    return resp
                if resp.status_code not in _RETRY_STATUSES:
                    raise ModelUnavailable(f"endpoint answered HTTP {resp.status_code}")
                reason = f"HTTP {resp.status_code}"
            if attempt + 1 < attempts:
                delay = self.cfg.backoff * 2**attempt
                logger.debug("model request failed (%s); retrying in %.2fs", reason, delay)
                self._sleep(delay)
        raise ModelUnavailable(f"endpoint failed after {attempts} attempt(s): {reason}")

    def rank(self, req: AnnotationRequest) -> tuple[list[int], Optional[str]]:
        body = {
            "elements": [e.to_dict() for e in req.elements],
            "instruction": req.instruction,
            "history": list(req.history),
            "lambda": req.lambda_,
        }
        resp = self._post(body)
        try:
            reply = resp.json()
            ids = reply["ranked_ids"]
        except (ValueError, KeyError, TypeError):
            raise ModelUnavailable("reply is not a JSON object with ranked_ids") from None
        if not isinstance(ids, list) or not all(isinstance(i, int) and not isinstance(i, bool) for i in ids):
            raise ModelUnavailable("ranked_ids must be a list of integers")
        return ids, resp.text


Ranker = Union[HeuristicRanker, ModelClient]


def filter_rois(req: AnnotationRequest, ranker: Ranker = HEURISTIC) -> AnnotationResult:
    """Keep the top ``lambda`` ranked elements as renumbered blink elements.

    Raises ModelUnavailable when a model ranker fails or names an element
    that is not in the request.
    """
    ranked, raw_reply = ranker.rank(req)
    by_id = {e.id: e for e in req.elements}
    chosen: list[UiElement] = []
    for el_id in ranked:
        if el_id not in by_id:
            raise ModelUnavailable(f"ranking names unknown element id {el_id}")
        el = by_id[el_id]
        if el not in chosen:
            chosen.append(el)
        if len(chosen) == req.lambda_:
            break
    roi = tuple(
        BlinkElement(id=k, bbox=el.bbox, caption="dynamic" if el.interactivity else "static")
        for k, el in enumerate(chosen, 1)
    )
    return AnnotationResult(
        roi=roi,
        provenance=ranker.provenance,
        source_ids=tuple(el.id for el in chosen),
        raw_model_reply=raw_reply,
    )


# -- batch pipeline -----------------------------------------------------------


@dataclass(frozen=True)
class AnnotatorConfig:
    lambda_: int = DEFAULT_LAMBDA_MAX
    lambda_max: int = DEFAULT_LAMBDA_MAX
    endpoint: Optional[ModelEndpointConfig] = None
    fallback: bool = True
    workers: int = 1


@dataclass
class AnnotationSummary:
    processed: int = 0
    succeeded: int = 0
    fell_back: int = 0
    failed: int = 0

    def to_dict(self) -> dict[str, int]:
        return {
            "processed": self.processed,
            "succeeded": self.succeeded,
            "fell_back": self.fell_back,
            "failed": self.failed,
        }


@dataclass
class _Outcome:
    line_no: int
    record: Optional[dict[str, Any]] = None
    fell_back: bool = False
    error: Optional[str] = None


def request_from_record(record: Any, cfg: AnnotatorConfig) -> AnnotationRequest:
    if not isinstance(record, dict):
        raise InvariantError("record must be a JSON object")
    if not isinstance(record.get("elements"), list):
        raise InvariantError("record needs an 'elements' list")
    if not isinstance(record.get("instruction"), str):
        raise InvariantError("record needs an 'instruction' string")
    history = record.get("history") or []
    if not isinstance(history, list):
        raise InvariantError("'history' must be a list")
    screen = record.get("screen")
    return AnnotationRequest(
        elements=tuple(UiElement.from_dict(e) for e in record["elements"]),
        instruction=record["instruction"],
        history=tuple(str(h) for h in history),
        lambda_=cfg.lambda_,
        lambda_max=cfg.lambda_max,
        screen_ref=None if screen is None else str(screen),
    )


def annotate_record(record: Any, cfg: AnnotatorConfig, client: Optional[ModelClient] = None) -> tuple[dict[str, Any], bool]:
    """Annotate one record; returns the output record and whether it fell back."""
    req = request_from_record(record, cfg)
    fell_back = False
    if client is None:
        result = filter_rois(req, HEURISTIC)
    else:
        try:
            result = filter_rois(req, client)
        except ModelUnavailable as exc:
            if not cfg.fallback:
                raise
            logger.warning("falling back to heuristic ranking: %s", exc)
            result = filter_rois(req, HEURISTIC)
            fell_back = True
    out = dict(record)
    out["blink"] = result.blink
    out["gt_rois"] = [{"bbox": el.bbox.to_list(), "priority": el.id} for el in result.roi]
    out["roi_source_ids"] = list(result.source_ids)
    out["provenance"] = result.provenance
    if result.raw_model_reply is not None:
        out["raw_model_reply"] = result.raw_model_reply
    return out, fell_back


def _process_line(line_no: int, line: str, cfg: AnnotatorConfig, client: Optional[ModelClient]) -> _Outcome:
    try:
        record = json.loads(line)
        out, fell_back = annotate_record(record, cfg, client)
        return _Outcome(line_no, out, fell_back)
    except (ValueError, TypeError, ModelUnavailable) as exc:
        return _Outcome(line_no, error=f"{type(exc).__name__}: {exc}")


def _chunks(it: Iterator[Any], size: int) -> Iterator[list[Any]]:
    while True:
        chunk = list(islice(it, size))
        if not chunk:
            return
        yield chunk


def annotate_dataset(
    input_path: Union[str, Path],
    output_path: Union[str, Path],
    cfg: AnnotatorConfig = AnnotatorConfig(),
    *,
    client: Optional[ModelClient] = None,
) -> AnnotationSummary:
    """Annotate a JSONL file line by line.

    Successful records are written in input order; failed records are logged
    and counted but never stop the batch. Blank lines are skipped. With a
    configured endpoint and no explicit ``client``, one is built from
    ``cfg.endpoint``.
    """
    owns_client = client is None and cfg.endpoint is not None
    if owns_client:
        client = ModelClient(cfg.endpoint)  # type: ignore[arg-type]
    summary = AnnotationSummary()
    workers = max(1, cfg.workers)
    try:
        with open(input_path, encoding="utf-8") as src, open(output_path, "w", encoding="utf-8") as dst:
            numbered = ((n, line) for n, line in enumerate(src, 1) if line.strip())
            pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
            try:
                for chunk in _chunks(numbered, workers * 8):
                    if pool is None:
                        outcomes = [_process_line(n, line, cfg, client) for n, line in chunk]
                    else:
                        outcomes = list(pool.map(lambda item: _process_line(item[0], item[1], cfg, client), chunk))
                    for outcome in outcomes:
                        summary.processed += 1
                        if outcome.record is None:
                            summary.failed += 1
                            logger.error("line %d: %s", outcome.line_no, outcome.error)
                            continue
                        summary.succeeded += 1
                        summary.fell_back += outcome.fell_back
                        dst.write(json.dumps(outcome.record, ensure_ascii=False) + "\n")
            finally:
                if pool is not None:
                    pool.shutdown()
    finally:
        if owns_client:
            client.close()  # type: ignore[union-attr]
    return summary
