"""Command-line entry point: ``btlkit validate | reward | annotate | eval``.

Exit statuses: 0 success, 1 validation or scoring failures present,
2 usage or config error, 3 IO or join error.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from pathlib import Path
from typing import Any, Iterator, Optional, Sequence, TextIO

from .annotator import annotate_dataset
from .config import ToolConfig, load_config
from .errors import ConfigError, InvariantError, JoinError
from .evaluation import EmptyDatasetError, evaluate, load_groundtruth
from .grammar import validate
from .grpo import GrpoConfig, group_advantages
from .reward import reward_total

EXIT_OK = 0
EXIT_FAILURES = 1
EXIT_USAGE = 2
EXIT_IO = 3

log = logging.getLogger("btlkit")


class _DataError(Exception):
    """Malformed input data; maps to the IO/join exit status."""


@contextlib.contextmanager
def _output(path: Optional[str]) -> Iterator[TextIO]:
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8") as fh:
            yield fh


def _emit(out: TextIO, record: Any) -> None:
    out.write(json.dumps(record, ensure_ascii=False) + "\n")


def _completion_from_line(line: str) -> str:
    """A line is a JSON object with "completion", a JSON string, or raw text."""
    text = line.rstrip("\r\n")
    try:
        value = json.loads(text)
    except ValueError:
        return text
    if isinstance(value, dict) and isinstance(value.get("completion"), str):
        return value["completion"]
    if isinstance(value, str):
        return value
    return text


# -- subcommands --------------------------------------------------------------


def cmd_validate(args: argparse.Namespace, cfg: ToolConfig) -> int:
    all_ok = True
    with open(args.input, encoding="utf-8") as src, _output(args.out) as out:
        for n, line in enumerate(src, 1):
            if not line.strip():
                continue
            report = validate(_completion_from_line(line), cfg.lambda_max)
            all_ok &= report.ok
            _emit(out, {"line": n, "status": "ok" if report.ok else "invalid", **report.to_dict()})
    return EXIT_OK if all_ok else EXIT_FAILURES


def cmd_reward(args: argparse.Namespace, cfg: ToolConfig) -> int:
    if args.group_size is not None and args.group_size < 1:
        raise ConfigError("--group-size must be >= 1")
    steps = load_groundtruth(args.groundtruth)
    ids: list[str] = []
    totals: list[float] = []
    with open(args.completions, encoding="utf-8") as src, _output(args.out) as out:
        for n, line in enumerate(src, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except ValueError as exc:
                raise _DataError(f"{args.completions}:{n}: invalid JSON ({exc})") from None
            if not isinstance(record, dict):
                raise _DataError(f"{args.completions}:{n}: record must be a JSON object")
            step_id = None if record.get("id") is None else str(record["id"])
            if step_id not in steps:
                raise JoinError(f"{args.completions}:{n}: no ground truth for step id {step_id!r}")
            raw = record.get("completion")
            breakdown = reward_total(
                raw if isinstance(raw, str) else "",
                steps[step_id],
                cfg.tau,
                lambda_max=cfg.lambda_max,
                tolerance=cfg.coordinate_tolerance,
                allocation=cfg.allocation,
            )
            ids.append(step_id)
            totals.append(breakdown.r_total)
            _emit(out, {"id": step_id, **breakdown.to_dict()})

    if args.group_size is None:
        return EXIT_OK
    size = args.group_size
    if len(totals) % size:
        log.error("%d completions do not split into groups of %d", len(totals), size)
        return EXIT_FAILURES
    groups_path = args.groups_out
    if groups_path is None and args.out is not None:
        groups_path = str(Path(args.out).with_suffix(".groups.jsonl"))
    grpo_cfg = GrpoConfig(beta=cfg.beta)
    with _output(groups_path) as out:
        for g, start in enumerate(range(0, len(totals), size)):
            rewards = totals[start : start + size]
            _emit(
                out,
                {
                    "group": g,
                    "ids": ids[start : start + size],
                    "rewards": rewards,
                    "advantages": group_advantages(rewards, grpo_cfg),
                },
            )
    return EXIT_OK


def cmd_annotate(args: argparse.Namespace, cfg: ToolConfig) -> int:
    summary = annotate_dataset(args.input, args.out, cfg.annotator())
    print(json.dumps(summary.to_dict()))
    return EXIT_OK if summary.failed == 0 else EXIT_FAILURES


def cmd_eval(args: argparse.Namespace, cfg: ToolConfig) -> int:
    try:
        report = evaluate(
            args.dataset,
            args.predictions,
            tolerance=cfg.coordinate_tolerance,
            lambda_max=cfg.lambda_max,
        )
    except EmptyDatasetError as exc:
        log.error("%s", exc)
        return EXIT_FAILURES
    text = report.to_json()
    sys.stdout.write(text)
    if args.out is not None:
        Path(args.out).write_text(text, encoding="utf-8")
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config file")
    common.add_argument("--tau", type=float, help="IoU threshold for ROI matching")
    common.add_argument("--lambda", dest="lambda_max", type=int, help="maximum ROIs per blink block")
    common.add_argument("--beta", type=float, help="KL coefficient")
    common.add_argument("--out", metavar="PATH", help="output file (default: stdout)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="btlkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="check completions against the output grammar")
    p.add_argument("input", help="completions, one per line")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("reward", parents=[common], help="score completions against ground truth")
    p.add_argument("--completions", required=True, metavar="PATH")
    p.add_argument("--groundtruth", required=True, metavar="PATH")
    p.add_argument("--group-size", type=int, metavar="N", help="emit advantages for contiguous groups of N")
    p.add_argument("--groups-out", metavar="PATH", help="group output (default: next to --out, else stdout)")
    p.set_defaults(func=cmd_reward)

    p = sub.add_parser("annotate", parents=[common], help="generate blink ROI annotations")
    p.add_argument("input", help="element dumps, one record per line")
    p.add_argument("--endpoint-url", help="analysis model endpoint (default: heuristic ranking only)")
    p.add_argument("--fallback", action=argparse.BooleanOptionalAction, default=None,
                   help="fall back to the heuristic ranker when the endpoint fails")
    p.add_argument("--workers", type=int, help="records annotated concurrently")
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("eval", parents=[common], help="compute Type/GR/SR metrics")
    p.add_argument("--dataset", required=True, metavar="PATH")
    p.add_argument("--predictions", required=True, metavar="PATH")
    p.set_defaults(func=cmd_eval)
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    out = {
        "tau": args.tau,
        "lambda_max": args.lambda_max,
        "beta": args.beta,
        "fallback_ranker": getattr(args, "fallback", None),
        "workers": getattr(args, "workers", None),
    }
    url = getattr(args, "endpoint_url", None)
    if url is not None:
        out["endpoint"] = {"base_url": url}
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.command == "annotate" and args.out is None:
        parser.error("annotate requires --out")
    try:
        cfg = load_config(args.config, _overrides(args))
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    try:
        return args.func(args, cfg)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except JoinError as exc:
        log.error("JoinError: %s", exc)
        return EXIT_IO
    except (OSError, InvariantError, _DataError) as exc:
        log.error("%s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
