"""Command-line entry point: simulate, sweep, report, verify."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .engine import EPHEMERIS_FIX_RULE, Engine, FixRule, NAMED_POLICIES, TimeSyncPolicy
from .harness import IoFailure, NoFixes, StreamTooShort, SweepResult, report, sweep
from .records import InputError, read_jsonl, write_jsonl
from .sbf import NoInavBlocks, SYNC, ingest_sbf
from .scenario import PRESETS, ConfigInvalid, CopForge, preset
from .simulator import AdversaryInapplicable, generate
from .tesla import load_root_key, save_root_key

EXIT_OK = 0
EXIT_NO_FIX = 2
EXIT_INPUT = 3


def _load_stream(path: Path):
    if not path.exists():
        raise InputError(f"{path} does not exist")
    with open(path, "rb") as fh:
        head = fh.read(2)
    if path.suffix.lower() == ".sbf" or head == SYNC:
        return ingest_sbf(path).records
    return read_jsonl(path)


def _root_key(args, input_path: Path):
    path = Path(args.root_key) if args.root_key else input_path.with_name("root_key.json")
    if not path.exists():
        raise InputError(f"root key file {path} not found (use --root-key)")
    return load_root_key(path)


def _policy(args) -> TimeSyncPolicy:
    return TimeSyncPolicy.named(args.policy, args.ts)


def _fix_rule(args) -> FixRule:
    return EPHEMERIS_FIX_RULE if args.ephemeris_only else FixRule()


def cmd_simulate(args) -> int:
    from dataclasses import replace

    cfg = preset(args.preset, args.seed)
    if args.duration:
        cfg = replace(cfg, duration_s=args.duration)
    if args.forge_at is not None:
        cfg = replace(cfg, adversary=CopForge(args.forge_at))
    records, truth = generate(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(out / "pages.jsonl", records)
    save_root_key(out / "root_key.json", truth.chain)
    (out / "ground_truth.json").write_text(json.dumps(truth.to_dict()) + "\n", encoding="utf-8")
    print(json.dumps({"preset": args.preset, "seed": args.seed, "pages": len(records),
                      "lost_pages": len(truth.lost), "out": str(out)}))
    return EXIT_OK


def cmd_sweep(args) -> int:
    path = Path(args.input)
    records = _load_stream(path)
    cfg = _root_key(args, path)
    offsets = None
    if args.max_offset is not None:
        offsets = range(0, args.max_offset + 1, args.step)
    result = sweep(records, cfg, _policy(args), step=args.step, offsets=offsets,
                   fix_rule=_fix_rule(args), n_jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.json").write_text(json.dumps(result.to_dict(), sort_keys=True) + "\n",
                                    encoding="utf-8")
    try:
        m = result.metrics.to_dict()
    except NoFixes:
        print(json.dumps({"metrics": None, "runs": len(result.offsets)}))
        return EXIT_NO_FIX
    print(json.dumps({"metrics": m, "runs": len(result.offsets)}))
    return EXIT_OK


def cmd_report(args) -> int:
    path = Path(args.input)
    if path.is_dir():
        path = path / "sweep.json"
    if not path.exists():
        raise InputError(f"{path} does not exist")
    try:
        result = SweepResult.from_dict(json.loads(path.read_text(encoding="utf-8")))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: not a sweep result ({exc})") from exc
    out = Path(args.out) if args.out else path.parent
    for p in report(result, args.format, out):
        print(p)
    return EXIT_OK


def cmd_verify(args) -> int:
    path = Path(args.input)
    records = _load_stream(path)
    cfg = _root_key(args, path)
    start = None
    if args.start_offset is not None and records:
        first = records[0].gst.sf_start.seconds
        start = first + args.start_offset
        records = [r for r in records if r.gst.seconds >= start]
    engine = Engine(cfg, _policy(args), fix_rule=_fix_rule(args), start_time=start)
    engine.run(records)
    if args.events:
        Path(args.events).write_text(engine.event_log(), encoding="utf-8")
    print(json.dumps(engine.summary(), sort_keys=True))
    return EXIT_OK if engine.fix is not None else EXIT_NO_FIX


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="osnma-ttfaf",
                                     description="OSNMA hot-start TTFAF simulator and replay harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a signed page stream")
    p.add_argument("--preset", required=True, choices=PRESETS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--duration", type=int, help="override scenario length in seconds")
    p.add_argument("--forge-at", type=int, help="COP forgery at this sub-frame index")
    p.set_defaults(func=cmd_simulate)

    def policy_args(q):
        q.add_argument("--policy", default="cop_iod", choices=sorted(NAMED_POLICIES))
        q.add_argument("--ts", type=int, help="time-sync bound in seconds (policy default otherwise)")
        q.add_argument("--root-key", help="root key JSON (default: root_key.json next to input)")
        q.add_argument("--ephemeris-only", action="store_true",
                       help="fix needs ephemerides only, no authenticated timing")

    p = sub.add_parser("sweep", help="replay from every start second")
    p.add_argument("--input", required=True, help="pages.jsonl or SBF file")
    policy_args(p)
    p.add_argument("--step", type=int, default=1)
    p.add_argument("--max-offset", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="render a sweep result")
    p.add_argument("--input", required=True, help="sweep.json or its directory")
    p.add_argument("--format", required=True, choices=("csv", "json"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("verify", help="single replay with event log")
    p.add_argument("--input", required=True)
    policy_args(p)
    p.add_argument("--start-offset", type=int)
    p.add_argument("--events", help="write the event log (JSON lines) here")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, NoInavBlocks, StreamTooShort, ConfigInvalid, AdversaryInapplicable,
            IoFailure, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
