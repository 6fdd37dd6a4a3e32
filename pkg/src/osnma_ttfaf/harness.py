"""Replay harness: start-offset sweeps, TTFAF metrics and reports."""

from __future__ import annotations

import bisect
import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .engine import Engine, FixRule, TimeSyncPolicy
from .gst import SUBFRAME_SECONDS, GstTime
from .inav import InavError, InavPage
from .mack import MACLT_34, ChainConfig, TagSequence
from .records import PageRecord

MIN_SUBFRAMES = 3


class StreamTooShort(ValueError):
    pass


class NoFixes(ValueError):
    pass


class IoFailure(OSError):
    pass


@dataclass(frozen=True)
class Metrics:
    lowest: float
    average: float
    p95: float
    n: int
    no_fix: int = 0

    def to_dict(self) -> dict:
        return {"lowest": self.lowest, "average": self.average, "p95": self.p95,
                "n": self.n, "no_fix": self.no_fix}


def metrics(values: Iterable) -> Metrics:
    """Lowest, mean and nearest-rank 95th percentile over the non-null values."""
    values = list(values)
    fixes = sorted(v for v in values if v is not None)
    if not fixes:
        raise NoFixes("no run reached an authenticated fix")
    rank = math.ceil(0.95 * len(fixes))
    return Metrics(float(fixes[0]), round(sum(fixes) / len(fixes), 6), float(fixes[rank - 1]),
                   len(fixes), len(values) - len(fixes))


@dataclass
class SweepResult:
    offsets: list
    ttfaf: list
    stream_start: GstTime
    policy: dict
    subframe_minima: list = field(default_factory=list)   # [(offset of sub-frame, min or None)]

    @property
    def metrics(self) -> Metrics:
        return metrics(self.ttfaf)

    def by_offset(self) -> dict:
        return dict(zip(self.offsets, self.ttfaf))

    def to_dict(self) -> dict:
        try:
            m = self.metrics.to_dict()
        except NoFixes:
            m = None
        return {
            "stream_start": self.stream_start.to_dict(),
            "policy": self.policy,
            "offsets": self.offsets,
            "ttfaf": self.ttfaf,
            "subframe_minima": [list(x) for x in self.subframe_minima],
            "metrics": m,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SweepResult":
        return cls(list(obj["offsets"]), list(obj["ttfaf"]),
                   GstTime(obj["stream_start"]["wn"], obj["stream_start"]["tow"]),
                   dict(obj["policy"]), [tuple(x) for x in obj.get("subframe_minima", [])])


def prepare_stream(source: Iterable) -> list[InavPage]:
    """Parse records once, dropping pages that fail CRC or layout checks."""
    pages = []
    for rec in source:
        if isinstance(rec, InavPage):
            pages.append(rec)
            continue
        if not isinstance(rec, PageRecord):
            rec = PageRecord.from_dict(rec)
        try:
            pages.append(rec.to_page())
        except InavError:
            continue
    pages.sort(key=lambda p: (p.gst.seconds, p.svid))
    return pages


def run_once(pages: Sequence[InavPage], times: Sequence[int], start: int, cfg: ChainConfig,
             policy: TimeSyncPolicy, fix_rule: FixRule, seq: TagSequence) -> int | None:
    engine = Engine(cfg, policy, tag_sequence=seq, fix_rule=fix_rule, start_time=start)
    for page in pages[bisect.bisect_left(times, start):]:
        engine.process_page(page)
        if engine.fix is not None:
            return engine.ttfaf
    return None


def _worker(args):
    pages, times, starts, cfg, policy, fix_rule, seq = args
    return [run_once(pages, times, s, cfg, policy, fix_rule, seq) for s in starts]


def sweep(source: Iterable, cfg: ChainConfig, policy: TimeSyncPolicy, *, step: int = 1,
          offsets: Iterable[int] | None = None, fix_rule: FixRule = FixRule(),
          tag_sequence: TagSequence = MACLT_34, n_jobs: int = 1) -> SweepResult:
    """Replay the stream once per start second.

    Offsets count from the first sub-frame boundary at or before the first
    page.  By default every ``step`` seconds up to the last page is tried.
    """
    pages = prepare_stream(source)
    if not pages:
        raise StreamTooShort("empty stream")
    first = pages[0].gst.sf_start.seconds
    span = pages[-1].gst.seconds + 2 - first
    if span < MIN_SUBFRAMES * SUBFRAME_SECONDS:
        raise StreamTooShort(f"stream spans {span} s, need {MIN_SUBFRAMES} sub-frames")
    if offsets is None:
        offsets = range(0, pages[-1].gst.seconds - first + 1, step)
    offsets = list(offsets)
    times = [p.gst.seconds for p in pages]
    starts = [first + o for o in offsets]
    if n_jobs > 1 and len(starts) > 1:
        chunks = [starts[i::n_jobs] for i in range(n_jobs)]
        with ProcessPoolExecutor(n_jobs) as pool:
            parts = list(pool.map(_worker, [(pages, times, c, cfg, policy, fix_rule, tag_sequence)
                                            for c in chunks]))
        values = [None] * len(starts)
        for i, part in enumerate(parts):
            values[i::n_jobs] = part
    else:
        values = [run_once(pages, times, s, cfg, policy, fix_rule, tag_sequence) for s in starts]
    return SweepResult(offsets, values, GstTime.from_seconds(first), policy.to_dict(),
                       subframe_minima(offsets, values))


def subframe_minima(offsets: Sequence[int], values: Sequence) -> list[tuple[int, object]]:
    groups: dict[int, list] = {}
    for o, v in zip(offsets, values):
        groups.setdefault(o - o % SUBFRAME_SECONDS, []).append(v)
    out = []
    for sf in sorted(groups):
        fixes = [v for v in groups[sf] if v is not None]
        out.append((sf, min(fixes) if fixes else None))
    return out


def cdf_points(values: Iterable) -> list[tuple[float, float]]:
    fixes = sorted(v for v in values if v is not None)
    n = len(fixes)
    out = []
    for i, v in enumerate(fixes):
        if i + 1 < n and fixes[i + 1] == v:
            continue
        out.append((float(v), round((i + 1) / n, 6)))
    return out


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return str(v)


def _csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def report_tables(result: SweepResult) -> dict:
    try:
        m = result.metrics.to_dict()
    except NoFixes:
        m = None
    return {
        "ttfaf": [{"offset": o, "ttfaf": v} for o, v in zip(result.offsets, result.ttfaf)],
        "cdf": [{"ttfaf": t, "fraction": f} for t, f in cdf_points(result.ttfaf)],
        "subframe_minima": [{"subframe_offset": o, "min_ttfaf": v} for o, v in result.subframe_minima],
        "metrics": m,
        "policy": result.policy,
    }


def report(result: SweepResult, fmt: str, out_dir: str | Path) -> list[Path]:
    """Write offset table, CDF, per-sub-frame minima and metrics as csv or json."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        tables = report_tables(result)
        if fmt == "json":
            path = out / "report.json"
            path.write_text(json.dumps(tables, indent=2, sort_keys=True) + "\n", encoding="utf-8")
            return [path]
        if fmt != "csv":
            raise ValueError(f"unknown report format {fmt!r}")
        m = tables["metrics"]
        files = {
            "ttfaf.csv": _csv(["offset", "ttfaf"], [(r["offset"], r["ttfaf"]) for r in tables["ttfaf"]]),
            "cdf.csv": _csv(["ttfaf", "fraction"], [(r["ttfaf"], r["fraction"]) for r in tables["cdf"]]),
            "subframe_minima.csv": _csv(["subframe_offset", "min_ttfaf"],
                                        [(r["subframe_offset"], r["min_ttfaf"])
                                         for r in tables["subframe_minima"]]),
            "metrics.csv": _csv(["policy", "lowest", "average", "p95", "n", "no_fix"],
                                [] if m is None else [(result.policy.get("name"), m["lowest"],
                                                       m["average"], m["p95"], m["n"], m["no_fix"])]),
        }
        paths = []
        for name, text in files.items():
            path = out / name
            path.write_text(text, encoding="utf-8")
            paths.append(path)
        return paths
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
