"""Canonical JSON-lines page records shared by simulator, engine and harness."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .gst import GstTime
from .inav import InavPage, parse_page


class InputError(ValueError):
    """Malformed record or file."""


@dataclass(frozen=True)
class PageRecord:
    wn: int
    tow: int
    svid: int
    page_hex: str

    @property
    def gst(self) -> GstTime:
        return GstTime(self.wn, self.tow)

    def to_page(self) -> InavPage:
        return parse_page(self.page_hex, self.svid, self.gst)

    @classmethod
    def from_page(cls, page: InavPage) -> "PageRecord":
        return cls(page.gst.wn, page.gst.tow, page.svid, page.hex)

    def to_json(self) -> str:
        return json.dumps({"wn": self.wn, "tow": self.tow, "svid": self.svid,
                           "page_hex": self.page_hex})

    @classmethod
    def from_dict(cls, obj: dict) -> "PageRecord":
        try:
            rec = cls(int(obj["wn"]), int(obj["tow"]), int(obj["svid"]), str(obj["page_hex"]).lower())
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"bad page record {obj!r}") from exc
        if len(rec.page_hex) != 60:
            raise InputError(f"page_hex must hold 60 hex digits: {obj!r}")
        return rec


def read_jsonl(path: str | Path) -> list[PageRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from exc
            records.append(PageRecord.from_dict(obj))
    return records


def write_jsonl(path: str | Path, records: Iterable[PageRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def iter_pages(records: Iterable) -> Iterator[InavPage]:
    """Accept PageRecords, dicts or already parsed pages."""
    for rec in records:
        if isinstance(rec, InavPage):
            yield rec
        elif isinstance(rec, PageRecord):
            yield rec.to_page()
        else:
            yield PageRecord.from_dict(rec).to_page()
