"""Septentrio SBF reader and writer for GALRawINAV blocks."""

from __future__ import annotations

import binascii
import struct
from dataclasses import dataclass, field
from pathlib import Path

from .gst import PAGE_SECONDS, GstTime
from .records import PageRecord

SYNC = b"$@"
HEADER = struct.Struct("<HHH")        # CRC, ID, Length (after the sync bytes)
GALRAWINAV_ID = 4023
GALRAWINAV_BODY = struct.Struct("<IHBBBBBB8I")
GALRAWINAV_LENGTH = 8 + GALRAWINAV_BODY.size
GAL_SVID_OFFSET = 70
SOURCE_E1B = 17
GST_WEEK_OFFSET = 1024     # WNc counts GPS weeks
TOW_DNU = 0xFFFFFFFF


class NoInavBlocks(ValueError):
    pass


@dataclass
class SbfResult:
    records: list = field(default_factory=list)
    blocks: int = 0
    crc_skipped: int = 0
    other_signals: int = 0
    page_crc_failed: int = 0

    def __iter__(self):
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)


def sbf_crc(data: bytes) -> int:
    """CRC-16-CCITT (XModem) as used by SBF."""
    return binascii.crc_hqx(data, 0)


def _nav_to_page(words) -> int:
    """234 transmitted bits (no even-page tail) back to the 240-bit page."""
    nav = 0
    for w in words:
        nav = (nav << 32) | w
    bits = nav >> (256 - 234)
    even, odd = bits >> 120, bits & ((1 << 120) - 1)
    return (even << 126) | odd


def _page_to_nav(raw: int) -> list[int]:
    even, odd = raw >> 126, raw & ((1 << 120) - 1)
    nav = ((even << 120) | odd) << (256 - 234)
    return [(nav >> (32 * (7 - i))) & 0xFFFFFFFF for i in range(8)]


def ingest_sbf(source: bytes | str | Path) -> SbfResult:
    """Scan for SBF blocks, keep CRC-valid E1-B GALRawINAV pages as records."""
    data = source if isinstance(source, (bytes, bytearray)) else Path(source).read_bytes()
    result = SbfResult()
    pos = 0
    end = len(data)
    while True:
        idx = data.find(SYNC, pos)
        if idx < 0 or idx + 8 > end:
            break
        crc, block_id, length = HEADER.unpack_from(data, idx + 2)
        if length < 8 or length % 4 or idx + length > end:
            pos = idx + 1
            continue
        if sbf_crc(data[idx + 4: idx + length]) != crc:
            result.crc_skipped += 1
            pos = idx + 2
            continue
        result.blocks += 1
        pos = idx + length
        if block_id & 0x1FFF != GALRAWINAV_ID or length < GALRAWINAV_LENGTH:
            continue
        tow_ms, wnc, svid, crc_passed, _vit, src, _freq, _chan, *nav = \
            GALRAWINAV_BODY.unpack_from(data, idx + 8)
        if src & 0x1F != SOURCE_E1B or not GAL_SVID_OFFSET < svid <= GAL_SVID_OFFSET + 36:
            result.other_signals += 1
            continue
        if not crc_passed or tow_ms == TOW_DNU or wnc < GST_WEEK_OFFSET:
            result.page_crc_failed += 1
            continue
        gst = GstTime(wnc - GST_WEEK_OFFSET, tow_ms // 1000) - PAGE_SECONDS
        raw = _nav_to_page(nav)
        result.records.append(PageRecord(gst.wn, gst.tow, svid - GAL_SVID_OFFSET,
                                         raw.to_bytes(30, "big").hex()))
    if not result.records:
        raise NoInavBlocks("no Galileo E1-B GALRawINAV block found")
    return result


def encode_galrawinav(rec: PageRecord, *, source: int = SOURCE_E1B, crc_passed: bool = True,
                      rx_channel: int = 0) -> bytes:
    """One GALRawINAV block; TOW stamps the end of the page."""
    end = rec.gst + PAGE_SECONDS
    nav = _page_to_nav(int(rec.page_hex, 16))
    body = GALRAWINAV_BODY.pack(end.tow * 1000, end.wn + GST_WEEK_OFFSET, rec.svid + GAL_SVID_OFFSET,
                                int(crc_passed), 0, source, 0, rx_channel, *nav)
    tail = struct.pack("<HH", GALRAWINAV_ID, GALRAWINAV_LENGTH) + body
    return SYNC + struct.pack("<H", sbf_crc(tail)) + tail


def write_sbf(path: str | Path, records) -> None:
    Path(path).write_bytes(b"".join(encode_galrawinav(r) for r in records))
