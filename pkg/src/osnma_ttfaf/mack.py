"""MACK message layout: tags, tag-info, MACSEQ, TESLA key field and HKROOT."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .gst import PAGES_PER_SUBFRAME, GstTime
from .inav import MACK_CHUNK_BITS, SubFrameBuffer

MACK_BITS = PAGES_PER_SUBFRAME * MACK_CHUNK_BITS


class ConflictingKeyBits(ValueError):
    """Two satellites disagree on a key bit of the same sub-frame."""


class SlotKind(Enum):
    SELF = "00S"
    CROSS = "00E"
    FLX = "FLX"
    ADKD4 = "04S"
    ADKD12 = "12S"
    ADKD12_CROSS = "12E"

    @property
    def adkd(self) -> int | None:
        """Fixed ADKD of the slot, None for flexible slots."""
        return _KIND_ADKD[self]

    @property
    def self_only(self) -> bool:
        return self in (SlotKind.SELF, SlotKind.ADKD4, SlotKind.ADKD12)


_KIND_ADKD = {
    SlotKind.SELF: 0,
    SlotKind.CROSS: 0,
    SlotKind.FLX: None,
    SlotKind.ADKD4: 4,
    SlotKind.ADKD12: 12,
    SlotKind.ADKD12_CROSS: 12,
}


@dataclass(frozen=True)
class TeslaKey:
    """A chain key and the sub-frame in which it was disclosed."""

    bits: bytes
    gst_sf: GstTime
    chain_index: int | None = None

    @property
    def hex(self) -> str:
        return self.bits.hex()


@dataclass(frozen=True)
class ChainConfig:
    key_size_bits: int = 128
    tag_size_bits: int = 40
    taginfo_size_bits: int = 16
    macseq_size_bits: int = 12
    tags_per_subframe: int = 6
    hash_id: int = 0
    mac_id: int = 0
    alpha: bytes = bytes(6)
    root_key: TeslaKey | None = None
    maclt_id: int = 34

    def __post_init__(self) -> None:
        if self.key_size_bits % 8 or self.tag_size_bits % 8:
            raise ValueError("key and tag sizes must be whole bytes")
        if self.taginfo_size_bits != 16:
            raise ValueError("tag-info is 16 bits (PRN_D, ADKD, COP)")
        if self.macseq_size_bits + 4 != self.taginfo_size_bits:
            raise ValueError("slot 0 header must be MACSEQ plus a 4-bit COP")
        if self.key_offset + self.key_size_bits > MACK_BITS:
            raise ValueError("tags and key do not fit in 480 MACK bits")
        if len(self.alpha) != 6:
            raise ValueError("alpha is 48 bits")

    @property
    def entry_bits(self) -> int:
        return self.tag_size_bits + self.taginfo_size_bits

    @property
    def key_offset(self) -> int:
        return self.tags_per_subframe * self.entry_bits

    @property
    def key_disclosure_offset(self) -> int:
        """Seconds from sub-frame start to the first transmitted key bit.

        MACK bits ride in the odd half of each 2 s page.
        """
        return 2 * (self.key_offset // MACK_CHUNK_BITS) + 1

    def with_root(self, root: TeslaKey) -> "ChainConfig":
        from dataclasses import replace

        return replace(self, root_key=root)


@dataclass(frozen=True)
class TagSequence:
    """Slot kinds for even and odd sub-frames (a MAC look-up table)."""

    even: tuple
    odd: tuple
    maclt_id: int | None = None

    def __post_init__(self) -> None:
        if len(self.even) != len(self.odd):
            raise ValueError("even and odd sequences differ in length")
        for seq in (self.even, self.odd):
            if not seq or seq[0] is not SlotKind.SELF:
                raise ValueError("slot 0 must be a self-authentication tag")

    def for_parity(self, parity: int) -> tuple:
        return self.odd if parity else self.even

    def for_subframe(self, sf_start: GstTime) -> tuple:
        return self.for_parity(sf_start.parity)

    def cross_adkd0_slots(self, parity: int) -> list[int]:
        return [i for i, k in enumerate(self.for_parity(parity))
                if k in (SlotKind.CROSS, SlotKind.FLX)]


S = SlotKind
MACLT_34 = TagSequence(
    even=(S.SELF, S.FLX, S.ADKD4, S.FLX, S.ADKD12, S.CROSS),
    odd=(S.SELF, S.FLX, S.CROSS, S.ADKD12, S.CROSS, S.ADKD12_CROSS),
    maclt_id=34,
)
del S


@dataclass(frozen=True)
class TagRecord:
    tag_value: int
    prn_d: int
    adkd: int
    cop: int
    slot: int
    authenticating_svid: int
    sf_start: GstTime
    slot_kind: SlotKind

    @property
    def taginfo(self) -> int:
        return (self.prn_d << 8) | (self.adkd << 4) | self.cop

    @property
    def key(self) -> tuple[int, int, int]:
        """(emitter, sub-frame seconds, slot) identifies a tag in a stream."""
        return (self.authenticating_svid, self.sf_start.seconds, self.slot)


@dataclass(frozen=True)
class MackMessage:
    svid: int
    sf_start: GstTime
    tags: tuple
    macseq: int | None
    key_bits: int
    key_mask: int
    page_mask: int
    key_size_bits: int = 128
    tag_size_bits: int = 40

    @property
    def key_complete(self) -> bool:
        return self.key_mask == (1 << self.key_size_bits) - 1

    def to_json(self, seq: TagSequence = MACLT_34) -> dict:
        kinds = seq.for_subframe(self.sf_start)
        return {
            "svid": self.svid,
            "sf_start": self.sf_start.to_dict(),
            "page_mask": f"{self.page_mask:015b}"[::-1],
            "slots": [
                {"kind": kinds[i].value if i < len(kinds) else None,
                 "tag_hex": None if t is None else f"{t.tag_value:0{self.tag_size_bits // 4}x}",
                 "prn_d": None if t is None else t.prn_d,
                 "adkd": None if t is None else t.adkd,
                 "cop": None if t is None else t.cop}
                for i, t in enumerate(self.tags)
            ],
            "macseq": self.macseq,
            "key_bitmap": f"{self.key_mask:0{self.key_size_bits}b}",
        }


def _span_present(page_mask: int, start: int, length: int) -> bool:
    first, last = start // MACK_CHUNK_BITS, (start + length - 1) // MACK_CHUNK_BITS
    need = ((1 << (last + 1)) - 1) ^ ((1 << first) - 1)
    return page_mask & need == need


def assemble_fields(
    svid: int,
    sf_start: GstTime,
    osnma_fields: Sequence,
    cfg: ChainConfig | None = None,
    seq: TagSequence = MACLT_34,
) -> MackMessage:
    """Decode a MACK message from up to 15 optional 40-bit OSNMA fields."""
    cfg = cfg or ChainConfig()
    mack = 0
    page_mask = 0
    for i, fld in enumerate(osnma_fields):
        mack <<= MACK_CHUNK_BITS
        if fld is not None:
            mack |= fld & 0xFFFFFFFF
            page_mask |= 1 << i

    def bits(start: int, length: int) -> int:
        return (mack >> (MACK_BITS - start - length)) & ((1 << length) - 1)

    kinds = seq.for_subframe(sf_start)
    tsz, entry = cfg.tag_size_bits, cfg.entry_bits
    tags = []
    for slot in range(cfg.tags_per_subframe):
        base = slot * entry
        if not _span_present(page_mask, base, entry):
            tags.append(None)
            continue
        value = bits(base, tsz)
        kind = kinds[slot] if slot < len(kinds) else SlotKind.FLX
        if slot == 0:
            cop = bits(base + tsz + cfg.macseq_size_bits, 4)
            tags.append(TagRecord(value, svid, 0, cop, 0, svid, sf_start, kind))
        else:
            info = bits(base + tsz, 16)
            tags.append(TagRecord(value, info >> 8, (info >> 4) & 0xF, info & 0xF,
                                  slot, svid, sf_start, kind))
    macseq = None
    if _span_present(page_mask, tsz, cfg.macseq_size_bits):
        macseq = bits(tsz, cfg.macseq_size_bits)

    ksz, koff = cfg.key_size_bits, cfg.key_offset
    key_mask = 0
    for page in range(PAGES_PER_SUBFRAME):
        if not page_mask >> page & 1:
            continue
        lo = max(page * MACK_CHUNK_BITS, koff)
        hi = min((page + 1) * MACK_CHUNK_BITS, koff + ksz)
        if lo < hi:
            # key bit k (0 = first transmitted) maps to integer bit ksz-1-k
            key_mask |= ((1 << (hi - lo)) - 1) << (ksz - (hi - koff))
    key_bits = bits(koff, ksz) & key_mask
    return MackMessage(svid, sf_start, tuple(tags), macseq, key_bits, key_mask,
                       page_mask, ksz, tsz)


def assemble_mack(buffer: SubFrameBuffer, cfg: ChainConfig | None = None,
                  seq: TagSequence = MACLT_34) -> MackMessage:
    return assemble_fields(buffer.svid, buffer.sf_start, buffer.osnma_fields, cfg, seq)


def flex_ok(msg: MackMessage, seq: TagSequence = MACLT_34) -> bool:
    """True when the flexible slots' positions can be checked via MACSEQ."""
    kinds = seq.for_subframe(msg.sf_start)
    flex = [i for i, k in enumerate(kinds) if k is SlotKind.FLX]
    return msg.macseq is not None and all(msg.tags[i] is not None for i in flex)


def usable_tags(msg: MackMessage, seq: TagSequence = MACLT_34) -> list[TagRecord]:
    kinds = seq.for_subframe(msg.sf_start)
    flex_usable = flex_ok(msg, seq)
    out = []
    for tag in msg.tags:
        if tag is None:
            continue
        kind = kinds[tag.slot]
        if kind is SlotKind.FLX:
            if not flex_usable or tag.adkd not in (0, 4, 12):
                continue
        elif tag.adkd != kind.adkd:
            continue
        if kind.self_only and tag.prn_d != msg.svid:
            continue
        out.append(tag)
    return out


def merge_key_bits(messages: Iterable[MackMessage]) -> TeslaKey | None:
    """Union of the known key bits; a key only when every bit is covered."""
    bits = mask = 0
    sf = None
    size = None
    for msg in messages:
        if sf is None:
            sf, size = msg.sf_start, msg.key_size_bits
        elif msg.sf_start != sf:
            raise ValueError("messages from different sub-frames")
        overlap = mask & msg.key_mask
        if (bits ^ msg.key_bits) & overlap:
            raise ConflictingKeyBits(f"key bits disagree in sub-frame {sf} (svid {msg.svid})")
        bits |= msg.key_bits
        mask |= msg.key_mask
    if sf is None or mask != (1 << size) - 1:
        return None
    return TeslaKey(bits.to_bytes(size // 8, "big"), sf)


@dataclass(frozen=True)
class HkrootBlock:
    chunks: tuple

    @property
    def complete(self) -> bool:
        return all(c is not None for c in self.chunks)

    @property
    def empty(self) -> bool:
        return all(c is None for c in self.chunks)

    def to_bytes(self) -> bytes:
        """Received bytes in page order, missing ones as zero; empty if none."""
        if self.empty:
            return b""
        return bytes(0 if c is None else c for c in self.chunks)


def collect_hkroot(buffer: SubFrameBuffer) -> HkrootBlock:
    return HkrootBlock(tuple(None if f is None else f >> MACK_CHUNK_BITS
                             for f in buffer.osnma_fields))


def encode_mack(tags: Sequence[TagRecord], macseq: int, key: bytes,
                cfg: ChainConfig | None = None) -> int:
    """Pack tags, MACSEQ and key into the 480-bit MACK integer (padding zero)."""
    cfg = cfg or ChainConfig()
    if len(tags) != cfg.tags_per_subframe:
        raise ValueError(f"expected {cfg.tags_per_subframe} tags")
    mack = 0
    for tag in tags:
        mack = (mack << cfg.tag_size_bits) | tag.tag_value
        if tag.slot == 0:
            mack = (mack << cfg.taginfo_size_bits) | (macseq << 4) | tag.cop
        else:
            mack = (mack << cfg.taginfo_size_bits) | tag.taginfo
    mack = (mack << cfg.key_size_bits) | int.from_bytes(key, "big")
    return mack << (MACK_BITS - cfg.key_offset - cfg.key_size_bits)


def mack_chunks(mack: int) -> list[int]:
    return [(mack >> (MACK_BITS - MACK_CHUNK_BITS * (i + 1))) & 0xFFFFFFFF
            for i in range(PAGES_PER_SUBFRAME)]
