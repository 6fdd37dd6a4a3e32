"""I/NAV E1-B nominal page layout, word extraction and sub-frame assembly.

Bits are numbered from 0 at the most significant end of the 240-bit page,
even part first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .crc import crc24q_bits
from .gst import PAGE_SECONDS, PAGES_PER_SUBFRAME, GstTime

PAGE_BITS = 240
HALF_BITS = 120
WORD_BITS = 128
OSNMA_BITS = 40
HKROOT_BITS = 8
MACK_CHUNK_BITS = 32

# (start, length) inside the 240-bit page
EVEN_ODD_EVEN = (0, 1)
PAGE_TYPE_EVEN = (1, 1)
DATA1 = (2, 112)
EVEN_ODD_ODD = (120, 1)
PAGE_TYPE_ODD = (121, 1)
DATA2 = (122, 16)
OSNMA = (138, 40)
SAR = (178, 22)
SPARE = (200, 2)
CRC = (202, 24)
SSP = (226, 8)

IOD_WORD_TYPES = frozenset({1, 2, 3, 4})


class InavError(ValueError):
    """Base class for page decoding problems."""


class BadCrc(InavError):
    pass


class BadPageType(InavError):
    pass


class BadFlags(InavError):
    pass


class SlotConflict(InavError):
    pass


def _get(raw: int, spec: tuple[int, int]) -> int:
    start, length = spec
    return (raw >> (PAGE_BITS - start - length)) & ((1 << length) - 1)


def _put(raw: int, spec: tuple[int, int], value: int) -> int:
    start, length = spec
    if value >> length:
        raise ValueError(f"value {value:#x} does not fit in {length} bits")
    shift = PAGE_BITS - start - length
    return (raw & ~(((1 << length) - 1) << shift)) | (value << shift)


def _protected_bits(raw: int) -> int:
    """The 196 CRC-protected bits: even bits 0..113 then odd bits 120..201."""
    even = raw >> (PAGE_BITS - 114)
    odd = (raw >> (PAGE_BITS - 202)) & ((1 << 82) - 1)
    return (even << 82) | odd


def page_crc(raw: int) -> int:
    return crc24q_bits(_protected_bits(raw), 196)


@dataclass(frozen=True)
class InavPage:
    svid: int
    gst: GstTime
    even_part: int
    odd_part: int

    @property
    def raw(self) -> int:
        return (self.even_part << HALF_BITS) | self.odd_part

    def to_bytes(self) -> bytes:
        return self.raw.to_bytes(PAGE_BITS // 8, "big")

    @property
    def hex(self) -> str:
        return self.to_bytes().hex()


@dataclass(frozen=True)
class NavWord:
    word_type: int
    iod_nav: int | None
    payload: int
    gst: GstTime
    svid: int


def _coerce_raw(raw: bytes | str | int) -> int:
    if isinstance(raw, str):
        raw = bytes.fromhex(raw)
    if isinstance(raw, (bytes, bytearray)):
        if len(raw) != PAGE_BITS // 8:
            raise InavError(f"page must be 30 bytes, got {len(raw)}")
        return int.from_bytes(raw, "big")
    if raw < 0 or raw >> PAGE_BITS:
        raise InavError("page integer wider than 240 bits")
    return raw


def parse_page(raw: bytes | str | int, svid: int, gst: GstTime) -> InavPage:
    value = _coerce_raw(raw)
    if gst.tow % PAGE_SECONDS:
        raise InavError(f"page start must fall on an even second, got {gst}")
    if not 1 <= svid <= 36:
        raise InavError(f"svid {svid} outside 1..36")
    if _get(value, EVEN_ODD_EVEN) != 0 or _get(value, EVEN_ODD_ODD) != 1:
        raise BadFlags("even/odd flags inconsistent")
    if _get(value, PAGE_TYPE_EVEN) or _get(value, PAGE_TYPE_ODD):
        raise BadPageType("alert page")
    if page_crc(value) != _get(value, CRC):
        raise BadCrc(f"CRC mismatch on svid {svid} at {gst}")
    return InavPage(svid, gst, value >> HALF_BITS, value & ((1 << HALF_BITS) - 1))


def build_page(
    svid: int,
    gst: GstTime,
    word: int,
    osnma: int = 0,
    *,
    sar: int = 0,
    ssp: int = 0,
) -> InavPage:
    """Encode one nominal page with a valid CRC (tail and spare bits zero)."""
    raw = _put(0, EVEN_ODD_ODD, 1)
    raw = _put(raw, DATA1, word >> 16)
    raw = _put(raw, DATA2, word & 0xFFFF)
    raw = _put(raw, OSNMA, osnma)
    raw = _put(raw, SAR, sar)
    raw = _put(raw, SSP, ssp)
    raw = _put(raw, CRC, page_crc(raw))
    return InavPage(svid, gst, raw >> HALF_BITS, raw & ((1 << HALF_BITS) - 1))


def word_bits(page: InavPage) -> int:
    raw = page.raw
    return (_get(raw, DATA1) << 16) | _get(raw, DATA2)


def word_type_of(word: int) -> int:
    return word >> (WORD_BITS - 6)


def iod_of(word: int) -> int | None:
    if word_type_of(word) in IOD_WORD_TYPES:
        return (word >> (WORD_BITS - 16)) & 0x3FF
    return None


def extract_word(page: InavPage) -> NavWord:
    word = word_bits(page)
    return NavWord(word_type_of(word), iod_of(word), word, page.gst, page.svid)


def extract_osnma_field(page: InavPage) -> int:
    return _get(page.raw, OSNMA)


def split_osnma(osnma: int) -> tuple[int, int]:
    """(HKROOT byte, MACK chunk)."""
    return osnma >> MACK_CHUNK_BITS, osnma & 0xFFFFFFFF


def with_word(page: InavPage, word: int) -> InavPage:
    """Same page with a different word, CRC recomputed."""
    return build_page(page.svid, page.gst, word, extract_osnma_field(page),
                      sar=_get(page.raw, SAR), ssp=_get(page.raw, SSP))


def with_osnma(page: InavPage, osnma: int) -> InavPage:
    return build_page(page.svid, page.gst, word_bits(page), osnma,
                      sar=_get(page.raw, SAR), ssp=_get(page.raw, SSP))


@dataclass
class SubFrameBuffer:
    """Pages of one satellite inside one 30 s sub-frame, possibly partial."""

    svid: int
    sf_start: GstTime
    pages: list = field(default_factory=lambda: [None] * PAGES_PER_SUBFRAME)
    words: list = field(default_factory=list)
    osnma_fields: list = field(default_factory=lambda: [None] * PAGES_PER_SUBFRAME)
    emitted: bool = False

    def __post_init__(self) -> None:
        if not self.sf_start.is_sf_start:
            raise ValueError(f"{self.sf_start} is not a sub-frame start")

    def add(self, page: InavPage) -> bool:
        """Place a page; returns False for an identical duplicate."""
        if page.svid != self.svid or page.gst.sf_start != self.sf_start:
            raise ValueError("page belongs to another buffer")
        slot = page.gst.page_index
        current = self.pages[slot]
        if current is not None:
            if current.raw == page.raw:
                return False
            raise SlotConflict(f"svid {self.svid} slot {slot} already holds a different page")
        self.pages[slot] = page
        self.words.append(extract_word(page))
        self.osnma_fields[slot] = extract_osnma_field(page)
        return True

    @property
    def page_mask(self) -> int:
        """Bit i set when slot i holds a page."""
        return sum(1 << i for i, p in enumerate(self.pages) if p is not None)

    @property
    def received(self) -> int:
        return sum(p is not None for p in self.pages)

    @property
    def complete(self) -> bool:
        return self.received == PAGES_PER_SUBFRAME


@dataclass
class IngestResult:
    buffer: SubFrameBuffer
    finished: list
    added: bool


def ingest_page(buffers: dict, page: InavPage) -> IngestResult:
    """Route a page into the per-satellite buffer set.

    ``finished`` lists buffers that closed with this page: the previous
    sub-frame on rollover, and the current one once its last slot arrives.
    """
    finished = []
    buf = buffers.get(page.svid)
    if buf is None or buf.sf_start != page.gst.sf_start:
        if buf is not None and page.gst.sf_start < buf.sf_start:
            raise InavError(f"page at {page.gst} precedes buffered sub-frame {buf.sf_start}")
        if buf is not None and not buf.emitted:
            buf.emitted = True
            finished.append(buf)
        buf = SubFrameBuffer(page.svid, page.gst.sf_start)
        buffers[page.svid] = buf
    added = buf.add(page)
    if added and page.gst.page_index == PAGES_PER_SUBFRAME - 1 and not buf.emitted:
        buf.emitted = True
        finished.append(buf)
    return IngestResult(buf, finished, added)
