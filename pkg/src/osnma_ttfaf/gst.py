"""Galileo System Time with sub-frame arithmetic."""

from __future__ import annotations

from dataclasses import dataclass

SECONDS_PER_WEEK = 604800
SUBFRAME_SECONDS = 30
PAGE_SECONDS = 2
PAGES_PER_SUBFRAME = SUBFRAME_SECONDS // PAGE_SECONDS


@dataclass(frozen=True, order=True)
class GstTime:
    """Week number plus whole seconds of week."""

    wn: int
    tow: int

    def __post_init__(self) -> None:
        if self.wn < 0:
            raise ValueError(f"negative week number {self.wn}")
        if not 0 <= self.tow < SECONDS_PER_WEEK:
            raise ValueError(f"time of week out of range: {self.tow}")

    @classmethod
    def from_seconds(cls, total: int) -> "GstTime":
        wn, tow = divmod(int(total), SECONDS_PER_WEEK)
        return cls(wn, tow)

    @property
    def seconds(self) -> int:
        """Seconds since the GST epoch."""
        return self.wn * SECONDS_PER_WEEK + self.tow

    def __add__(self, delta: int) -> "GstTime":
        return GstTime.from_seconds(self.seconds + int(delta))

    def __sub__(self, other):
        if isinstance(other, GstTime):
            return self.seconds - other.seconds
        return GstTime.from_seconds(self.seconds - int(other))

    @property
    def sf_start(self) -> "GstTime":
        return GstTime(self.wn, self.tow - self.tow % SUBFRAME_SECONDS)

    @property
    def is_sf_start(self) -> bool:
        return self.tow % SUBFRAME_SECONDS == 0

    @property
    def parity(self) -> int:
        """0 for even sub-frames, 1 for odd ones."""
        return (self.tow // SUBFRAME_SECONDS) % 2

    @property
    def page_index(self) -> int:
        """Position of this instant's page inside its sub-frame (0..14)."""
        return (self.tow % SUBFRAME_SECONDS) // PAGE_SECONDS

    def pack32(self) -> bytes:
        """12-bit week (mod 4096) and 20-bit time of week, big endian."""
        return (((self.wn % 4096) << 20) | self.tow).to_bytes(4, "big")

    def to_dict(self) -> dict:
        return {"wn": self.wn, "tow": self.tow}

    def __str__(self) -> str:
        return f"{self.wn}/{self.tow}"


def sf_start_seconds(seconds: int) -> int:
    return seconds - seconds % SUBFRAME_SECONDS
