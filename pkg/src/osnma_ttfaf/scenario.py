"""Scenario configuration, page-loss models and named presets."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .gst import PAGE_SECONDS, PAGES_PER_SUBFRAME, SUBFRAME_SECONDS, GstTime
from .mack import MACLT_34, ChainConfig, TagSequence

# word type per page index; WT2/4 open the sub-frame, WT1/3/5 sit at pages 10-12
DEFAULT_WT_SCHEDULE = (
    (2, 4, 6, 7, 8, 0, 0, 0, 0, 0, 1, 3, 5, 0, 0),
    (2, 4, 6, 9, 10, 0, 0, 0, 0, 0, 1, 3, 5, 0, 0),
)

DEFAULT_START = GstTime(1267, 35400)


class ConfigInvalid(ValueError):
    pass


@dataclass(frozen=True)
class LossModel:
    kind: str = "none"
    p: float = 0.0
    p_gb: float = 0.0
    p_bg: float = 1.0
    loss_good: float = 0.0
    loss_bad: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("none", "bernoulli", "gilbert_elliott"):
            raise ConfigInvalid(f"unknown loss model {self.kind!r}")
        for name in ("p", "p_gb", "p_bg", "loss_good", "loss_bad"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigInvalid(f"{name}={value} outside [0, 1]")

    @classmethod
    def none(cls) -> "LossModel":
        return cls()

    @classmethod
    def bernoulli(cls, p: float) -> "LossModel":
        return cls("bernoulli", p=p)

    @classmethod
    def gilbert_elliott(cls, p_gb: float, p_bg: float, loss_good: float,
                        loss_bad: float) -> "LossModel":
        return cls("gilbert_elliott", p_gb=p_gb, p_bg=p_bg, loss_good=loss_good, loss_bad=loss_bad)

    @property
    def mean_loss(self) -> float:
        if self.kind == "none":
            return 0.0
        if self.kind == "bernoulli":
            return self.p
        total = self.p_gb + self.p_bg
        bad = self.p_gb / total if total else 0.0
        return (1 - bad) * self.loss_good + bad * self.loss_bad

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Boolean array, True where the page is lost."""
        if self.kind == "none":
            return np.zeros(n, dtype=bool)
        u = rng.random(n)
        if self.kind == "bernoulli":
            return u < self.p
        trans = rng.random(n)
        lost = np.empty(n, dtype=bool)
        bad = trans[0] < self.p_gb / (self.p_gb + self.p_bg) if self.p_gb + self.p_bg else False
        for i in range(n):
            lost[i] = u[i] < (self.loss_bad if bad else self.loss_good)
            bad = trans[i] >= self.p_bg if bad else trans[i] < self.p_gb
        return lost

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("kind", "p", "p_gb", "p_bg", "loss_good", "loss_bad")}


def _in_intervals(intervals, offset: float) -> bool:
    if intervals is None:
        return True
    return any(start <= offset < end for start, end in intervals)


@dataclass(frozen=True)
class SatelliteConfig:
    """One satellite; schedules are (start, end) second offsets, None meaning always."""

    svid: int
    connected: tuple | None = None
    visible: tuple | None = None
    loss: LossModel = field(default_factory=LossModel)
    iod_phase_sf: int = 0

    def connected_at(self, k: int) -> bool:
        return _in_intervals(self.connected, max(k, 0) * SUBFRAME_SECONDS)

    def visible_at(self, offset: int) -> bool:
        return _in_intervals(self.visible, offset)


@dataclass(frozen=True)
class CopForge:
    """Replay old data at change sub-frame ``at_sf`` and inflate the COP after it."""

    at_sf: int


@dataclass(frozen=True)
class ScenarioConfig:
    satellites: tuple
    duration_s: int = 900
    start: GstTime = DEFAULT_START
    iod_change_period_sf: int | None = 20
    wt_schedule: tuple = DEFAULT_WT_SCHEDULE
    tag_sequence: TagSequence = MACLT_34
    cross_auth_ranking: dict | None = None
    adversary: CopForge | None = None
    seed: int = 0
    chain: ChainConfig = field(default_factory=ChainConfig)
    name: str = "custom"

    def __post_init__(self) -> None:
        if not self.start.is_sf_start:
            raise ConfigInvalid("scenario must start on a sub-frame boundary")
        if self.duration_s <= 0 or self.duration_s % PAGE_SECONDS:
            raise ConfigInvalid("duration must be a positive whole number of pages")
        svids = [s.svid for s in self.satellites]
        if len(set(svids)) != len(svids) or not all(1 <= s <= 36 for s in svids):
            raise ConfigInvalid(f"satellite ids must be unique in 1..36: {svids}")
        if len(self.wt_schedule) != 2 or any(len(p) != PAGES_PER_SUBFRAME for p in self.wt_schedule):
            raise ConfigInvalid("WT schedule needs 15 word types per parity")
        if self.iod_change_period_sf is not None and self.iod_change_period_sf < 1:
            raise ConfigInvalid("IOD change period must be >= 1 sub-frame")

    @property
    def n_subframes(self) -> int:
        return -(-self.duration_s // SUBFRAME_SECONDS)

    def satellite(self, svid: int) -> SatelliteConfig:
        for sat in self.satellites:
            if sat.svid == svid:
                return sat
        raise KeyError(svid)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=seed)


CONNECTED_4 = (4, 10, 27, 36)
DISCONNECTED_4 = (5, 11, 19, 24)


def _ideal(svids, connected: bool):
    return tuple(SatelliteConfig(s, connected=None if connected else ()) for s in svids)


def preset(name: str, seed: int = 0) -> ScenarioConfig:
    """Named scenarios.

    ideal_4conn and open_sky_4c4d are loss-free with static data; the
    urban presets are illustrative loss regimes with data changes every
    20 sub-frames at staggered phases.
    """
    if name == "ideal_4conn":
        return ScenarioConfig(_ideal(CONNECTED_4, True), duration_s=900,
                              iod_change_period_sf=None, seed=seed, name=name)
    if name == "open_sky_4c4d":
        sats = _ideal(CONNECTED_4, True) + _ideal(DISCONNECTED_4, False)
        return ScenarioConfig(sats, duration_s=900, iod_change_period_sf=None, seed=seed, name=name)
    if name == "open_sky":
        light = LossModel.bernoulli(0.005)
        sats = tuple(SatelliteConfig(s, loss=light, iod_phase_sf=3 * i)
                     for i, s in enumerate(CONNECTED_4 + (2, 7, 30)))
        sats += tuple(SatelliteConfig(s, connected=(), loss=light, iod_phase_sf=2 * i + 1)
                      for i, s in enumerate(DISCONNECTED_4))
        return ScenarioConfig(sats, duration_s=1800, seed=seed, name=name)
    if name == "soft_urban":
        ge = LossModel.gilbert_elliott(0.025, 0.2, 0.01, 0.8)
        sats = tuple(SatelliteConfig(s, loss=ge, iod_phase_sf=(7 * i) % 20)
                     for i, s in enumerate((4, 9, 10, 15, 27, 36)))
        sats += tuple(SatelliteConfig(s, connected=(), loss=ge, iod_phase_sf=(7 * i + 3) % 20)
                      for i, s in enumerate((5, 11, 24)))
        return ScenarioConfig(sats, duration_s=1500, seed=seed, name=name)
    if name == "hard_urban":
        ge = LossModel.gilbert_elliott(0.05, 0.08, 0.03, 0.85)
        sats = []
        for i, s in enumerate((4, 9, 15, 24, 34, 36)):
            visible = ((0, 600), (690, 1500)) if i % 3 == 2 else None
            sats.append(SatelliteConfig(s, visible=visible, loss=ge, iod_phase_sf=(7 * i) % 20))
        sats.append(SatelliteConfig(5, connected=(), loss=ge, iod_phase_sf=11))
        sats.append(SatelliteConfig(31, connected=((750, 10**9),), loss=ge, iod_phase_sf=4))
        return ScenarioConfig(tuple(sats), duration_s=1500, seed=seed, name=name)
    raise ConfigInvalid(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


PRESETS = ("ideal_4conn", "open_sky_4c4d", "open_sky", "soft_urban", "hard_urban")
