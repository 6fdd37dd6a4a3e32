"""Synthetic constellation signer: TESLA chain, cross-authentication scheduling
and bit-exact page streams."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .gst import PAGE_SECONDS, PAGES_PER_SUBFRAME, SUBFRAME_SECONDS, GstTime
from .inav import build_page, extract_osnma_field, extract_word, with_osnma, with_word
from .mack import (ChainConfig, SlotKind, TagRecord, TagSequence, TeslaKey, encode_mack,
                   mack_chunks)
from .records import PageRecord
from .scenario import ConfigInvalid, CopForge, ScenarioConfig
from .tesla import (ADKD12_KEY_DELAY_SF, compute_macseq, compute_tag, nav_payload, one_way,
                    tag_message)

COP_MAX = 15
_NEVER = -(10**6)


class AdversaryInapplicable(ValueError):
    pass


@dataclass(frozen=True)
class Placement:
    """One tag to sign: slot position, target, ADKD, COP and the data it covers."""

    slot: int
    kind: SlotKind
    prn_d: int
    adkd: int
    cop: int
    words: Mapping


@dataclass
class GroundTruth:
    start: GstTime
    n_subframes: int
    chain: ChainConfig
    keys: dict = field(default_factory=dict)            # k -> key bytes
    tags: dict = field(default_factory=dict)            # (svid, k) -> [TagRecord]
    macseq: dict = field(default_factory=dict)          # (svid, k) -> int
    iod: dict = field(default_factory=dict)             # svid -> {k: iod}
    block_start: dict = field(default_factory=dict)     # svid -> {k: first sf of data}
    connected: dict = field(default_factory=dict)       # svid -> [bool per k]
    nav: dict = field(default_factory=dict)             # (svid, iod) -> {wt: payload}
    timing: dict = field(default_factory=dict)          # svid -> {6: payload, 10: payload}
    lost: list = field(default_factory=list)            # (svid, gst seconds)
    svids: tuple = ()

    def sf(self, k: int) -> GstTime:
        return self.start + k * SUBFRAME_SECONDS

    def key(self, k: int) -> TeslaKey:
        return TeslaKey(self.keys[k], self.sf(k), k + 1)

    def to_dict(self) -> dict:
        return {
            "start": self.start.to_dict(),
            "n_subframes": self.n_subframes,
            "keys": {str(k): v.hex() for k, v in sorted(self.keys.items())},
            "tags": [
                {"svid": svid, "k": k, "slot": t.slot, "kind": t.slot_kind.value,
                 "prn_d": t.prn_d, "adkd": t.adkd, "cop": t.cop, "tag_hex": f"{t.tag_value:010x}"}
                for (svid, k), tags in sorted(self.tags.items()) for t in tags
            ],
            "macseq": [{"svid": s, "k": k, "value": v} for (s, k), v in sorted(self.macseq.items())],
            "iod": {str(s): [self.iod[s][k] for k in range(self.n_subframes)] for s in self.svids},
            "connected": {str(s): self.connected[s] for s in self.svids},
            "lost": [{"svid": s, "gst_seconds": t} for s, t in self.lost],
        }


class _Constellation:
    """Deterministic data model of every satellite, in view or not."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.period = cfg.iod_change_period_sf
        self._base: dict[int, int] = {}
        self._payload_cache: dict = {}

    def _digest(self, *parts) -> bytes:
        text = "/".join(str(p) for p in (self.cfg.seed,) + parts)
        return hashlib.sha256(text.encode()).digest()

    def phase(self, svid: int) -> int:
        try:
            return self.cfg.satellite(svid).iod_phase_sf
        except KeyError:
            return 0

    def base_iod(self, svid: int) -> int:
        if svid not in self._base:
            self._base[svid] = int.from_bytes(self._digest("iod", svid)[:2], "big") % 1024
        return self._base[svid]

    def block_start(self, svid: int, k: int) -> int:
        if self.period is None:
            return _NEVER
        return k - (k + self.phase(svid)) % self.period

    def iod(self, svid: int, k: int) -> int:
        block = 0 if self.period is None else (k + self.phase(svid)) // self.period
        return (self.base_iod(svid) + block) % 1024

    def word(self, svid: int, wt: int, k: int, page_tow: int) -> int:
        if wt == 0:
            return page_tow & 0xFFFFF
        iod = self.iod(svid, k) if 1 <= wt <= 5 else None
        return self.payload(svid, wt, iod)

    def payload(self, svid: int, wt: int, iod: int | None) -> int:
        key = (svid, wt, iod)
        word = self._payload_cache.get(key)
        if word is None:
            body = int.from_bytes(self._digest("word", svid, wt, iod)[:16], "big")
            if 1 <= wt <= 4:
                word = (wt << 122) | (iod << 112) | (body & ((1 << 112) - 1))
            else:
                word = (wt << 122) | (body & ((1 << 122) - 1))
            self._payload_cache[key] = word
        return word

    def ephemeris(self, svid: int, iod: int) -> dict:
        return {wt: self.payload(svid, wt, iod) for wt in (1, 2, 3, 4, 5)}

    def timing(self, svid: int) -> dict:
        return {6: self.payload(svid, 6, None), 10: self.payload(svid, 10, None)}

    def cop(self, svid: int, k: int) -> int:
        """COP of a tag sent in sub-frame k over the data of k-1."""
        return min(COP_MAX, k - self.block_start(svid, k - 1))


def build_chain(cfg: ScenarioConfig, last_k: int) -> dict[int, bytes]:
    """Keys for sub-frames -1 (the root) .. last_k, generated from the seed."""
    rng = np.random.default_rng([cfg.seed, 0xC4A1])
    bits = rng.bytes(cfg.chain.key_size_bits // 8)
    keys = {last_k: bits}
    chain = _chain_cfg(cfg)
    for k in range(last_k, -1, -1):
        bits = one_way(bits, cfg.start + (k - 1) * SUBFRAME_SECONDS, chain)
        keys[k - 1] = bits
    return keys


def _chain_cfg(cfg: ScenarioConfig) -> ChainConfig:
    if cfg.chain.alpha != bytes(6):
        return cfg.chain
    alpha = np.random.default_rng([cfg.seed, 0xA1FA]).bytes(6)
    return replace(cfg.chain, alpha=alpha)


def sign_subframe(keys: Mapping[int, bytes], k: int, sf_start: GstTime,
                  placements: Mapping[int, Sequence[Placement]], cfg: ChainConfig,
                  seq: TagSequence) -> dict:
    """MACK integer and signed tags for each emitter of sub-frame ``k``.

    Tags use the key disclosed one sub-frame later (eleven for ADKD12);
    the key field carries the key of ``k`` itself.
    """
    out = {}
    for emitter, slots in placements.items():
        tags = []
        for p in sorted(slots, key=lambda p: p.slot):
            delay = 1 + (ADKD12_KEY_DELAY_SF if p.adkd == 12 else 0)
            key = TeslaKey(keys[k + delay], sf_start + delay * SUBFRAME_SECONDS)
            msg = tag_message(p.prn_d, emitter, sf_start, p.slot, p.adkd, p.cop,
                              nav_payload(p.adkd, p.words))
            tags.append(TagRecord(compute_tag(key, msg, cfg), p.prn_d, p.adkd, p.cop, p.slot,
                                  emitter, sf_start, p.kind))
        kinds = seq.for_subframe(sf_start)
        flex = [t.taginfo for t in tags if kinds[t.slot] is SlotKind.FLX]
        macseq = compute_macseq(TeslaKey(keys[k + 1], sf_start + SUBFRAME_SECONDS), emitter,
                                sf_start, flex, cfg)
        out[emitter] = (encode_mack(tags, macseq, keys[k], cfg), tags, macseq)
    return out


def _filler_svids(cfg: ScenarioConfig) -> list[int]:
    used = {s.svid for s in cfg.satellites}
    return [s for s in range(1, 37) if s not in used]


def ranking(cfg: ScenarioConfig, emitters: Sequence[int], k: int) -> dict[int, list[int]]:
    """Ordered cross-authentication targets for each emitter of sub-frame k.

    Targets are the satellites disconnected during k-1 (the data being
    authenticated), padded with out-of-view satellites, rotated per emitter
    so neighbours cover different targets.
    """
    disconnected = sorted(s.svid for s in cfg.satellites if not s.connected_at(k - 1))
    pool = disconnected + _filler_svids(cfg)[: max(0, 4 - len(disconnected))]
    out = {}
    for i, emitter in enumerate(sorted(emitters)):
        if cfg.cross_auth_ranking and emitter in cfg.cross_auth_ranking:
            out[emitter] = list(cfg.cross_auth_ranking[emitter])
        else:
            r = i % len(pool)
            out[emitter] = pool[r:] + pool[:r]
    return out


def schedule_tags(cfg: ScenarioConfig, world: _Constellation, emitter: int, k: int,
                  targets: Sequence[int]) -> list[Placement]:
    sf_start = cfg.start + k * SUBFRAME_SECONDS
    kinds = cfg.tag_sequence.for_subframe(sf_start)
    cross_rank = [0, 1, 2 if sf_start.parity == 0 else 3]
    n_cross = 0
    placements = []
    for slot, kind in enumerate(kinds):
        if kind in (SlotKind.CROSS, SlotKind.FLX):
            rank = cross_rank[min(n_cross, 2)]
            n_cross += 1
            prn_d, adkd = targets[rank % len(targets)], 0
        elif kind is SlotKind.ADKD12_CROSS:
            prn_d, adkd = targets[0], 12
        else:
            prn_d, adkd = emitter, kind.adkd
        if adkd == 4:
            words, cop = world.timing(prn_d), COP_MAX
        else:
            words, cop = world.ephemeris(prn_d, world.iod(prn_d, k - 1)), world.cop(prn_d, k)
        placements.append(Placement(slot, kind, prn_d, adkd, cop, words))
    return placements


def _hkroot(keys: Mapping[int, bytes], k: int) -> bytes:
    return bytes([0x52]) + hashlib.sha256(b"hkroot" + keys[k]).digest()[:14]


def generate(cfg: ScenarioConfig) -> tuple[list[PageRecord], GroundTruth]:
    """Page records sorted by (gst, svid) plus the ground truth used to sign them."""
    if not cfg.satellites:
        raise ConfigInvalid("scenario has no satellites")
    world = _Constellation(cfg)
    n_sf = cfg.n_subframes
    keys = build_chain(cfg, n_sf + ADKD12_KEY_DELAY_SF + 1)
    chain = _chain_cfg(cfg).with_root(TeslaKey(keys[-1], cfg.start - SUBFRAME_SECONDS, 0))
    svids = tuple(sorted(s.svid for s in cfg.satellites))
    truth = GroundTruth(cfg.start, n_sf, chain, keys=keys, svids=svids)

    for sat in cfg.satellites:
        s = sat.svid
        truth.iod[s] = {k: world.iod(s, k) for k in range(-1, n_sf)}
        truth.block_start[s] = {k: world.block_start(s, k) for k in range(-1, n_sf)}
        truth.connected[s] = [sat.connected_at(k) for k in range(n_sf)]
        truth.timing[s] = world.timing(s)
        for iod in sorted(set(truth.iod[s].values())):
            truth.nav[(s, iod)] = world.ephemeris(s, iod)

    macks: dict[tuple[int, int], list[int]] = {}
    for k in range(n_sf):
        sf_start = cfg.start + k * SUBFRAME_SECONDS
        emitters = [s.svid for s in cfg.satellites if s.connected_at(k)]
        ranks = ranking(cfg, emitters, k)
        placements = {e: schedule_tags(cfg, world, e, k, ranks[e]) for e in emitters}
        signed = sign_subframe(keys, k, sf_start, placements, chain, cfg.tag_sequence)
        hk = _hkroot(keys, k)
        for e, (mack, tags, macseq) in signed.items():
            truth.tags[(e, k)] = tags
            truth.macseq[(e, k)] = macseq
            macks[(e, k)] = [(hk[i] << 32) | c for i, c in enumerate(mack_chunks(mack))]

    records = []
    n_pages = cfg.duration_s // PAGE_SECONDS
    for sat in cfg.satellites:
        s = sat.svid
        lost = sat.loss.draw(np.random.default_rng([cfg.seed, s, 0x10]), n_pages)
        for n in range(n_pages):
            offset = n * PAGE_SECONDS
            if not sat.visible_at(offset):
                continue
            gst = cfg.start + offset
            if lost[n]:
                truth.lost.append((s, gst.seconds))
                continue
            k, i = divmod(n, PAGES_PER_SUBFRAME)
            wt = cfg.wt_schedule[gst.parity][i]
            word = world.word(s, wt, k, gst.tow)
            osnma = macks[(s, k)][i] if (s, k) in macks else 0
            records.append(PageRecord.from_page(build_page(s, gst, word, osnma)))
    records.sort(key=lambda r: (r.wn, r.tow, r.svid))
    truth.lost.sort()
    if cfg.adversary is not None:
        records = apply_adversary(records, truth, cfg.adversary, cfg)
    return records, truth


def apply_adversary(records: list[PageRecord], truth: GroundTruth, adversary,
                    cfg: ScenarioConfig | None = None) -> list[PageRecord]:
    """Acceptable-forgery replay: old data in sub-frames C and C+1, COP inflated in C+1."""
    if adversary is None:
        return list(records)
    if not isinstance(adversary, CopForge):
        raise ConfigInvalid(f"unknown adversary {adversary!r}")
    c = adversary.at_sf
    affected = sorted(s for s in truth.svids
                      if c in truth.block_start[s] and c >= 1 and truth.block_start[s][c] == c)
    if not affected or c + 1 >= truth.n_subframes:
        raise AdversaryInapplicable(f"no data change at sub-frame {c}")

    old_words = {s: truth.nav[(s, truth.iod[s][c - 1])] for s in affected}
    forged_cop = {s: min(COP_MAX, c + 1 - truth.block_start[s][c - 1]) for s in affected}

    new_chunks: dict[int, list[int]] = {}
    for (e, k), tags in truth.tags.items():
        if k != c + 1:
            continue
        changed = [replace(t, cop=forged_cop[t.prn_d])
                   if t.prn_d in forged_cop and t.adkd in (0, 12) else t for t in tags]
        if changed != tags:
            mack = encode_mack(changed, truth.macseq[(e, k)], truth.keys[k], truth.chain)
            new_chunks[e] = mack_chunks(mack)

    sf_c = truth.sf(c).seconds
    sf_end = sf_c + 2 * SUBFRAME_SECONDS
    out = []
    for rec in records:
        t = rec.gst.seconds
        if not sf_c <= t < sf_end:
            out.append(rec)
            continue
        page = rec.to_page()
        if rec.svid in old_words:
            word = extract_word(page)
            if 1 <= word.word_type <= 5:
                page = with_word(page, old_words[rec.svid][word.word_type])
        if t >= sf_c + SUBFRAME_SECONDS and rec.svid in new_chunks:
            osnma = extract_osnma_field(page)
            chunk = new_chunks[rec.svid][rec.gst.page_index]
            page = with_osnma(page, (osnma & ~0xFFFFFFFF) | chunk)
        out.append(PageRecord.from_page(page))
    return out


def count_tags(truth: GroundTruth) -> dict[int, dict[str, int]]:
    """ADKD0 tags per sub-frame by the target's connection status in that sub-frame."""
    out = {}
    for k in range(truth.n_subframes):
        counts = {"connected": 0, "disconnected": 0, "other": 0}
        for (e, kk), tags in truth.tags.items():
            if kk != k:
                continue
            for t in tags:
                if t.adkd != 0:
                    continue
                if t.prn_d not in truth.connected:
                    counts["other"] += 1
                elif truth.connected[t.prn_d][k]:
                    counts["connected"] += 1
                else:
                    counts["disconnected"] += 1
        out[k] = counts
    return out
