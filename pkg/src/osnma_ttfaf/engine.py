"""Hot-start authentication engine.

Feeds pages through sub-frame assembly and MACK decoding, keeps navigation
words and tags, and verifies them once a chain key is available.  Data
words are admitted for a key only if they ended at least ``ts_seconds``
before the key's first bit went on air.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

from .gst import PAGE_SECONDS, SUBFRAME_SECONDS, GstTime
from .inav import InavError, InavPage, NavWord, ingest_page
from .mack import (MACLT_34, ChainConfig, ConflictingKeyBits, SlotKind, TagRecord, TagSequence,
                   TeslaKey, assemble_fields, merge_key_bits, usable_tags)
from .records import InputError, PageRecord
from .tesla import (DEFAULT_MAX_GAP, GapTooLarge, KeyChain, MissingFlexInfo, compute_tag,
                    key_sf_for, tag_message_for, verify_macseq)

COP_LINK_MAX_TS = 17
LOOSE_TIME_LIMIT = 30
PENDING_HORIZON = 16 * SUBFRAME_SECONDS
EPHEMERIS_WTS = (1, 2, 3, 4, 5)
TIMING_WTS = (6, 10)


class OutOfOrderInput(ValueError):
    pass


@dataclass(frozen=True)
class TimeSyncPolicy:
    ts_seconds: int = 30
    enable_page_level: bool = False
    enable_iod_link: bool = False
    enable_cop_link: bool = False
    name: str = "custom"

    def __post_init__(self) -> None:
        if not 0 <= self.ts_seconds <= LOOSE_TIME_LIMIT:
            raise ValueError(f"ts_seconds must lie in [0, {LOOSE_TIME_LIMIT}]")

    @property
    def cop_active(self) -> bool:
        """COP linking is only sound with a tight enough time bound."""
        return self.enable_cop_link and self.ts_seconds <= COP_LINK_MAX_TS

    @classmethod
    def named(cls, name: str, ts: int | None = None) -> "TimeSyncPolicy":
        try:
            default_ts, page, iod, cop = NAMED_POLICIES[name]
        except KeyError:
            raise ValueError(f"unknown policy {name!r}; choose from {', '.join(NAMED_POLICIES)}") from None
        return cls(default_ts if ts is None else ts, page, iod, cop, name)

    def to_dict(self) -> dict:
        return {"name": self.name, "ts_seconds": self.ts_seconds,
                "enable_page_level": self.enable_page_level,
                "enable_iod_link": self.enable_iod_link,
                "enable_cop_link": self.enable_cop_link,
                "cop_active": self.cop_active}


# name -> (ts, page-level, IOD link, COP link)
NAMED_POLICIES = {
    "baseline": (30, False, False, False),
    "iod": (30, False, True, False),
    "page": (25, True, True, False),
    "cop_iod": (17, True, True, True),
}


@dataclass(frozen=True)
class FixRule:
    min_ephemeris_sats: int = 4
    min_timing_sats: int = 1


# fix from authenticated ephemerides alone, no timing requirement
EPHEMERIS_FIX_RULE = FixRule(4, 0)


class EventKind(str, Enum):
    KEY_VERIFIED = "KeyVerified"
    KEY_FAILED = "KeyFailed"
    KEY_CONFLICT = "KeyConflict"
    TAG_VERIFIED = "TagVerified"
    TAG_FAILED = "TagFailed"
    DATA_AUTHENTICATED = "DataAuthenticated"
    FIX_AUTHENTICATED = "FixAuthenticated"
    FORGERY_DETECTED = "ForgeryDetected"


@dataclass(frozen=True)
class AuthEvent:
    kind: EventKind
    gst: GstTime
    svid: object
    detail: dict

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "wn": self.gst.wn, "tow": self.gst.tow,
                "svid": self.svid, "detail": self.detail}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass
class NavDataBlock:
    svid: int
    iod: object
    words: dict
    first_seen_sf: GstTime
    applicable_sfs: set = field(default_factory=set)

    def complete(self, adkd: int = 0) -> bool:
        need = TIMING_WTS if adkd == 4 else EPHEMERIS_WTS
        return all(wt in self.words for wt in need)


@dataclass(frozen=True)
class _Obs:
    payload: int
    sf: int
    end: int


@dataclass
class _Candidate:
    block_id: tuple
    words: dict            # wt -> _Obs
    link: tuple | None = None

    def eligible(self, needed, deadline: int, ts: int) -> dict | None:
        """Payloads if every needed word ended ts before the deadline."""
        out = {}
        for wt in needed:
            obs = self.words.get(wt)
            if obs is None or obs.end + ts > deadline:
                return None
            out[wt] = obs
        return out


class NavStore:
    """Navigation words per satellite and sub-frame, indexed for both links."""

    def __init__(self) -> None:
        self.by_sf: dict = defaultdict(dict)        # (svid, sf) -> {wt: _Obs}
        self.sf_iods: dict = defaultdict(set)       # (svid, sf) -> {iod}
        self.by_iod: dict = defaultdict(dict)       # (svid, iod) -> {wt: earliest _Obs}
        self.wt5_sfs: dict = defaultdict(list)      # svid -> [sf with a WT5]
        self.cop_links: dict = defaultdict(list)    # (svid, adkd, sf) -> [(source sf, tag key)]
        self.failed_tags: set = set()

    def add_word(self, svid: int, sf: int, end: int, word: NavWord) -> bool:
        slot = self.by_sf[(svid, sf)]
        if word.word_type in slot:
            return False
        obs = _Obs(word.payload, sf, end)
        slot[word.word_type] = obs
        if word.iod_nav is not None:
            self.sf_iods[(svid, sf)].add(word.iod_nav)
            merged = self.by_iod[(svid, word.iod_nav)]
            if word.word_type not in merged:
                merged[word.word_type] = obs
        elif word.word_type == 5:
            self.wt5_sfs[svid].append(sf)
        return True

    def sf_iod(self, svid: int, sf: int) -> int | None:
        iods = self.sf_iods.get((svid, sf))
        if iods and len(iods) == 1:
            return next(iter(iods))
        return None

    def iod_words(self, svid: int, iod: int) -> dict:
        """Earliest copy of WT1-5 for one IOD; WT5 borrows its sub-frame's IOD."""
        words = dict(self.by_iod.get((svid, iod), {}))
        for sf in self.wt5_sfs.get(svid, ()):
            if self.sf_iod(svid, sf) == iod:
                obs = self.by_sf[(svid, sf)][5]
                if 5 not in words or obs.end < words[5].end:
                    words[5] = obs
        return words

    def direct(self, svid: int, adkd: int, sf: int, iod_link: bool) -> _Candidate | None:
        if adkd == 4:
            words = self.by_sf.get((svid, sf))
            if not words:
                return None
            return _Candidate(("timing", svid, sf), {wt: words[wt] for wt in TIMING_WTS if wt in words})
        if iod_link:
            iod = self.sf_iod(svid, sf)
            if iod is None:
                return None
            return _Candidate(("iod", svid, iod), self.iod_words(svid, iod))
        words = self.by_sf.get((svid, sf))
        if not words or len(self.sf_iods.get((svid, sf), ())) > 1:
            return None
        return _Candidate(("sf", svid, sf), {wt: words[wt] for wt in EPHEMERIS_WTS if wt in words})

    def candidates(self, svid: int, adkd: int, sf: int, policy: TimeSyncPolicy) -> list[_Candidate]:
        out = []
        first = self.direct(svid, adkd, sf, policy.enable_iod_link)
        if first is not None:
            out.append(first)
        if policy.cop_active:
            for source_sf, tag_key in self.cop_links.get((svid, adkd, sf), ()):
                if tag_key in self.failed_tags:
                    continue
                cand = self.direct(svid, adkd, source_sf, policy.enable_iod_link)
                if cand is not None:
                    cand.link = ("cop", tag_key, source_sf)
                    out.append(cand)
        return out

    def add_cop_link(self, tag: TagRecord) -> list[int]:
        """A COP of c on a tag of U makes data(U-1) valid back to U-c."""
        if tag.cop < 2:
            return []
        source = tag.sf_start.seconds - SUBFRAME_SECONDS
        extended = []
        for back in range(1, tag.cop):
            sf = source - back * SUBFRAME_SECONDS
            links = self.cop_links[(tag.prn_d, tag.adkd, sf)]
            if all(src != source for src, _ in links):
                links.append((source, tag.key))
                extended.append(sf)
        return extended

    def block(self, svid: int, iod: int) -> NavDataBlock:
        words = self.iod_words(svid, iod)
        applicable = {sf for (s, sf), iods in self.sf_iods.items() if s == svid and iods == {iod}}
        first = min((o.sf for o in words.values()), default=min(applicable, default=0))
        return NavDataBlock(svid, iod, {wt: o.payload for wt, o in words.items()},
                            GstTime.from_seconds(first), applicable)

    def iod_observations(self) -> list[tuple[int, int, int]]:
        return sorted((svid, sf, next(iter(iods))) for (svid, sf), iods in self.sf_iods.items()
                      if len(iods) == 1)


def link_by_iod(store: NavStore, words: Iterable[tuple[int, int, NavWord]]) -> list[NavDataBlock]:
    """Add (sf, end, word) observations; return IOD blocks that are now complete."""
    touched = set()
    for sf, end, word in words:
        store.add_word(word.svid, sf, end, word)
        if word.iod_nav is not None:
            touched.add((word.svid, word.iod_nav))
        else:
            iod = store.sf_iod(word.svid, sf)
            if iod is not None:
                touched.add((word.svid, iod))
    blocks = [store.block(svid, iod) for svid, iod in sorted(touched)]
    return [b for b in blocks if b.complete(0)]


def link_by_cop(store: NavStore, tags: Iterable[TagRecord]) -> dict:
    """Register COP links; returns (prn_d, adkd, source sf) -> sub-frames now covered."""
    out = {}
    for tag in tags:
        extended = store.add_cop_link(tag)
        if extended:
            out[(tag.prn_d, tag.adkd, tag.sf_start.seconds - SUBFRAME_SECONDS)] = extended
    return out


@dataclass
class _Pending:
    tag: TagRecord
    tried: set = field(default_factory=set)


class Engine:
    def __init__(self, cfg: ChainConfig, policy: TimeSyncPolicy | None = None, *,
                 tag_sequence: TagSequence = MACLT_34, fix_rule: FixRule = FixRule(),
                 start_time: GstTime | int | None = None, max_gap: int = DEFAULT_MAX_GAP):
        if cfg.root_key is None:
            raise ValueError("hot start needs a root key in the chain configuration")
        self.cfg = cfg
        self.policy = policy or TimeSyncPolicy()
        self.seq = tag_sequence
        self.fix_rule = fix_rule
        self.chain = KeyChain(cfg.root_key, cfg, max_gap)
        self.store = NavStore()
        self.origin = start_time.seconds if isinstance(start_time, GstTime) else start_time
        self.events: list[AuthEvent] = []
        self.fix: AuthEvent | None = None
        self.pages_seen = 0
        self.pages_rejected = 0
        self._buffers: dict = {}
        self._macks: dict = {}                        # (svid, sf) -> MackMessage
        self._sf_macks: dict = defaultdict(dict)      # sf -> {svid: MackMessage}
        self._tags: dict = {}
        self._pending: dict = {}
        self._macseq_ok: dict = {}
        self._verified: dict = defaultdict(set)       # (svid, adkd) -> {data sf}
        self._links_used: dict = {}
        self._forgeries: set = set()
        self._keys_done: set = set()
        self._last = None
        self._disclose = cfg.key_disclosure_offset
        self._key_page = cfg.key_offset // 32

    # ---- input -------------------------------------------------------
    def _coerce(self, record) -> InavPage | None:
        if isinstance(record, InavPage):
            return record
        try:
            if not isinstance(record, PageRecord):
                record = PageRecord.from_dict(record)
            return record.to_page()
        except InavError:
            return None

    def process_page(self, record) -> list[AuthEvent]:
        page = self._coerce(record)
        if page is None:
            self.pages_rejected += 1
            return []
        t = page.gst.seconds
        if self._last is not None and t < self._last:
            raise OutOfOrderInput(f"page at {page.gst} after {GstTime.from_seconds(self._last)}")
        self._last = t
        if self.origin is None:
            self.origin = t
        self.pages_seen += 1
        now = t + PAGE_SECONDS
        try:
            res = ingest_page(self._buffers, page)
        except InavError:
            self.pages_rejected += 1
            return []
        if not res.added:
            return []
        buf = res.buffer
        sf = buf.sf_start.seconds
        idx = page.gst.page_index
        self.store.add_word(page.svid, sf, now, buf.words[-1])

        events: list[AuthEvent] = []
        dirty = False
        if self.policy.enable_page_level:
            if buf.osnma_fields[idx]:
                dirty |= self._update_mack(buf)
                if idx >= self._key_page:
                    dirty |= self._try_key(sf, now, events)
        else:
            for done in res.finished:
                if done.complete and any(done.osnma_fields):
                    dirty |= self._update_mack(done)
                    dirty |= self._try_key(done.sf_start.seconds, now, events,
                                           only=done.svid)
        if dirty:
            self._verify_pending(now, events)
        self.events.extend(events)
        return events

    def run(self, records: Iterable, stop_at_fix: bool = False) -> list[AuthEvent]:
        for rec in records:
            self.process_page(rec)
            if stop_at_fix and self.fix is not None:
                break
        return self.events

    # ---- MACK and keys -----------------------------------------------
    def _update_mack(self, buf) -> bool:
        msg = assemble_fields(buf.svid, buf.sf_start, buf.osnma_fields, self.cfg, self.seq)
        self._macks[(buf.svid, buf.sf_start.seconds)] = msg
        self._sf_macks[buf.sf_start.seconds][buf.svid] = msg
        new = False
        for tag in usable_tags(msg, self.seq):
            if tag.key in self._tags:
                continue
            self._tags[tag.key] = tag
            self._pending[tag.key] = _Pending(tag)
            if self.policy.cop_active:
                self.store.add_cop_link(tag)
            new = True
        return new

    def _try_key(self, sf: int, now: int, events: list, only: int | None = None) -> bool:
        if sf in self._keys_done or sf <= self.chain.root.gst_sf.seconds:
            return False
        sf_gst = GstTime.from_seconds(sf)
        msgs = self._sf_macks[sf]
        chosen = [msgs[only]] if only is not None else [msgs[s] for s in sorted(msgs)]
        try:
            candidate = merge_key_bits(chosen)
        except ConflictingKeyBits as exc:
            self._keys_done.add(sf)
            events.append(AuthEvent(EventKind.KEY_CONFLICT, GstTime.from_seconds(now),
                                    sorted(msgs), {"key_sf": sf, "reason": str(exc)}))
            return False
        if candidate is None:
            return False
        self._keys_done.add(sf)
        svids = sorted(m.svid for m in chosen)
        gst_now = GstTime.from_seconds(now)
        if sf <= self.chain.trusted.gst_sf.seconds:
            known = self.chain.key_at(sf_gst)
            if known is not None and known.bits != candidate.bits:
                events.append(AuthEvent(EventKind.KEY_FAILED, gst_now, svids,
                                        {"key_sf": sf, "reason": "differs from derived key"}))
            return False
        try:
            result = self.chain.verify(TeslaKey(candidate.bits, sf_gst))
        except GapTooLarge as exc:
            events.append(AuthEvent(EventKind.KEY_FAILED, gst_now, svids,
                                    {"key_sf": sf, "reason": str(exc)}))
            return False
        kind = EventKind.KEY_VERIFIED if result.ok else EventKind.KEY_FAILED
        events.append(AuthEvent(kind, gst_now, svids,
                                {"key_sf": sf, "steps": result.evidence["steps"],
                                 "chain_index": self.chain.index_of(sf_gst)}))
        return result.ok

    def _macseq(self, tag: TagRecord, key: TeslaKey) -> bool:
        mid = (tag.authenticating_svid, tag.sf_start.seconds)
        if mid not in self._macseq_ok:
            try:
                self._macseq_ok[mid] = verify_macseq(self._macks[mid], key, self.cfg, self.seq).ok
            except MissingFlexInfo:
                self._macseq_ok[mid] = False
        return self._macseq_ok[mid]

    # ---- verification --------------------------------------------------
    def _verify_pending(self, now: int, events: list) -> None:
        gst_now = GstTime.from_seconds(now)
        trusted = self.chain.trusted.gst_sf.seconds
        ts = self.policy.ts_seconds
        tag_events, data_events, late = [], [], []
        for tkey in sorted(self._pending):
            pending = self._pending[tkey]
            tag = pending.tag
            key_sf = key_sf_for(tag.sf_start, tag.adkd)
            ks = key_sf.seconds
            if now > ks + PENDING_HORIZON:
                del self._pending[tkey]
                continue
            if ks > trusted:
                continue
            key = self.chain.key_at(key_sf)
            if key is None:
                continue
            if tag.slot_kind is SlotKind.FLX and not self._macseq(tag, key):
                del self._pending[tkey]
                self.store.failed_tags.add(tkey)
                tag_events.append(AuthEvent(EventKind.TAG_FAILED, gst_now, tag.authenticating_svid,
                                            {"tag": list(tkey), "reason": "macseq"}))
                late.extend(self._forgery_check(tkey, gst_now))
                continue
            data_sf = tag.sf_start.seconds - SUBFRAME_SECONDS
            deadline = ks + self._disclose
            needed = TIMING_WTS if tag.adkd == 4 else EPHEMERIS_WTS
            for cand in self.store.candidates(tag.prn_d, tag.adkd, data_sf, self.policy):
                sig = (cand.block_id, cand.link)
                if sig in pending.tried:
                    continue
                obs = cand.eligible(needed, deadline, ts)
                if obs is None:
                    continue
                pending.tried.add(sig)
                words = {wt: o.payload for wt, o in obs.items()}
                ok = compute_tag(key, tag_message_for(tag, words), self.cfg) == tag.tag_value
                detail = {
                    "tag": list(tkey), "prn_d": tag.prn_d, "adkd": tag.adkd, "cop": tag.cop,
                    "data_sf": data_sf, "key_sf": ks, "key_disclosed": deadline, "ts": ts,
                    "block": list(cand.block_id),
                    "link": "direct" if cand.link is None else cand.link[0],
                    "words": [[wt, o.sf, o.end] for wt, o in sorted(obs.items())],
                }
                if cand.link is not None:
                    detail["link_tag"] = list(cand.link[1])
                    detail["link_source_sf"] = cand.link[2]
                if not ok:
                    tag_events.append(AuthEvent(EventKind.TAG_FAILED, gst_now,
                                                tag.authenticating_svid, detail))
                    self.store.failed_tags.add(tkey)
                    late.extend(self._forgery_check(tkey, gst_now))
                    continue
                del self._pending[tkey]
                self.store.failed_tags.discard(tkey)
                tag_events.append(AuthEvent(EventKind.TAG_VERIFIED, gst_now,
                                            tag.authenticating_svid, detail))
                if cand.link is not None:
                    self._links_used.setdefault(cand.link[1], {
                        "block": list(cand.block_id), "prn_d": tag.prn_d, "data_sf": data_sf,
                        "used_by": list(tkey)})
                seen = self._verified[(tag.prn_d, tag.adkd)]
                if data_sf not in seen:
                    seen.add(data_sf)
                    data_events.append(AuthEvent(EventKind.DATA_AUTHENTICATED, gst_now, tag.prn_d,
                                                 {"adkd": tag.adkd, "data_sf": data_sf,
                                                  "block": list(cand.block_id)}))
                break
        events.extend(tag_events)
        events.extend(data_events)
        events.extend(late)
        self._detect_fix(gst_now, events)

    def _forgery_check(self, tkey: tuple, gst_now: GstTime) -> list[AuthEvent]:
        info = self._links_used.get(tkey)
        if info is None or tkey in self._forgeries:
            return []
        self._forgeries.add(tkey)
        return [AuthEvent(EventKind.FORGERY_DETECTED, gst_now, info["prn_d"],
                          {"link_tag": list(tkey), **info})]

    def _detect_fix(self, gst_now: GstTime, events: list) -> None:
        if self.fix is not None:
            return
        eph = sorted({s for (s, adkd), sfs in self._verified.items() if adkd == 0 and sfs})
        tim = sorted({s for (s, adkd), sfs in self._verified.items() if adkd == 4 and sfs})
        if len(eph) >= self.fix_rule.min_ephemeris_sats and len(tim) >= self.fix_rule.min_timing_sats:
            self.fix = AuthEvent(EventKind.FIX_AUTHENTICATED, gst_now, None,
                                 {"ttfaf": gst_now.seconds - self.origin,
                                  "ephemeris_sats": eph, "timing_sats": tim})
            events.append(self.fix)

    # ---- results -------------------------------------------------------
    @property
    def ttfaf(self) -> int | None:
        return None if self.fix is None else self.fix.detail["ttfaf"]

    def iod_observations(self) -> list[tuple[int, int, int]]:
        return self.store.iod_observations()

    def summary(self) -> dict:
        rates = iod_success_rate(self.iod_observations())
        return {
            "ttfaf_seconds": self.ttfaf,
            "events_count": len(self.events),
            "iod_success_sat": rates.sat_rate,
            "iod_success_receiver": rates.receiver_rate,
        }

    def event_log(self) -> str:
        return "".join(e.to_json() + "\n" for e in self.events)


@dataclass(frozen=True)
class IodSuccess:
    sat_success: int
    sat_epochs: int
    receiver_success: int
    receiver_epochs: int

    @property
    def sat_rate(self) -> float | None:
        return None if not self.sat_epochs else round(100.0 * self.sat_success / self.sat_epochs, 2)

    @property
    def receiver_rate(self) -> float | None:
        if not self.receiver_epochs:
            return None
        return round(100.0 * self.receiver_success / self.receiver_epochs, 2)


def iod_success_rate(observations: Iterable[tuple[int, int, int]], *, step: int = SUBFRAME_SECONDS,
                     min_sats: int = 4) -> IodSuccess:
    """Share of sub-frames whose IOD equals the previous sub-frame's.

    A sub-frame fails only when the previous sub-frame was observed with a
    different IOD; the receiver succeeds when ``min_sats`` satellites do.
    """
    per_sat: dict = defaultdict(dict)
    for svid, sf, iod in observations:
        per_sat[svid][sf] = iod
    sat_ok = sat_n = 0
    per_epoch: dict = defaultdict(int)
    epochs = set()
    for svid, seq in per_sat.items():
        for sf, iod in seq.items():
            prev = seq.get(sf - step)
            ok = prev is None or prev == iod
            sat_n += 1
            sat_ok += ok
            epochs.add(sf)
            if ok:
                per_epoch[sf] += 1
    rx_ok = sum(1 for sf in epochs if per_epoch[sf] >= min_sats)
    return IodSuccess(sat_ok, sat_n, rx_ok, len(epochs))


def read_events(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


__all__ = [
    "AuthEvent", "Engine", "EventKind", "FixRule", "IodSuccess", "NavDataBlock", "NavStore",
    "OutOfOrderInput", "EPHEMERIS_FIX_RULE", "TimeSyncPolicy", "InputError", "iod_success_rate",
    "link_by_cop", "link_by_iod",
]
