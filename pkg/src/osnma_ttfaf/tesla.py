"""TESLA chain validation, truncated-MAC tags and MACSEQ."""

from __future__ import annotations

import hashlib
import hmac
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping

from .gst import SUBFRAME_SECONDS, GstTime
from .mack import MACLT_34, ChainConfig, MackMessage, SlotKind, TagRecord, TagSequence, TeslaKey

ADKD12_KEY_DELAY_SF = 10
DEFAULT_MAX_GAP = 3600

_HASHES = {0: hashlib.sha256, 2: hashlib.sha3_256}
_MAC_HASHES = {0: hashlib.sha256}

ADKD_WORDS = {0: (1, 2, 3, 4, 5), 12: (1, 2, 3, 4, 5), 4: (6, 10)}


class GapTooLarge(ValueError):
    pass


class KeyNotForTag(ValueError):
    pass


class DataIncomplete(ValueError):
    pass


class MissingFlexInfo(ValueError):
    pass


class KeyBehindRatchet(ValueError):
    """A key older than the trusted floor was offered for verification."""


class Verdict(Enum):
    VERIFIED = "Verified"
    FAILED = "Failed"


@dataclass(frozen=True)
class AuthResult:
    verdict: Verdict
    subject: str
    evidence: dict = field(default_factory=dict)
    gst_verified: GstTime | None = None

    @property
    def ok(self) -> bool:
        return self.verdict is Verdict.VERIFIED


def _hash(cfg: ChainConfig):
    try:
        return _HASHES[cfg.hash_id]
    except KeyError:
        raise ValueError(f"unsupported hash_id {cfg.hash_id}") from None


def one_way(bits: bytes, gst_prev: GstTime, cfg: ChainConfig) -> bytes:
    """K_{i-1} from K_i: truncated hash of key, previous sub-frame GST and alpha."""
    digest = _hash(cfg)(bits + gst_prev.pack32() + cfg.alpha).digest()
    return digest[: cfg.key_size_bits // 8]


def hash_back(key: TeslaKey, steps: int, cfg: ChainConfig) -> TeslaKey:
    bits, sf = key.bits, key.gst_sf
    for _ in range(steps):
        sf = sf - SUBFRAME_SECONDS
        bits = one_way(bits, sf, cfg)
    index = None if key.chain_index is None else key.chain_index - steps
    return TeslaKey(bits, sf, index)


def sf_gap(later: GstTime, earlier: GstTime) -> int:
    delta = later - earlier
    if delta % SUBFRAME_SECONDS:
        raise ValueError(f"{later} and {earlier} are not sub-frame aligned")
    return delta // SUBFRAME_SECONDS


def verify_key(candidate: TeslaKey, trusted: TeslaKey, cfg: ChainConfig,
               max_gap: int = DEFAULT_MAX_GAP) -> AuthResult:
    n = sf_gap(candidate.gst_sf, trusted.gst_sf)
    if n < 0:
        raise KeyBehindRatchet(f"candidate {candidate.gst_sf} precedes trusted {trusted.gst_sf}")
    if n > max_gap:
        raise GapTooLarge(f"{n} sub-frames between candidate and trusted key")
    derived = hash_back(candidate, n, cfg)
    ok = hmac.compare_digest(derived.bits, trusted.bits)
    evidence = {"key_sf": candidate.gst_sf.seconds, "trusted_sf": trusted.gst_sf.seconds, "steps": n}
    return AuthResult(Verdict.VERIFIED if ok else Verdict.FAILED, "key", evidence,
                      candidate.gst_sf if ok else None)


class KeyChain:
    """Trusted-key ratchet with a cache of keys derived below the floor."""

    def __init__(self, root: TeslaKey, cfg: ChainConfig, max_gap: int = DEFAULT_MAX_GAP):
        self.cfg = cfg
        self.max_gap = max_gap
        self.root = TeslaKey(root.bits, root.gst_sf, 0)
        self.trusted = self.root
        self._known: dict[int, bytes] = {root.gst_sf.seconds: root.bits}

    def index_of(self, sf: GstTime) -> int:
        return sf_gap(sf, self.root.gst_sf)

    def verify(self, candidate: TeslaKey) -> AuthResult:
        """Check a key newer than the floor; success moves the floor up."""
        result = verify_key(candidate, self.trusted, self.cfg, self.max_gap)
        if result.ok:
            self.trusted = TeslaKey(candidate.bits, candidate.gst_sf, self.index_of(candidate.gst_sf))
            self._remember(candidate)
        return result

    def _remember(self, key: TeslaKey) -> None:
        # keep the derivation path so later lookups stay cheap
        bits, sf = key.bits, key.gst_sf
        self._known[sf.seconds] = bits
        while sf > self.root.gst_sf:
            prev = sf - SUBFRAME_SECONDS
            if prev.seconds in self._known:
                break
            bits = one_way(bits, prev, self.cfg)
            self._known[prev.seconds] = bits
            sf = prev

    def key_at(self, sf: GstTime) -> TeslaKey | None:
        """Key of sub-frame ``sf`` if it is at or below the trusted floor."""
        if sf < self.root.gst_sf or sf > self.trusted.gst_sf:
            return None
        bits = self._known.get(sf.seconds)
        if bits is None:
            return None
        return TeslaKey(bits, sf, self.index_of(sf))


def mac(key: bytes, message: bytes, cfg: ChainConfig) -> bytes:
    try:
        digestmod = _MAC_HASHES[cfg.mac_id]
    except KeyError:
        raise ValueError(f"unsupported mac_id {cfg.mac_id}") from None
    return hmac.new(key, message, digestmod).digest()


def compute_tag(key: TeslaKey, message: bytes, cfg: ChainConfig) -> int:
    nbytes = cfg.tag_size_bits // 8
    return int.from_bytes(mac(key.bits, message, cfg)[:nbytes], "big")


def nav_payload(adkd: int, words: Mapping[int, int]) -> bytes:
    """ADKD0/12: WT1..5 concatenated; ADKD4: WT6 then WT10 (16 bytes each)."""
    try:
        wts = ADKD_WORDS[adkd]
    except KeyError:
        raise ValueError(f"unknown ADKD {adkd}") from None
    missing = [wt for wt in wts if wt not in words]
    if missing:
        raise DataIncomplete(f"ADKD{adkd} data lacks word types {missing}")
    return b"".join(words[wt].to_bytes(16, "big") for wt in wts)


def tag_message(prn_d: int, prn_a: int, sf_start: GstTime, slot: int, adkd: int,
                cop: int, payload: bytes) -> bytes:
    return (bytes([prn_d, prn_a]) + sf_start.pack32() + bytes([slot, (adkd << 4) | cop])
            + payload)


def tag_message_for(tag: TagRecord, words: Mapping[int, int]) -> bytes:
    return tag_message(tag.prn_d, tag.authenticating_svid, tag.sf_start, tag.slot, tag.adkd,
                       tag.cop, nav_payload(tag.adkd, words))


def key_sf_for(sf_start: GstTime, adkd: int) -> GstTime:
    """Sub-frame whose disclosed key verifies tags of ``sf_start``."""
    delay = 1 + (ADKD12_KEY_DELAY_SF if adkd == 12 else 0)
    return sf_start + delay * SUBFRAME_SECONDS


def verify_tag(tag: TagRecord, data, key: TeslaKey, cfg: ChainConfig) -> AuthResult:
    """``data`` is a NavDataBlock or a word-type to payload mapping."""
    expected = key_sf_for(tag.sf_start, tag.adkd)
    if key.gst_sf != expected:
        raise KeyNotForTag(f"tag of {tag.sf_start} ADKD{tag.adkd} needs key of {expected}, got {key.gst_sf}")
    words = getattr(data, "words", data)
    tag_bits = compute_tag(key, tag_message_for(tag, words), cfg)
    ok = tag_bits == tag.tag_value
    evidence = {"tag": list(tag.key), "key_sf": key.gst_sf.seconds}
    return AuthResult(Verdict.VERIFIED if ok else Verdict.FAILED, "tag", evidence,
                      key.gst_sf if ok else None)


def macseq_message(svid: int, sf_start: GstTime, flex_infos) -> bytes:
    return bytes([svid]) + sf_start.pack32() + b"".join(i.to_bytes(2, "big") for i in flex_infos)


def compute_macseq(key: TeslaKey, svid: int, sf_start: GstTime, flex_infos, cfg: ChainConfig) -> int:
    digest = mac(key.bits, macseq_message(svid, sf_start, flex_infos), cfg)
    return int.from_bytes(digest[:2], "big") >> (16 - cfg.macseq_size_bits)


def flex_infos(msg: MackMessage, seq: TagSequence = MACLT_34) -> list[int]:
    kinds = seq.for_subframe(msg.sf_start)
    infos = []
    for slot, kind in enumerate(kinds):
        if kind is SlotKind.FLX:
            tag = msg.tags[slot]
            if tag is None:
                raise MissingFlexInfo(f"FLX slot {slot} missing in svid {msg.svid} {msg.sf_start}")
            infos.append(tag.taginfo)
    return infos


def verify_macseq(msg: MackMessage, key: TeslaKey, cfg: ChainConfig,
                  seq: TagSequence = MACLT_34) -> AuthResult:
    if msg.macseq is None:
        raise MissingFlexInfo(f"MACSEQ missing in svid {msg.svid} {msg.sf_start}")
    expected = key_sf_for(msg.sf_start, 0)
    if key.gst_sf != expected:
        raise KeyNotForTag(f"MACSEQ of {msg.sf_start} needs key of {expected}")
    value = compute_macseq(key, msg.svid, msg.sf_start, flex_infos(msg, seq), cfg)
    ok = value == msg.macseq
    evidence = {"svid": msg.svid, "sf": msg.sf_start.seconds, "key_sf": key.gst_sf.seconds}
    return AuthResult(Verdict.VERIFIED if ok else Verdict.FAILED, "macseq", evidence,
                      key.gst_sf if ok else None)


def root_key_to_dict(cfg: ChainConfig) -> dict:
    if cfg.root_key is None:
        raise ValueError("configuration has no root key")
    return {
        "wn": cfg.root_key.gst_sf.wn,
        "tow": cfg.root_key.gst_sf.tow,
        "key_hex": cfg.root_key.bits.hex(),
        "alpha_hex": cfg.alpha.hex(),
        "hash_id": cfg.hash_id,
        "mac_id": cfg.mac_id,
        "maclt_id": cfg.maclt_id,
    }


def root_key_from_dict(obj: dict) -> ChainConfig:
    try:
        key = bytes.fromhex(obj["key_hex"])
        root = TeslaKey(key, GstTime(int(obj["wn"]), int(obj["tow"])), 0)
        return ChainConfig(
            key_size_bits=8 * len(key),
            hash_id=int(obj.get("hash_id", 0)),
            mac_id=int(obj.get("mac_id", 0)),
            alpha=bytes.fromhex(obj["alpha_hex"]),
            root_key=root,
            maclt_id=int(obj.get("maclt_id", 34)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"bad root key description: {exc}") from exc


def save_root_key(path: str | Path, cfg: ChainConfig) -> None:
    Path(path).write_text(json.dumps(root_key_to_dict(cfg), indent=2) + "\n", encoding="utf-8")


def load_root_key(path: str | Path) -> ChainConfig:
    return root_key_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
