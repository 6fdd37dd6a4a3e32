import hashlib
import random

import pytest

from osnma_ttfaf.gst import GstTime
from osnma_ttfaf.mack import MACLT_34, ChainConfig, MackMessage, SlotKind, TagRecord, TeslaKey
from osnma_ttfaf.tesla import (DataIncomplete, GapTooLarge, KeyBehindRatchet, KeyChain, KeyNotForTag,
                               MissingFlexInfo, compute_macseq, compute_tag, hash_back, key_sf_for,
                               load_root_key, mac, nav_payload, one_way, save_root_key,
                               tag_message, verify_key, verify_macseq, verify_tag)

CFG = ChainConfig(alpha=bytes.fromhex("a1b2c3d4e5f6"))
T0 = GstTime(1267, 35400)


def hmac_oracle(key: bytes, msg: bytes) -> bytes:
    key = key.ljust(64, b"\x00")
    inner = hashlib.sha256(bytes(b ^ 0x36 for b in key) + msg).digest()
    return hashlib.sha256(bytes(b ^ 0x5C for b in key) + inner).digest()


def chain(n, seed=0):
    """Keys for sub-frames T0 .. T0+n*30 built forward from the newest."""
    rng = random.Random(seed)
    bits = rng.randbytes(16)
    keys = [TeslaKey(bits, T0 + 30 * n, n)]
    for i in range(n, 0, -1):
        bits = one_way(bits, T0 + 30 * (i - 1), CFG)
        keys.append(TeslaKey(bits, T0 + 30 * (i - 1), i - 1))
    return keys[::-1]


def test_one_way_definition():
    k = bytes(range(16))
    want = hashlib.sha256(k + T0.pack32() + CFG.alpha).digest()[:16]
    assert one_way(k, T0, CFG) == want


def test_mac_matches_manual_hmac():
    rng = random.Random(1)
    for n in (0, 1, 63, 64, 65, 200):
        key, msg = rng.randbytes(16), rng.randbytes(n)
        assert mac(key, msg, CFG) == hmac_oracle(key, msg)


@pytest.mark.parametrize("gap", range(1, 21))
def test_chain_gaps_verify(gap):
    keys = chain(gap)
    res = verify_key(keys[gap], keys[0], CFG)
    assert res.ok and res.evidence["steps"] == gap
    assert hash_back(keys[gap], gap, CFG).bits == keys[0].bits


def test_single_bit_flips_fail():
    keys = chain(3)
    for bit in range(128):
        flipped = bytearray(keys[3].bits)
        flipped[bit // 8] ^= 0x80 >> (bit % 8)
        assert not verify_key(TeslaKey(bytes(flipped), keys[3].gst_sf), keys[0], CFG).ok


def test_wrong_time_label_fails():
    keys = chain(4)
    for shift in (-60, -30, 30, 60):
        moved = TeslaKey(keys[3].bits, keys[3].gst_sf + shift)
        if moved.gst_sf < keys[0].gst_sf:
            continue
        assert not verify_key(moved, keys[0], CFG).ok


def test_gap_limits():
    keys = chain(5)
    with pytest.raises(GapTooLarge):
        verify_key(keys[5], keys[0], CFG, max_gap=4)
    with pytest.raises(KeyBehindRatchet):
        verify_key(keys[0], keys[2], CFG)


def test_keychain_ratchet_and_lookup():
    keys = chain(6)
    kc = KeyChain(keys[0], CFG)
    assert kc.key_at(keys[2].gst_sf) is None
    assert kc.verify(keys[4]).ok
    assert kc.trusted.gst_sf == keys[4].gst_sf
    for i in range(5):
        assert kc.key_at(keys[i].gst_sf).bits == keys[i].bits
    assert kc.key_at(keys[5].gst_sf) is None
    with pytest.raises(KeyBehindRatchet):
        kc.verify(keys[2])
    bogus = TeslaKey(bytes(16), keys[6].gst_sf)
    assert not kc.verify(bogus).ok
    assert kc.trusted.gst_sf == keys[4].gst_sf


WORDS = {wt: (wt << 122) | wt for wt in range(1, 11)}


def signed_tag(keys, adkd=0, slot=1, kind=SlotKind.FLX, prn_d=11, prn_a=4, cop=3):
    sf = T0 + 30
    key = keys[(key_sf_for(sf, adkd) - T0) // 30]
    msg = tag_message(prn_d, prn_a, sf, slot, adkd, cop, nav_payload(adkd, WORDS))
    return TagRecord(compute_tag(key, msg, CFG), prn_d, adkd, cop, slot, prn_a, sf, kind), key


def test_tag_message_layout():
    msg = tag_message(11, 4, T0, 2, 4, 15, b"xy")
    assert msg == bytes([11, 4]) + T0.pack32() + bytes([2, 0x4F]) + b"xy"
    assert len(nav_payload(0, WORDS)) == 80
    assert nav_payload(4, WORDS) == WORDS[6].to_bytes(16, "big") + WORDS[10].to_bytes(16, "big")


@pytest.mark.parametrize("adkd", [0, 4, 12])
def test_tag_verifies_only_with_its_key(adkd):
    keys = chain(14)
    tag, key = signed_tag(keys, adkd=adkd)
    assert verify_tag(tag, WORDS, key, CFG).ok
    idx = (key.gst_sf - T0) // 30
    for off in (-3, -2, -1, 1, 2, 3):
        other = keys[idx + off] if 0 <= idx + off < len(keys) else None
        if other is None:
            continue
        with pytest.raises(KeyNotForTag):
            verify_tag(tag, WORDS, other, CFG)
        relabelled = TeslaKey(other.bits, key.gst_sf)
        assert not verify_tag(tag, WORDS, relabelled, CFG).ok


def test_tag_rejects_changed_fields():
    keys = chain(3)
    tag, key = signed_tag(keys)
    from dataclasses import replace
    for change in ({"cop": 4}, {"prn_d": 12}, {"slot": 3}, {"authenticating_svid": 5},
                   {"tag_value": tag.tag_value ^ 1}):
        assert not verify_tag(replace(tag, **change), WORDS, key, CFG).ok
    words = dict(WORDS)
    words[3] ^= 1
    assert not verify_tag(tag, words, key, CFG).ok


def test_missing_words():
    keys = chain(3)
    tag, key = signed_tag(keys)
    with pytest.raises(DataIncomplete):
        verify_tag(tag, {1: 0, 2: 0}, key, CFG)
    with pytest.raises(ValueError):
        nav_payload(7, WORDS)


def test_adkd12_key_delay():
    assert key_sf_for(T0, 0) == T0 + 30
    assert key_sf_for(T0, 4) == T0 + 30
    assert key_sf_for(T0, 12) == T0 + 330


def _mack(sf, tags, macseq):
    return MackMessage(4, sf, tuple(tags), macseq, 0, 0, 0x7FFF)


def test_macseq():
    keys = chain(2)
    sf = T0 + 30       # odd: one FLX slot
    infos = [(11 << 8) | 3]
    tags = [None] * 6
    tags[1] = TagRecord(0, 11, 0, 3, 1, 4, sf, SlotKind.FLX)
    value = compute_macseq(keys[2], 4, sf, infos, CFG)
    assert verify_macseq(_mack(sf, tags, value), keys[2], CFG).ok
    assert not verify_macseq(_mack(sf, tags, value ^ 1), keys[2], CFG).ok
    tags[1] = TagRecord(0, 12, 0, 3, 1, 4, sf, SlotKind.FLX)
    assert not verify_macseq(_mack(sf, tags, value), keys[2], CFG).ok
    with pytest.raises(MissingFlexInfo):
        verify_macseq(_mack(sf, tags, None), keys[2], CFG)
    tags[1] = None
    with pytest.raises(MissingFlexInfo):
        verify_macseq(_mack(sf, tags, value), keys[2], CFG)
    with pytest.raises(KeyNotForTag):
        verify_macseq(_mack(sf, tags, value), keys[1], CFG)
    assert 0 <= value < 4096
    assert MACLT_34.cross_adkd0_slots(1) == [1, 2, 4]


def test_root_key_file_round_trip(tmp_path):
    keys = chain(1)
    cfg = CFG.with_root(keys[0])
    path = tmp_path / "root.json"
    save_root_key(path, cfg)
    back = load_root_key(path)
    assert back.root_key.bits == keys[0].bits and back.root_key.gst_sf == keys[0].gst_sf
    assert back.alpha == CFG.alpha
    path.write_text('{"wn": 1}')
    with pytest.raises(ValueError):
        load_root_key(path)


def test_unsupported_algorithms():
    with pytest.raises(ValueError):
        one_way(bytes(16), T0, ChainConfig(hash_id=7))
    with pytest.raises(ValueError):
        mac(bytes(16), b"", ChainConfig(mac_id=3))
