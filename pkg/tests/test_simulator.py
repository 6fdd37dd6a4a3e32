from dataclasses import replace

import numpy as np
import pytest

from osnma_ttfaf.gst import GstTime
from osnma_ttfaf.inav import extract_osnma_field, extract_word
from osnma_ttfaf.mack import SlotKind, assemble_fields
from osnma_ttfaf.scenario import (ConfigInvalid, CopForge, LossModel, SatelliteConfig,
                                  ScenarioConfig, preset)
from osnma_ttfaf.simulator import AdversaryInapplicable, apply_adversary, count_tags, generate
from osnma_ttfaf.tesla import KeyChain

from conftest import simulated


def small(**kw):
    sats = kw.pop("sats", (SatelliteConfig(4), SatelliteConfig(10), SatelliteConfig(27),
                           SatelliteConfig(36)))
    return ScenarioConfig(sats, **{"duration_s": 300, "iod_change_period_sf": 4, **kw})


def test_page_stream_shape(ideal):
    records, truth = ideal
    assert len(records) == 4 * 450
    assert records == sorted(records, key=lambda r: (r.wn, r.tow, r.svid))
    assert truth.n_subframes == 30
    assert truth.chain.root_key.gst_sf == truth.start - 30


def test_words_follow_schedule(ideal):
    records, truth = ideal
    cfg = preset("ideal_4conn")
    for rec in records[:120]:
        gst = rec.gst
        word = extract_word(rec.to_page())
        assert word.word_type == cfg.wt_schedule[gst.parity][gst.page_index]


def test_chain_links_to_root(ideal):
    _, truth = ideal
    kc = KeyChain(truth.chain.root_key, truth.chain)
    for k in (0, 1, 7, 29):
        assert kc.verify(truth.key(k)).ok


def test_cop_values():
    records, truth = generate(small(duration_s=600))
    sats = {s: truth.block_start[s] for s in truth.svids}
    for (e, k), tags in truth.tags.items():
        for t in tags:
            if t.adkd == 4 or t.prn_d not in sats:
                continue
            start = sats[t.prn_d][k - 1]
            assert t.cop == min(15, k - start)
    _, static = generate(small(iod_change_period_sf=None))
    assert {t.cop for tags in static.tags.values() for t in tags} == {15}
    seen = {t.cop for tags in truth.tags.values() for t in tags if t.adkd == 0}
    assert 1 in seen and 15 not in seen


def test_count_tags(ideal, open_sky_4c4d):
    for counts in count_tags(ideal[1]).values():
        assert (counts["connected"], counts["disconnected"]) == (4, 0)
    for counts in count_tags(open_sky_4c4d[1]).values():
        assert (counts["connected"], counts["disconnected"]) == (4, 12)


def test_count_tags_when_a_satellite_joins():
    sats = tuple(SatelliteConfig(s) for s in (4, 10, 27, 36)) + (SatelliteConfig(5, connected=((300, 10**6),)),)
    _, truth = generate(small(sats=sats, duration_s=450, iod_change_period_sf=None))
    counts = count_tags(truth)
    assert counts[9]["connected"] == 4 and counts[9]["disconnected"] > 0
    # on joining, cross tags still cover the newcomer's last disconnected sub-frame
    assert counts[10]["connected"] > 5 and counts[10]["disconnected"] == 0
    assert counts[11]["connected"] == 5 and counts[11]["disconnected"] == 0


def test_cross_tags_target_disconnected(open_sky_4c4d):
    _, truth = open_sky_4c4d
    for (e, k), tags in truth.tags.items():
        for t in tags:
            if t.slot_kind in (SlotKind.CROSS, SlotKind.FLX, SlotKind.ADKD12_CROSS):
                assert not truth.connected[t.prn_d][k]
            else:
                assert t.prn_d == e


def test_neighbours_cover_different_targets(open_sky_4c4d):
    _, truth = open_sky_4c4d
    for k in range(1, 5):
        first = {truth.tags[(e, k)][5 if k % 2 == 0 else 2].prn_d for e in (4, 10, 27, 36)}
        assert len(first) == 4


def test_deterministic():
    a = generate(small(seed=3))
    b = generate(small(seed=3))
    c = generate(small(seed=4))
    assert a[0] == b[0] and a[1].to_dict() == b[1].to_dict()
    assert a[0] != c[0]


def test_total_loss_gives_empty_stream():
    sats = tuple(SatelliteConfig(s, loss=LossModel.bernoulli(1.0)) for s in (4, 10))
    records, truth = generate(small(sats=sats))
    assert records == [] and len(truth.lost) == 2 * 150


def test_loss_models():
    rng = np.random.default_rng(0)
    assert not LossModel.none().draw(rng, 100).any()
    ge = LossModel.gilbert_elliott(0.05, 0.2, 0.0, 1.0)
    lost = ge.draw(np.random.default_rng(1), 200_000)
    assert abs(lost.mean() - ge.mean_loss) < 0.01
    runs = np.diff(np.flatnonzero(np.diff(lost.astype(int)))).mean()
    assert runs > 3        # bursty
    b = LossModel.bernoulli(0.3).draw(np.random.default_rng(2), 100_000)
    assert abs(b.mean() - 0.3) < 0.01
    with pytest.raises(ConfigInvalid):
        LossModel.bernoulli(1.5)
    with pytest.raises(ConfigInvalid):
        LossModel("weird")


def test_visibility_windows():
    sats = (SatelliteConfig(4, visible=((0, 60),)), SatelliteConfig(10))
    records, _ = generate(small(sats=sats))
    assert max(r.tow for r in records if r.svid == 4) == 35400 + 58


def test_adversary_rewrites_two_subframes():
    cfg = small(duration_s=600)
    records, truth = generate(cfg)
    with pytest.raises(AdversaryInapplicable):
        apply_adversary(records, truth, CopForge(3), cfg)
    forged = apply_adversary(records, truth, CopForge(4), cfg)
    c0, c2 = truth.sf(4).seconds, truth.sf(6).seconds
    for a, b in zip(records, forged):
        if not c0 <= a.gst.seconds < c2:
            assert a == b
    changed = [a for a, b in zip(records, forged) if a != b]
    assert changed and all(c0 <= a.gst.seconds < c2 for a in changed)
    # inflated COP inside sub-frame 5 with unchanged tag values
    def mack(recs):
        fields = [extract_osnma_field(r.to_page()) for r in recs
                  if r.svid == 4 and r.gst.sf_start == truth.sf(5)]
        return assemble_fields(4, truth.sf(5), fields, truth.chain)

    honest, replayed = mack(records), mack(forged)
    assert [t.tag_value for t in honest.tags] == [t.tag_value for t in replayed.tags]
    assert honest.tags[0].cop == 1 and replayed.tags[0].cop == 5
    with pytest.raises(ConfigInvalid):
        apply_adversary(records, truth, "nonsense", cfg)


def test_key_bits_look_uniform(open_sky_4c4d):
    _, truth = open_sky_4c4d
    bits = np.unpackbits(np.frombuffer(b"".join(truth.keys.values()), dtype=np.uint8))
    assert abs(bits.mean() - 0.5) < 0.03


@pytest.mark.parametrize("kw", [
    {"duration_s": 0}, {"duration_s": 3}, {"start": GstTime(1267, 35401)},
    {"iod_change_period_sf": 0}, {"wt_schedule": ((1,), (1,))},
])
def test_config_validation(kw):
    with pytest.raises(ConfigInvalid):
        small(**kw)


def test_duplicate_svids_and_empty():
    with pytest.raises(ConfigInvalid):
        small(sats=(SatelliteConfig(4), SatelliteConfig(4)))
    with pytest.raises(ConfigInvalid):
        generate(small(sats=()))
    with pytest.raises(ConfigInvalid):
        preset("nowhere")


def test_ground_truth_json(ideal):
    doc = ideal[1].to_dict()
    assert set(doc) >= {"keys", "tags", "iod", "connected", "lost"}
    assert len(doc["tags"]) == 30 * 4 * 6
