from collections import Counter
from dataclasses import replace

import pytest

from osnma_ttfaf.engine import (EPHEMERIS_FIX_RULE, Engine, EventKind, FixRule, NavStore,
                                OutOfOrderInput, TimeSyncPolicy, iod_success_rate, link_by_cop,
                                link_by_iod)
from osnma_ttfaf.gst import GstTime
from osnma_ttfaf.inav import NavWord
from osnma_ttfaf.mack import SlotKind, TagRecord
from osnma_ttfaf.records import PageRecord
from osnma_ttfaf.scenario import preset
from osnma_ttfaf.simulator import generate

from conftest import simulated

T0 = GstTime(1267, 35400)


def replay(stream, policy, offset=0, rule=EPHEMERIS_FIX_RULE, stop=True):
    records, truth = stream
    start = truth.start.seconds + offset
    engine = Engine(truth.chain, TimeSyncPolicy.named(policy), fix_rule=rule, start_time=start)
    engine.run([r for r in records if r.gst.seconds >= start], stop_at_fix=stop)
    return engine


def test_empty_input(ideal):
    engine = Engine(ideal[1].chain)
    assert engine.run([]) == []
    assert engine.ttfaf is None
    assert engine.summary() == {"ttfaf_seconds": None, "events_count": 0,
                                "iod_success_sat": None, "iod_success_receiver": None}


def test_needs_root_key():
    from osnma_ttfaf.mack import ChainConfig
    with pytest.raises(ValueError):
        Engine(ChainConfig())


@pytest.mark.parametrize("policy,offset,want", [
    ("baseline", 0, 90), ("baseline", 1, 119), ("baseline", 29, 91),
    ("page", 22, 68), ("page", 23, 97), ("iod", 20, 70), ("iod", 21, 99),
])
def test_ideal_offsets(ideal, policy, offset, want):
    assert replay(ideal, policy, offset).ttfaf == want


@pytest.mark.parametrize("offset,want", [(0, 60), (16, 44), (17, 73), (30, 60), (44, 46), (45, 75)])
def test_cop_offsets(open_sky_4c4d, offset, want):
    assert replay(open_sky_4c4d, "cop_iod", offset).ttfaf == want


def test_cop_needs_tight_time(open_sky_4c4d):
    loose = TimeSyncPolicy(ts_seconds=25, enable_page_level=True, enable_iod_link=True,
                           enable_cop_link=True)
    assert not loose.cop_active
    records, truth = open_sky_4c4d
    engine = Engine(truth.chain, loose, fix_rule=EPHEMERIS_FIX_RULE)
    engine.run(records)
    assert all(e.detail.get("link") != "cop" for e in engine.events)


def test_fix_rules(ideal):
    eph_only = replay(ideal, "baseline", 0)
    timing = replay(ideal, "baseline", 0, rule=FixRule())
    assert timing.ttfaf > eph_only.ttfaf
    assert replay(ideal, "baseline", 0, rule=FixRule(5, 0)).ttfaf is None
    fix = timing.fix.detail
    assert len(fix["ephemeris_sats"]) >= 4 and len(fix["timing_sats"]) >= 1


def word(svid, wt, iod=None, payload=0):
    return NavWord(wt, iod, (wt << 122) | payload, T0, svid)


def test_link_by_iod_joins_subframes():
    store = NavStore()
    sf0, sf1 = T0.seconds, T0.seconds + 30
    assert link_by_iod(store, [(sf0, sf0 + 2, word(4, 1, 7)), (sf0, sf0 + 4, word(4, 2, 7))]) == []
    blocks = link_by_iod(store, [(sf1, sf1 + 2, word(4, 3, 7)), (sf1, sf1 + 4, word(4, 4, 7)),
                                 (sf1, sf1 + 6, word(4, 5))])
    assert len(blocks) == 1
    block = blocks[0]
    assert block.iod == 7 and sorted(block.words) == [1, 2, 3, 4, 5]
    assert block.first_seen_sf == T0 and block.applicable_sfs == {sf0, sf1}


def test_link_by_iod_keeps_earliest_copy_and_splits_iods():
    store = NavStore()
    sf0 = T0.seconds
    link_by_iod(store, [(sf0, sf0 + 2, word(4, 1, 7, 1)), (sf0 + 30, sf0 + 32, word(4, 1, 7, 2))])
    assert store.iod_words(4, 7)[1].payload & 3 == 1
    link_by_iod(store, [(sf0, sf0 + 4, word(4, 2, 8)), (sf0, sf0 + 6, word(4, 5))])
    assert store.sf_iod(4, sf0) is None          # two IODs in one sub-frame
    assert 5 not in store.iod_words(4, 8)


def tag(cop, sf=T0 + 120, adkd=0, prn_d=5):
    return TagRecord(0, prn_d, adkd, cop, 1, 4, sf, SlotKind.FLX)


def test_link_by_cop():
    store = NavStore()
    out = link_by_cop(store, [tag(5)])
    src = T0.seconds + 90
    assert out == {(5, 0, src): [src - 30, src - 60, src - 90, src - 120]}
    assert link_by_cop(store, [tag(1), tag(0)]) == {}
    assert link_by_cop(store, [tag(3)]) == {}           # already covered from the same source
    assert store.cop_links[(5, 0, src - 30)] == [(src, tag(5).key)]


def test_cop_candidates_respect_policy():
    store = NavStore()
    sf_src = T0.seconds + 90
    link_by_iod(store, [(sf_src, sf_src + 2 * i, word(5, wt, 3)) for i, wt in enumerate((1, 2, 3, 4))]
                + [(sf_src, sf_src + 20, word(5, 5))])
    link_by_cop(store, [tag(4)])
    cop = TimeSyncPolicy.named("cop_iod")
    iod = TimeSyncPolicy.named("page")
    target = sf_src - 60
    assert [c.link[0] for c in store.candidates(5, 0, target, cop)] == ["cop"]
    assert store.candidates(5, 0, target, iod) == []
    store.failed_tags.add(tag(4).key)
    assert store.candidates(5, 0, target, cop) == []


def test_iod_success_counts():
    obs = []
    for svid in (1, 2, 3, 4):
        iod = 0
        for k in range(101):
            if k in (10, 30, 50, 70, 90):
                iod += 1
            obs.append((svid, T0.seconds + 30 * k, iod))
    res = iod_success_rate(obs)
    # the first epoch has no predecessor and counts as a success
    assert (res.sat_success, res.sat_epochs) == (4 * 96, 4 * 101)
    tail = [o for o in obs if o[1] > T0.seconds]
    res = iod_success_rate(tail)
    assert res.receiver_epochs == 100 and res.receiver_rate == 95.0
    static = [(s, T0.seconds + 30 * k, 9) for s in (1, 2, 3, 4) for k in range(50)]
    assert iod_success_rate(static).receiver_rate == 100.0
    always = [(s, T0.seconds + 30 * k, k) for s in (1, 2, 3, 4) for k in range(1, 50)]
    res = iod_success_rate(always)
    assert res.sat_rate == pytest.approx(100 / 49, abs=0.01) and res.receiver_rate == pytest.approx(100 / 49, abs=0.01)
    few = [(s, T0.seconds + 30 * k, 9) for s in (1, 2, 3) for k in range(5)]
    assert iod_success_rate(few).receiver_rate == 0.0


def test_no_failures_on_long_lossy_run():
    records, truth = generate(replace(preset("open_sky", 1), duration_s=3000))
    assert truth.n_subframes >= 100
    for policy in ("baseline", "cop_iod"):
        engine = Engine(truth.chain, TimeSyncPolicy.named(policy))
        engine.run(records)
        kinds = Counter(e.kind for e in engine.events)
        assert kinds[EventKind.TAG_FAILED] == 0 and kinds[EventKind.KEY_FAILED] == 0
        assert kinds[EventKind.FORGERY_DETECTED] == 0
        assert kinds[EventKind.KEY_VERIFIED] >= 95


def test_deterministic_logs(open_sky_4c4d):
    logs = [replay(open_sky_4c4d, "cop_iod", 7, stop=False).event_log() for _ in range(2)]
    assert logs[0] == logs[1] and logs[0]


@pytest.mark.parametrize("policy", ["baseline", "iod", "page", "cop_iod"])
def test_evidence_respects_time_bound(policy):
    records, truth = simulated("soft_urban", 2)
    engine = Engine(truth.chain, TimeSyncPolicy.named(policy))
    engine.run(records)
    verified = [e for e in engine.events if e.kind is EventKind.TAG_VERIFIED]
    assert verified
    ts = engine.policy.ts_seconds
    for e in verified:
        d = e.detail
        assert d["key_disclosed"] == d["key_sf"] + 21
        assert all(end + ts <= d["key_disclosed"] for _, _, end in d["words"])
        assert e.gst.seconds >= d["key_disclosed"] - 21
        if d["link"] == "cop":
            assert engine.policy.cop_active
        if not engine.policy.enable_iod_link:
            assert d["block"][0] in ("sf", "timing")


def test_out_of_order_and_bad_pages(ideal):
    records, truth = ideal
    engine = Engine(truth.chain)
    engine.process_page(records[10])
    with pytest.raises(OutOfOrderInput):
        engine.process_page(records[0])
    bad = PageRecord(records[11].wn, records[11].tow, records[11].svid, "00" * 30)
    assert engine.process_page(bad) == []
    assert engine.pages_rejected == 1


def test_wrong_root_key_authenticates_nothing(ideal):
    records, truth = ideal
    other = simulated("ideal_4conn", 5)[1].chain
    engine = Engine(replace(truth.chain, root_key=other.root_key))
    engine.run(records[:600])
    kinds = Counter(e.kind for e in engine.events)
    assert kinds[EventKind.KEY_VERIFIED] == 0 and kinds[EventKind.KEY_FAILED] > 0
    assert engine.ttfaf is None


def test_policy_names():
    assert TimeSyncPolicy.named("page", 20).ts_seconds == 20
    with pytest.raises(ValueError):
        TimeSyncPolicy.named("nope")
    with pytest.raises(ValueError):
        TimeSyncPolicy(ts_seconds=31)
