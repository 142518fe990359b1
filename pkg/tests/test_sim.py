import random
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import swgossip.sim.engine as engine
from swgossip.bloom import BloomFilter, BloomParams, indices, serialized_size
from swgossip.sim import (
    ChurnConfig,
    ClusterView,
    ConfigError,
    GossipConfig,
    NodeState,
    PayloadError,
    SimConfig,
    SimError,
    Simulator,
    dump_config,
    estimate_traffic,
    expiry_sweep,
    gossip_receive,
    gossip_round,
    parse_config,
    start_epoch,
)
from swgossip.sim import wire
from swgossip.topology import OverlaySpec
from swgossip.workload import ZipfWorkload

P = BloomParams(256, 4)
CFG = GossipConfig(fanout=3, node_ttl=10, file_ttl=15, rumor_emissions=2)


def cluster(n=4, files_each=3):
    view = ClusterView(0, list(range(n)))
    nodes = [NodeState(i, view, P, local_files=[f"n{i}-{j}".encode() for j in range(files_each)]) for i in range(n)]
    return view, nodes


def snapshot(node):
    return {k: bytes(v.to_bytes()) for k, v in node.epochs.items()}, node.aggregate.to_bytes()


def small_config(**kw):
    base = dict(
        overlay=OverlaySpec(4, 8, 4, wiring="random", wiring_param=2.0, seed=1),
        workload=ZipfWorkload(1.0, 400),
        coverage=0.1,
        rounds=40,
        warmup_rounds=10,
        seed=2,
    )
    base.update(kw)
    return SimConfig(**base)


# -- wire ---------------------------------------------------------------------


def test_encode_decode_round_trip():
    _, (a, b, *_) = cluster()
    start_epoch(a, 3, 2)
    a.add_peer(1, 2)
    ((_, data),) = gossip_round(a, random.Random(0), 1, 5)
    assert len(data) == wire.payload_size(2, 1, P)
    pl = wire.decode(data, P)
    assert pl.sender == 0 and pl.round == 5
    assert pl.members == [(0, 5), (1, 2)]
    (contrib, epoch, bf), = pl.records
    assert (contrib, epoch) == (0, 3)
    assert bf == BloomFilter.from_items(P, sorted(a.local_files))


def test_payload_size_formula():
    assert wire.payload_size(3, 2, P) == 26 + 3 * 16 + 4 + 2 * (16 + serialized_size(P))


@pytest.mark.parametrize(
    "mangle",
    [
        lambda d: d[:10],
        lambda d: b"XXXX" + d[4:],
        lambda d: d[:-1],
        lambda d: d + b"\x00",
    ],
)
def test_malformed_payload_rejected_without_side_effects(mangle):
    _, (a, b, *_) = cluster()
    start_epoch(a, 0, 2)
    a.add_peer(1, 0)
    ((_, data),) = gossip_round(a, random.Random(0), 1, 1)
    before = snapshot(b), b.membership
    with pytest.raises(PayloadError):
        gossip_receive(b, mangle(data), 1, CFG)
    assert (snapshot(b), b.membership) == before


def test_foreign_filter_parameters_rejected():
    view, _ = cluster()
    other = NodeState(0, view, BloomParams(256, 5), local_files=[b"x"])
    start_epoch(other, 0, 2)
    other.add_peer(1, 0)
    ((_, data),) = gossip_round(other, random.Random(0), 1, 1)
    with pytest.raises(PayloadError, match="parameters"):
        wire.scan(data, P)


# -- gossip -------------------------------------------------------------------


def test_fanout_capped_by_known_peers():
    _, (a, *_) = cluster()
    assert gossip_round(a, random.Random(0), 3, 0) == []
    a.add_peer(2, 0)
    msgs = gossip_round(a, random.Random(0), 3, 1)
    assert [t for t, _ in msgs] == [2]


def test_empty_outbox_sends_membership_only():
    _, (a, *_) = cluster()
    a.add_peer(1, 0)
    a.add_peer(3, 0)
    ((_, data),) = gossip_round(a, random.Random(0), 1, 1)
    assert len(data) == wire.payload_size(3, 0, P)
    assert wire.decode(data, P).records == []


def test_record_leaves_outbox_after_rumor_emissions():
    _, (a, *_) = cluster()
    a.add_peer(1, 0)
    start_epoch(a, 0, 2)
    sizes = [len(gossip_round(a, random.Random(0), 1, r)[0][1]) for r in range(3)]
    assert sizes[0] == sizes[1] > sizes[2]
    assert a.outbox == {}


def test_receive_learns_and_requeues():
    _, (a, b, *_) = cluster()
    start_epoch(a, 0, 2)
    a.add_peer(1, 0)
    ((_, data),) = gossip_round(a, random.Random(0), 1, 1)
    assert gossip_receive(b, data, 1, CFG)
    assert all(b.knows(f) for f in a.local_files)
    assert b.outbox == {(0, 0): 2}
    assert b.membership == {0: 1}
    assert not gossip_receive(b, data, 1, CFG)


def test_own_echo_changes_nothing_but_timestamps():
    _, (a, b, *_) = cluster()
    start_epoch(a, 0, 2)
    a.add_peer(1, 0)
    ((_, data),) = gossip_round(a, random.Random(0), 1, 1)
    gossip_receive(b, data, 1, CFG)
    b.add_peer(0, 1)
    ((_, back),) = gossip_round(b, random.Random(0), 1, 2)
    before = snapshot(a), a.outbox
    assert not gossip_receive(a, back, 2, CFG)
    assert (snapshot(a), a.outbox) == before
    assert a.membership[1] == 2


@settings(max_examples=30, deadline=None)
@given(order=st.permutations(range(3)), seed=st.integers(0, 100))
def test_merge_order_does_not_matter(order, seed):
    view, nodes = cluster(4)
    rng = random.Random(seed)
    payloads = []
    for src in nodes[:3]:
        start_epoch(src, rng.randrange(5), 2)
        src.add_peer(3, 0)
        payloads.append(gossip_round(src, rng, 1, 5)[0][1])
    ref = NodeState(3, view, P)
    for p in payloads:
        gossip_receive(ref, p, 6, CFG)
    other = NodeState(3, view, P)
    for i in order:
        gossip_receive(other, payloads[i], 6, CFG)
    assert snapshot(other) == snapshot(ref)
    assert other.membership == ref.membership


def test_silent_contributor_expires():
    _, (a, b, *_) = cluster()
    start_epoch(a, 0, 2)
    start_epoch(b, 0, 2)
    a.add_peer(1, 0)
    ((_, data),) = gossip_round(a, random.Random(0), 1, 0)
    gossip_receive(b, data, 0, CFG)
    gone, stale = expiry_sweep(b, CFG.node_ttl - 1, CFG)
    assert gone == [] and stale == []
    gone, stale = expiry_sweep(b, CFG.node_ttl, CFG)
    assert gone == [0] and stale == []
    gone, stale = expiry_sweep(b, CFG.file_ttl, CFG)
    assert stale == [(0, 0)]
    assert not any(b.knows(f) for f in a.local_files)
    # own epoch survives any amount of silence
    assert all(b.knows(f) for f in b.local_files)
    assert (1, 0) in b.slot_of


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), rounds=st.integers(1, 60))
def test_local_files_always_advertised(seed, rounds):
    _, nodes = cluster(5, files_each=2)
    rng = random.Random(seed)
    for n in nodes:
        start_epoch(n, 0, 2)
        for p in rng.sample(range(5), 2):
            if p != n.node_id:
                n.add_peer(p, 0)
    for r in range(1, rounds + 1):
        for n in nodes:
            if rng.random() < 0.1:
                start_epoch(n, r, 2)
        out = [m for n in nodes if rng.random() < 0.7 for m in gossip_round(n, rng, 2, r)]
        for target, data in out:
            gossip_receive(nodes[target], data, r, CFG)
        for n in nodes:
            expiry_sweep(n, r, CFG)
            assert all(n.knows(f) for f in n.local_files)


def test_slots_grow_on_demand():
    view, (a, *_) = cluster(2)
    cap = len(a.contrib)
    for e in range(cap + 3):
        a.slot((1, e))
    assert len(a.contrib) >= cap + 3
    assert len(a.slot_of) == cap + 3


def test_node_must_belong_to_cluster():
    view, _ = cluster()
    with pytest.raises(SimError):
        NodeState(99, view, P)


# -- traffic ------------------------------------------------------------------


def test_traffic_reference_point():
    assert estimate_traffic(10**7, 1000, 864000, 2.0, 1.2, 1.0) == pytest.approx(24000)


def test_traffic_zero_fanout_and_linearity():
    assert estimate_traffic(1e6, 100, 10, 2, 0, 1) == 0
    base = estimate_traffic(1e6, 100, 10, 2, 1.5, 1)
    assert estimate_traffic(2e6, 100, 10, 2, 1.5, 1) == pytest.approx(2 * base)
    assert estimate_traffic(1e6, 100, 10, 2, 3.0, 1) == pytest.approx(2 * base)
    assert estimate_traffic(1e6, 100, 10, 2, 1.5, 2) == pytest.approx(base / 2)
    with pytest.raises(SimError):
        estimate_traffic(1e6, 0, 10, 2, 1, 1)


# -- config -------------------------------------------------------------------

MINIMAL = "[overlay]\nn_clusters = 2\nnodes_per_cluster = 5\nintra_degree = 2\n"


@pytest.mark.parametrize(
    "extra,key",
    [
        ("[gossip]\nfanout = many\n", "gossip.fanout"),
        ("[gossip]\nfanout = 0\n", "gossip.fanout"),
        ("[gossip]\nspeed = 3\n", "gossip.speed"),
        ("[bloom]\nm = 64\n", "bloom.k"),
        ("[run]\nforward_strategy = teleport\n", "run.forward_strategy"),
        ("[workload]\ncoverage = 2\n", "run.coverage"),
        ("[mystery]\nx = 1\n", "mystery"),
    ],
)
def test_config_errors_name_the_key(extra, key):
    with pytest.raises(ConfigError) as err:
        parse_config(MINIMAL + extra)
    assert err.value.key == key
    assert key in str(err.value)


def test_config_requires_overlay_keys():
    with pytest.raises(ConfigError) as err:
        parse_config("[overlay]\nn_clusters = 2\nintra_degree = 2\n")
    assert err.value.key == "overlay.nodes_per_cluster"


def test_config_round_trip():
    cfg = small_config(
        bloom=BloomParams(512, 5, seed_a=3),
        churn=ChurnConfig(0.1, 0.05),
        forward_strategy="gateway_multicast",
        record_events=True,
    )
    assert parse_config(dump_config(cfg)) == cfg


# -- engine -------------------------------------------------------------------


def test_single_cluster_requests_stay_local():
    cfg = small_config(overlay=OverlaySpec(1, 10, 4), workload=ZipfWorkload(1.0, 100), coverage=1.0)
    sim = Simulator(cfg)
    sim.run(15)
    v = sim.members[0][0]
    res = sim.handle_request(v, sim.file_keys[7])
    assert res.outcome == "local" and res.hops == 0 and res.clusters_visited == 1


def test_flood_reaches_holder_cluster():
    sim = Simulator(small_config())
    sim.run(15)
    origin = sim.members[0][0]
    key = next(k for k in sim.file_keys if not sim.present_in(0, k) and sim.exists(k))
    res = sim.handle_request(origin, key, "flood")
    assert res.outcome == "remote"
    assert sim.present_in(res.found_cluster, key)


@pytest.mark.parametrize("strategy", ["flood", "unicast_random", "gateway_multicast"])
def test_run_accounting(strategy):
    m = Simulator(small_config(forward_strategy=strategy)).run()
    assert m.requests_total == 30 * 32
    assert m.served_local + m.served_remote + m.not_found + m.unresolved == m.requests_total
    assert sum(m.hops_histogram.values()) == m.requests_total
    assert m.false_negative_lookups == 0
    assert m.clusters_visited_max <= 4
    assert m.malformed_payloads == 0


def test_run_is_deterministic():
    cfg = small_config(churn=ChurnConfig(0.2, 0.05), record_events=True)
    a, b = Simulator(cfg), Simulator(cfg)
    assert a.run().to_json() == b.run().to_json()
    assert a.per_round_csv() == b.per_round_csv()
    assert [e.kind for e in a.events] == [e.kind for e in b.events]
    assert Simulator(replace(cfg, seed=3)).run().to_json() != a.metrics.to_json()


def test_churn_runs_and_rejoins():
    sim = Simulator(small_config(churn=ChurnConfig(0.3, 0.05), record_events=True))
    m = sim.run()
    assert m.joins > 0 and m.leaves > 0
    kinds = {e.kind for e in sim.events}
    assert {"join", "leave", "advertise", "request", "gossip_emit", "gossip_receive"} <= kinds
    assert m.served_local + m.served_remote + m.not_found + m.unresolved == m.requests_total


def test_malformed_payloads_are_counted(monkeypatch):
    real = engine.gossip_round

    def corrupt(node, rng, fanout, rnd):
        msgs = real(node, rng, fanout, rnd)
        if node.node_id == 0 and msgs:
            bad = msgs[0][1][:-3]
            return [(t, bad) for t, _ in msgs]
        return msgs

    monkeypatch.setattr(engine, "gossip_round", corrupt)
    sim = Simulator(small_config(rounds=5, warmup_rounds=5))
    m = sim.run()
    assert m.malformed_payloads > 0


def test_fp_probe_tracks_filter_rate():
    sim = Simulator(small_config(rounds=30))
    sim.run()
    fp, probes = sim.probe_false_positives()
    assert probes == sum(
        sum(not sim.present_in(c, k) for k in sim.file_keys) for c in sim.clusters
    )
    # each filter holds 40 files at 16 bits per entry
    assert fp / probes < 0.01


def test_per_round_csv_shape():
    sim = Simulator(small_config(rounds=3, warmup_rounds=0))
    sim.run()
    lines = sim.per_round_csv().splitlines()
    assert lines[0] == "round,served_local,fp,fn,bytes"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["0", "1", "2"]


def test_positions_cache_matches_indices():
    sim = Simulator(small_config(rounds=12, warmup_rounds=10))
    sim.run()
    for key, pos in sim._positions.items():
        assert np.array_equal(pos, indices(key, sim.params))


def test_sim_config_validation():
    with pytest.raises(SimError):
        small_config(rounds=0)
    with pytest.raises(SimError):
        small_config(forward_strategy="bogus")
    with pytest.raises(SimError):
        ChurnConfig(1.5, 0)
