import random

import pytest

from flatroute import landmark_routing as lr
from flatroute import resolution as rs
from flatroute._hashing import hash_name
from flatroute.topology import Topology
from oracles import all_pairs_dist, build_adj, random_connected_graph


def test_constants():
    assert rs.VIRTUAL_POINTS == 32
    assert rs.REFRESH_SECONDS == 600.0
    assert rs.TIMEOUT_SECONDS == 1260.0


def test_ring_points_deterministic():
    pts = rs.ring_points("lm-a")
    assert len(pts) == 32
    assert pts == rs.ring_points("lm-a")
    assert len(set(pts)) == 32
    assert all(0 <= p < 2 ** 64 for p in pts)
    assert pts != rs.ring_points("lm-b")


def test_owner_is_first_point_clockwise():
    lms = ["lm-a", "lm-b", "lm-c"]
    ring = rs.ResolutionRing(lms)
    pts = sorted((p, nm) for nm in lms for p in rs.ring_points(nm))
    rng = random.Random(4)
    for _ in range(50):
        key = rng.getrandbits(64)
        after = [(p, nm) for p, nm in pts if p >= key]
        want = after[0][1] if after else pts[0][1]
        assert ring.owner_of(key) == want
    assert rs.owner_of(pts[0][0], lms) == pts[0][1]   # exact hit owns itself


def test_ring_balance():
    lms = ["lm%03d" % i for i in range(100)]
    ring = rs.ResolutionRing(lms)
    counts = {nm: 0 for nm in lms}
    for i in range(100_000):
        counts[ring.owner_of(hash_name("key%05d" % i))] += 1
    mean = 100_000 / 100
    assert max(counts.values()) / mean <= 2.0
    assert min(counts.values()) > 0


def test_removing_landmark_moves_only_its_keys():
    lms = ["lm%02d" % i for i in range(12)]
    gone = "lm07"
    before = rs.ResolutionRing(lms)
    after = rs.ResolutionRing([nm for nm in lms if nm != gone])
    moved = kept = 0
    for i in range(2000):
        key = hash_name("key%04d" % i)
        a = before.owner_of(key)
        b = after.owner_of(key)
        if a == gone:
            moved += 1
            assert b != gone
        else:
            kept += 1
            assert b == a
    assert moved > 0 and kept > 0


def test_insert_lookup_and_timeout():
    ring = rs.ResolutionRing(["lm-a", "lm-b"])
    db = rs.ResolutionDb(ring)
    owner = db.insert("some-node", "ADDR", now=0.0)
    assert owner in ("lm-a", "lm-b")
    assert db.lookup("some-node", now=0.0) == ("hit", "ADDR", owner)
    assert db.lookup("some-node", now=1260.0) == ("hit", "ADDR", owner)
    assert db.lookup("some-node", now=1260.5) == ("expired", None, owner)
    assert db.lookup("other-node", now=0.0)[0] == "miss"
    # a refresh restarts the clock
    db.insert("some-node", "ADDR", now=700.0)
    assert db.lookup("some-node", now=1900.0)[0] == "hit"
    assert sum(db.shard_sizes().values()) == 1


def test_resolve_route_end_to_end():
    rng = random.Random(99)
    names, edges = random_connected_graph(rng, 14, 6, True)
    topo = Topology(names, edges)
    lms = rng.sample(names, 3)
    est = {nm: float(len(names)) for nm in names}
    state = lr.converge(topo, set(lms), est)
    db = rs.ResolutionDb(rs.ResolutionRing(state.landmark_names))
    adj = build_adj(names, edges)
    d = all_pairs_dist(names, edges)
    for t in names:
        db.insert(t, state.addresses[topo.index(t)], now=0.0)
    for s in names:
        for t in names:
            if s == t:
                continue
            res = rs.resolve_route(s, t, state, db, now=100.0)
            assert res.resolved and res.phase == "first_packet"
            assert res.hops[0] == topo.index(s)
            assert res.hops[-1] == topo.index(t)
            length = 0.0
            for a, b in zip(res.hops, res.hops[1:]):
                w = adj[names[a]].get(names[b])
                assert w is not None
                length += w
            assert res.length == length and length >= d[(s, t)]
    with pytest.raises(LookupError):
        rs.resolve_route(names[0], "no-such-name", state, db, now=0.0)
    with pytest.raises(LookupError):
        rs.resolve_route(names[0], names[1], state, db, now=5000.0)
