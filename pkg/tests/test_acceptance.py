"""End-to-end acceptance suite.

One test per numbered criterion; each prints a single
``criterion N: PASS|FAIL — measured values`` line before asserting, so a
plain ``pytest -v`` run yields one verdict line per criterion.

The expensive shared artifacts (the twenty 1024-node stretch runs) are
built once and reused; the 16384-node checks free each run before
starting the next to stay inside a small-memory budget.
"""

import math
import statistics
import time
import types

import numpy as np

from flatroute import cli
from flatroute import metrics as mt
from flatroute import sim
from flatroute.landmark_routing import HEURISTICS
from flatroute.topology import (DistanceOracle, gen_geometric, gen_gnm,
                                gen_s4_adversarial)

_CACHE = {}


def _state_bound(n):
    return 3.0 * math.sqrt(n * math.log2(n))


def _verdict(num, ok, detail):
    print("criterion %d: %s — %s" % (num, "PASS" if ok else "FAIL", detail))


def _disco_1024_suite():
    """Per-run stretch + landmark-proximity stats on 10 seeds x 2 families.

    Shared by the first two tests; only scalar stats are retained."""
    if "suite1024" in _CACHE:
        return _CACHE["suite1024"]
    rows = []
    for kind in ("gnm", "geo"):
        for seed in range(10):
            t0 = time.perf_counter()
            if kind == "gnm":
                topo = gen_gnm(1024, 8, seed=seed)
            else:
                topo = gen_geometric(1024, 8, seed=seed)
            run = sim.run_static(topo, "disco", seed=seed)
            oracle = DistanceOracle(topo)
            # share one oracle between the stretch pass and the
            # landmark-proximity scan below
            run.pv = types.SimpleNamespace(oracle=oracle)
            summ = mt.summarize_stretch(mt.measure_stretch(run, seed=seed))
            checked = violations = 0
            cur_s, cur_vic = -1, None
            for s, t in mt.sample_pairs(topo.n, seed):
                if s != cur_s:
                    cur_s = s
                    cur_vic = set(run.nd.vicinity_slice(s)[0].tolist())
                if t in cur_vic:
                    continue
                checked += 1
                if run.nd.closest_lm_dist[t] > 2.0 * oracle.dist_row(s)[t]:
                    violations += 1
            rows.append({"kind": kind, "seed": seed, "summary": summ,
                         "checked": checked, "violations": violations,
                         "wall": time.perf_counter() - t0})
    _CACHE["suite1024"] = rows
    return rows


def test_c01_first_and_later_packet_stretch_bounds():
    rows = _disco_1024_suite()
    first_max = max(r["summary"]["first_max"] for r in rows)
    later_max = max(r["summary"]["later_max"] for r in rows)
    failed = sum(r["summary"]["failed"] for r in rows)
    fb_frac = max(r["summary"]["fallbacks"] / r["summary"]["samples"]
                  for r in rows)
    slowest = max(r["wall"] for r in rows)
    ok = (first_max <= 7.0 and later_max <= 3.0 and failed == 0
          and fb_frac <= 1e-3 and slowest <= 300.0)
    _verdict(1, ok, "20 runs: first_max=%.3f later_max=%.3f failed=%d "
             "worst_fallback_frac=%.5f slowest=%.1fs"
             % (first_max, later_max, failed, fb_frac, slowest))
    assert first_max <= 7.0
    assert later_max <= 3.0
    assert failed == 0
    assert fb_frac <= 1e-3
    assert slowest <= 300.0


def test_c02_landmark_close_to_distant_destinations():
    rows = _disco_1024_suite()
    checked = sum(r["checked"] for r in rows)
    violations = sum(r["violations"] for r in rows)
    ok = violations == 0 and checked > 0
    _verdict(2, ok, "%d out-of-vicinity pairs: %d violations of "
             "d(lm_t,t) <= 2*d(s,t)" % (checked, violations))
    assert checked > 0
    assert violations == 0


_SHORTCUT_MEANS = {
    "None": 1.351,
    "ToDestination": 1.285,
    "ShorterOfForwardReverse": 1.266,
    "NoPathKnowledge": 1.179,
    "UpDownStream": 1.263,
    "PathKnowledge": 1.159,
}


def test_c03_shortcut_heuristic_means_at_16384():
    seeds = (1, 2, 3)
    sums = {h: 0.0 for h in HEURISTICS}
    dominance_breaks = 0
    nper = len(HEURISTICS)
    for seed in seeds:
        topo = gen_gnm(16384, 8, seed=seed)
        run = sim.run_static(topo, "nddisco", seed=seed)
        samples = mt.measure_stretch(run, seed=seed, heuristics=HEURISTICS)
        for i in range(0, len(samples), nper):
            by = {x.heuristic: x.first for x in samples[i:i + nper]}
            if not (by["NoPathKnowledge"] <= by["ToDestination"]
                    <= by["None"]):
                dominance_breaks += 1
            if not (by["PathKnowledge"] <= by["UpDownStream"]
                    <= by["ToDestination"]):
                dominance_breaks += 1
        for h in HEURISTICS:
            vals = [x.first for x in samples if x.heuristic == h]
            sums[h] += sum(vals) / len(vals)
        del run, samples
    means = {h: sums[h] / len(seeds) for h in HEURISTICS}
    worst = max(abs(means[h] - _SHORTCUT_MEANS[h]) for h in HEURISTICS)
    ok = worst <= 0.08 and dominance_breaks == 0
    _verdict(3, ok, "means " + " ".join(
        "%s=%.3f" % (h, means[h]) for h in HEURISTICS)
        + " worst_dev=%.3f dominance_breaks=%d" % (worst, dominance_breaks))
    for h in HEURISTICS:
        assert abs(means[h] - _SHORTCUT_MEANS[h]) <= 0.08, h
    assert dominance_breaks == 0


def test_c04_state_concentration_and_worst_case():
    details = []
    ok = True
    for kind in ("gnm", "geo"):
        if kind == "gnm":
            topo = gen_gnm(16384, 8, seed=1)
        else:
            topo = gen_geometric(16384, 8, seed=1)
        run = sim.run_static(topo, "disco", seed=1)
        rows = mt.measure_state(run)
        fwd = np.array([b.forwarding_entries for b in rows], np.float64)
        tot = np.array([b.total for b in rows], np.float64)
        bound = _state_bound(topo.n)
        ok = (ok and fwd.max() <= bound
              and fwd.max() / fwd.mean() <= 1.3
              and tot.max() / tot.mean() <= 1.3)
        details.append("%s fwd_max=%d/%.0f fwd_ratio=%.3f tot_ratio=%.3f"
                       % (kind, fwd.max(), bound, fwd.max() / fwd.mean(),
                          tot.max() / tot.mean()))
        del run, rows
    topo = gen_s4_adversarial(64)
    bound = _state_bound(topo.n)
    s4_hits = 0
    disco_worst = 0
    for seed in range(50):
        s4run = sim.run_static(topo, "s4", seed=seed)
        s4max = max(b.forwarding_entries for b in mt.measure_state(s4run))
        if s4max >= 0.5 * topo.n:
            s4_hits += 1
        del s4run
        drun = sim.run_static(topo, "disco", seed=seed)
        dmax = max(b.forwarding_entries for b in mt.measure_state(drun))
        disco_worst = max(disco_worst, dmax)
        del drun
    ok = ok and s4_hits >= 45 and disco_worst <= bound
    details.append("tree(n=%d): s4_hits=%d/50 disco_worst=%d/%.0f"
                   % (topo.n, s4_hits, disco_worst, bound))
    _verdict(4, ok, "; ".join(details))
    assert ok, details


def test_c05_geometric_worst_case_comparison():
    topos = [gen_geometric(1024, 8, seed=s) for s in range(5)]
    medians = {}
    for proto in ("disco", "s4", "vrr"):
        maxima = []
        for seed, topo in enumerate(topos):
            run = sim.run_static(topo, proto, seed=seed)
            summ = mt.summarize_stretch(mt.measure_stretch(run, seed=seed))
            maxima.append(summ["first_max"])
            del run
        medians[proto] = statistics.median(maxima)
    ok = (medians["disco"] <= 3.0 and medians["s4"] >= 10.0
          and medians["vrr"] >= 10.0)
    _verdict(5, ok, "median max first stretch: disco=%.2f s4=%.2f vrr=%.2f"
             % (medians["disco"], medians["s4"], medians["vrr"]))
    assert medians["disco"] <= 3.0
    assert medians["s4"] >= 10.0
    assert medians["vrr"] >= 10.0


def test_c06_message_scaling_over_network_size():
    sizes = (256, 512, 1024, 2048)
    protos = ("pathvector", "s4", "nddisco", "disco")
    per_node = {p: [] for p in protos}
    for n in sizes:
        topo = gen_gnm(n, 8, seed=0)
        for proto in protos:
            run = sim.run_des(topo, proto, seed=0)
            per_node[proto].append(run.counters.total() / n)
            del run
    slope = {p: float(np.polyfit(np.log2(sizes),
                                 np.log2(per_node[p]), 1)[0])
             for p in protos}
    order_ok = all(per_node["nddisco"][i] >= per_node["s4"][i]
                   and per_node["disco"][i] >= per_node["nddisco"][i]
                   for i in range(len(sizes)))
    ok = (slope["pathvector"] >= 0.8 and slope["disco"] <= 0.65
          and slope["nddisco"] <= 0.65 and order_ok)
    _verdict(6, ok, "slopes pv=%.2f s4=%.2f nd=%.2f disco=%.2f order_ok=%s"
             % (slope["pathvector"], slope["s4"], slope["nddisco"],
                slope["disco"], order_ok))
    assert slope["pathvector"] >= 0.8
    assert slope["disco"] <= 0.65
    assert slope["nddisco"] <= 0.65
    assert order_ok


def test_c07_finger_density_tradeoff():
    h1s, h3s, pct = [], [], []
    hop_drop_every_seed = True
    for seed in range(10):
        topo = gen_gnm(1024, 8, seed=seed)
        r1 = sim.run_des(topo, "disco",
                         config=sim.RunConfig(fingers=1), seed=seed)
        r3 = sim.run_des(topo, "disco",
                         config=sim.RunConfig(fingers=3), seed=seed)
        h1, _ = sim.announcement_hop_stats(r1)
        h3, _ = sim.announcement_hop_stats(r3)
        hop_drop_every_seed = hop_drop_every_seed and h3 < h1
        h1s.append(h1)
        h3s.append(h3)
        pct.append(100.0 * (r3.counters.total() - r1.counters.total())
                   / r1.counters.total())
        del r1, r3
    mh1 = statistics.mean(h1s)
    mh3 = statistics.mean(h3s)
    mpct = statistics.mean(pct)
    ok = (hop_drop_every_seed and 1.0 <= mpct <= 8.0
          and abs(mh1 - 5.77) <= 0.3 * 5.77
          and abs(mh3 - 3.04) <= 0.3 * 3.04)
    _verdict(7, ok, "hops f1=%.2f f3=%.2f (drop every seed: %s), "
             "extra messages %.1f%%" % (mh1, mh3, hop_drop_every_seed, mpct))
    assert hop_drop_every_seed
    assert 1.0 <= mpct <= 8.0
    assert abs(mh1 - 5.77) <= 0.3 * 5.77
    assert abs(mh3 - 3.04) <= 0.3 * 3.04


def test_c08_backend_equivalence():
    topos = (gen_gnm(256, 8, seed=1), gen_gnm(1024, 8, seed=2),
             gen_geometric(512, 8, seed=3), gen_geometric(1024, 10, seed=4),
             gen_s4_adversarial(16))
    mismatches = 0
    worst_diff = 0.0
    for topo in topos:
        for proto in sim.PROTOCOLS:
            rs = sim.run_static(topo, proto, seed=5)
            rd = sim.run_des(topo, proto, seed=5)
            if sim.state_fingerprint(rs) != sim.state_fingerprint(rd):
                mismatches += 1
            if proto == "disco":
                ms = mt.summarize_stretch(
                    mt.measure_stretch(rs, seed=5, n_pairs=4000))
                md = mt.summarize_stretch(
                    mt.measure_stretch(rd, seed=5, n_pairs=4000))
                worst_diff = max(worst_diff,
                                 abs(ms["later_mean"] - md["later_mean"])
                                 / ms["later_mean"])
            del rs, rd
    ok = mismatches == 0 and worst_diff <= 0.01
    _verdict(8, ok, "%d protocol/topology pairs: %d state mismatches, "
             "later-stretch backend diff <= %.4f%%"
             % (len(topos) * len(sim.PROTOCOLS), mismatches,
                100.0 * worst_diff))
    assert mismatches == 0
    assert worst_diff <= 0.01


def _group_id(run, name):
    k = run.ks[name]
    h = int(run.topo.hashes[run.topo.index(name)])
    return h >> (64 - k) if k else 0


def test_c09_size_estimate_error_tolerance():
    increases = []
    fail_fracs = []
    for seed in range(5):
        topo = gen_gnm(1024, 8, seed=seed)
        base = sim.run_static(topo, "disco", seed=seed)
        sb = mt.summarize_stretch(mt.measure_stretch(base, seed=seed))
        del base
        r40 = sim.run_static(topo, "disco", seed=seed,
                             config=sim.RunConfig(error_model="uniform:0.4"))
        s40 = mt.summarize_stretch(mt.measure_stretch(r40, seed=seed))
        assert s40["failed"] == 0
        increases.append(s40["later_mean"] / sb["later_mean"] - 1.0)
        del r40
        r60 = sim.run_static(topo, "disco", seed=seed,
                             config=sim.RunConfig(error_model="uniform:0.6"))
        samples = mt.measure_stretch(r60, seed=seed)
        combos = {}
        for x in samples:
            key = (x.s, _group_id(r60, x.t))
            combos[key] = combos.get(key, False) or x.fallback
        fail_fracs.append(sum(combos.values()) / len(combos))
        assert all(math.isfinite(x.later) for x in samples)
        del r60, samples
    mean_inc = statistics.mean(increases)
    worst_frac = max(fail_fracs)
    ok = mean_inc <= 0.015 and worst_frac <= 0.002
    _verdict(9, ok, "+-40%%: mean later-stretch increase %.3f%%; "
             "+-60%%: worst group-lookup fallback frac %.4f%%"
             % (100.0 * mean_inc, 100.0 * worst_frac))
    assert mean_inc <= 0.015
    assert worst_frac <= 0.002


def test_c10_congestion_within_factor_two_of_shortest_path():
    worst = 0.0
    zero_splits = 0
    for kind in ("gnm", "geo"):
        if kind == "gnm":
            topo = gen_gnm(1024, 8, seed=7)
        else:
            topo = gen_geometric(1024, 8, seed=7)
        pairs = mt.sample_pairs(topo.n, 7)
        loads = {}
        for proto in ("pathvector", "disco", "s4"):
            run = sim.run_static(topo, proto, seed=7)
            cmap = mt.measure_congestion(run, pairs=pairs)
            loads[proto] = np.array(cmap.values_with_idle_edges(topo),
                                    np.float64)
            del run
        qs = np.arange(1, 100)
        base_q = np.percentile(loads["pathvector"], qs)
        for proto in ("disco", "s4"):
            proto_q = np.percentile(loads[proto], qs)
            for b, p in zip(base_q, proto_q):
                if b == 0.0 and p == 0.0:
                    continue
                if b == 0.0 or p == 0.0:
                    zero_splits += 1
                    continue
                worst = max(worst, p / b, b / p)
    ok = worst <= 2.0 and zero_splits == 0
    _verdict(10, ok, "worst per-percentile load factor vs shortest path "
             "= %.3f (zero-vs-nonzero percentiles: %d)"
             % (worst, zero_splits))
    assert zero_splits == 0
    assert worst <= 2.0


def test_c11_reruns_are_byte_identical(tmp_path):
    def run_once(out):
        argv = ["run", "--topology", "gnm:256:8", "--protocols",
                "disco,s4,vrr", "--backend", "both", "--seeds", "3",
                "--pairs", "1000", "--out", str(out), "--name", "accept"]
        assert cli.main(argv) == 0

    run_once(tmp_path / "a")
    run_once(tmp_path / "b")
    files_a = sorted(p.relative_to(tmp_path / "a")
                     for p in (tmp_path / "a").rglob("*.csv"))
    files_b = sorted(p.relative_to(tmp_path / "b")
                     for p in (tmp_path / "b").rglob("*.csv"))
    assert files_a and files_a == files_b
    diffs = [str(rel) for rel in files_a
             if (tmp_path / "a" / rel).read_bytes()
             != (tmp_path / "b" / rel).read_bytes()]
    ok = not diffs
    _verdict(11, ok, "%d CSVs compared, %d differ" % (len(files_a),
                                                      len(diffs)))
    assert not diffs, diffs
