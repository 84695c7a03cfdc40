"""Uniform measurement over converged runs: per-node state breakdowns,
route stretch against exact shortest paths, per-edge congestion counts,
and deterministic CSV emission.

Byte model, applied identically to every protocol: each counted entry
names one node (4 bytes under IPv4-size names, 16 under IPv6-size);
entries that store an explicit-route address add that address's measured
byte size; label-map entries add 1 extra byte each (the out-neighbor a
label maps to)."""

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import baselines as bl
from . import groups as gp
from . import landmark_routing as lr
from .topology import DistanceOracle

DEFAULT_SAMPLED_PAIRS = 10_000
EXHAUSTIVE_BELOW_N = 512

BREAKDOWN_FIELDS = ("landmark_routes", "vicinity_or_cluster",
                    "label_map_used", "resolution_entries",
                    "group_addresses", "overlay_links", "vrr_entries")


@dataclass
class StateBreakdown:
    node: str
    landmark_routes: int = 0
    vicinity_or_cluster: int = 0
    label_map_used: int = 0
    resolution_entries: int = 0
    group_addresses: int = 0
    overlay_links: int = 0
    vrr_entries: int = 0
    address_bytes: int = 0   # measured size of stored route addresses

    @property
    def total(self):
        return sum(getattr(self, f) for f in BREAKDOWN_FIELDS)

    @property
    def forwarding_entries(self):
        """Entries consulted while forwarding an in-flight packet.

        Landmark routes, vicinity/cluster routes, exercised label
        mappings, and (for VRR) virtual-ring path entries.  Excludes the
        caches consulted only when a source composes a first packet:
        group address caches, resolution shards, and overlay links."""
        return (self.landmark_routes + self.vicinity_or_cluster
                + self.label_map_used + self.vrr_entries)

    def bytes_total(self, name_bytes):
        return (self.total * name_bytes + self.address_bytes
                + self.label_map_used)


def _nd_breakdowns(run, out):
    nd = run.nd
    topo = run.topo
    L = len(nd.lm_idx)
    labels = lr.used_label_counts(nd)
    lm_in_vic = nd.is_landmark[nd.vic_nodes].astype(np.int64)
    for v in range(topo.n):
        lo, hi = nd.vic_indptr[v], nd.vic_indptr[v + 1]
        b = out[v]
        b.landmark_routes = L
        # landmarks already counted above; drop them from the vicinity
        b.vicinity_or_cluster = int(hi - lo) - int(lm_in_vic[lo:hi].sum())
        b.label_map_used = int(labels[v])


def _group_sizes_structural(topo, k):
    """(block index per node, block member counts) for k-bit hash prefixes."""
    block = topo.hashes >> np.uint64(64 - k) if k else \
        np.zeros(topo.n, np.uint64)
    _, inv, counts = np.unique(block, return_inverse=True,
                               return_counts=True)
    return inv, counts


def _disco_breakdowns(run, out):
    topo = run.topo
    nd = run.nd
    name_idx = {nm: i for i, nm in enumerate(topo.names)}
    for nm, links in run.overlay.items():
        out[name_idx[nm]].overlay_links = len(links.neighbor_names())
    for lm_name, shard in run.db.shards.items():
        b = out[name_idx[lm_name]]
        b.resolution_entries = len(shard)
        b.address_bytes += sum(addr.byte_size for addr, _ in shard.values())
    addr_size = np.array([a.byte_size for a in nd.addresses], np.int64)
    if run.table_kind == "structural":
        k = run.ks[topo.names[0]]
        inv, counts = _group_sizes_structural(topo, k)
        per_block_bytes = np.zeros(counts.shape[0], np.int64)
        np.add.at(per_block_bytes, inv, addr_size)
        for v in range(topo.n):
            out[v].group_addresses = int(counts[inv[v]])
            out[v].address_bytes += int(per_block_bytes[inv[v]])
    else:
        for nm, tab in run.tables.items():
            b = out[name_idx[nm]]
            b.group_addresses = len(tab.entries)
            b.address_bytes += sum(e.address.byte_size
                                   for e in tab.entries.values())


def measure_state(run):
    """Per-node StateBreakdown list, in topology name order."""
    topo = run.topo
    out = [StateBreakdown(nm) for nm in topo.names]
    if run.protocol == "pathvector":
        for v, b in enumerate(out):
            b.vicinity_or_cluster = run.pv.table_size(v)
    elif run.protocol == "vrr":
        for v, b in enumerate(out):
            b.vrr_entries = len(run.vrr.entries[v])
    elif run.protocol == "s4":
        st = run.s4
        L = len(st.lm_idx)
        reg = st.registered_counts()
        for v, b in enumerate(out):
            b.landmark_routes = L
            b.vicinity_or_cluster = int(st.cluster_indptr[v + 1]
                                        - st.cluster_indptr[v])
            b.resolution_entries = int(reg[v])
    else:
        _nd_breakdowns(run, out)
        if run.protocol == "disco":
            _disco_breakdowns(run, out)
    return out


@dataclass
class StretchSample:
    s: str
    t: str
    first: float
    later: float
    heuristic: str
    fallback: bool


def sample_pairs(n, seed, n_pairs=None):
    """Seeded (s, t) index pairs, s != t: exhaustive ordered pairs below
    EXHAUSTIVE_BELOW_N nodes, uniform samples otherwise."""
    if n < 2:
        raise ValueError("need at least 2 nodes")
    if n_pairs is None and n < EXHAUSTIVE_BELOW_N:
        return [(s, t) for s in range(n) for t in range(n) if s != t]
    count = DEFAULT_SAMPLED_PAIRS if n_pairs is None else int(n_pairs)
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    pairs = []
    while len(pairs) < count:
        draw = rng.integers(0, n, size=2 * (count - len(pairs)) + 8)
        for i in range(0, draw.shape[0] - 1, 2):
            s, t = int(draw[i]), int(draw[i + 1])
            if s != t:
                pairs.append((s, t))
                if len(pairs) == count:
                    break
    pairs.sort()   # group by source so oracle rows are computed once
    return pairs


def _route_pair(run, s, t, heuristic, oracle):
    """(first RouteResult, later RouteResult) for one ordered pair."""
    if run.protocol == "pathvector":
        first = bl.pathvector_route(s, t, run.pv, phase="first")
        return first, bl.pathvector_route(s, t, run.pv, phase="later")
    if run.protocol == "vrr":
        first = bl.vrr_route(s, t, run.vrr, phase="first")
        return first, bl.vrr_route(s, t, run.vrr, phase="later")
    if run.protocol == "s4":
        first = bl.s4_route(s, t, run.s4, first_packet=True)
        return first, bl.s4_route(s, t, run.s4, first_packet=False)
    if run.protocol == "nddisco":
        first = lr.route_first_packet_nd(s, run.nd.addresses[t], run.nd,
                                         heuristic)
    else:
        first = gp.route_first_packet_disco(
            run.topo.names[s], run.topo.names[t], run.nd, run.tables,
            run.ks, heuristic, db=run.db)
    return first, lr.route_later_packet(s, t, run.nd, first)


def measure_stretch(run, seed=0, n_pairs=None, heuristics=None, pairs=None):
    """Stretch samples for first and later packets over seeded pairs.

    A protocol failing to deliver (only greedy hash routing can) yields an
    infinite-stretch sample flagged as fallback; everything else must
    deliver and is asserted to."""
    topo = run.topo
    if pairs is None:
        pairs = sample_pairs(topo.n, seed, n_pairs)
    if heuristics is None:
        heuristics = (run.config.heuristic,)
    oracle = run.pv.oracle if run.pv is not None else DistanceOracle(topo)
    samples = []
    for s, t in pairs:
        d = oracle.dist_row(s)[t]
        if not np.isfinite(d) or d <= 0.0:
            raise RuntimeError("unreachable or degenerate pair (%d, %d)"
                               % (s, t))
        d = float(d)
        for heuristic in heuristics:
            try:
                first, later = _route_pair(run, s, t, heuristic, oracle)
            except bl.VrrRouteError:
                samples.append(StretchSample(topo.names[s], topo.names[t],
                                             math.inf, math.inf,
                                             heuristic, True))
                continue
            if first.hops[-1] != t or later.hops[-1] != t:
                raise RuntimeError("route did not deliver (%d, %d)" % (s, t))
            samples.append(StretchSample(
                topo.names[s], topo.names[t],
                first.length / d, later.length / d, heuristic,
                bool(getattr(first, "fallback", False))))
    return samples


def summarize_stretch(samples):
    finite = [x for x in samples if math.isfinite(x.first)]
    failed = len(samples) - len(finite)
    if not finite:
        raise ValueError("no delivered samples")
    firsts = [x.first for x in finite]
    laters = [x.later for x in finite]
    return {
        "samples": len(samples),
        "failed": failed,
        "fallbacks": sum(1 for x in finite if x.fallback),
        "first_mean": sum(firsts) / len(firsts),
        "first_max": max(firsts),
        "later_mean": sum(laters) / len(laters),
        "later_max": max(laters),
    }


class CongestionMap:
    """Per-edge traversal counts; edges keyed (min, max)."""

    def __init__(self):
        self.counts = {}
        self.total_hops = 0

    def add_route(self, hops):
        for u, v in zip(hops, hops[1:]):
            key = (u, v) if u < v else (v, u)
            self.counts[key] = self.counts.get(key, 0) + 1
            self.total_hops += 1

    def values_with_idle_edges(self, topo):
        """One count per physical edge, zeros included."""
        out = []
        for u in range(topo.n):
            for v in topo.neighbors(u):
                if u < int(v):
                    out.append(self.counts.get((u, int(v)), 0))
        return out


def measure_congestion(run, seed=0, heuristic=None, pairs=None):
    """Later-packet traversal counts over (s, t) pairs.

    By default every node sends to one seeded random destination; pass
    explicit pairs (sorted by source) for a denser load sample."""
    topo = run.topo
    heuristic = heuristic or run.config.heuristic
    oracle = run.pv.oracle if run.pv is not None else DistanceOracle(topo)
    if pairs is None:
        rng = np.random.Generator(np.random.PCG64(int(seed)))
        pairs = []
        for s in range(topo.n):
            t = int(rng.integers(0, topo.n - 1))
            if t >= s:
                t += 1
            pairs.append((s, t))
    cmap = CongestionMap()
    for s, t in pairs:
        try:
            _, later = _route_pair(run, s, t, heuristic, oracle)
        except bl.VrrRouteError:
            continue
        cmap.add_route(later.hops)
    return cmap


def emit_cdf(samples, field=None):
    """Sorted, deduplicated (value, cumulative fraction) rows."""
    values = [getattr(x, field) for x in samples] if field else list(samples)
    if not values:
        raise ValueError("empty sample set")
    values.sort()
    n = len(values)
    rows = []
    for i, v in enumerate(values):
        if i + 1 < n and values[i + 1] == v:
            continue
        rows.append((v, (i + 1) / n))
    return rows


# -- CSV emission (deterministic: identical inputs, identical bytes) -----------


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def write_state_csv(path, breakdowns):
    header = ("node",) + BREAKDOWN_FIELDS + ("total", "bytes_v4", "bytes_v6")
    rows = [(b.node,) + tuple(getattr(b, f) for f in BREAKDOWN_FIELDS)
            + (b.total, b.bytes_total(4), b.bytes_total(16))
            for b in breakdowns]
    _write_rows(path, header, rows)


def write_stretch_csv(path, samples):
    rows = [(x.s, x.t, x.first, x.later, x.heuristic, int(x.fallback))
            for x in samples]
    _write_rows(path, ("s", "t", "first", "later", "heuristic", "fallback"),
                rows)


def write_congestion_csv(path, cmap, topo):
    rows = [(topo.names[u], topo.names[v], c)
            for (u, v), c in sorted(cmap.counts.items())]
    _write_rows(path, ("u", "v", "count"), rows)


def write_messages_csv(path, counters):
    _write_rows(path, ("node", "class", "count"), counters.rows())


def write_cdf_csv(path, rows):
    _write_rows(path, ("value", "fraction"), rows)
