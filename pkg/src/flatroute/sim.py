"""Two execution backends over the same protocol constructors.

run_static computes post-convergence state directly; run_des exchanges the
actual route announcements in deterministic synchronous rounds (uniform
per-hop latency means the event heap degenerates into rounds), counting
every transmission, then prices resolution inserts, overlay lookups, and
group dissemination.  Both backends must land on field-identical state;
state_fingerprint serializes the converged fields so tests can compare
them byte-for-byte."""

import hashlib
from dataclasses import dataclass

import numpy as np

from . import baselines as bl
from . import groups as gp
from . import landmark_routing as lr
from . import names as nameplane
from . import resolution as rs

PROTOCOLS = ("pathvector", "s4", "vrr", "nddisco", "disco")


@dataclass
class RunConfig:
    fingers: int = 1
    error_model: str = "none"
    heuristic: str = "None"
    des_cap: int = 2048
    event_budget: int = 300_000_000
    structural_min_n: int = 4096   # static disco floods below this size
    resolution_time: float = 0.0


class MessageCounters:
    """Per-node transmission counts by message class."""

    def __init__(self, names):
        self.names = list(names)
        self.by_class = {}

    def array(self, cls):
        arr = self.by_class.get(cls)
        if arr is None:
            arr = np.zeros(len(self.names), np.int64)
            self.by_class[cls] = arr
        return arr

    def add(self, cls, node, k=1):
        self.array(cls)[node] += k

    def class_total(self, cls):
        arr = self.by_class.get(cls)
        return 0 if arr is None else int(arr.sum())

    def total(self):
        return sum(int(a.sum()) for a in self.by_class.values())

    def per_node_total(self):
        out = np.zeros(len(self.names), np.int64)
        for a in self.by_class.values():
            out += a
        return out

    def rows(self):
        """(node, class, count) rows in deterministic order, zeros kept."""
        out = []
        for cls in sorted(self.by_class):
            arr = self.by_class[cls]
            for i, nm in enumerate(self.names):
                out.append((nm, cls, int(arr[i])))
        return out


class SimRun:
    """Everything a converged run produced, for routing and metrics."""

    def __init__(self, topo, protocol, config, seed, backend):
        self.topo = topo
        self.protocol = protocol
        self.config = config
        self.seed = seed
        self.backend = backend
        self.estimates = None
        self.landmarks = None
        self.nd = None          # landmark+vicinity state (nddisco, disco)
        self.pv = None
        self.s4 = None
        self.vrr = None
        self.ks = None          # group prefix lengths (disco)
        self.overlay = None
        self.tables = None
        self.table_kind = None  # "flood" | "structural"
        self.db = None
        self.counters = None
        self.des_routes = None  # raw converged tables from the message run


def _check_protocol(protocol):
    if protocol not in PROTOCOLS:
        raise ValueError("unknown protocol %r (choose from %s)"
                         % (protocol, "|".join(PROTOCOLS)))


def _elect(topo, estimates, seed):
    return nameplane.elect_landmarks(list(topo.names), estimates, seed)


def _group_ks(estimates):
    return {nm: gp.group_k(est) for nm, est in estimates.items()}


def _addresses_by_name(topo, nd):
    return {topo.names[i]: nd.addresses[i] for i in range(topo.n)}


def _fill_resolution(run, counters=None):
    topo, nd, cfg = run.topo, run.nd, run.config
    ring = rs.ResolutionRing(nd.landmark_names)
    db = rs.ResolutionDb(ring)
    addrs = _addresses_by_name(topo, nd)
    for i, nm in enumerate(topo.names):
        owner = db.insert(nm, addrs[nm], now=cfg.resolution_time)
        if counters is not None:
            walk = lr.walk_landmark_path(nd, i, topo.index(owner))
            counters.add("resolution.insert", i, len(walk) - 1)
    run.db = db
    return addrs


def _build_group_plane(run, counters=None):
    topo, cfg = run.topo, run.config
    names = list(topo.names)
    addrs = _fill_resolution(run, counters)
    run.ks = _group_ks(run.estimates)
    run.overlay = gp.build_overlay(names, run.estimates, run.db,
                                   cfg.fingers, run.seed)
    if counters is not None:
        ring = run.db.ring
        for i, nm in enumerate(names):
            links = run.overlay[nm]
            for w in links.fingers:
                owner = ring.owner_of(int(topo.hashes[topo.index(w)]))
                walk = lr.walk_landmark_path(run.nd, i, topo.index(owner))
                counters.add("overlay.lookup", i, 2 * (len(walk) - 1))
            # opening each picked overlay connection costs a request and
            # an accept across the underlay
            for w in (links.successor,) + links.fingers:
                t = topo.index(w)
                if t == i:
                    continue
                rt = lr.route_first_packet_nd(i, run.nd.addresses[t],
                                              run.nd, "None")
                counters.add("overlay.connect", i, 2 * (len(rt.hops) - 1))
    uniform_k = len(set(run.ks.values())) == 1
    if (counters is None and uniform_k
            and topo.n >= cfg.structural_min_n):
        run.tables = gp.structural_group_tables(names, run.ks, addrs)
        run.table_kind = "structural"
    else:
        sent = {} if counters is not None else None
        run.tables, _ = gp.disseminate(run.overlay, run.ks, addrs, sent)
        run.table_kind = "flood"
        if counters is not None:
            for nm, k in sent.items():
                counters.add("group.announce", topo.index(nm), k)


def run_static(topo, protocol, config=None, seed=0):
    _check_protocol(protocol)
    cfg = config or RunConfig()
    run = SimRun(topo, protocol, cfg, seed, "static")
    run.estimates = nameplane.estimate_n(topo, cfg.error_model, seed)
    if protocol == "pathvector":
        run.pv = bl.pathvector_converge(topo)
    elif protocol == "vrr":
        run.vrr = bl.vrr_build(topo, seed)
    elif protocol == "s4":
        run.landmarks = _elect(topo, run.estimates, seed)
        run.s4 = bl.s4_converge(topo, run.landmarks.members)
    else:
        run.landmarks = _elect(topo, run.estimates, seed)
        run.nd = lr.converge(topo, run.landmarks, run.estimates)
        if protocol == "disco":
            _build_group_plane(run)
    return run


# -- message-level route convergence -------------------------------------------


def _flood_one_dest(topo, t, sent, cap=None):
    """Synchronous-round flood of one destination's route announcements.
    Nodes re-announce to every neighbor whenever their best distance to t
    changes; `cap` (strict) prunes both storage and propagation.  Returns
    (dist, next) and adds per-node send counts to `sent`."""
    n = topo.n
    indptr, nbr, wt = topo.indptr, topo.nbr, topo.wt
    dist = np.full(n, np.inf)
    nxt = np.full(n, -1, np.int64)
    if cap is not None and not 0.0 < cap:
        return dist, nxt
    dist[t] = 0.0
    nxt[t] = t
    frontier = np.array([t], np.int64)
    while frontier.size:
        degs = (indptr[frontier + 1] - indptr[frontier]).astype(np.int64)
        np.add.at(sent, frontier, degs)
        recv_parts, cand_parts, snd_parts = [], [], []
        for v in frontier:
            lo, hi = int(indptr[v]), int(indptr[v + 1])
            recv_parts.append(nbr[lo:hi])
            cand_parts.append(wt[lo:hi] + dist[v])
            snd_parts.append(np.full(hi - lo, v, np.int64))
        recv = np.concatenate(recv_parts).astype(np.int64)
        cand = np.concatenate(cand_parts)
        snd = np.concatenate(snd_parts)
        order = np.lexsort((snd, cand, recv))
        recv, cand, snd = recv[order], cand[order], snd[order]
        keep = np.ones(recv.size, bool)
        keep[1:] = recv[1:] != recv[:-1]
        recv, cand, snd = recv[keep], cand[keep], snd[keep]
        better = cand < dist[recv]
        tie = (cand == dist[recv]) & (snd < nxt[recv])
        if cap is not None:
            better &= cand < cap
            tie &= cand < cap
        adopt = better | tie
        dist[recv[adopt]] = cand[adopt]
        nxt[recv[adopt]] = snd[adopt]
        frontier = recv[better]
    return dist, nxt


def _des_pathvector(topo, counters):
    n = topo.n
    sent = counters.array("route.table")
    dist = np.empty((n, n))
    nxt = np.empty((n, n), np.int64)
    for t in range(n):
        dist[t], nxt[t] = _flood_one_dest(topo, t, sent)
    return dist, nxt


def _des_landmark_routes(topo, lm_idx, counters):
    sent = counters.array("route.landmark")
    L = len(lm_idx)
    lm_dist = np.empty((L, topo.n))
    lm_next = np.empty((L, topo.n), np.int64)
    for r, root in enumerate(lm_idx):
        lm_dist[r], lm_next[r] = _flood_one_dest(topo, int(root), sent)
    return lm_dist, lm_next


def _des_vicinities(topo, kv, counters):
    """Joint synchronous-round exchange of k-best route tables: each round
    every node merges the announcements that arrived, cuts its table back
    to its own k best by (distance, byte-reversed name hash), and announces
    entries whose distance changed.  Returns per-node dict
    dest -> (dist, next)."""
    n = topo.n
    indptr, nbr, wt = topo.indptr, topo.nbr, topo.wt
    tie = topo.hashes.byteswap()
    sent = counters.array("route.table")
    tables = [dict() for _ in range(n)]
    prev = [dict() for _ in range(n)]
    anns = [(v, v, 0.0) for v in range(n)]
    budget = 0
    while anns:
        inbox = {}
        for s, dest, d in anns:
            lo, hi = int(indptr[s]), int(indptr[s + 1])
            sent[s] += hi - lo
            budget += hi - lo
            for e in range(lo, hi):
                x = int(nbr[e])
                if x == dest:
                    continue
                cand = d + float(wt[e])
                box = inbox.setdefault(x, {})
                cur = box.get(dest)
                if cur is None or (cand, s) < cur:
                    box[dest] = (cand, s)
        anns = []
        for x in sorted(inbox):
            tab = tables[x]
            for dest, (cand, s) in inbox[x].items():
                cur = tab.get(dest)
                if cur is None or cand < cur[0] or \
                        (cand == cur[0] and s < cur[1]):
                    tab[dest] = (cand, s)
            if len(tab) > kv[x]:
                ranked = sorted(tab, key=lambda d: (tab[d][0], int(tie[d])))
                for dest in ranked[kv[x]:]:
                    del tab[dest]
            px = prev[x]
            for dest, (d, _) in tab.items():
                if px.get(dest) != d:
                    px[dest] = d
                    anns.append((x, dest, d))
        if budget > 10 ** 9:
            raise RuntimeError("route exchange exceeded its budget")
    return tables


def _des_nd(topo, run, counters):
    """Message-level landmark + vicinity convergence; returns raw tables
    and installs the equivalent static state for routing."""
    run.landmarks = _elect(topo, run.estimates, run.seed)
    est_values = {round(v, 9) for v in run.estimates.values()}
    if len(est_values) != 1:
        raise ValueError("the message-level backend needs one shared size "
                         "estimate (use error_model none or synopsis)")
    n = topo.n
    kv = np.minimum(lr.vicinity_size(next(iter(run.estimates.values()))),
                    n - 1)
    kv = np.full(n, int(kv), np.int64)
    lm_idx = np.array(sorted(topo.index(nm)
                             for nm in run.landmarks.members), np.int64)
    lm_dist, lm_next = _des_landmark_routes(topo, lm_idx, counters)
    vic = _des_vicinities(topo, kv, counters)
    run.nd = lr.converge(topo, run.landmarks, run.estimates)
    return {"lm_idx": lm_idx, "lm_dist": lm_dist, "lm_next": lm_next,
            "vicinity": vic}


def _des_s4(topo, run, counters):
    run.landmarks = _elect(topo, run.estimates, run.seed)
    run.s4 = bl.s4_converge(topo, run.landmarks.members)
    state = run.s4
    lm_dist, lm_next = _des_landmark_routes(topo, state.lm_idx, counters)
    sent = counters.array("route.table")
    cluster = [dict() for _ in range(topo.n)]
    dmin = state.closest_lm_dist
    for w in range(topo.n):
        dist, _ = _flood_one_dest(topo, w, sent, cap=float(dmin[w]))
        for v in np.nonzero(np.isfinite(dist))[0]:
            cluster[int(v)][w] = float(dist[v])
    for t in range(topo.n):
        root = int(state.closest_lm[t])
        walk = _walk_rows(lm_next, state.lm_row[root], t, root, topo.n)
        counters.add("s4.register", t, len(walk) - 1)
    return {"lm_idx": state.lm_idx, "lm_dist": lm_dist, "lm_next": lm_next,
            "cluster": cluster}


def _walk_rows(lm_next, row, v, root, n):
    hops = [v]
    x = v
    while x != root:
        x = int(lm_next[row][x])
        hops.append(x)
        if len(hops) > n:
            raise RuntimeError("broken tree walk")
    return hops


def _des_vrr(topo, run, counters):
    run.vrr = bl.vrr_build(topo, run.seed)
    for initiator, node_count in run.vrr.setup_log:
        counters.add("vrr.setup", initiator, node_count - 1)
    return None


def run_des(topo, protocol, config=None, seed=0):
    _check_protocol(protocol)
    cfg = config or RunConfig()
    if topo.n > cfg.des_cap:
        raise ValueError("message-level backend capped at %d nodes"
                         % cfg.des_cap)
    run = SimRun(topo, protocol, cfg, seed, "des")
    run.estimates = nameplane.estimate_n(topo, cfg.error_model, seed)
    counters = MessageCounters(topo.names)
    run.counters = counters
    if protocol == "pathvector":
        dist, nxt = _des_pathvector(topo, counters)
        run.pv = bl.pathvector_converge(topo)
        run.des_routes = {"dist": dist, "next": nxt}
    elif protocol == "vrr":
        run.des_routes = _des_vrr(topo, run, counters)
    elif protocol == "s4":
        run.des_routes = _des_s4(topo, run, counters)
    else:
        run.des_routes = _des_nd(topo, run, counters)
        if protocol == "disco":
            _build_group_plane(run, counters)
    if counters.total() > cfg.event_budget:
        raise RuntimeError("event budget exceeded: %d messages"
                           % counters.total())
    return run


# -- converged-state serialization ----------------------------------------------


def _hash_arr(h, arr):
    h.update(np.ascontiguousarray(arr).tobytes())


def _norm_tree(row, root):
    """Static trees mark the root -1 and unreached -2; the message engine
    stores the root itself and -1.  Normalize to the message convention."""
    out = np.asarray(row, np.int64).copy()
    out[out == -2] = -1
    out[root] = root
    return out


def _fp_landmarks(h, lm_idx, lm_dist, lm_next, normalize=False):
    lm_idx = np.asarray(lm_idx, np.int64)
    _hash_arr(h, lm_idx)
    _hash_arr(h, np.asarray(lm_dist, np.float64))
    if normalize:
        rows = [_norm_tree(lm_next[r], int(lm_idx[r]))
                for r in range(len(lm_idx))]
        _hash_arr(h, np.stack(rows))
    else:
        _hash_arr(h, np.asarray(lm_next, np.int64))


def _fp_table_dicts(h, tables):
    for x, tab in enumerate(tables):
        h.update(b"node%d" % x)
        for dest in sorted(tab):
            val = tab[dest]
            if isinstance(val, tuple):
                h.update(b"%d:%s:%d" % (dest, repr(val[0]).encode(),
                                        val[1]))
            else:
                h.update(b"%d:%s" % (dest, repr(val).encode()))


def state_fingerprint(run):
    """Canonical digest of the converged field state (message counters are
    excluded; they exist only on the message-level backend)."""
    topo = run.topo
    h = hashlib.sha256()
    h.update(run.protocol.encode())
    h.update(b"|n=%d" % topo.n)
    if run.protocol == "pathvector":
        if run.des_routes is not None:
            _hash_arr(h, run.des_routes["dist"])
            _hash_arr(h, run.des_routes["next"])
        else:
            dist = np.stack([run.pv.oracle.dist_row(t)
                             for t in range(topo.n)])
            nxt = np.stack([_norm_tree(run.pv.oracle.pred_row(t), t)
                            for t in range(topo.n)])
            _hash_arr(h, dist)
            _hash_arr(h, nxt)
    elif run.protocol == "vrr":
        st = run.vrr
        for v in range(topo.n):
            h.update(repr(sorted(st.vneighbors.get(v, ()))).encode())
            h.update(repr(sorted(st.entries[v].items())).encode())
    elif run.protocol == "s4":
        st = run.s4
        if run.des_routes is not None:
            d = run.des_routes
            _fp_landmarks(h, d["lm_idx"], d["lm_dist"], d["lm_next"])
            _fp_table_dicts(h, d["cluster"])
        else:
            _fp_landmarks(h, st.lm_idx, st.lm_dist, st.lm_next,
                          normalize=True)
            tabs = [dict() for _ in range(topo.n)]
            for v in range(topo.n):
                lo, hi = st.cluster_indptr[v], st.cluster_indptr[v + 1]
                for w, dw in zip(st.cluster_nodes[lo:hi],
                                 st.cluster_dists[lo:hi]):
                    tabs[v][int(w)] = float(dw)
            _fp_table_dicts(h, tabs)
    else:
        if run.des_routes is not None:
            d = run.des_routes
            _fp_landmarks(h, d["lm_idx"], d["lm_dist"], d["lm_next"])
            _fp_table_dicts(h, d["vicinity"])
        else:
            nd = run.nd
            _fp_landmarks(h, nd.lm_idx, nd.lm_dist, nd.lm_next,
                          normalize=True)
            tabs = [dict() for _ in range(topo.n)]
            for v in range(topo.n):
                lo, hi = nd.vic_indptr[v], nd.vic_indptr[v + 1]
                for w, dw, nx in zip(nd.vic_nodes[lo:hi],
                                     nd.vic_dist[lo:hi],
                                     nd.vic_next[lo:hi]):
                    tabs[v][int(w)] = (float(dw), int(nx))
            _fp_table_dicts(h, tabs)
        if run.protocol == "disco":
            h.update(repr(sorted(run.ks.items())).encode())
            for nm in sorted(run.overlay):
                ln = run.overlay[nm]
                h.update(repr((nm, ln.successor, ln.predecessor,
                               ln.fingers)).encode())
            if run.table_kind == "flood":
                for nm in sorted(run.tables):
                    tab = run.tables[nm]
                    for subj in sorted(tab.entries):
                        e = tab.entries[subj]
                        h.update(repr((nm, subj, e.learned_from,
                                       e.hops)).encode())
            for lm in sorted(run.db.shards):
                h.update(repr((lm, sorted(run.db.shards[lm]))).encode())
    return h.hexdigest()


def announcement_hop_stats(run):
    """(mean, max) overlay hops traveled by the address announcements that
    ended up in the group tables."""
    if run.table_kind != "flood":
        raise ValueError("hop stats need flooded group tables")
    hops = []
    for nm, tab in run.tables.items():
        for subj, e in tab.entries.items():
            if subj != nm:
                hops.append(e.hops)
    if not hops:
        return 0.0, 0
    return sum(hops) / len(hops), max(hops)
