"""Name-dependent routing core: landmark trees, bounded vicinities,
explicit-route addresses with per-hop neighbor-index labels, first-packet /
handshaken routing, and the route-shortcutting heuristics.

Conventions:

- A node's vicinity is the fixed number of nodes nearest to it, ranked by
  (distance, name hash); landmark routes exist to every landmark.
- Next hops are canonical: the smallest-index neighbor lying on a shortest
  path that the neighbor itself can extend (it keeps the destination in its
  own table).  This matches what iterated table exchange converges to, so
  the static solver and the simulated exchange agree field-for-field.
- Routes are hop lists of node indices; lengths are exact dyadic sums.
"""

from __future__ import annotations

import math

import numpy as np

from . import _kernels
from ._hashing import hash_name

HEURISTICS = ("None", "ToDestination", "ShorterOfForwardReverse",
              "NoPathKnowledge", "UpDownStream", "PathKnowledge")

DENSE_SOLVER_MAX_N = 4096


class AddressDecodeError(ValueError):
    """The label sequence does not describe a walk in this topology (stale
    or corrupt address)."""


def vicinity_size(n_est):
    """Routing-table vicinity size for an estimated network size:
    ceil(sqrt(n_est * log2(n_est))), clamped to n_est - 1."""
    n_est = float(n_est)
    if n_est < 2.0:
        raise ValueError("estimate must be at least 2")
    k = math.ceil(math.sqrt(n_est * math.log2(n_est)))
    return max(1, min(int(k), int(n_est) - 1))


def _hop_bits(degree):
    return (degree - 1).bit_length() if degree > 1 else 0


class Address:
    """(closest landmark, explicit route landmark→node).  Each label is the
    next hop's position among the current node's neighbors in ascending
    name-hash order; a hop out of a degree-d node costs ceil(log2 d) bits."""

    __slots__ = ("landmark", "labels", "bit_size")

    def __init__(self, landmark, labels, bit_size):
        self.landmark = landmark
        self.labels = tuple(int(x) for x in labels)
        self.bit_size = int(bit_size)

    @property
    def byte_size(self):
        return (self.bit_size + 7) // 8

    def __eq__(self, other):
        return (isinstance(other, Address)
                and self.landmark == other.landmark
                and self.labels == other.labels
                and self.bit_size == other.bit_size)

    def __hash__(self):
        return hash((self.landmark, self.labels, self.bit_size))

    def __repr__(self):
        return "Address(%r, %r, %d bits)" % (self.landmark, self.labels,
                                             self.bit_size)


def encode_explicit_route(topo, path):
    """Label sequence + total bit size for a walk (list of node indices)."""
    labels = []
    bits = 0
    for pos in range(len(path) - 1):
        x = path[pos]
        nxt = path[pos + 1]
        positions = topo.hash_order_positions(x)
        label = -1
        for i in range(positions.shape[0]):
            if topo.nbr[positions[i]] == nxt:
                label = i
                break
        if label < 0:
            raise ValueError("not a walk: no edge %d-%d" % (x, nxt))
        labels.append(label)
        bits += _hop_bits(topo.degree(x))
    return tuple(labels), bits


def decode_explicit_route(topo, start, labels):
    """Walk the labels from `start`; returns the node-index path."""
    x = int(start)
    path = [x]
    for label in labels:
        positions = topo.hash_order_positions(x)
        if label < 0 or label >= positions.shape[0]:
            raise AddressDecodeError(
                "label %d out of range at node %d (degree %d)"
                % (label, x, positions.shape[0]))
        x = int(topo.nbr[positions[label]])
        path.append(x)
    return path


class RouteResult:
    """A computed route: hop indices, exact length, and how it was made."""

    def __init__(self, hops, length, phase, heuristic=None,
                 fallback=False, resolved=False, stretch=None):
        self.hops = list(hops)
        self.length = float(length)
        self.phase = phase
        self.heuristic = heuristic
        self.fallback = fallback
        self.resolved = resolved
        self.stretch = stretch

    def fill_stretch(self, true_distance):
        if true_distance > 0.0:
            self.stretch = self.length / true_distance
        else:
            self.stretch = 1.0
        return self

    def hop_names(self, topo):
        return [topo.names[i] for i in self.hops]

    def __repr__(self):
        return ("RouteResult(%d hops, len=%.6g, %s, %s%s%s)"
                % (len(self.hops), self.length, self.phase, self.heuristic,
                   ", fallback" if self.fallback else "",
                   ", resolved" if self.resolved else ""))


def route_length(topo, hops):
    total = 0.0
    for a, b in zip(hops, hops[1:]):
        total += topo.edge_weight(a, b)
    return total


def truncate_at_destination(hops, t):
    """Delivery check: the packet stops the first time it reaches t."""
    for i, x in enumerate(hops):
        if x == t:
            return hops[:i + 1]
    return list(hops)


class NdState:
    """Converged network state for the name-dependent core."""

    def __init__(self, topo, landmark_names, est, kv, lm_idx, lm_dist,
                 lm_next, vic_indptr, vic_nodes, vic_dist, vic_next,
                 control_mode):
        self.topo = topo
        self.landmark_names = tuple(sorted(landmark_names))
        self.est = est
        self.kv = kv
        self.lm_idx = lm_idx
        self.lm_row = {int(g): r for r, g in enumerate(lm_idx)}
        self.lm_dist = lm_dist
        self.lm_next = lm_next
        self.is_landmark = np.zeros(topo.n, bool)
        self.is_landmark[lm_idx] = True
        self.vic_indptr = vic_indptr
        self.vic_nodes = vic_nodes
        self.vic_dist = vic_dist
        self.vic_next = vic_next
        self.control_mode = control_mode

        # closest landmark by (distance, landmark hash)
        lm_hashes = topo.hashes[lm_idx]
        by_hash = np.argsort(lm_hashes, kind="stable")
        best = np.argmin(lm_dist[by_hash], axis=0)  # first min = min hash
        rows = by_hash[best]
        self.closest_lm = lm_idx[rows].astype(np.int32)
        self.closest_lm_dist = lm_dist[rows, np.arange(topo.n)]

        self.addresses = [make_address(v, self) for v in range(topo.n)]

    # -- per-node lookups --------------------------------------------------

    def vicinity_slice(self, v):
        lo = self.vic_indptr[v]
        hi = self.vic_indptr[v + 1]
        return self.vic_nodes[lo:hi], self.vic_dist[lo:hi], self.vic_next[lo:hi]

    def vic_entry(self, v, u):
        """(distance, next hop) if u is in v's vicinity, else None."""
        lo = self.vic_indptr[v]
        hi = self.vic_indptr[v + 1]
        pos = lo + np.searchsorted(self.vic_nodes[lo:hi], u)
        if pos < hi and self.vic_nodes[pos] == u:
            return float(self.vic_dist[pos]), int(self.vic_next[pos])
        return None

    def landmark_distance(self, v, lm):
        return float(self.lm_dist[self.lm_row[int(lm)], v])

    def table(self, name):
        """Dict view of one node's routing table (small-graph/test use)."""
        topo = self.topo
        v = topo.index(name) if isinstance(name, str) else int(name)
        lm_routes = {}
        for g, r in self.lm_row.items():
            path = walk_landmark_path(self, v, g)
            nxt = topo.names[path[1]] if len(path) > 1 else None
            lm_routes[topo.names[g]] = (nxt, [topo.names[x] for x in path],
                                        float(self.lm_dist[r, v]))
        vic_routes = {}
        nodes, dists, nxts = self.vicinity_slice(v)
        for u, d, nx in zip(nodes, dists, nxts):
            path = walk_vicinity_path(self, v, int(u))
            vic_routes[topo.names[u]] = (topo.names[nx],
                                         [topo.names[x] for x in path],
                                         float(d))
        return {
            "landmark_routes": lm_routes,
            "vicinity_routes": vic_routes,
            "control_plane_mode": self.control_mode,
            "address": self.addresses[v],
        }


def make_address(node, state):
    """Encode a node's address: closest landmark plus the reverse of the
    node's shortest path to it."""
    topo = state.topo
    v = topo.index(node) if isinstance(node, str) else int(node)
    lm = int(state.closest_lm[v])
    path_to_lm = walk_landmark_path(state, v, lm)
    labels, bits = encode_explicit_route(topo, path_to_lm[::-1])
    return Address(topo.names[lm], labels, bits)


def walk_landmark_path(state, v, lm):
    """Hop list v..lm following the landmark tree."""
    row = state.lm_row[int(lm)]
    nxt = state.lm_next[row]
    hops = [v]
    x = v
    while x != lm:
        x = int(nxt[x])
        if x < 0 or len(hops) > state.topo.n:
            raise RuntimeError("broken landmark tree")
        hops.append(x)
    return hops


def walk_vicinity_path(state, v, u):
    """Hop list v..u following vicinity next hops.  A landmark can be a
    vicinity member too, but intermediate nodes need not rank it in their
    own vicinity; they reach it through their landmark entry."""
    if state.is_landmark[u]:
        return walk_landmark_path(state, v, u)
    hops = [v]
    x = v
    while x != u:
        entry = state.vic_entry(x, u)
        if entry is None or len(hops) > state.topo.n:
            raise RuntimeError("vicinity chain broken at %d toward %d"
                               % (x, u))
        x = entry[1]
        hops.append(x)
    return hops


# -- convergence -------------------------------------------------------------


def _landmark_trees(topo, lm_idx):
    L = lm_idx.shape[0]
    lm_dist = np.empty((L, topo.n), np.float64)
    lm_next = np.empty((L, topo.n), np.int32)
    for r in range(L):
        root = int(lm_idx[r])
        if topo.unit_weights:
            d = _kernels.bfs_dist(topo.indptr, topo.nbr, root)
        else:
            d = _kernels.dijkstra_dist(topo.indptr, topo.nbr, topo.wt, root)
        lm_dist[r] = d
        lm_next[r] = _kernels.min_pred_tree(topo.indptr, topo.nbr, topo.wt, d)
    return lm_dist, lm_next


def _uniform_vicinities(topo, k):
    """Exact k-nearest vicinity per node via truncated searches, ranking
    by (distance, byte-reversed hash); valid whenever every node uses the
    same k.

    The tie key must be one global order (that is what keeps vicinities
    consistent along shortest paths: whoever beats u at a downstream node
    also beats u here, so forwarding never runs off the table), but it
    must not correlate with the hash prefix: on unit-weight graphs whole
    breadth-first layers tie at the boundary distance, and cutting them
    by the raw hash would starve every vicinity of high-hash nodes — and
    therefore of entire sloppy groups.  Byte-reversing the hash keeps the
    order global while making it independent of the prefix bits."""
    n = topo.n
    rows_nodes = []
    rows_dist = []
    tie = topo.hashes.byteswap()
    for v in range(n):
        cand_n, cand_d = topo.knearest(v, k)
        if cand_n.shape[0] > k:
            sel = np.lexsort((tie[cand_n], cand_d))[:k]
            cand_n = cand_n[sel]
            cand_d = cand_d[sel]
        order = np.argsort(cand_n)
        rows_nodes.append(cand_n[order])
        rows_dist.append(cand_d[order])
    counts = np.fromiter((r.shape[0] for r in rows_nodes), np.int64, count=n)
    vic_indptr = np.zeros(n + 1, np.int64)
    np.cumsum(counts, out=vic_indptr[1:])
    vic_nodes = np.concatenate(rows_nodes).astype(np.int32) if n else \
        np.empty(0, np.int32)
    vic_dist = np.concatenate(rows_dist)
    return vic_indptr, vic_nodes, vic_dist


def _dense_vicinities(topo, kv, is_lm):
    """Round-iterated table exchange for per-node vicinity sizes (estimate
    disagreement).  Keeps exactly what the distributed exchange would:
    entries whose whole next-hop chain also kept them."""
    n = topo.n
    if n > DENSE_SOLVER_MAX_N:
        raise ValueError("per-node estimates disagree; the iterative solver "
                         "is capped at %d nodes" % DENSE_SOLVER_MAX_N)
    tie = topo.hashes.byteswap()      # global, prefix-independent tie order
    INF = np.inf
    dist = np.full((n, n), INF)
    nh = np.full((n, n), -1, np.int32)
    np.fill_diagonal(dist, 0.0)
    cols = np.arange(n)
    max_rounds = 4 * n + 16
    for _round in range(max_rounds):
        snap = dist.copy()
        changed = False
        for v in range(n):
            nbrs = topo.neighbors(v)
            w = topo.neighbor_weights(v)
            cand = snap[nbrs] + w[:, None]
            arg = np.argmin(cand, axis=0)         # first min: smallest index
            row = cand[arg, cols]
            rnh = nbrs[arg].astype(np.int32)
            row[v] = 0.0
            rnh[v] = -1
            finite = np.isfinite(row) & (cols != v)
            others = np.flatnonzero(finite & ~is_lm)
            ranked = np.flatnonzero(finite)
            if ranked.shape[0] > kv[v]:
                sel = np.lexsort((tie[ranked], row[ranked]))
                keep_vic = set(ranked[sel[:kv[v]]].tolist())
                for c in others:
                    if c not in keep_vic:
                        row[c] = INF
                        rnh[c] = -1
            if not np.array_equal(row, dist[v]):
                changed = True
            dist[v] = row
            nh[v] = rnh
        if not changed:
            break
    else:
        raise RuntimeError("table exchange did not settle in %d rounds"
                           % max_rounds)

    rows_nodes = []
    rows_dist = []
    rows_next = []
    for v in range(n):
        finite = np.isfinite(dist[v]) & (cols != v)
        ranked = np.flatnonzero(finite)
        sel = np.lexsort((tie[ranked], dist[v][ranked]))[:kv[v]]
        members = np.sort(ranked[sel])
        rows_nodes.append(members.astype(np.int32))
        rows_dist.append(dist[v][members])
        rows_next.append(nh[v][members])
    counts = np.fromiter((r.shape[0] for r in rows_nodes), np.int64, count=n)
    vic_indptr = np.zeros(n + 1, np.int64)
    np.cumsum(counts, out=vic_indptr[1:])
    return (vic_indptr, np.concatenate(rows_nodes),
            np.concatenate(rows_dist), np.concatenate(rows_next).astype(np.int32))


def converge(topo, landmarks, estimates, control_mode="full"):
    """Compute the converged per-node tables: exact routes to every landmark
    plus the vicinity, sized by each node's own estimate."""
    n = topo.n
    if n < 2:
        raise ValueError("need at least 2 nodes")
    members = set(landmarks.members if hasattr(landmarks, "members")
                  else landmarks)
    if not members:
        raise ValueError("need at least one landmark")
    est = np.array([float(estimates[nm]) for nm in topo.names])
    kv = np.array([min(vicinity_size(e), n - 1) for e in est], np.int64)
    lm_idx = np.array(sorted(topo.index(nm) for nm in members), np.int64)
    lm_dist, lm_next = _landmark_trees(topo, lm_idx)
    is_lm = np.zeros(n, bool)
    is_lm[lm_idx] = True

    if int(kv.min()) == int(kv.max()):
        vic_indptr, vic_nodes, vic_dist = _uniform_vicinities(topo, int(kv[0]))
        vic_next = _kernels.vicinity_next_hops(
            topo.indptr, topo.nbr, topo.wt, vic_indptr, vic_nodes, vic_dist)
        if vic_next.shape[0] and int(vic_next.min()) < 0:
            raise RuntimeError("vicinity next-hop derivation failed")
    else:
        vic_indptr, vic_nodes, vic_dist, vic_next = _dense_vicinities(
            topo, kv, is_lm)

    return NdState(topo, [topo.names[i] for i in lm_idx], est, kv, lm_idx,
                   lm_dist, lm_next, vic_indptr, vic_nodes, vic_dist,
                   vic_next, control_mode)


# -- routing -----------------------------------------------------------------


def _direct_entry(state, x, t):
    """Distance from x to t if x can route to t from its own table."""
    if x == t:
        return 0.0
    if state.is_landmark[t]:
        return state.landmark_distance(x, t)
    entry = state.vic_entry(x, t)
    return None if entry is None else entry[0]


def _walk_direct(state, x, t):
    if x == t:
        return [x]
    if state.is_landmark[t]:
        return walk_landmark_path(state, x, t)
    return walk_vicinity_path(state, x, t)


def nd_route_hops(state, s, t, t_address=None):
    """Base first-packet route (no heuristic): direct if t is a landmark or
    in s's vicinity, else via t's landmark and the explicit route, with
    delivery truncation."""
    if s == t:
        return [s]
    if _direct_entry(state, s, t) is not None:
        return _walk_direct(state, s, t)
    if t_address is None:
        t_address = state.addresses[t]
    lm = state.topo.index(t_address.landmark)
    tail = decode_explicit_route(state.topo, lm, t_address.labels)
    if tail[-1] != t:
        raise AddressDecodeError("address does not terminate at destination")
    hops = walk_landmark_path(state, s, lm) + tail[1:]
    return truncate_at_destination(hops, t)


def _todest(state, hops):
    """At the first node that can route straight to the destination, splice
    that direct path and truncate."""
    t = hops[-1]
    for i, x in enumerate(hops):
        if _direct_entry(state, x, t) is not None:
            return hops[:i] + _walk_direct(state, x, t)
    return list(hops)


def _upstream_downstream(state, hops):
    """To-Destination first, then repeatedly let every node splice a shorter
    known path to any downstream route node (farthest first), until no
    splice improves the route."""
    topo = state.topo
    t = hops[-1]
    hops = _todest(state, hops)
    while True:
        hops = truncate_at_destination(hops, t)
        m = len(hops)
        prefix = [0.0] * m
        for i in range(1, m):
            prefix[i] = prefix[i - 1] + topo.edge_weight(hops[i - 1], hops[i])
        spliced = False
        for i in range(m - 1):
            x = hops[i]
            for j in range(m - 1, i, -1):
                known = _direct_entry(state, x, hops[j])
                if known is None:
                    continue
                if known < prefix[j] - prefix[i]:
                    mid = _walk_direct(state, x, hops[j])
                    hops = hops[:i] + mid + hops[j + 1:]
                    spliced = True
                    break
            if spliced:
                break
        if not spliced:
            return hops


def _shorter(topo, a, b):
    """a unless b is strictly shorter (ties keep the forward route)."""
    return a if route_length(topo, a) <= route_length(topo, b) else b


def apply_shortcut(hops, state, mode):
    """Route-shortening heuristics; the result is never longer than the
    input.  Modes taking the reverse direction rebuild the base route from
    the destination's side of the tables."""
    hops = list(hops)
    topo = state.topo
    if mode is None or mode == "None":
        return hops
    if mode == "ToDestination":
        return _todest(state, hops)
    if mode == "UpDownStream":
        return _upstream_downstream(state, hops)
    s, t = hops[0], hops[-1]
    if mode == "ShorterOfForwardReverse":
        rev = nd_route_hops(state, t, s)
        return _shorter(topo, hops, truncate_at_destination(rev[::-1], t))
    if mode == "NoPathKnowledge":
        fwd = _todest(state, hops)
        rev = _todest(state, nd_route_hops(state, t, s))
        return _shorter(topo, fwd, truncate_at_destination(rev[::-1], t))
    if mode == "PathKnowledge":
        fwd = _upstream_downstream(state, hops)
        rev = _upstream_downstream(state, nd_route_hops(state, t, s))
        return _shorter(topo, fwd, truncate_at_destination(rev[::-1], t))
    raise ValueError("unknown heuristic %r (choose from %s)"
                     % (mode, ", ".join(HEURISTICS)))


def route_first_packet_nd(s, t_address, state, heuristic="None"):
    """First packet under the name-dependent model: the sender already
    holds the destination's address."""
    topo = state.topo
    s = topo.index(s) if isinstance(s, str) else int(s)
    lm = topo.index(t_address.landmark)
    tail = decode_explicit_route(topo, lm, t_address.labels)
    t = tail[-1]
    base = nd_route_hops(state, s, t, t_address)
    hops = apply_shortcut(base, state, heuristic)
    return RouteResult(hops, route_length(topo, hops), "first_packet",
                       heuristic if heuristic else "None")


def handshake(s, t, state):
    """If s is in t's vicinity, t returns its stored path reversed; later
    packets then follow an exact shortest path."""
    topo = state.topo
    s = topo.index(s) if isinstance(s, str) else int(s)
    t = topo.index(t) if isinstance(t, str) else int(t)
    if s == t:
        return [s]
    if state.vic_entry(t, s) is not None:
        return walk_vicinity_path(state, t, s)[::-1]
    if state.is_landmark[s]:
        return walk_landmark_path(state, t, s)[::-1]
    return None


def route_later_packet(s, t, state, first):
    """Best route once the first packet went through: t's reversed exact
    path when the handshake provides one, the plain address route (the
    sender holds the address now, so any discovery detour is gone), or
    the first-packet route, whichever is shortest."""
    topo = state.topo
    s = topo.index(s) if isinstance(s, str) else int(s)
    t = topo.index(t) if isinstance(t, str) else int(t)
    best = list(first.hops)
    best_len = first.length
    direct = apply_shortcut(nd_route_hops(state, s, t), state,
                            first.heuristic)
    if route_length(topo, direct) < best_len:
        best, best_len = direct, route_length(topo, direct)
    hs = handshake(s, t, state)
    if hs is not None and route_length(topo, hs) < best_len:
        best, best_len = hs, route_length(topo, hs)
    return RouteResult(best, best_len, "later_packet",
                       first.heuristic, fallback=first.fallback,
                       resolved=first.resolved)


# -- control-plane accounting -------------------------------------------------


def exported_table_sizes(state):
    """Entries each node announces: landmarks + itself + its vicinity,
    without double-counting overlap."""
    n = state.topo.n
    L = len(state.lm_idx)
    sizes = np.empty(n, np.int64)
    lm_in_vic = state.is_landmark[state.vic_nodes].astype(np.int64)
    for v in range(n):
        lo, hi = state.vic_indptr[v], state.vic_indptr[v + 1]
        overlap = int(lm_in_vic[lo:hi].sum())
        self_extra = 0 if state.is_landmark[v] else 1
        sizes[v] = L + self_extra + (hi - lo) - overlap
    return sizes


def control_plane_entries(state, mode=None):
    """full: everything heard from neighbors; forgetful: only what was
    accepted."""
    mode = mode or state.control_mode
    exported = exported_table_sizes(state)
    if mode == "forgetful":
        return exported.copy()
    if mode != "full":
        raise ValueError("control mode must be full or forgetful")
    topo = state.topo
    out = np.zeros(topo.n, np.int64)
    for v in range(topo.n):
        out[v] = int(exported[topo.neighbors(v)].sum())
    return out


def used_label_counts(state):
    """Per node, how many (label → out-neighbor) mappings are exercised by
    the explicit routes of everybody's addresses."""
    topo = state.topo
    used = [set() for _ in range(topo.n)]
    for w in range(topo.n):
        addr = state.addresses[w]
        path = decode_explicit_route(topo, topo.index(addr.landmark),
                                     addr.labels)
        for x, y in zip(path, path[1:]):
            used[x].add(y)
    return np.array([len(s) for s in used], np.int64)
