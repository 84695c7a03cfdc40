"""Comparison protocols evaluated on the same topologies and seeds as the
main scheme: plain path vector (exact shortest paths, n entries per node),
S4-style cluster routing (landmarks plus clusters bounded by each node's
distance to its closest landmark), and a static virtual-ring scheme in the
VRR family (greedy forwarding over hash-ring neighbor paths)."""

import bisect
import math
from collections import deque

import numpy as np

from ._hashing import derived_u64, hash_name
from . import landmark_routing as lr
from .landmark_routing import RouteResult, route_length
from .resolution import ResolutionRing
from .topology import DistanceOracle


# -- path vector ---------------------------------------------------------------


class PathVectorState:
    """Every node holds an exact route to every destination."""

    def __init__(self, topo):
        self.topo = topo
        self.oracle = DistanceOracle(topo)
        self.message_count = None   # priced by the event-driven backend

    def table_size(self, v):
        return self.topo.n


def pathvector_converge(topo):
    return PathVectorState(topo)


def pathvector_route(s, t, state, phase="first"):
    hops = state.oracle.path(s, t)
    return RouteResult(hops=hops, length=state.oracle.distance(s, t),
                       phase=phase)


# -- S4-style cluster routing ---------------------------------------------------


class S4State:
    """Landmark trees plus per-node clusters: v keeps a route to every w
    strictly closer to v than w is to w's own closest landmark.  Each
    landmark additionally keeps routes to the nodes registered under it
    (those for which it is the closest landmark)."""

    __slots__ = ("topo", "landmark_names", "lm_idx", "lm_row", "lm_dist",
                 "lm_next", "is_landmark", "closest_lm", "closest_lm_dist",
                 "cluster_indptr", "cluster_nodes", "cluster_dists",
                 "ring", "oracle")

    def __init__(self, topo, landmark_names):
        self.topo = topo
        self.landmark_names = tuple(sorted(landmark_names))
        n = topo.n
        self.lm_idx = np.array([topo.index(nm) for nm in self.landmark_names],
                               np.int32)
        self.lm_row = {int(i): r for r, i in enumerate(self.lm_idx)}
        self.lm_dist, self.lm_next = lr._landmark_trees(topo, self.lm_idx)
        self.is_landmark = np.zeros(n, bool)
        self.is_landmark[self.lm_idx] = True

        lm_hashes = topo.hashes[self.lm_idx]
        by_hash = np.argsort(lm_hashes, kind="stable")
        best = np.argmin(self.lm_dist[by_hash], axis=0)
        rows = by_hash[best]
        self.closest_lm = self.lm_idx[rows].astype(np.int32)
        self.closest_lm_dist = self.lm_dist[rows, np.arange(n)]

        self.oracle = DistanceOracle(topo)
        self._build_clusters()
        self.ring = ResolutionRing(self.landmark_names)

    def _build_clusters(self):
        n = self.topo.n
        dmin = self.closest_lm_dist
        member_parts = []
        owner_parts = []
        dist_parts = []
        for w in range(n):
            row = self.oracle.dist_row(w)
            holders = np.nonzero(row < dmin[w])[0]
            if holders.size:
                member_parts.append(np.full(holders.size, w, np.int32))
                owner_parts.append(holders.astype(np.int32))
                dist_parts.append(row[holders])
        if owner_parts:
            owners = np.concatenate(owner_parts)
            members = np.concatenate(member_parts)
            dists = np.concatenate(dist_parts)
            order = np.lexsort((members, owners))
            owners = owners[order]
            self.cluster_nodes = members[order]
            self.cluster_dists = dists[order]
            self.cluster_indptr = np.searchsorted(
                owners, np.arange(n + 1)).astype(np.int64)
        else:
            self.cluster_nodes = np.empty(0, np.int32)
            self.cluster_dists = np.empty(0, np.float64)
            self.cluster_indptr = np.zeros(n + 1, np.int64)

    def cluster_members(self, v):
        return self.cluster_nodes[self.cluster_indptr[v]:
                                  self.cluster_indptr[v + 1]]

    def in_cluster(self, v, w):
        members = self.cluster_members(v)
        pos = np.searchsorted(members, w)
        return pos < members.size and members[pos] == w

    def registered_counts(self):
        """Number of nodes registered under each node (0 off landmarks)."""
        counts = np.zeros(self.topo.n, np.int64)
        uniq, c = np.unique(self.closest_lm, return_counts=True)
        counts[uniq] = c
        return counts


def s4_converge(topo, landmark_names):
    return S4State(topo, landmark_names)


def _s4_knows(state, x, t):
    """Does node x hold a direct route to t?"""
    return (x == t or state.in_cluster(x, t)
            or int(state.closest_lm[t]) == x)


def s4_route(s, t, state, first_packet=False, phase=None):
    """Walk toward t's closest landmark (after a detour to the resolver
    landmark when the sender has no address yet), splicing the direct
    shortest path from the first node that knows one."""
    topo = state.topo
    if phase is None:
        phase = "first" if first_packet else "later"
    if s == t:
        return RouteResult(hops=[s], length=0.0, phase=phase,
                           heuristic="ToDestination")
    targets = []
    if first_packet:
        owner = topo.index(state.ring.owner_of(hash_name(topo.names[t])))
        targets.append(owner)
    targets.append(int(state.closest_lm[t]))
    hops = [s]
    x = s
    ti = 0
    guard = 4 * topo.n + 8
    while x != t:
        if _s4_knows(state, x, t):
            hops.extend(state.oracle.path(x, t)[1:])
            break
        while ti < len(targets) and x == targets[ti]:
            ti += 1
        if ti >= len(targets):
            raise RuntimeError("no route holder found toward %d" % t)
        x = int(state.lm_next[state.lm_row[targets[ti]], x])
        hops.append(x)
        if len(hops) > guard:
            raise RuntimeError("s4 walk did not terminate")
    return RouteResult(hops=hops, length=route_length(topo, hops),
                       phase=phase, heuristic="ToDestination")


# -- static virtual-ring scheme (VRR family) ------------------------------------


class VrrRouteError(RuntimeError):
    """Greedy forwarding got stuck or looped; counted as a failure."""


class VRRState:
    """Virtual hash ring built by joining nodes in breadth-first order from
    a seeded start.  Each joiner sets up physical shortest paths to its ring
    neighbors (up to 2 on each side) among already-joined nodes; every node
    on a set-up path keeps one forwarding entry for it.  Entries from
    superseded neighbor choices are never torn down."""

    def __init__(self, topo):
        self.topo = topo
        self.entries = [dict() for _ in range(topo.n)]  # (a,b) -> next hops
        self.vneighbors = {}
        self.setup_log = []   # (initiating node, path node count)
        self.oracle = DistanceOracle(topo)
        self._pairs = set()

    @property
    def setup_path_nodes(self):
        return [count for _, count in self.setup_log]

    def entry_counts(self):
        return np.array([len(e) for e in self.entries], np.int64)

    def endpoints_known_at(self, x):
        known = set()
        for a, b in self.entries[x]:
            known.add(a)
            known.add(b)
        known.discard(x)
        return known


def _vrr_establish(state, a, b):
    key = (a, b) if a < b else (b, a)
    if key in state._pairs or a == b:
        return
    state._pairs.add(key)
    path = state.oracle.path(key[0], key[1])
    state.setup_log.append((a, len(path)))
    for i, x in enumerate(path):
        toward_a = path[i - 1] if i > 0 else -1
        toward_b = path[i + 1] if i + 1 < len(path) else -1
        state.entries[x][key] = (toward_a, toward_b)


def _ring_wanted(order, pos, r_side=2):
    """Up to r_side distinct nodes on each side of order[pos] (wrapping)."""
    m = len(order)
    wanted = []
    for step in range(1, r_side + 1):
        for p in (pos + step, pos - step):
            cand = order[p % m]
            if cand != order[pos] and cand not in wanted:
                wanted.append(cand)
    return wanted


def vrr_build(topo, seed):
    n = topo.n
    state = VRRState(topo)
    start = derived_u64("vrr-start", seed) % n
    join_order = []
    seen = np.zeros(n, bool)
    seen[start] = True
    q = deque([int(start)])
    while q:
        x = q.popleft()
        join_order.append(x)
        for y in topo.neighbors(x):
            if not seen[y]:
                seen[y] = True
                q.append(int(y))
    h = topo.hashes
    ring = []   # (hash, idx) kept sorted
    for v in join_order:
        bisect.insort(ring, (int(h[v]), v))
        order = [idx for _, idx in ring]
        pos_v = order.index(v)
        m = len(order)
        affected = {pos_v}
        for step in range(1, 3):
            if m > 1:
                affected.add((pos_v + step) % m)
                affected.add((pos_v - step) % m)
        for pos in affected:
            u = order[pos]
            wanted = _ring_wanted(order, pos)
            old = state.vneighbors.get(u, ())
            for w in wanted:
                if w not in old:
                    _vrr_establish(state, u, w)
            state.vneighbors[u] = tuple(wanted)
    return state


def _ring_dist(a, b):
    d = (a - b) & ((1 << 64) - 1)
    return min(d, (1 << 64) - d)


def vrr_route(s, t, state, phase="first"):
    """Greedy over known path endpoints and physical neighbors, always
    toward the candidate hash-ring-closest to the destination."""
    topo = state.topo
    h = topo.hashes
    if s == t:
        return RouteResult(hops=[s], length=0.0, phase=phase)
    hops = [s]
    x = s
    guard = 8 * topo.n + 16
    while x != t:
        best = None
        for nb in topo.neighbors(x):
            nb = int(nb)
            cand = (_ring_dist(int(h[nb]), int(h[t])), int(h[nb]), nb, nb)
            if best is None or cand < best:
                best = cand
        for (a, b), (na, nb_) in state.entries[x].items():
            for endpoint, nxt in ((a, na), (b, nb_)):
                if nxt < 0 or endpoint == x:
                    continue
                cand = (_ring_dist(int(h[endpoint]), int(h[t])),
                        int(h[endpoint]), nxt, endpoint)
                if best is None or cand < best:
                    best = cand
        here = _ring_dist(int(h[x]), int(h[t]))
        if best is None or best[0] >= here:
            raise VrrRouteError("stuck at %d toward %d" % (x, t))
        target = best[3]
        # follow the chosen candidate's path until it ends or a ring-better
        # candidate appears; re-evaluated each hop by the loop above
        x = best[2]
        hops.append(x)
        if len(hops) > guard:
            raise VrrRouteError("loop routing %d -> %d" % (s, t))
    return RouteResult(hops=hops, length=route_length(topo, hops),
                       phase=phase)
