"""Graph model: immutable weighted topology, synthetic generators, edge-list
IO, and the exact shortest-path oracle used as ground truth.

Determinism rules that everything downstream leans on:

- Node index = rank of the node's name in sorted order, so "smallest name"
  and "smallest index" are the same tie-break.
- Edge weights are quantized to multiples of 2**-20 at construction (minimum
  one quantum).  Dyadic weights make float64 path sums exact, so distance
  equality is exact and independent of summation order.
- Adjacency rows are sorted by neighbor index; scanning a row ascending is
  scanning by name.
"""

from __future__ import annotations

import math

import numpy as np

from . import _kernels
from ._hashing import hash_name

WEIGHT_QUANTUM = 2.0 ** -20


class GraphFormatError(ValueError):
    """Bad edge-list input; carries a 1-based line number when applicable."""

    def __init__(self, message, line=None):
        if line is not None:
            message = "line %d: %s" % (line, message)
        super().__init__(message)
        self.line = line


class DisconnectedGraphError(ValueError):
    """Input graph is not connected; carries all component sizes."""

    def __init__(self, sizes):
        sizes = sorted((int(s) for s in sizes), reverse=True)
        super().__init__(
            "graph is not connected: %d components of sizes %s"
            % (len(sizes), sizes)
        )
        self.component_sizes = sizes


class UnknownNodeError(KeyError):
    def __init__(self, name):
        super().__init__(name)
        self.name = name

    def __str__(self):
        return "unknown node %r" % (self.name,)


def quantize_weights(w):
    """Round weights to the dyadic grid; zero rounds up to one quantum."""
    q = np.round(np.asarray(w, dtype=np.float64) / WEIGHT_QUANTUM) * WEIGHT_QUANTUM
    return np.maximum(q, WEIGHT_QUANTUM)


class Topology:
    """Immutable undirected connected weighted graph with flat node names."""

    def __init__(self, names, edges, coords=None):
        """Build from an iterable of names and (u_name, v_name, weight)
        triples.  Duplicate edges collapse keeping the minimum weight."""
        name_list = list(names)
        if not name_list:
            raise ValueError("topology needs at least one node")
        for nm in name_list:
            if not isinstance(nm, str) or nm == "":
                raise ValueError("node names must be nonempty strings")
        if len(set(name_list)) != len(name_list):
            raise ValueError("duplicate node names")
        sorted_names = sorted(name_list)
        index = {nm: i for i, nm in enumerate(sorted_names)}

        best = {}
        for (un, vn, w) in edges:
            try:
                u = index[un]
            except KeyError:
                raise UnknownNodeError(un) from None
            try:
                v = index[vn]
            except KeyError:
                raise UnknownNodeError(vn) from None
            if u == v:
                raise ValueError("self-loop on node %r" % (un,))
            w = float(w)
            if not (w > 0.0) or not math.isfinite(w):
                raise ValueError("edge weight must be positive and finite")
            key = (u, v) if u < v else (v, u)
            if key not in best or w < best[key]:
                best[key] = w

        if best:
            eu = np.fromiter((k[0] for k in best), dtype=np.int64, count=len(best))
            ev = np.fromiter((k[1] for k in best), dtype=np.int64, count=len(best))
            ew = np.fromiter(best.values(), dtype=np.float64, count=len(best))
        else:
            eu = np.empty(0, np.int64)
            ev = np.empty(0, np.int64)
            ew = np.empty(0, np.float64)

        if coords is not None:
            remap = np.empty((len(sorted_names), 2), np.float64)
            for orig_pos, nm in enumerate(name_list):
                remap[index[nm]] = coords[orig_pos]
            coords = remap
        self._init_from(tuple(sorted_names), eu, ev, ew, coords)

    @classmethod
    def from_arrays(cls, sorted_names, u, v, w, coords=None):
        """Fast path for generators: names already sorted, edges distinct,
        endpoints given as indices into sorted_names."""
        self = cls.__new__(cls)
        self._init_from(tuple(sorted_names), np.asarray(u, np.int64),
                        np.asarray(v, np.int64), np.asarray(w, np.float64),
                        None if coords is None else np.asarray(coords, np.float64))
        return self

    def _init_from(self, sorted_names, eu, ev, ew, coords):
        n = len(sorted_names)
        self.names = sorted_names
        self.n = n
        self.m = int(eu.shape[0])
        self._index = {nm: i for i, nm in enumerate(sorted_names)}
        ew = quantize_weights(ew)

        src = np.concatenate([eu, ev])
        dst = np.concatenate([ev, eu])
        ww = np.concatenate([ew, ew])
        order = np.lexsort((dst, src))
        self.nbr = dst[order].astype(np.int32)
        self.wt = ww[order]
        counts = np.bincount(src, minlength=n)
        self.indptr = np.zeros(n + 1, np.int64)
        np.cumsum(counts, out=self.indptr[1:])
        if self.m:
            s_sorted = src[order]
            dup = (s_sorted[1:] == s_sorted[:-1]) & (self.nbr[1:] == self.nbr[:-1])
            if dup.any():
                raise ValueError("duplicate edges in from_arrays input")

        self.coords = coords
        self.hashes = np.array([hash_name(nm) for nm in sorted_names],
                               dtype=np.uint64)
        for arr in (self.nbr, self.wt, self.indptr, self.hashes):
            arr.setflags(write=False)

        labels = _kernels.component_labels(self.indptr, self.nbr)
        ncomp = int(labels.max()) + 1 if n else 0
        if ncomp > 1:
            raise DisconnectedGraphError(np.bincount(labels))

        self._hash_order = None
        self._scratch = None
        self._epoch = 0
        self._unit = bool(self.m == 0 or np.all(self.wt == 1.0))

    # -- lookups ---------------------------------------------------------

    def index(self, name):
        try:
            return self._index[name]
        except KeyError:
            raise UnknownNodeError(name) from None

    def name(self, i):
        return self.names[i]

    def degree(self, i):
        return int(self.indptr[i + 1] - self.indptr[i])

    def neighbors(self, i):
        return self.nbr[self.indptr[i]:self.indptr[i + 1]]

    def neighbor_weights(self, i):
        return self.wt[self.indptr[i]:self.indptr[i + 1]]

    def edge_weight(self, i, j):
        row = self.neighbors(i)
        pos = int(np.searchsorted(row, j))
        if pos >= row.shape[0] or row[pos] != j:
            raise KeyError("no edge %d-%d" % (i, j))
        return float(self.wt[self.indptr[i] + pos])

    def has_edge(self, i, j):
        row = self.neighbors(i)
        pos = int(np.searchsorted(row, j))
        return pos < row.shape[0] and row[pos] == j

    @property
    def unit_weights(self):
        return self._unit

    def iter_edges(self):
        """Yield (u, v, w) index triples once per undirected edge, u < v,
        ascending."""
        for u in range(self.n):
            for t in range(self.indptr[u], self.indptr[u + 1]):
                v = int(self.nbr[t])
                if u < v:
                    yield u, v, float(self.wt[t])

    def hash_order_positions(self, i):
        """Adjacency positions of node i sorted by ascending neighbor hash.

        Positions are absolute offsets into self.nbr; used for the per-hop
        neighbor-index labels in explicit-route addresses."""
        if self._hash_order is None:
            rows = np.repeat(np.arange(self.n, dtype=np.int64),
                             np.diff(self.indptr))
            order = np.lexsort((self.hashes[self.nbr], rows))
            order = order.astype(np.int64)
            order.setflags(write=False)
            self._hash_order = order
        return self._hash_order[self.indptr[i]:self.indptr[i + 1]]

    # -- truncated searches ----------------------------------------------

    def _take_scratch(self):
        if self._scratch is None:
            m2 = self.nbr.shape[0]
            self._scratch = (
                np.empty(self.n, np.float64),          # dist
                np.zeros(self.n, np.int64),            # stamp
                np.empty(m2 + 2, np.float64),          # heap dist
                np.empty(m2 + 2, np.int32),            # heap node
                np.empty(self.n, np.int32),            # out nodes
                np.empty(self.n, np.float64),          # out dist
            )
        self._epoch += 1
        return self._scratch, self._epoch

    def knearest(self, src, k):
        """The >= k nearest other nodes plus all ties with the k-th distance,
        as (node_indices, distances) in settle order."""
        k = min(int(k), self.n - 1)
        if k <= 0:
            return (np.empty(0, np.int32), np.empty(0, np.float64))
        (dist_sc, stamp, hd, hn, out_n, out_d), epoch = self._take_scratch()
        cnt = _kernels.truncated_knearest(
            self.indptr, self.nbr, self.wt, src, k,
            out_n, out_d, dist_sc, stamp, epoch, hd, hn)
        return out_n[:cnt].copy(), out_d[:cnt].copy()

    def within_radius(self, src, radius):
        """All other nodes at distance strictly below `radius`, with
        distances, in settle order."""
        (dist_sc, stamp, hd, hn, out_n, out_d), epoch = self._take_scratch()
        cnt = _kernels.truncated_radius(
            self.indptr, self.nbr, self.wt, src, float(radius),
            out_n, out_d, dist_sc, stamp, epoch, hd, hn)
        return out_n[:cnt].copy(), out_d[:cnt].copy()


class DistanceOracle:
    """Exact single-source shortest paths with per-source caching.

    pred rows are canonical trees: pred[x] = smallest-index neighbor u with
    dist[u] + w(u,x) == dist[x]; walking pred from x yields the canonical
    shortest path from x to the source."""

    def __init__(self, topo, cache_limit=512):
        self.topo = topo
        self.cache_limit = int(cache_limit)
        self._dist = {}
        self._pred = {}
        self._dist_order = []
        self._pred_order = []

    def _evict(self, store, order):
        while len(order) > self.cache_limit:
            victim = order.pop(0)
            store.pop(victim, None)

    def dist_row(self, src):
        row = self._dist.get(src)
        if row is None:
            t = self.topo
            if t.unit_weights:
                row = _kernels.bfs_dist(t.indptr, t.nbr, src)
            else:
                row = _kernels.dijkstra_dist(t.indptr, t.nbr, t.wt, src)
            row.setflags(write=False)
            self._dist[src] = row
            self._dist_order.append(src)
            self._evict(self._dist, self._dist_order)
        return row

    def pred_row(self, src):
        row = self._pred.get(src)
        if row is None:
            t = self.topo
            row = _kernels.min_pred_tree(t.indptr, t.nbr, t.wt,
                                         self.dist_row(src))
            row.setflags(write=False)
            self._pred[src] = row
            self._pred_order.append(src)
            self._evict(self._pred, self._pred_order)
        return row

    def distance(self, s, t):
        return float(self.dist_row(s)[t])

    def path(self, s, t):
        """Canonical shortest path from s to t as index list."""
        pred = self.pred_row(s)
        if pred[t] == _kernels.UNREACHED:
            raise ValueError("no path %d -> %d" % (s, t))
        out = []
        x = t
        while x != s:
            out.append(x)
            x = int(pred[x])
        out.append(s)
        out.reverse()
        return out


def shortest_path(topo, src, dst, oracle=None):
    """Exact shortest path by names: (name list, distance).  Ties broken by
    smallest predecessor name at every step."""
    s = topo.index(src)
    t = topo.index(dst)
    if oracle is None:
        oracle = DistanceOracle(topo)
    if s == t:
        return [src], 0.0
    idx_path = oracle.path(s, t)
    return [topo.names[i] for i in idx_path], oracle.distance(s, t)


# -- generators ------------------------------------------------------------


def _default_names(n):
    return tuple("n%05d" % i for i in range(n))


def _is_connected_arrays(n, u, v):
    src = np.concatenate([u, v])
    dst = np.concatenate([v, u])
    order = np.argsort(src, kind="stable")
    nbr = dst[order].astype(np.int32)
    indptr = np.zeros(n + 1, np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    labels = _kernels.component_labels(indptr, nbr)
    return int(labels.max()) == 0


def _sample_distinct_pair_codes(rng, n, m):
    """m distinct unordered pairs, uniformly, encoded as lo*n+hi.

    Sequential-insertion semantics (first occurrences in arrival order) keep
    the distribution exactly uniform over m-subsets."""
    got = np.empty(0, np.int64)
    while got.shape[0] < m:
        need = m - got.shape[0]
        batch = max(int(need * 1.2) + 16, 64)
        a = rng.integers(0, n, size=batch)
        b = rng.integers(0, n, size=batch)
        keep = a != b
        lo = np.minimum(a, b)[keep]
        hi = np.maximum(a, b)[keep]
        got = np.concatenate([got, lo * n + hi])
        _, first = np.unique(got, return_index=True)
        got = got[np.sort(first)]
    return got[:m]


def gen_gnm(n, avg_degree, seed):
    """Uniform random graph with n nodes and round(n*avg_degree/2) distinct
    edges, resampled until connected.  Unit weights."""
    n = int(n)
    if n < 2:
        raise ValueError("need n >= 2")
    m = int(round(n * avg_degree / 2.0))
    max_m = n * (n - 1) // 2
    if m > max_m:
        raise ValueError("too many edges: %d > %d possible" % (m, max_m))
    if m < n - 1:
        raise ValueError("m = %d can never connect %d nodes" % (m, n))
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    while True:
        codes = _sample_distinct_pair_codes(rng, n, m)
        u = codes // n
        v = codes % n
        if _is_connected_arrays(n, u, v):
            break
    return Topology.from_arrays(_default_names(n), u, v,
                                np.ones(m, np.float64))


def torus_distance(a, b):
    """Euclidean distance on the unit square with wraparound."""
    dx = abs(a[0] - b[0])
    dy = abs(a[1] - b[1])
    if dx > 0.5:
        dx = 1.0 - dx
    if dy > 0.5:
        dy = 1.0 - dy
    return math.hypot(dx, dy)


def gen_geometric(n, avg_degree, seed):
    """Random geometric graph on the unit square with wraparound distances:
    connect pairs within radius r (grown 5% at a time until connected);
    weight = distance.  Wraparound keeps the realized mean degree at the
    target instead of letting boundary-isolated points force the radius up.
    """
    n = int(n)
    if n < 2:
        raise ValueError("need n >= 2")
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    pts = rng.random((n, 2))
    xs = np.ascontiguousarray(pts[:, 0])
    ys = np.ascontiguousarray(pts[:, 1])
    r = math.sqrt(avg_degree / (math.pi * (n - 1)))
    cap = max(64 * n, int(8 * n * max(avg_degree, 1.0)))
    out_u = np.empty(cap, np.int32)
    out_v = np.empty(cap, np.int32)
    while True:
        cnt = -1
        ncells = int(1.0 / r) if r < 1.0 / 3.0 else 0
        if ncells >= 3:
            ix = np.minimum((xs * ncells).astype(np.int64), ncells - 1)
            iy = np.minimum((ys * ncells).astype(np.int64), ncells - 1)
            cell_of = ix * ncells + iy
            cell_items = np.argsort(cell_of, kind="stable").astype(np.int32)
            cell_start = np.zeros(ncells * ncells + 1, np.int64)
            np.cumsum(np.bincount(cell_of, minlength=ncells * ncells),
                      out=cell_start[1:])
            cnt = _kernels.geometric_edges(cell_of, cell_start, cell_items,
                                           xs, ys, ncells, r, out_u, out_v)
            if cnt < 0:
                cap *= 2
                out_u = np.empty(cap, np.int32)
                out_v = np.empty(cap, np.int32)
                continue
            u = out_u[:cnt].astype(np.int64)
            v = out_v[:cnt].astype(np.int64)
        else:
            # radius too large for the grid: brute-force all pairs
            iu, iv = np.triu_indices(n, k=1)
            dx = np.abs(xs[iu] - xs[iv])
            dx = np.minimum(dx, 1.0 - dx)
            dy = np.abs(ys[iu] - ys[iv])
            dy = np.minimum(dy, 1.0 - dy)
            keep = dx * dx + dy * dy <= r * r
            u = iu[keep].astype(np.int64)
            v = iv[keep].astype(np.int64)
        if u.shape[0] >= n - 1 and _is_connected_arrays(n, u, v):
            dx = np.abs(xs[u] - xs[v])
            dx = np.minimum(dx, 1.0 - dx)
            dy = np.abs(ys[u] - ys[v])
            dy = np.minimum(dy, 1.0 - dy)
            return Topology.from_arrays(_default_names(n), u, v,
                                        np.hypot(dx, dy), coords=pts)
        r *= 1.05


def gen_s4_adversarial(sqrt_n):
    """Three-level tree: root with sqrt_n children at weight 1, each child
    with sqrt_n children at weight 2.  n = 1 + sqrt_n + sqrt_n**2."""
    k = int(sqrt_n)
    if k < 2:
        raise ValueError("need sqrt_n >= 2")
    n = 1 + k + k * k
    u = np.empty(k + k * k, np.int64)
    v = np.empty(k + k * k, np.int64)
    w = np.empty(k + k * k, np.float64)
    u[:k] = 0
    v[:k] = np.arange(1, k + 1)
    w[:k] = 1.0
    child = np.repeat(np.arange(1, k + 1), k)
    grand = np.arange(1 + k, n)
    u[k:] = child
    v[k:] = grand
    w[k:] = 2.0
    return Topology.from_arrays(_default_names(n), u, v, w)


# -- edge-list IO -----------------------------------------------------------


def load_edgelist(path, weighted=True, largest_component=False):
    """Read "u v [w]" lines (UTF-8, '#' comments).  Duplicate edges collapse
    to the minimum weight.  Disconnected input is an error unless
    largest_component is set, which keeps the largest component (ties by
    smallest member name)."""
    names = {}
    edges = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) < 2 or len(parts) > 3:
                raise GraphFormatError(
                    "expected 'u v' or 'u v w', got %r" % raw.strip(), lineno)
            un, vn = parts[0], parts[1]
            if un == vn:
                raise GraphFormatError("self-loop on %r" % un, lineno)
            if weighted and len(parts) == 3:
                try:
                    w = float(parts[2])
                except ValueError:
                    raise GraphFormatError(
                        "bad weight %r" % parts[2], lineno) from None
                if not (w > 0.0) or not math.isfinite(w):
                    raise GraphFormatError(
                        "weight must be positive and finite", lineno)
            else:
                w = 1.0
            names[un] = True
            names[vn] = True
            edges.append((un, vn, w))
    if not edges:
        raise GraphFormatError("no edges in %s" % path)

    sorted_names = sorted(names)
    index = {nm: i for i, nm in enumerate(sorted_names)}
    best = {}
    for un, vn, w in edges:
        a, b = index[un], index[vn]
        key = (a, b) if a < b else (b, a)
        if key not in best or w < best[key]:
            best[key] = w
    eu = np.fromiter((k[0] for k in best), np.int64, count=len(best))
    ev = np.fromiter((k[1] for k in best), np.int64, count=len(best))
    ew = np.fromiter(best.values(), np.float64, count=len(best))

    n = len(sorted_names)
    src = np.concatenate([eu, ev])
    dst = np.concatenate([ev, eu])
    order = np.argsort(src, kind="stable")
    indptr = np.zeros(n + 1, np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    labels = _kernels.component_labels(indptr, dst[order].astype(np.int32))
    ncomp = int(labels.max()) + 1
    if ncomp > 1:
        sizes = np.bincount(labels)
        if not largest_component:
            raise DisconnectedGraphError(sizes)
        best_label = min(range(ncomp),
                         key=lambda c: (-int(sizes[c]),
                                        sorted_names[int(np.argmax(labels == c))]))
        keep = labels == best_label
        keep_names = [nm for i, nm in enumerate(sorted_names) if keep[i]]
        remap = {old: new for new, old in
                 enumerate(i for i in range(n) if keep[i])}
        mask = keep[eu] & keep[ev]
        eu = np.array([remap[int(x)] for x in eu[mask]], np.int64)
        ev = np.array([remap[int(x)] for x in ev[mask]], np.int64)
        ew = ew[mask]
        return Topology.from_arrays(tuple(keep_names), eu, ev, ew)
    return Topology.from_arrays(tuple(sorted_names), eu, ev, ew)


def write_edgelist(topo, path):
    """Write one edge per line, ascending by endpoint indices.  Weights are
    omitted when every weight is exactly 1."""
    with open(path, "w", encoding="utf-8") as fh:
        if topo.unit_weights:
            for u, v, _ in topo.iter_edges():
                fh.write("%s %s\n" % (topo.names[u], topo.names[v]))
        else:
            for u, v, w in topo.iter_edges():
                fh.write("%s %s %s\n" % (topo.names[u], topo.names[v],
                                         repr(w)))
