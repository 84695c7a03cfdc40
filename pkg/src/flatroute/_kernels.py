"""Numba kernels for the graph-heavy inner loops.

Graphs are held in CSR form (indptr int64, nbr int32, wt float64) with
adjacency rows sorted by neighbor index.  Node indices follow lexicographic
name order, so "smallest index" always means "smallest name"; every
tie-break below leans on that.

Edge weights are quantized to multiples of 2**-20 when a Topology is built,
which makes all path sums exact in float64.  The canonical predecessor pass
(`min_pred_tree`) relies on that exactness: dist[u] + w == dist[x] holds
bit-for-bit on every shortest path, never only approximately.
"""

from __future__ import annotations

import numpy as np
from numba import njit

NO_PRED = np.int32(-1)       # tree root
UNREACHED = np.int32(-2)


@njit(cache=True, inline="always")
def _heap_push(hd, hn, size, d, v):
    i = size
    hd[i] = d
    hn[i] = v
    while i > 0:
        parent = (i - 1) >> 1
        if hd[parent] <= hd[i]:
            break
        hd[parent], hd[i] = hd[i], hd[parent]
        hn[parent], hn[i] = hn[i], hn[parent]
        i = parent
    return size + 1


@njit(cache=True, inline="always")
def _heap_pop(hd, hn, size):
    d = hd[0]
    v = hn[0]
    size -= 1
    if size > 0:
        hd[0] = hd[size]
        hn[0] = hn[size]
        i = 0
        while True:
            left = 2 * i + 1
            if left >= size:
                break
            small = left
            right = left + 1
            if right < size and hd[right] < hd[left]:
                small = right
            if hd[i] <= hd[small]:
                break
            hd[i], hd[small] = hd[small], hd[i]
            hn[i], hn[small] = hn[small], hn[i]
            i = small
    return d, v, size


@njit(cache=True)
def dijkstra_dist(indptr, nbr, wt, src):
    """Single-source shortest-path distances; INF where unreachable."""
    n = indptr.shape[0] - 1
    m2 = nbr.shape[0]
    dist = np.full(n, np.inf)
    done = np.zeros(n, np.uint8)
    hd = np.empty(m2 + 1, np.float64)
    hn = np.empty(m2 + 1, np.int32)
    size = 0
    dist[src] = 0.0
    size = _heap_push(hd, hn, size, 0.0, src)
    while size > 0:
        d, u, size = _heap_pop(hd, hn, size)
        if done[u]:
            continue
        done[u] = 1
        for j in range(indptr[u], indptr[u + 1]):
            v = nbr[j]
            if done[v]:
                continue
            cand = d + wt[j]
            if cand < dist[v]:
                dist[v] = cand
                size = _heap_push(hd, hn, size, cand, v)
    return dist


@njit(cache=True)
def bfs_dist(indptr, nbr, src):
    """Hop distances for unit-weight graphs; INF where unreachable."""
    n = indptr.shape[0] - 1
    dist = np.full(n, np.inf)
    queue = np.empty(n, np.int32)
    head = 0
    tail = 0
    dist[src] = 0.0
    queue[tail] = src
    tail += 1
    while head < tail:
        u = queue[head]
        head += 1
        du = dist[u] + 1.0
        for j in range(indptr[u], indptr[u + 1]):
            v = nbr[j]
            if dist[v] == np.inf:
                dist[v] = du
                queue[tail] = v
                tail += 1
    return dist


@njit(cache=True)
def min_pred_tree(indptr, nbr, wt, dist):
    """Canonical shortest-path tree for a known distance field.

    pred[x] is the smallest-index neighbor u with dist[u] + w(u,x) == dist[x],
    i.e. the forwarding next hop from x toward the root of `dist`.  Exact
    float comparison is safe because weights are dyadic (see module docstring).
    """
    n = indptr.shape[0] - 1
    pred = np.full(n, UNREACHED, np.int32)
    for x in range(n):
        dx = dist[x]
        if dx == np.inf:
            continue
        if dx == 0.0:
            pred[x] = NO_PRED
            continue
        for j in range(indptr[x], indptr[x + 1]):
            u = nbr[j]
            if dist[u] + wt[j] == dx:
                pred[x] = u
                break
    return pred


@njit(cache=True)
def truncated_knearest(indptr, nbr, wt, src, k, out_nodes, out_dist,
                       dist_sc, stamp, epoch, hd, hn):
    """Settle at least the k nearest nodes to src (src excluded), plus every
    node tied with the k-th distance so the caller can break ties by hash.

    dist_sc/stamp are persistent scratch arrays (epoch-stamped so no O(n)
    reset per call); hd/hn are persistent heap storage.  Returns the number
    of settled non-source nodes written to out_nodes/out_dist.
    """
    size = 0
    count = 0
    boundary = np.inf
    dist_sc[src] = 0.0
    stamp[src] = epoch
    size = _heap_push(hd, hn, size, 0.0, src)
    done_mark = -epoch  # done encoded as negative stamp
    while size > 0:
        d, u, size = _heap_pop(hd, hn, size)
        if stamp[u] == done_mark:
            continue
        if count >= k and d > boundary:
            break
        stamp[u] = done_mark
        if u != src:
            out_nodes[count] = u
            out_dist[count] = d
            count += 1
            if count == k:
                boundary = d
        for j in range(indptr[u], indptr[u + 1]):
            v = nbr[j]
            if stamp[v] == done_mark:
                continue
            cand = d + wt[j]
            if stamp[v] != epoch or cand < dist_sc[v]:
                dist_sc[v] = cand
                stamp[v] = epoch
                size = _heap_push(hd, hn, size, cand, v)
    return count


@njit(cache=True)
def truncated_radius(indptr, nbr, wt, src, radius, out_nodes, out_dist,
                     dist_sc, stamp, epoch, hd, hn):
    """Settle every node with distance to src strictly below `radius`
    (src excluded).  Same scratch conventions as truncated_knearest."""
    size = 0
    count = 0
    dist_sc[src] = 0.0
    stamp[src] = epoch
    size = _heap_push(hd, hn, size, 0.0, src)
    done_mark = -epoch
    while size > 0:
        d, u, size = _heap_pop(hd, hn, size)
        if stamp[u] == done_mark:
            continue
        if d >= radius:
            break
        stamp[u] = done_mark
        if u != src:
            out_nodes[count] = u
            out_dist[count] = d
            count += 1
        for j in range(indptr[u], indptr[u + 1]):
            v = nbr[j]
            if stamp[v] == done_mark:
                continue
            cand = d + wt[j]
            if cand < radius and (stamp[v] != epoch or cand < dist_sc[v]):
                dist_sc[v] = cand
                stamp[v] = epoch
                size = _heap_push(hd, hn, size, cand, v)
    return count


@njit(cache=True)
def component_labels(indptr, nbr):
    """Connected component label per node (labels are 0..ncomp-1)."""
    n = indptr.shape[0] - 1
    labels = np.full(n, -1, np.int32)
    queue = np.empty(n, np.int32)
    comp = 0
    for s in range(n):
        if labels[s] >= 0:
            continue
        labels[s] = comp
        queue[0] = s
        head = 0
        tail = 1
        while head < tail:
            u = queue[head]
            head += 1
            for j in range(indptr[u], indptr[u + 1]):
                v = nbr[j]
                if labels[v] < 0:
                    labels[v] = comp
                    queue[tail] = v
                    tail += 1
        comp += 1
    return labels


@njit(cache=True)
def geometric_edges(cell_of, cell_start, cell_items, xs, ys, ncells,
                    radius, out_u, out_v):
    """Collect all point pairs within torus distance `radius` using a
    uniform grid with wraparound (requires ncells >= 3, cell side >= radius).

    Writes edges (u < v) into out_u/out_v and returns the count, or -1 if
    the output arrays are too small (caller grows them and retries).
    """
    r2 = radius * radius
    cap = out_u.shape[0]
    count = 0
    n = xs.shape[0]
    for u in range(n):
        cu = cell_of[u]
        cx = cu // ncells
        cy = cu % ncells
        for dx in range(-1, 2):
            nx = (cx + dx) % ncells
            for dy in range(-1, 2):
                ny = (cy + dy) % ncells
                cell = nx * ncells + ny
                for t in range(cell_start[cell], cell_start[cell + 1]):
                    v = cell_items[t]
                    if v <= u:
                        continue
                    ddx = abs(xs[u] - xs[v])
                    if ddx > 0.5:
                        ddx = 1.0 - ddx
                    ddy = abs(ys[u] - ys[v])
                    if ddy > 0.5:
                        ddy = 1.0 - ddy
                    if ddx * ddx + ddy * ddy <= r2:
                        if count >= cap:
                            return -1
                        out_u[count] = u
                        out_v[count] = v
                        count += 1
    return count


@njit(cache=True)
def vicinity_next_hops(indptr, nbr, wt, vic_indptr, vic_nodes, vic_dist):
    """Canonical next hop for every (owner, vicinity member) pair.

    vic_* is a CSR of each node's vicinity: vic_nodes sorted by node index
    within each row, vic_dist the exact distances.  For owner v and member u,
    the next hop is the smallest-index neighbor x of v with
    wt(v,x) + d(x,u) == d(v,u); d(x,u) is read from x's own vicinity row
    (membership holds along every shortest path, or x == u).  Returns an
    int32 array parallel to vic_nodes.
    """
    n = indptr.shape[0] - 1
    out = np.full(vic_nodes.shape[0], -1, np.int32)
    for v in range(n):
        for t in range(vic_indptr[v], vic_indptr[v + 1]):
            u = vic_nodes[t]
            du = vic_dist[t]
            for j in range(indptr[v], indptr[v + 1]):
                x = nbr[j]
                w = wt[j]
                if x == u:
                    if w == du:
                        out[t] = x
                        break
                    continue
                if w >= du:
                    continue
                # binary search u in x's vicinity row
                lo = vic_indptr[x]
                hi = vic_indptr[x + 1]
                while lo < hi:
                    mid = (lo + hi) >> 1
                    if vic_nodes[mid] < u:
                        lo = mid + 1
                    else:
                        hi = mid
                if lo < vic_indptr[x + 1] and vic_nodes[lo] == u:
                    if w + vic_dist[lo] == du:
                        out[t] = x
                        break
    return out
