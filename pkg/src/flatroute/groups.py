"""Name-independent layer: hash-prefix sloppy groups, the ring+finger
overlay, directional address dissemination, and flat-name first-packet
routing with resolution fallback.

A node's group is everyone sharing the first k bits of its name hash, with
k chosen from the node's own size estimate.  Group members learn each
other's addresses by flooding announcements over the overlay, but only ever
away (in hash space) from the announcement's origin — which rules out
count-to-infinity by construction.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass
from typing import Optional

from . import landmark_routing as lr
from . import resolution
from ._hashing import common_prefix_len, derived_uniform, hash_name

REMOVAL_DELAY_SECONDS = 30.0
FINGER_REDRAW_LIMIT = 16


def group_k(n_est):
    """Group prefix length for an estimated network size:
    floor(log2(sqrt(n_est / log2(n_est)))), floored at 0."""
    n_est = float(n_est)
    if n_est < 2.0:
        raise ValueError("estimate must be at least 2")
    k = math.floor(math.log2(math.sqrt(n_est / math.log2(n_est))))
    return max(0, int(k))


def group_interval(h, k):
    """[lo, hi) of the k-bit prefix block containing hash h."""
    if k <= 0:
        return 0, 1 << 64
    width = 1 << (64 - k)
    lo = (h >> (64 - k)) << (64 - k)
    return lo, lo + width


def same_group(h1, h2, k):
    return common_prefix_len(h1, h2) >= k


def should_change_group_k(last_flip_n, current_n, hysteresis=0.10):
    """Change k only when the estimate moved by at least the hysteresis
    factor AND the formula actually yields a different k."""
    if last_flip_n <= 0 or current_n <= 0:
        raise ValueError("sizes must be positive")
    moved = (current_n >= last_flip_n * (1.0 + hysteresis)
             or current_n <= last_flip_n / (1.0 + hysteresis))
    if not moved:
        return False
    return group_k(max(current_n, 2.0)) != group_k(max(last_flip_n, 2.0))


def core_group(v, names, hashes, ks):
    """G'(v): nodes that agree they share v's group under BOTH nodes' own
    prefix lengths.  Includes v."""
    hv = hashes[v]
    out = set()
    for w in names:
        need = max(ks[v], ks[w])
        if common_prefix_len(hv, hashes[w]) >= need:
            out.add(w)
    return out


# -- overlay -------------------------------------------------------------------


class OverlayLinks:
    """One node's overlay: ring successor/predecessor in global hash order
    plus in-group long-distance fingers (both directions)."""

    __slots__ = ("successor", "predecessor", "fingers", "fingers_in")

    def __init__(self, successor, predecessor, fingers=(), fingers_in=()):
        self.successor = successor
        self.predecessor = predecessor
        self.fingers = tuple(fingers)
        self.fingers_in = tuple(fingers_in)

    def neighbor_names(self):
        seen = {self.successor, self.predecessor}
        seen.update(self.fingers)
        seen.update(self.fingers_in)
        return sorted(seen)

    def __repr__(self):
        return ("OverlayLinks(succ=%r, pred=%r, out=%r, in=%r)"
                % (self.successor, self.predecessor, self.fingers,
                   self.fingers_in))


def _harmonic_distance(span, u):
    """Integer offset in [1, span] with density ~ 1/offset."""
    if span <= 0:
        return 0
    return min(span, int(math.exp(u * math.log(span + 1.0))))


def _closest_in_range(ring_hashes, ring_names, i0, i1, target):
    """Member of ring[i0:i1) whose hash is nearest target (ties: smaller
    hash)."""
    pos = bisect_left(ring_hashes, target, i0, i1)
    best = None
    for p in (pos - 1, pos):
        if i0 <= p < i1:
            cand = (abs(ring_hashes[p] - target), ring_hashes[p],
                    ring_names[p])
            if best is None or cand < best:
                best = cand
    return None if best is None else best[2]


def build_overlay(nodes, estimates, db, f, seed):
    """Ring links from the global hash order plus f fingers per node drawn
    inside the node's own group with harmonic hash-distance density.  The
    resolution db argument stands in for the lookup a live node would do;
    statically the ring itself answers it."""
    del db
    names = list(nodes)
    h = {nm: hash_name(nm) for nm in names}
    ring = sorted(names, key=lambda nm: h[nm])
    ring_hashes = [h[nm] for nm in ring]
    n = len(ring)
    if n < 2:
        raise ValueError("overlay needs at least 2 nodes")
    links = {}
    for i, nm in enumerate(ring):
        links[nm] = OverlayLinks(ring[(i + 1) % n], ring[(i - 1) % n])

    fingers_in = {nm: [] for nm in names}
    for nm in names:
        k = group_k(estimates[nm])
        lo, hi = group_interval(h[nm], k)
        i0 = bisect_left(ring_hashes, lo)
        i1 = bisect_left(ring_hashes, hi)
        members = i1 - i0
        # Distances are drawn in units of the group's expected member
        # spacing; raw hash units would make nearly every draw land inside
        # the gap to the adjacent ring node and fingers would collapse
        # onto the ring links.
        slot = max(1, (hi - lo) // max(members, 1))
        chosen = []
        for j in range(f):
            pick = None
            for attempt in range(FINGER_REDRAW_LIMIT):
                if members < 2:
                    break
                left = (h[nm] - lo) // slot
                right = ((hi - 1) - h[nm]) // slot
                wl = math.log1p(left)
                wr = math.log1p(right)
                if wl + wr == 0.0:
                    break
                u_side = derived_uniform(seed, "finger-side", nm, j, attempt)
                go_left = u_side * (wl + wr) < wl
                span = left if go_left else right
                if span == 0:
                    go_left = not go_left
                    span = left if go_left else right
                u_dist = derived_uniform(seed, "finger-dist", nm, j, attempt)
                off = _harmonic_distance(span, u_dist) * slot
                target = h[nm] - off if go_left else h[nm] + off
                cand = _closest_in_range(ring_hashes, ring, i0, i1, target)
                if cand is None or cand == nm:
                    continue
                pick = cand
                if cand not in chosen:
                    break
                # duplicate: keep redrawing, keep the duplicate if we
                # never find anything fresh
            if pick is not None:
                chosen.append(pick)
                fingers_in[pick].append(nm)
        if chosen:
            old = links[nm]
            links[nm] = OverlayLinks(old.successor, old.predecessor,
                                     chosen, old.fingers_in)
    for nm in names:
        if fingers_in[nm]:
            old = links[nm]
            links[nm] = OverlayLinks(old.successor, old.predecessor,
                                     old.fingers, sorted(fingers_in[nm]))
    return links


# -- address tables & dissemination --------------------------------------------


@dataclass
class GroupEntry:
    address: object
    learned_from: str
    hops: int
    pending_since: Optional[float] = None


class AddressTable:
    """One node's name→address knowledge inside its sloppy group.  Entries
    marked for removal linger for REMOVAL_DELAY_SECONDS so a re-announcement
    can cancel the removal."""

    def __init__(self, owner):
        self.owner = owner
        self.entries = {}

    def announce(self, subject, address, learned_from, hops=0, now=0.0):
        """Accept if new, or if heard from a sender hash-closer to the
        subject than the current entry's sender.  Returns True if stored."""
        cur = self.entries.get(subject)
        if cur is not None:
            old_d = abs(hash_name(cur.learned_from) - hash_name(subject))
            new_d = abs(hash_name(learned_from) - hash_name(subject))
            better = (new_d < old_d
                      or (new_d == old_d
                          and hash_name(learned_from)
                          < hash_name(cur.learned_from)))
            if not better:
                if cur.pending_since is not None:
                    cur.pending_since = None   # re-announcement cancels
                return False
        self.entries[subject] = GroupEntry(address, learned_from, hops)
        return True

    def get(self, name, now=0.0):
        e = self.entries.get(name)
        if e is None:
            return None
        if (e.pending_since is not None
                and now - e.pending_since >= REMOVAL_DELAY_SECONDS):
            del self.entries[name]
            return None
        return e.address

    def __contains__(self, name):
        return name in self.entries

    def __len__(self):
        return len(self.entries)


def delayed_remove(table, name, now):
    """Mark an entry for removal; it disappears REMOVAL_DELAY_SECONDS later
    unless re-announced first."""
    e = table.entries.get(name)
    if e is not None and e.pending_since is None:
        e.pending_since = float(now)
    return table


def disseminate(overlay, ks, addresses, sent=None):
    """Spread every node's (name, address) through the overlay with a
    round-synchronous directional distance-vector exchange.

    Announcements only ever move away, in hash space, from their origin
    (a copy accepted from a lower-hash sender continues only to
    higher-hash neighbors and vice versa), which precludes looping.  A
    node forwards an address the round after it first learns it, as one
    batched update per same-group neighbor on the far side; messages are
    counted per batch, not per contained address, matching incremental
    distance-vector updates.  Returns (tables, total update messages).
    When `sent` is a dict it accumulates per-sender batch counts."""
    names = sorted(overlay)
    h = {nm: hash_name(nm) for nm in names}
    nbrs = {nm: overlay[nm].neighbor_names() for nm in names}
    tables = {nm: AddressTable(nm) for nm in names}
    for nm in names:
        tables[nm].entries[nm] = GroupEntry(addresses[nm], nm, 0)

    count = 0
    fresh = {nm: [nm] for nm in names}    # learned last round
    while any(fresh.values()):
        inbox = {}
        for u in names:
            if not fresh[u]:
                continue
            for w in nbrs[u]:
                if not same_group(h[u], h[w], ks[u]):
                    continue
                above = h[w] > h[u]
                batch = []
                for x in fresh[u]:
                    if x == u:          # origins announce to both sides
                        batch.append(x)
                    elif (h[u] > h[x]) == above:
                        batch.append(x)
                if not batch:
                    continue
                count += 1
                if sent is not None:
                    sent[u] = sent.get(u, 0) + 1
                hops_u = tables[u].entries
                for x in batch:
                    inbox.setdefault(w, []).append((x, u, hops_u[x].hops))
        fresh = {nm: [] for nm in names}
        for w, arrivals in inbox.items():
            tab = tables[w]
            best = {}
            for x, u, uh in arrivals:
                if x == w or x in tab.entries:
                    continue
                key = (abs(h[u] - h[x]), h[u])
                if x not in best or key < best[x][0]:
                    best[x] = (key, u, uh)
            for x, (_, u, uh) in sorted(best.items()):
                tab.entries[x] = GroupEntry(addresses[x], u, uh + 1)
                fresh[w].append(x)
    return tables, count


class StructuralGroupTable:
    """Post-convergence group knowledge derived structurally instead of by
    running dissemination: with exact estimates every node holds exactly
    the addresses of its k-prefix block.  Valid only when all nodes use the
    same k (asserted by the factory)."""

    __slots__ = ("owner_hash", "k", "_addresses", "_hashes")

    def __init__(self, owner_hash, k, addresses, hashes):
        self.owner_hash = owner_hash
        self.k = k
        self._addresses = addresses
        self._hashes = hashes

    def get(self, name, now=0.0):
        ht = self._hashes.get(name)
        if ht is None:
            return None
        if common_prefix_len(self.owner_hash, ht) >= self.k:
            return self._addresses[name]
        return None

    def __contains__(self, name):
        return self.get(name) is not None


def structural_group_tables(names, ks, addresses):
    """Group tables for large exact-estimate runs, skipping the explicit
    flood (the flood is exercised against this at small n in tests)."""
    kvals = {ks[nm] for nm in names}
    if len(kvals) != 1:
        raise ValueError("structural tables require a uniform group size")
    k = kvals.pop()
    hashes = {nm: hash_name(nm) for nm in names}
    return {nm: StructuralGroupTable(hashes[nm], k, addresses, hashes)
            for nm in names}


# -- routing -------------------------------------------------------------------


def route_first_packet_disco(s, t_name, state, group_tables, ks,
                             heuristic="None", db=None, now=0.0):
    """First packet knowing only the destination's flat name: go to the
    vicinity member sharing the longest hash prefix with the target, pick
    up the address there, and continue name-dependently.  Falls back to the
    resolution database when prefix matching comes up empty."""
    topo = state.topo
    s_idx = topo.index(s) if isinstance(s, str) else int(s)
    s_name = topo.names[s_idx]
    t_idx = topo.index(t_name)
    if s_idx == t_idx:
        return lr.RouteResult([s_idx], 0.0, "first_packet", heuristic)
    h_t = int(topo.hashes[t_idx])

    if state.is_landmark[t_idx] or state.vic_entry(s_idx, t_idx) is not None:
        hops = lr.nd_route_hops(state, s_idx, t_idx)
        return lr.RouteResult(hops, lr.route_length(topo, hops),
                              "first_packet", heuristic)

    own = group_tables[s_name].get(t_name, now)
    if own is not None:
        base = lr.nd_route_hops(state, s_idx, t_idx, own)
        hops = lr.apply_shortcut(base, state, heuristic)
        return lr.RouteResult(hops, lr.route_length(topo, hops),
                              "first_packet", heuristic)

    nodes, dists, _ = state.vicinity_slice(s_idx)
    best_key = (-common_prefix_len(int(topo.hashes[s_idx]), h_t), 0.0,
                int(topo.hashes[s_idx]))
    best = s_idx
    for u, du in zip(nodes, dists):
        hu = int(topo.hashes[u])
        key = (-common_prefix_len(hu, h_t), float(du), hu)
        if key < best_key:
            best_key = key
            best = int(u)
    match = -best_key[0]

    addr = None
    if match >= max(ks[s_name] - 1, 0):
        addr = group_tables[topo.names[best]].get(t_name, now)
    if addr is None:
        if db is None:
            raise LookupError("no vicinity member holds %r and no "
                              "resolution database given" % t_name)
        res = resolution.resolve_route(s_idx, t_name, state, db,
                                       heuristic, now)
        res.fallback = True
        return res

    if best == s_idx:
        head = [s_idx]
    else:
        head = lr.walk_vicinity_path(state, s_idx, best)
    tail = lr.nd_route_hops(state, best, t_idx, addr)
    hops = lr.truncate_at_destination(head + tail[1:], t_idx)
    hops = lr.apply_shortcut(hops, state, heuristic)
    return lr.RouteResult(hops, lr.route_length(topo, hops),
                          "first_packet", heuristic)
