"""Name-to-address resolution: a soft-state database sharded over the
landmarks by consistent hashing.

Each landmark is placed at a fixed number of virtual ring points; a key is
owned by the landmark whose virtual point follows it clockwise.  The
converged landmark table gives every node the same landmark list, so ring
construction is globally consistent without extra coordination.

Entries are soft state driven by virtual time: refreshed every 10 virtual
minutes, timed out after 21.
"""

from __future__ import annotations

import bisect

from ._hashing import MASK64, derived_u64, hash_name

VIRTUAL_POINTS = 32
REFRESH_SECONDS = 10 * 60.0
TIMEOUT_SECONDS = 21 * 60.0


def ring_points(landmark_name, vnodes=VIRTUAL_POINTS):
    """The virtual ring positions of one landmark."""
    return [derived_u64("ring", landmark_name, i) for i in range(vnodes)]


class ResolutionRing:
    """Consistent-hash ring over a fixed landmark set."""

    def __init__(self, landmark_names, vnodes=VIRTUAL_POINTS):
        landmark_names = sorted(landmark_names)
        if not landmark_names:
            raise ValueError("need at least one landmark")
        self.vnodes = int(vnodes)
        pts = []
        for nm in landmark_names:
            for p in ring_points(nm, self.vnodes):
                pts.append((p, nm))
        pts.sort()
        self._keys = [p for p, _ in pts]
        self._owners = [nm for _, nm in pts]
        self.landmarks = tuple(landmark_names)

    def owner_of(self, key):
        """Landmark owning a 64-bit key: first virtual point at or after the
        key, wrapping past the top of the ring."""
        pos = bisect.bisect_left(self._keys, key & MASK64)
        if pos == len(self._keys):
            pos = 0
        return self._owners[pos]


def owner_of(key, landmark_names, vnodes=VIRTUAL_POINTS):
    return ResolutionRing(landmark_names, vnodes).owner_of(key)


class ResolutionDb:
    """The sharded name→address store.  Lookup distinguishes a miss (never
    inserted) from an expired entry."""

    def __init__(self, ring):
        self.ring = ring
        self.shards = {nm: {} for nm in ring.landmarks}

    def owner_for_name(self, name):
        return self.ring.owner_of(hash_name(name))

    def insert(self, name, address, now=0.0):
        owner = self.owner_for_name(name)
        self.shards[owner][name] = (address, float(now))
        return owner

    def lookup(self, name, now=0.0):
        """Returns (status, address_or_None, owner) with status one of
        "hit", "expired", "miss"."""
        owner = self.owner_for_name(name)
        entry = self.shards[owner].get(name)
        if entry is None:
            return "miss", None, owner
        address, inserted_at = entry
        if now - inserted_at > TIMEOUT_SECONDS:
            return "expired", None, owner
        return "hit", address, owner

    def shard_sizes(self):
        return {nm: len(sh) for nm, sh in self.shards.items()}


def resolve_route(s, name, state, db, heuristic="None", now=0.0):
    """Route from node s to a flat name via the resolution database: travel
    to the owner landmark of hash(name), obtain the address there, then
    continue with the normal first-packet route from the owner.

    The detour makes this route's stretch unbounded; it serves bootstrap and
    fallback, not steady-state traffic."""
    from . import landmark_routing as lr

    status, address, owner = db.lookup(name, now)
    if status != "hit":
        raise LookupError("cannot resolve %r: %s at owner %s"
                          % (name, status, owner))
    topo = state.topo
    s_idx = s if isinstance(s, int) else topo.index(s)
    owner_idx = topo.index(owner)
    to_owner = lr.walk_landmark_path(state, s_idx, owner_idx)
    cont = lr.route_first_packet_nd(owner_idx, address, state, heuristic)
    hops = to_owner + cont.hops[1:]
    hops = lr.truncate_at_destination(hops, cont.hops[-1])
    return lr.RouteResult(
        hops=hops,
        length=lr.route_length(topo, hops),
        phase="first_packet",
        heuristic=heuristic,
        resolved=True,
    )
