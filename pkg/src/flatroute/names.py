"""Flat-name plane: name hashing, per-node network-size estimation, and
landmark election with factor-2 hysteresis.

Every "random" choice here is a deterministic function of (experiment seed,
node name, purpose), so a node's outcome never depends on iteration order or
on any other node's draws.
"""

from __future__ import annotations

import math

import numpy as np

from ._hashing import derived_uniform, derived_u64, hash_name, prefix_bits

__all__ = [
    "hash_name", "prefix_bits", "estimate_n", "parse_error_model",
    "landmark_probability", "elect_landmarks", "LandmarkSet",
    "should_flip_landmark_status", "SYNOPSIS_SKETCHES", "SYNOPSIS_BITS",
]

# 64 bitmaps of 32 bits = 256 bytes of synopsis state per node.
SYNOPSIS_SKETCHES = 64
SYNOPSIS_BITS = 32
_FM_PHI = 0.77351

MIN_ESTIMATE = 2.0


def parse_error_model(text):
    """Parse an error-model string: "none", "uniform:<fraction>", or
    "synopsis" / "synopsis:<bytes>"."""
    if text is None:
        return ("none",)
    parts = str(text).split(":")
    kind = parts[0].strip().lower()
    if kind == "none":
        return ("none",)
    if kind == "uniform":
        if len(parts) != 2:
            raise ValueError("uniform error model needs a fraction, "
                             "e.g. uniform:0.40")
        f = float(parts[1])
        if not (0.0 <= f < 1.0):
            raise ValueError("uniform error fraction must be in [0, 1)")
        return ("uniform", f)
    if kind == "synopsis":
        nbytes = int(parts[1]) if len(parts) > 1 else 256
        if nbytes < 8:
            raise ValueError("synopsis needs at least 8 bytes")
        return ("synopsis", nbytes)
    raise ValueError("unknown error model %r" % (text,))


def _synopsis_shape(nbytes):
    """Split a byte budget into (sketch count, bits per sketch)."""
    total_bits = nbytes * 8
    bits = SYNOPSIS_BITS
    sketches = max(1, total_bits // bits)
    return sketches, bits


def _node_sketch_bits(seed, name, sketches):
    """Bit index set by this node in each sketch: geometric via the count of
    trailing ones in a per-(seed, sketch, name) hash draw."""
    out = np.empty(sketches, np.int64)
    for j in range(sketches):
        h = derived_u64(seed, "synopsis", j, name)
        b = 0
        while (h >> b) & 1:
            b += 1
        out[j] = min(b, SYNOPSIS_BITS - 1)
    return out


def synopsis_sketches(topo, seed, nbytes=256):
    """Per-node duplicate-insensitive sketches, OR-flooded to fixpoint.

    Returns an (n, sketches) uint32 array; at fixpoint every connected node
    holds the OR over all nodes, so decoded estimates agree network-wide."""
    sketches, _bits = _synopsis_shape(nbytes)
    state = np.zeros((topo.n, sketches), np.uint32)
    for i, nm in enumerate(topo.names):
        bits = _node_sketch_bits(seed, nm, sketches)
        state[i] = np.uint32(1) << bits.astype(np.uint32)
    src = np.repeat(np.arange(topo.n, dtype=np.int64), np.diff(topo.indptr))
    dst = topo.nbr.astype(np.int64)
    while True:
        new = state.copy()
        np.bitwise_or.at(new, src, state[dst])
        if np.array_equal(new, state):
            return state
        state = new


def decode_sketches(state):
    """Estimate per row: 2**(mean lowest-zero-bit index) / phi."""
    x = state
    trail_ones = np.bitwise_count(x & ~(x + np.uint32(1)))
    r_mean = trail_ones.astype(np.float64).mean(axis=1)
    return (2.0 ** r_mean) / _FM_PHI


def estimate_n(topo, error_model=("none",), seed=0):
    """Per-node estimate of the network size, as {name: estimate}.

    Models: ("none",) exact n everywhere; ("uniform", f) independent
    per-node multipliers in [1-f, 1+f]; ("synopsis", nbytes) flooded
    duplicate-insensitive sketches (identical estimates network-wide)."""
    if isinstance(error_model, str):
        error_model = parse_error_model(error_model)
    kind = error_model[0]
    n = topo.n
    if kind == "none":
        val = max(float(n), MIN_ESTIMATE)
        return {nm: val for nm in topo.names}
    if kind == "uniform":
        f = float(error_model[1])
        out = {}
        for nm in topo.names:
            u = derived_uniform(seed, "estimate", nm)
            out[nm] = max(n * (1.0 - f + 2.0 * f * u), MIN_ESTIMATE)
        return out
    if kind == "synopsis":
        nbytes = int(error_model[1]) if len(error_model) > 1 else 256
        state = synopsis_sketches(topo, seed, nbytes)
        est = decode_sketches(state)
        return {nm: max(float(est[i]), MIN_ESTIMATE)
                for i, nm in enumerate(topo.names)}
    raise ValueError("unknown error model %r" % (error_model,))


def landmark_probability(n_est):
    """Per-node election probability sqrt(log2(n_est)/n_est), clamped to
    [0, 1]."""
    n_est = float(n_est)
    if n_est <= 1.0:
        return 0.0
    p = math.sqrt(math.log2(n_est) / n_est)
    return min(p, 1.0)


class LandmarkSet:
    """Elected landmark names plus the estimate each node last flipped at
    (the factor-2 hysteresis reference point)."""

    def __init__(self, members, flip_reference):
        self.members = frozenset(members)
        self.flip_reference = dict(flip_reference)

    def __contains__(self, name):
        return name in self.members

    def __iter__(self):
        return iter(sorted(self.members))

    def __len__(self):
        return len(self.members)


def elect_landmarks(nodes, estimates, seed, draw_fn=None):
    """Each node independently becomes a landmark iff its uniform draw is
    below sqrt(log2(n_est)/n_est) under its own estimate.  If nobody is
    elected, the node with the smallest name hash is (deterministic
    fallback).  draw_fn(name) -> [0,1) overrides the hash-derived draw."""
    nodes = list(nodes)
    if not nodes:
        raise ValueError("need at least one node")
    members = set()
    flip_ref = {}
    for nm in nodes:
        n_est = float(estimates[nm])
        draw = draw_fn(nm) if draw_fn is not None else \
            derived_uniform(seed, "landmark-draw", nm)
        if draw < landmark_probability(n_est):
            members.add(nm)
        flip_ref[nm] = n_est
    if not members:
        members.add(min(nodes, key=lambda nm: (hash_name(nm), nm)))
    return LandmarkSet(members, flip_ref)


def should_flip_landmark_status(last_flip_n, current_n):
    """Re-run the election draw only when the estimate moved by a factor of
    at least 2 in either direction since the last flip."""
    if last_flip_n <= 0 or current_n <= 0:
        raise ValueError("estimates must be positive")
    return current_n >= 2.0 * last_flip_n or current_n <= last_flip_n / 2.0
