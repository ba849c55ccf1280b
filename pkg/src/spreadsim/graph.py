"""Contact-network construction, characterization, and serialization.

Graphs are stored in compressed sparse row form indexed by *incoming*
edges: node i's in-neighbors occupy ``col_indices[row_offsets[i]:
row_offsets[i+1]]`` with matching ``weights``.  The incoming orientation
is what lets every engine gather pressure with one contiguous slice per
node and no write contention.  A mirrored outgoing CSR is built on demand
for the Markovian engine's sparse (Inertial-Mode) influence updates.

Neighbor slices are kept sorted by source id so that every traversal
strategy reduces contributions in one canonical order.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import (
    DuplicateEdgeError,
    EmptyGraphError,
    GraphFileError,
    IndexOutOfRangeError,
    InfeasibleDegreeSequenceError,
    NegativeWeightError,
    SelfLoopError,
)

__all__ = [
    "CsrGraph",
    "DegreeStats",
    "Strategy",
    "build_csr",
    "decompose",
    "build_outgoing",
    "transpose",
    "degree_stats",
    "select_strategy",
    "gen_erdos_renyi",
    "gen_barabasi_albert",
    "gen_fixed_degree",
    "save_graph",
    "load_graph",
    "read_edge_list",
]

MAX_NODES = 2**31 - 1

_MAGIC = b"FSPG"
_FORMAT_VERSION = 1

# auto-dispatch thresholds on rho = d_max / d_avg
RHO_LANE = 4.0
RHO_MERGE = 50.0


class Strategy(Enum):
    """CSR traversal strategy for the pressure gather."""

    PER_NODE = "per-node"
    LANE_CHUNKED = "lane"
    EDGE_MERGE = "merge"
    AUTO = "auto"


@dataclass(frozen=True)
class DegreeStats:
    d_avg: float
    d_max: int
    rho: float


@dataclass
class CsrGraph:
    """Immutable incoming-CSR adjacency with an optional outgoing mirror."""

    num_nodes: int
    num_edges: int
    row_offsets: np.ndarray  # int64, length N+1
    col_indices: np.ndarray  # int32, length E
    weights: np.ndarray  # float32, length E
    outgoing: "CsrGraph | None" = field(default=None, repr=False)

    def in_degrees(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    def neighbor_slice(self, node: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.row_offsets[node], self.row_offsets[node + 1]
        return self.col_indices[lo:hi], self.weights[lo:hi]

    def validate(self) -> None:
        n, e = self.num_nodes, self.num_edges
        if n < 1 or n > MAX_NODES:
            raise IndexOutOfRangeError(f"num_nodes {n} outside [1, 2^31-1]")
        ro = self.row_offsets
        if ro.shape != (n + 1,) or ro[0] != 0 or ro[-1] != e:
            raise IndexOutOfRangeError("row_offsets endpoints inconsistent")
        if np.any(np.diff(ro) < 0):
            raise IndexOutOfRangeError("row_offsets not monotone")
        if self.col_indices.shape != (e,) or self.weights.shape != (e,):
            raise IndexOutOfRangeError("edge array lengths inconsistent")
        if e > 0:
            if self.col_indices.min() < 0 or self.col_indices.max() >= n:
                raise IndexOutOfRangeError("col_indices entry outside [0, N)")
            owners = np.repeat(np.arange(n, dtype=np.int64), self.in_degrees())
            if np.any(owners == self.col_indices):
                raise SelfLoopError("self-loop stored in CSR")
            if np.any(self.weights < 0):
                raise NegativeWeightError("negative edge weight")


def build_csr(edges, num_nodes: int) -> CsrGraph:
    """Build an incoming CSR from (src, dst, weight) triples.

    Each node's neighbor slice is sorted by source id; duplicate
    (src, dst) pairs, self-loops, out-of-range endpoints, and negative
    weights are rejected.
    """
    if num_nodes < 1 or num_nodes > MAX_NODES:
        raise IndexOutOfRangeError(f"num_nodes {num_nodes} outside [1, 2^31-1]")
    arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges,
                     dtype=np.float64)
    if arr.size == 0:
        arr = arr.reshape(0, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError("edges must be (src, dst, weight) triples")
    src = arr[:, 0].astype(np.int64)
    dst = arr[:, 1].astype(np.int64)
    w = arr[:, 2]
    if src.size:
        if src.min() < 0 or src.max() >= num_nodes or dst.min() < 0 or dst.max() >= num_nodes:
            raise IndexOutOfRangeError("edge endpoint outside [0, N)")
        if np.any(w < 0):
            raise NegativeWeightError("negative edge weight")
        if np.any(src == dst):
            raise SelfLoopError("self-loops are not allowed")
    order = np.lexsort((src, dst))
    src, dst, w = src[order], dst[order], w[order]
    if src.size > 1:
        dup = (dst[1:] == dst[:-1]) & (src[1:] == src[:-1])
        if np.any(dup):
            i = int(np.flatnonzero(dup)[0])
            raise DuplicateEdgeError(f"duplicate edge ({src[i]}, {dst[i]})")
    row_offsets = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(dst, minlength=num_nodes), out=row_offsets[1:])
    g = CsrGraph(
        num_nodes=num_nodes,
        num_edges=int(src.size),
        row_offsets=row_offsets,
        col_indices=src.astype(np.int32),
        weights=w.astype(np.float32),
    )
    g.validate()
    return g


def decompose(g: CsrGraph) -> np.ndarray:
    """Inverse of build_csr: (src, dst, weight) triples in storage order."""
    owners = np.repeat(np.arange(g.num_nodes, dtype=np.int64), g.in_degrees())
    out = np.empty((g.num_edges, 3), dtype=np.float64)
    out[:, 0] = g.col_indices
    out[:, 1] = owners
    out[:, 2] = g.weights
    return out


def transpose(g: CsrGraph) -> CsrGraph:
    """Mirror of g with the opposite orientation (slices sorted by id)."""
    owners = np.repeat(np.arange(g.num_nodes, dtype=np.int64), g.in_degrees())
    srcs = g.col_indices.astype(np.int64)
    order = np.lexsort((owners, srcs))
    row_offsets = np.zeros(g.num_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(srcs, minlength=g.num_nodes), out=row_offsets[1:])
    return CsrGraph(
        num_nodes=g.num_nodes,
        num_edges=g.num_edges,
        row_offsets=row_offsets,
        col_indices=owners[order].astype(np.int32),
        weights=g.weights[order],
    )


def build_outgoing(g: CsrGraph) -> CsrGraph:
    """Populate (and cache) the outgoing mirror; returns g."""
    if g.outgoing is None:
        g.outgoing = transpose(g)
    return g


def degree_stats(g: CsrGraph) -> DegreeStats:
    """One pass over row_offsets: average / max in-degree and their ratio."""
    if g.num_edges == 0:
        raise EmptyGraphError("degree stats undefined for an edgeless graph")
    degs = g.in_degrees()
    d_avg = g.num_edges / g.num_nodes
    d_max = int(degs.max())
    return DegreeStats(d_avg=d_avg, d_max=d_max, rho=d_max / d_avg)


def select_strategy(stats: DegreeStats, override: Strategy = Strategy.AUTO) -> Strategy:
    """Degree-aware dispatch: thread-per-node under rho < 4, lane-chunked
    under 4 <= rho < 50, edge-partitioned merge at rho >= 50."""
    if override != Strategy.AUTO:
        return override
    if stats.rho < RHO_LANE:
        return Strategy.PER_NODE
    if stats.rho < RHO_MERGE:
        return Strategy.LANE_CHUNKED
    return Strategy.EDGE_MERGE


# ----------------------------------------------------------------------
# generators (undirected simple graphs stored as two directed edges)
# ----------------------------------------------------------------------


def _undirected_to_csr(pairs: np.ndarray, num_nodes: int) -> CsrGraph:
    """Store each undirected pair {u, v} as directed edges u->v and v->u."""
    if pairs.size == 0:
        return build_csr(np.empty((0, 3)), num_nodes)
    e = np.empty((2 * pairs.shape[0], 3), dtype=np.float64)
    e[: pairs.shape[0], 0] = pairs[:, 0]
    e[: pairs.shape[0], 1] = pairs[:, 1]
    e[pairs.shape[0]:, 0] = pairs[:, 1]
    e[pairs.shape[0]:, 1] = pairs[:, 0]
    e[:, 2] = 1.0
    return build_csr(e, num_nodes)


def _decode_pair_index(k: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Map linear index k in [0, n(n-1)/2) to the ordered pair (i, j), i<j."""
    kf = k.astype(np.float64)
    b = 2.0 * n - 1.0
    i = np.floor((b - np.sqrt(b * b - 8.0 * kf)) / 2.0).astype(np.int64)
    i = np.clip(i, 0, n - 2)
    # float sqrt can land one row off; repair deterministically
    def row_start(ii):
        return ii * (2 * n - ii - 1) // 2
    for _ in range(2):
        too_high = row_start(i) > k
        i[too_high] -= 1
        too_low = row_start(i + 1) <= k
        i[too_low] += 1
    j = k - row_start(i) + i + 1
    return i, j


def gen_erdos_renyi(N: int, d_avg: float, seed: int) -> CsrGraph:
    """G(N, p) with p chosen so the expected undirected degree is d_avg.

    Pairs are enumerated by geometric gap skipping, so generation is
    O(E) and deterministic for a fixed seed.
    """
    if N < 2:
        raise IndexOutOfRangeError("need N >= 2")
    if d_avg < 0:
        raise ValueError("d_avg must be >= 0")
    p = min(d_avg / (N - 1), 1.0)
    if p == 0.0:
        return _undirected_to_csr(np.empty((0, 2), dtype=np.int64), N)
    rng = np.random.default_rng(seed)
    m_pairs = N * (N - 1) // 2
    if p >= 1.0:
        ks = np.arange(m_pairs, dtype=np.int64)
    else:
        expect = m_pairs * p
        batch = int(expect + 6.0 * np.sqrt(expect) + 16)
        ks = []
        pos = -1
        log1mp = np.log1p(-p)
        while True:
            u = rng.random(batch)
            gaps = np.floor(np.log(u) / log1mp).astype(np.int64) + 1
            idx = pos + np.cumsum(gaps)
            take = idx[idx < m_pairs]
            ks.append(take)
            if take.size < idx.size:
                break
            pos = int(idx[-1])
        ks = np.concatenate(ks)
    i, j = _decode_pair_index(ks, N)
    return _undirected_to_csr(np.stack([i, j], axis=1), N)


def gen_fixed_degree(N: int, d: int, seed: int) -> CsrGraph:
    """Random d-regular simple graph via the configuration model.

    Stubs are paired uniformly, then self-loops and multi-edges are
    repaired by random edge swaps (degree-preserving).  Raises
    InfeasibleDegreeSequenceError when N*d is odd, d >= N, or repair
    fails within the retry budget.
    """
    if N < 2:
        raise IndexOutOfRangeError("need N >= 2")
    if d < 0 or d >= N:
        raise InfeasibleDegreeSequenceError(f"degree {d} infeasible for N={N}")
    if (N * d) % 2 != 0:
        raise InfeasibleDegreeSequenceError("N * d must be even")
    if d == 0:
        return _undirected_to_csr(np.empty((0, 2), dtype=np.int64), N)
    rng = np.random.default_rng(seed)
    stubs = np.repeat(np.arange(N, dtype=np.int64), d)
    rng.shuffle(stubs)
    edges = stubs.reshape(-1, 2)
    n_edges = edges.shape[0]
    for _ in range(200):
        lo = np.minimum(edges[:, 0], edges[:, 1])
        hi = np.maximum(edges[:, 0], edges[:, 1])
        keys = lo * N + hi
        sort_order = np.argsort(keys, kind="stable")
        sorted_keys = keys[sort_order]
        dup_mask = np.zeros(n_edges, dtype=bool)
        dup_mask[sort_order[1:][sorted_keys[1:] == sorted_keys[:-1]]] = True
        bad = np.flatnonzero((edges[:, 0] == edges[:, 1]) | dup_mask)
        if bad.size == 0:
            return _undirected_to_csr(edges, N)
        # swap second endpoints pairwise (sequentially: partner indices may
        # repeat, and an aliased vector swap would corrupt the stub counts)
        partners = rng.integers(0, n_edges, size=bad.size)
        for b, p in zip(bad, partners):
            edges[b, 1], edges[p, 1] = edges[p, 1], edges[b, 1]
    raise InfeasibleDegreeSequenceError(
        f"could not remove self-loops/multi-edges for N={N}, d={d}"
    )


def gen_barabasi_albert(N: int, m: int, seed: int) -> CsrGraph:
    """Preferential attachment from an m-clique seed graph.

    Each new node attaches to m distinct existing nodes chosen with
    probability proportional to degree (repeated-endpoint sampling).
    """
    if N < 2:
        raise IndexOutOfRangeError("need N >= 2")
    if not (1 <= m < N):
        raise InfeasibleDegreeSequenceError(f"need 1 <= m < N, got m={m}")
    rng = np.random.default_rng(seed)
    src_list: list[int] = []
    dst_list: list[int] = []
    repeated: list[int] = []
    for u in range(m):
        for v in range(u + 1, m):
            src_list.append(u)
            dst_list.append(v)
            repeated.extend((u, v))
    if m == 1:
        repeated.append(0)  # lone seed node must be reachable
    for v in range(m, N):
        targets: set[int] = set()
        while len(targets) < m:
            pick = repeated[int(rng.integers(0, len(repeated)))]
            targets.add(pick)
        for t in sorted(targets):
            src_list.append(v)
            dst_list.append(t)
            repeated.extend((v, t))
    pairs = np.stack(
        [np.asarray(src_list, dtype=np.int64), np.asarray(dst_list, dtype=np.int64)],
        axis=1,
    )
    return _undirected_to_csr(pairs, N)


# ----------------------------------------------------------------------
# serialization
# ----------------------------------------------------------------------


def save_graph(g: CsrGraph, path) -> None:
    """Write the binary graph format (little-endian, magic FSPG, v1)."""
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", _FORMAT_VERSION))
        f.write(struct.pack("<QQ", g.num_nodes, g.num_edges))
        f.write(g.row_offsets.astype("<u8").tobytes())
        f.write(g.col_indices.astype("<u4").tobytes())
        f.write(g.weights.astype("<f4").tobytes())


def load_graph(path) -> CsrGraph:
    """Read the binary graph format written by save_graph."""
    with open(path, "rb") as f:
        data = f.read()
    buf = io.BytesIO(data)
    if buf.read(4) != _MAGIC:
        raise GraphFileError(f"{path}: bad magic, not a graph file")
    (version,) = struct.unpack("<I", buf.read(4))
    if version != _FORMAT_VERSION:
        raise GraphFileError(f"{path}: unsupported format version {version}")
    n, e = struct.unpack("<QQ", buf.read(16))
    off = buf.tell()
    need = (n + 1) * 8 + e * 4 + e * 4
    if len(data) - off != need:
        raise GraphFileError(f"{path}: truncated or oversized payload")
    row_offsets = np.frombuffer(data, dtype="<u8", count=n + 1, offset=off).astype(np.int64)
    off += (n + 1) * 8
    col = np.frombuffer(data, dtype="<u4", count=e, offset=off).astype(np.int32)
    off += e * 4
    w = np.frombuffer(data, dtype="<f4", count=e, offset=off).astype(np.float32)
    g = CsrGraph(int(n), int(e), row_offsets, col, w)
    g.validate()
    return g


def read_edge_list(path, num_nodes: int | None = None) -> CsrGraph:
    """Read a whitespace-separated text edge list: src dst [weight]."""
    triples = []
    max_id = -1
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if len(parts) not in (2, 3):
                raise GraphFileError(f"{path}:{lineno}: expected 'src dst [weight]'")
            s, t = int(parts[0]), int(parts[1])
            w = float(parts[2]) if len(parts) == 3 else 1.0
            triples.append((s, t, w))
            max_id = max(max_id, s, t)
    n = num_nodes if num_nodes is not None else max_id + 1
    return build_csr(np.asarray(triples, dtype=np.float64).reshape(-1, 3), n)
