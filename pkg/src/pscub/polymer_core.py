"""Polymer systems, volumes, clusters and the enumeration primitives on them.

Polymers are strings. Their declaration order is the total order used for
every tie-break. Internally a polymer is an index and a set of polymers is
an integer bitmask over those indices; cluster vertices and cluster edges
are bitmasks too.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    Disconnected,
    DisconnectedSystem,
    DuplicatePolymer,
    EmptyVector,
    NotSpanningTree,
    ParseError,
    TooLarge,
    UnknownPolymer,
    UnknownPolymerInPair,
)

DEFAULT_ENUM_CAP = 24

Volume = tuple  # tuple of polymer names in system order


def enum_cap() -> int:
    """Largest edge count (or volume size) accepted by exhaustive enumeration."""
    raw = os.environ.get("PSCUB_ENUM_CAP")
    if raw is None or raw.strip() == "":
        return DEFAULT_ENUM_CAP
    try:
        return int(raw)
    except ValueError as exc:
        raise ParseError(f"PSCUB_ENUM_CAP must be an integer, got {raw!r}") from exc


def bits(mask: int) -> Iterator[int]:
    """Indices of the set bits of ``mask`` in ascending order."""
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


_TABLE_BITS = 16
_BIT_TABLE: list[tuple[int, ...]] = [()]
for _k in range(_TABLE_BITS):
    _BIT_TABLE += [t + (_k,) for t in _BIT_TABLE]
del _k


def bit_list(mask: int) -> tuple[int, ...]:
    """Tuple form of :func:`bits`, table-driven for masks below 2**16."""
    if mask < 65536:
        return _BIT_TABLE[mask]
    return tuple(bits(mask))


def popcount(mask: int) -> int:
    return bin(mask).count("1")


# ---------------------------------------------------------------------------
# polymer systems
# ---------------------------------------------------------------------------


class PolymerSystem:
    """Finite polymer system with a reflexive symmetric incompatibility relation.

    ``nbr[i]`` is the bitmask of all polymers incompatible with polymer ``i``,
    including ``i`` itself.
    """

    __slots__ = ("polymers", "index", "nbr")

    def __init__(self, polymers: Sequence[str], nbr: Sequence[int]):
        self.polymers = tuple(polymers)
        self.index = {p: i for i, p in enumerate(self.polymers)}
        self.nbr = tuple(nbr)

    def __len__(self) -> int:
        return len(self.polymers)

    def __iter__(self):
        return iter(self.polymers)

    def __contains__(self, p) -> bool:
        return p in self.index

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, PolymerSystem)
            and self.polymers == other.polymers
            and self.nbr == other.nbr
        )

    def __hash__(self) -> int:
        return hash((self.polymers, self.nbr))

    def __repr__(self) -> str:
        return f"PolymerSystem({list(self.polymers)}, pairs={self.pairs()})"

    @property
    def full_mask(self) -> int:
        return (1 << len(self.polymers)) - 1

    def idx(self, p: str) -> int:
        try:
            return self.index[p]
        except KeyError:
            raise UnknownPolymer(f"unknown polymer {p!r}") from None

    def incompatible(self, a: str, b: str) -> bool:
        return bool(self.nbr[self.idx(a)] >> self.idx(b) & 1)

    def mask(self, volume: Iterable[str]) -> int:
        m = 0
        for p in volume:
            m |= 1 << self.idx(p)
        return m

    def names(self, mask: int) -> Volume:
        return tuple(self.polymers[i] for i in bits(mask))

    def volume(self, members: Iterable[str]) -> Volume:
        """Validate ``members`` and return them in system order."""
        return self.names(self.mask(members))

    def incompatible_set(self, g: str) -> Volume:
        """Gamma*(g): every polymer incompatible with g, g included."""
        return self.names(self.nbr[self.idx(g)])

    def incompatible_others(self, g: str) -> Volume:
        i = self.idx(g)
        return self.names(self.nbr[i] & ~(1 << i))

    def pairs(self) -> list[tuple[str, str]]:
        out = []
        for i, p in enumerate(self.polymers):
            for j in bits(self.nbr[i] >> (i + 1) << (i + 1)):
                out.append((p, self.polymers[j]))
        return out

    def escape_pairs(self) -> list[tuple[str, str]]:
        """All (polymer, escape) pairs with the escape a different incompatible polymer."""
        return [(g, e) for g in self.polymers for e in self.incompatible_others(g)]

    def is_connected(self) -> bool:
        if not self.polymers:
            return True
        seen = 1
        frontier = 1
        while frontier:
            reach = 0
            for i in bits(frontier):
                reach |= self.nbr[i]
            frontier = reach & ~seen
            seen |= reach
        return seen == self.full_mask

    def to_json(self) -> dict:
        return {"polymers": list(self.polymers), "incompatible": [list(p) for p in self.pairs()]}


def build_system(
    polymers: Sequence[str],
    incompat_pairs: Iterable[Sequence[str]],
    require_connected: bool = False,
) -> PolymerSystem:
    """Validate and close a polymer list plus incompatible pairs into a system."""
    polymers = [str(p) for p in polymers]
    index: dict[str, int] = {}
    for i, p in enumerate(polymers):
        if p in index:
            raise DuplicatePolymer(f"polymer {p!r} declared twice")
        index[p] = i
    nbr = [1 << i for i in range(len(polymers))]
    for pair in incompat_pairs:
        if len(pair) != 2:
            raise ParseError(f"incompatibility entries must be pairs, got {pair!r}")
        a, b = pair
        if a not in index or b not in index:
            raise UnknownPolymerInPair(f"pair {tuple(pair)!r} names an undeclared polymer")
        i, j = index[a], index[b]
        nbr[i] |= 1 << j
        nbr[j] |= 1 << i
    system = PolymerSystem(polymers, nbr)
    if require_connected and not system.is_connected():
        raise DisconnectedSystem("incompatibility graph is not connected")
    return system


def system_from_json(data, require_connected: bool = False) -> PolymerSystem:
    if isinstance(data, (str, bytes)):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(data, dict) or "polymers" not in data:
        raise ParseError("graph JSON needs a 'polymers' list")
    return build_system(data["polymers"], data.get("incompatible", []), require_connected)


def load_system(path: str, require_connected: bool = False) -> PolymerSystem:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    return system_from_json(text, require_connected)


# ---------------------------------------------------------------------------
# clusters and their subgraphs
# ---------------------------------------------------------------------------


class Cluster:
    """Graph on vertices 0..n-1, rooted at 0, optionally carrying polymer labels.

    Edges are stored as sorted pairs (i, j) with i < j in lexicographic order;
    an edge set is a bitmask over this list.
    """

    __slots__ = ("n", "edges", "labels", "system", "adj", "edge_index", "_codes")

    def __init__(self, n: int, edges: Iterable[tuple[int, int]], labels=None, system=None):
        if n < 1:
            raise EmptyVector("a cluster needs at least one vertex")
        norm = sorted({(min(i, j), max(i, j)) for i, j in edges})
        for i, j in norm:
            if i == j or j >= n or i < 0:
                raise ValueError(f"bad edge {(i, j)} for {n} vertices")
        self.n = n
        self.edges = tuple(norm)
        self.labels = tuple(labels) if labels is not None else None
        self.system = system
        adj = [0] * n
        for i, j in self.edges:
            adj[i] |= 1 << j
            adj[j] |= 1 << i
        self.adj = tuple(adj)
        self.edge_index = {e: k for k, e in enumerate(self.edges)}
        self._codes = None

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "Cluster":
        """Label-free graph, usable by label-independent schemes only."""
        return cls(n, edges)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Cluster)
            and self.n == other.n
            and self.edges == other.edges
            and self.labels == other.labels
        )

    def __hash__(self) -> int:
        return hash((self.n, self.edges, self.labels))

    def __repr__(self) -> str:
        lab = f", labels={list(self.labels)}" if self.labels is not None else ""
        return f"Cluster(n={self.n}, edges={list(self.edges)}{lab})"

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def full_mask(self) -> int:
        return (1 << len(self.edges)) - 1

    @property
    def is_cluster(self) -> bool:
        return self.connected

    @property
    def connected(self) -> bool:
        return _reach_from(0, self.adj, (1 << self.n) - 1) == (1 << self.n) - 1

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    def label_codes(self) -> tuple[int, ...]:
        """Labels as polymer indices (or first-occurrence codes without a system)."""
        if self._codes is None:
            if self.labels is None:
                raise ValueError("cluster has no labels")
            if self.system is not None:
                self._codes = tuple(self.system.idx(x) for x in self.labels)
            else:
                seen: dict = {}
                self._codes = tuple(seen.setdefault(x, len(seen)) for x in self.labels)
        return self._codes

    def support(self) -> Volume:
        if self.labels is None:
            raise ValueError("cluster has no labels")
        if self.system is not None:
            return self.system.volume(self.labels)
        return tuple(dict.fromkeys(self.labels))

    def edge_bit(self, i: int, j: int) -> int:
        key = (i, j) if i < j else (j, i)
        try:
            return 1 << self.edge_index[key]
        except KeyError:
            raise ValueError(f"{key} is not an edge of the cluster") from None

    def mask_of(self, pairs: Iterable[tuple[int, int]]) -> int:
        m = 0
        for i, j in pairs:
            m |= self.edge_bit(i, j)
        return m

    def pairs_of(self, mask: int) -> list[tuple[int, int]]:
        return [self.edges[k] for k in bits(mask)]

    def adjacency(self, mask: int) -> list[int]:
        adj = [0] * self.n
        for k in bit_list(mask):
            i, j = self.edges[k]
            adj[i] |= 1 << j
            adj[j] |= 1 << i
        return adj

    def mask_connected(self, mask: int) -> bool:
        full = (1 << self.n) - 1
        return _reach_from(0, self.adjacency(mask), full) == full

    def subgraph(self, mask: int) -> "SpanningSubgraph":
        return SpanningSubgraph(self, mask)

    def full(self) -> "SpanningSubgraph":
        return SpanningSubgraph(self, self.full_mask)


def _reach_from(v: int, adj: Sequence[int], allowed: int) -> int:
    seen = 1 << v
    frontier = seen
    while frontier:
        reach = 0
        for i in bit_list(frontier):
            reach |= adj[i]
        reach &= allowed
        frontier = reach & ~seen
        seen |= reach
    return seen


def induce_cluster(sys: PolymerSystem, xi: Sequence[str]) -> Cluster:
    """Graph on the positions of ``xi`` with an edge wherever the labels are incompatible."""
    xi = tuple(xi)
    if not xi:
        raise EmptyVector("polymer vector is empty")
    codes = [sys.idx(x) for x in xi]
    edges = [
        (i, j)
        for i in range(len(xi))
        for j in range(i + 1, len(xi))
        if sys.nbr[codes[i]] >> codes[j] & 1
    ]
    return Cluster(len(xi), edges, labels=xi, system=sys)


@dataclass(frozen=True)
class SpanningSubgraph:
    base: Cluster
    mask: int

    def __post_init__(self):
        if self.mask & ~self.base.full_mask:
            raise ValueError("edge mask is not a subset of the cluster's edges")

    @property
    def n_edges(self) -> int:
        return popcount(self.mask)

    def edges(self) -> list[tuple[int, int]]:
        return self.base.pairs_of(self.mask)

    def is_connected(self) -> bool:
        return self.base.mask_connected(self.mask)

    def is_tree(self) -> bool:
        return self.n_edges == self.base.n - 1 and self.is_connected()


@dataclass(frozen=True)
class RootedTree:
    """Spanning tree of a cluster rooted at vertex 0; ``parent[0] == -1``."""

    base: Cluster
    parent: tuple[int, ...]

    @classmethod
    def from_mask(cls, base: Cluster, mask: int) -> "RootedTree":
        n = base.n
        if popcount(mask) != n - 1:
            raise NotSpanningTree(f"{popcount(mask)} edges cannot span a tree on {n} vertices")
        adj = base.adjacency(mask)
        parent = [-2] * n
        parent[0] = -1
        order = [0]
        for v in order:
            for w in bits(adj[v]):
                if parent[w] == -2:
                    parent[w] = v
                    order.append(w)
        if len(order) != n:
            raise NotSpanningTree("edge set does not connect every vertex")
        return cls(base, tuple(parent))

    @classmethod
    def from_edges(cls, base: Cluster, pairs: Iterable[tuple[int, int]]) -> "RootedTree":
        return cls.from_mask(base, base.mask_of(pairs))

    @cached_property
    def mask(self) -> int:
        m = 0
        for v in range(1, self.base.n):
            m |= self.base.edge_bit(v, self.parent[v])
        return m

    @cached_property
    def depth(self) -> tuple[int, ...]:
        d = [0] * self.base.n
        for v in self.bfs_order:
            if v:
                d[v] = d[self.parent[v]] + 1
        return tuple(d)

    @cached_property
    def children(self) -> tuple[tuple[int, ...], ...]:
        ch: list[list[int]] = [[] for _ in range(self.base.n)]
        for v in range(1, self.base.n):
            ch[self.parent[v]].append(v)
        return tuple(tuple(c) for c in ch)

    @cached_property
    def bfs_order(self) -> tuple[int, ...]:
        order = [0]
        ch: list[list[int]] = [[] for _ in range(self.base.n)]
        for v in range(1, self.base.n):
            ch[self.parent[v]].append(v)
        for v in order:
            order.extend(ch[v])
        return tuple(order)

    def levels(self) -> list[list[int]]:
        out: list[list[int]] = []
        for v in range(self.base.n):
            d = self.depth[v]
            while len(out) <= d:
                out.append([])
            out[d].append(v)
        return out

    def root_path(self, v: int) -> list[int]:
        """Vertices from the root down to ``v`` inclusive."""
        path = [v]
        while path[-1] != 0:
            path.append(self.parent[path[-1]])
        return path[::-1]

    def as_subgraph(self) -> SpanningSubgraph:
        return SpanningSubgraph(self.base, self.mask)

    def edges(self) -> list[tuple[int, int]]:
        return self.base.pairs_of(self.mask)


# ---------------------------------------------------------------------------
# enumeration
# ---------------------------------------------------------------------------

_CHUNK_BITS = 20


def _check_cap(n_edges: int) -> None:
    cap = enum_cap()
    if n_edges > cap:
        raise TooLarge(f"{n_edges} edges exceed the enumeration cap {cap} (set PSCUB_ENUM_CAP)")


def connected_masks(G: Cluster) -> np.ndarray:
    """All edge masks of ``G`` that connect every vertex, ascending.

    Vectorised flood fill from vertex 0 over blocks of consecutive masks.
    """
    E = G.n_edges
    _check_cap(E)
    full = (1 << G.n) - 1
    if G.n == 1:
        return np.arange(1 << E, dtype=np.int64)
    out = []
    block = 1 << min(E, _CHUNK_BITS)
    eu = [i for i, _ in G.edges]
    ev = [j for _, j in G.edges]
    for start in range(0, 1 << E, block):
        masks = np.arange(start, start + block, dtype=np.int64)
        present = [((masks >> k) & 1).astype(bool) for k in range(E)]
        reach = np.ones(block, dtype=np.int64)
        while True:
            before = reach.copy()
            for k in range(E):
                ru = ((reach >> eu[k]) & 1).astype(bool)
                rv = ((reach >> ev[k]) & 1).astype(bool)
                hit = present[k] & (ru | rv)
                reach[hit] |= (1 << eu[k]) | (1 << ev[k])
            if np.array_equal(before, reach):
                break
        out.append(masks[reach == full])
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def enumerate_connected_spanning_subgraphs(G: Cluster) -> Iterator[SpanningSubgraph]:
    """Every connected spanning subgraph of ``G``, by ascending edge mask."""
    for m in connected_masks(G):
        yield SpanningSubgraph(G, int(m))


def spanning_tree_masks(G: Cluster) -> list[int]:
    """Edge masks of all spanning trees, found by backtracking over edges with union-find."""
    n, E = G.n, G.n_edges
    if not G.connected:
        raise Disconnected("cluster is not connected")
    if n == 1:
        return [0]
    out: list[int] = []
    edges = G.edges

    def find(comp, v):
        while comp[v] != v:
            v = comp[v]
        return v

    def rec(k: int, chosen: int, mask: int, comp: list[int]):
        if chosen == n - 1:
            out.append(mask)
            return
        if E - k < n - 1 - chosen:
            return
        i, j = edges[k]
        ri, rj = find(comp, i), find(comp, j)
        if ri != rj:
            nxt = comp.copy()
            nxt[max(ri, rj)] = min(ri, rj)
            rec(k + 1, chosen + 1, mask | (1 << k), nxt)
        rec(k + 1, chosen, mask, comp)

    rec(0, 0, 0, list(range(n)))
    return sorted(out)


def enumerate_spanning_trees(G: Cluster) -> Iterator[RootedTree]:
    """Every spanning tree of ``G`` rooted at 0, by ascending edge mask."""
    for m in spanning_tree_masks(G):
        yield RootedTree.from_mask(G, m)
