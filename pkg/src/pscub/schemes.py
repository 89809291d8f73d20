"""Explorative partition schemes on clusters.

A scheme maps every connected spanning subgraph H of a cluster to a spanning
tree ``explore(H)``.  Dually every spanning tree T gets a partition of its
non-tree edges into admissible and conflicting ones, and the interval
[T, T + admissible] must be exactly the preimage of T.

Four schemes are provided: the static Penrose scheme (root distances), the
greedy exploration (same trees, computed by flood filling), the returning
exploration (prefers vertices whose label differs from their parent's) and
the synthetic exploration, which decides per ordered label pair whether an
edge behaves greedily (G) or returningly (R).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .errors import (
    Disconnected,
    MissingLabels,
    NotSpanningTree,
    UnclassifiedEdge,
    UnknownPair,
    WrongKind,
)
from .exact_oracle import ursell
from .polymer_core import (
    Cluster,
    RootedTree,
    SpanningSubgraph,
    _reach_from,
    bit_list,
    bits,
    connected_masks,
    popcount,
    spanning_tree_masks,
)

PENROSE = "pen"
GREEDY = "greedy"
RETURNING = "ret"
SYNTHETIC = "syn"


@dataclass(frozen=True)
class SchemeKind:
    """Scheme tag; synthetic schemes carry a behaviour over escape pairs.

    ``behaviour[(x, y)]`` is the behaviour of a vertex labelled x whose
    parent is labelled y.
    """

    tag: str
    behaviour: Mapping[tuple[str, str], str] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.tag not in (PENROSE, GREEDY, RETURNING, SYNTHETIC):
            raise WrongKind(f"unknown scheme {self.tag!r}")
        if self.tag == SYNTHETIC and self.behaviour is None:
            raise WrongKind("a synthetic scheme needs a behaviour vector")

    @property
    def uses_labels(self) -> bool:
        return self.tag in (RETURNING, SYNTHETIC)

    def __repr__(self) -> str:
        return f"SchemeKind({self.tag})"


PenroseStatic = SchemeKind(PENROSE)
Greedy = SchemeKind(GREEDY)
Returning = SchemeKind(RETURNING)


def Synthetic(behaviour: Mapping[tuple[str, str], str]) -> SchemeKind:
    if behaviour is None:
        raise WrongKind("a synthetic scheme needs a behaviour vector")
    bad = {v for v in behaviour.values() if v not in ("G", "R")}
    if bad:
        raise ValueError(f"behaviour values must be 'G' or 'R', got {sorted(bad)}")
    return SchemeKind(SYNTHETIC, dict(behaviour))


def scheme_from_name(name: str, behaviour=None) -> SchemeKind:
    name = name.lower()
    if name in ("pen", "penrose"):
        return PenroseStatic
    if name == "greedy":
        return Greedy
    if name in ("ret", "returning"):
        return Returning
    if name in ("syn", "synthetic"):
        return Synthetic(behaviour)
    raise WrongKind(f"unknown scheme {name!r}")


def returning_masks(kind: SchemeKind, G: Cluster) -> list[int] | None:
    """Per vertex i, the neighbours j such that edge (child i, parent j) is of type R.

    None for the label-free schemes.
    """
    if not kind.uses_labels:
        return None
    if G.labels is None:
        raise MissingLabels(f"{kind.tag} scheme needs a labelled cluster")
    labels = G.labels
    out = [0] * G.n
    for i in range(G.n):
        for j in bits(G.adj[i]):
            if labels[i] == labels[j]:
                continue
            if kind.tag == RETURNING:
                out[i] |= 1 << j
            else:
                try:
                    b = kind.behaviour[(labels[i], labels[j])]
                except KeyError:
                    raise UnknownPair(f"no behaviour for pair {(labels[i], labels[j])}") from None
                if b == "R":
                    out[i] |= 1 << j
    return out


# ---------------------------------------------------------------------------
# exploration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExplorationStep:
    """One round of the exploration; vertex sets and edge sets are bitmasks."""

    explored: int      # T_k
    unexplored: int    # U_k
    frontier: int      # P_k, unexplored vertices adjacent to the explored ones
    boundary: int      # B_k, explored vertices adjacent to the unexplored ones
    selected: int      # S_k
    ignored: int       # I_k
    graph_before: int  # edge mask of H_k
    removed: int       # edges dropped this round
    parent_edges: tuple[tuple[int, int], ...]


@dataclass
class ExplorationTrace:
    cluster: Cluster
    start: int
    steps: list[ExplorationStep]
    final: int

    def graphs(self) -> list[int]:
        return [s.graph_before for s in self.steps] + [self.final]

    def check_invariants(self) -> list[str]:
        """Names of the exploration invariants violated anywhere in the trace."""
        G = self.cluster
        n = G.n
        full = (1 << n) - 1
        bad: list[str] = []
        graphs = self.graphs()

        def edges_within(vmask: int) -> int:
            m = 0
            for k, (i, j) in enumerate(G.edges):
                if vmask >> i & 1 and vmask >> j & 1:
                    m |= 1 << k
            return m

        def edges_between(a: int, b: int) -> int:
            m = 0
            for k, (i, j) in enumerate(G.edges):
                if (a >> i & 1 and b >> j & 1) or (a >> j & 1 and b >> i & 1):
                    m |= 1 << k
            return m

        def distances(mask: int) -> list[int]:
            adj = G.adjacency(mask)
            dist = [-1] * n
            dist[0] = 0
            order = [0]
            for v in order:
                for w in bits(adj[v]):
                    if dist[w] < 0:
                        dist[w] = dist[v] + 1
                        order.append(w)
            return dist

        for k, st in enumerate(self.steps):
            Hk, Hn = graphs[k], graphs[k + 1]
            T, U = st.explored, st.unexplored
            if Hn & ~Hk:
                bad.append(f"a:{k}")
            inner = Hk & edges_within(T)
            if popcount(inner) != popcount(T) - 1 or _reach_from(0, G.adjacency(inner), T) != T:
                bad.append(f"b:{k}")
            if _reach_from(0, G.adjacency(Hk), full) != full:
                bad.append(f"c:{k}")
            if (Hn & edges_within(T)) != (Hk & edges_within(T)):
                bad.append(f"d:{k}")
            if (Hk & edges_within(U)) != (self.start & edges_within(U)):
                bad.append(f"e:{k}")
            zone = edges_within(U) | edges_between(U, st.boundary)
            if (Hk & zone) != (self.start & zone):
                bad.append(f"f:{k}")
            for later in graphs[k + 1:]:
                dist = distances(later)
                for v in range(n):
                    if (st.selected >> v & 1) != (dist[v] == k + 1):
                        bad.append(f"g:{k}")
                        break
            if k + 1 < len(self.steps) and self.steps[k + 1].boundary & ~st.selected:
                bad.append(f"h:{k}")
        if _reach_from(0, G.adjacency(self.final), full) != full or popcount(self.final) != n - 1:
            bad.append("final-not-tree")
        return bad


def _explore_core(G: Cluster, mask: int, rmask, record: bool):
    n = G.n
    full = (1 << n) - 1
    adj = G.adjacency(mask)
    parent = [-1] * n
    explored = 1
    steps: list[ExplorationStep] = []
    cur = mask
    edge_index = G.edge_index

    while explored != full:
        unexplored = full & ~explored
        frontier = 0
        boundary = 0
        for v in bit_list(explored):
            nb = adj[v] & unexplored
            if nb:
                frontier |= nb
                boundary |= 1 << v
        if not frontier:
            raise Disconnected("subgraph does not span a connected graph")
        before = cur
        removed = 0
        selected_all = 0
        ignored_all = 0
        chosen: list[tuple[int, int]] = []

        def cut(a: int, b: int):
            nonlocal cur, removed
            adj[a] &= ~(1 << b)
            adj[b] &= ~(1 << a)
            bit = 1 << edge_index[(a, b) if a < b else (b, a)]
            cur &= ~bit
            removed |= bit

        seen = 0
        for v in bit_list(unexplored):
            if seen >> v & 1:
                continue
            comp = _reach_from(v, adj, unexplored)
            seen |= comp
            cand = comp & frontier
            ret_vertices = 0
            if rmask is not None:
                for i in bit_list(cand):
                    if adj[i] & boundary & rmask[i]:
                        ret_vertices |= 1 << i
            if ret_vertices:
                selected = ret_vertices
                ignored = cand & ~ret_vertices
                for i in bit_list(ignored):
                    for j in bit_list(adj[i] & boundary):
                        cut(i, j)
                for i in bit_list(selected):
                    nb = adj[i] & boundary
                    low = nb & rmask[i]
                    j = (low & -low).bit_length() - 1
                    parent[i] = j
                    chosen.append((i, j))
                    for w in bit_list(nb & ~(1 << j)):
                        cut(i, w)
            else:
                selected = cand
                ignored = 0
                for i in bit_list(selected):
                    nb = adj[i] & boundary
                    j = (nb & -nb).bit_length() - 1
                    parent[i] = j
                    chosen.append((i, j))
                    for w in bit_list(nb & ~(1 << j)):
                        cut(i, w)
            for i in bit_list(selected):
                for w in bit_list(adj[i] & selected):
                    if w > i:
                        cut(i, w)
            selected_all |= selected
            ignored_all |= ignored
        if record:
            steps.append(
                ExplorationStep(explored, unexplored, frontier, boundary, selected_all,
                                ignored_all, before, removed, tuple(chosen))
            )
        explored |= selected_all
    return tuple(parent), cur, steps


def _penrose_static(G: Cluster, mask: int):
    """Root distances in H; parent is the smallest neighbour one level closer."""
    adj = G.adjacency(mask)
    n = G.n
    dist = [-1] * n
    dist[0] = 0
    order = [0]
    for v in order:
        for w in bits(adj[v]):
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                order.append(w)
    if len(order) != n:
        raise Disconnected("subgraph does not span a connected graph")
    parent = [-1] * n
    for v in range(1, n):
        closer = [w for w in bits(adj[v]) if dist[w] == dist[v] - 1]
        parent[v] = closer[0]
    return tuple(parent)


def explore(kind: SchemeKind, H: SpanningSubgraph, trace: bool = True):
    """Run the scheme's exploration on ``H`` from root 0.

    Returns the selected spanning tree and, unless ``trace`` is False, the
    trace of every round (the static Penrose scheme has no rounds and
    returns None for the trace).
    """
    G = H.base
    if kind.tag == PENROSE:
        parent = _penrose_static(G, H.mask)
        return RootedTree(G, parent), None
    rmask = returning_masks(kind, G)
    parent, final, steps = _explore_core(G, H.mask, rmask, trace)
    tree = RootedTree(G, parent)
    if not trace:
        return tree, None
    return tree, ExplorationTrace(G, H.mask, steps, final)


def explore_mask(kind: SchemeKind, G: Cluster, mask: int, rmask=None) -> int:
    """Edge mask of the explored tree; ``rmask`` may be precomputed."""
    if kind.tag == PENROSE:
        return RootedTree(G, _penrose_static(G, mask)).mask
    if rmask is None:
        rmask = returning_masks(kind, G)
    _, final, _ = _explore_core(G, mask, rmask, False)
    return final


# ---------------------------------------------------------------------------
# edge partitions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EdgePartition:
    tree: RootedTree
    admissible: int
    conflicting: int
    cases: tuple[tuple[tuple[int, int], str], ...] = ()

    def admissible_edges(self) -> list[tuple[int, int]]:
        return self.tree.base.pairs_of(self.admissible)

    def conflicting_edges(self) -> list[tuple[int, int]]:
        return self.tree.base.pairs_of(self.conflicting)


def _check_tree(T: RootedTree) -> None:
    G = T.base
    if len(T.parent) != G.n or T.parent[0] != -1:
        raise NotSpanningTree("parent vector does not describe a tree rooted at 0")
    for v in range(1, G.n):
        p = T.parent[v]
        if not (0 <= p < G.n) or (min(v, p), max(v, p)) not in G.edge_index:
            raise NotSpanningTree(f"tree edge {(v, p)} is not a cluster edge")
    if sorted(T.bfs_order) != list(range(G.n)):
        raise NotSpanningTree("parent vector contains a cycle")


def _pen_case(T: RootedTree, i: int, j: int) -> tuple[str, bool]:
    d = T.depth
    if d[i] < d[j]:
        i, j = j, i
    l, k = d[i], d[j]
    if l == k:
        return "sameLevel", True
    if l >= k + 2:
        return "deep", False
    p = T.parent[i]
    if j < p:
        return "smallUncle", False
    return "largeUncle", True


def _labelled_cases(T: RootedTree, i: int, j: int, rmask, step_r, cls):
    """All matching cases of the returning/synthetic edge classification.

    ``step_r[v]`` is True when the tree edge (v, parent v) is of type R and
    ``cls[v]`` is the tuple of those types along the root path of v.
    """
    d = T.depth
    if d[i] < d[j]:
        i, j = j, i
    l, k = d[i], d[j]
    ci, cj = cls[i], cls[j]
    p = T.parent[i]
    on_path = ci[: len(cj)] == cj
    ancestral = l >= 2 and len(cj) <= l - 2 and on_path
    uncle = l >= 1 and cj == cls[p]
    e_ret = bool(rmask[i] >> j & 1)
    s_ret = step_r[i]
    step_below = ci[k] if ancestral else None
    cases = [
        ("notClassPath", False, l >= 1 and not on_path),
        ("classAncestorDifferent", False, ancestral and e_ret),
        ("classAncestorSame", False, ancestral and not e_ret and not step_below),
        ("smallUncleDifferent", False, uncle and e_ret and s_ret and j < p),
        ("differentUncleSame", False, uncle and e_ret and not s_ret),
        ("smallUncleSame", False, uncle and not e_ret and not s_ret and j < p),
        ("equalClass", True, l >= 1 and cj == ci),
        ("classAncestor", True, ancestral and not e_ret and bool(step_below)),
        ("differentUncleDifferent", True, uncle and e_ret and s_ret and j > p),
        ("sameUncleDifferent", True, uncle and not e_ret and s_ret),
        ("uncleSame", True, uncle and not e_ret and not s_ret and j > p),
    ]
    return [(name, adm) for name, adm, hit in cases if hit]


def returning_classes(T: RootedTree, rmask) -> tuple[list[bool], list[tuple]]:
    """Edge types along the tree and the class (type string of the root path) of each vertex."""
    n = T.base.n
    step_r = [False] * n
    cls: list[tuple] = [()] * n
    for v in T.bfs_order:
        if v == 0:
            continue
        p = T.parent[v]
        step_r[v] = bool(rmask[v] >> p & 1)
        cls[v] = cls[p] + (step_r[v],)
    return step_r, cls


def edge_partition(kind: SchemeKind, T: RootedTree) -> EdgePartition:
    """Split the non-tree edges of the cluster into admissible and conflicting ones."""
    _check_tree(T)
    G = T.base
    non_tree = G.full_mask & ~T.mask
    adm = conf = 0
    cases = []
    if kind.uses_labels:
        rmask = returning_masks(kind, G)
        step_r, cls = returning_classes(T, rmask)
    for k in bits(non_tree):
        i, j = G.edges[k]
        if kind.uses_labels:
            hits = _labelled_cases(T, i, j, rmask, step_r, cls)
            if len(hits) != 1:
                raise UnclassifiedEdge(f"edge {(i, j)} matched cases {hits}")
            name, is_adm = hits[0]
        else:
            name, is_adm = _pen_case(T, i, j)
        if is_adm:
            adm |= 1 << k
        else:
            conf |= 1 << k
        cases.append(((i, j), name))
    return EdgePartition(T, adm, conf, tuple(cases))


def scheme_map(kind: SchemeKind, T: RootedTree) -> SpanningSubgraph:
    """The largest subgraph in the interval of T: the tree plus its admissible edges."""
    part = edge_partition(kind, T)
    return SpanningSubgraph(T.base, T.mask | part.admissible)


# ---------------------------------------------------------------------------
# verification and singleton trees
# ---------------------------------------------------------------------------


@dataclass
class PartitionReport:
    n_trees: int = 0
    n_connected: int = 0
    n_singletons: int = 0
    disjoint: bool = True
    covering: bool = True
    explore_consistent: bool = True
    compatible: bool = True
    messages: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.disjoint and self.covering and self.explore_consistent and self.compatible


def _submasks(m: int):
    sub = m
    while True:
        yield sub
        if sub == 0:
            return
        sub = (sub - 1) & m


def verify_partition_scheme(kind: SchemeKind, G: Cluster) -> PartitionReport:
    """Exhaustively check that the intervals [T, S(T)] partition the connected subgraphs.

    Also checks that exploring any subgraph returns the tree whose interval
    contains it, and that single admissible (conflicting) edge additions keep
    (change) the explored tree.
    """
    if not G.connected:
        raise Disconnected("cluster is not connected")
    rep = PartitionReport()
    conn = connected_masks(G).tolist()
    rep.n_connected = len(conn)
    owner: dict[int, int] = {}
    parts: dict[int, EdgePartition] = {}
    for tmask in spanning_tree_masks(G):
        T = RootedTree.from_mask(G, tmask)
        part = edge_partition(kind, T)
        parts[tmask] = part
        rep.n_trees += 1
        if part.admissible == 0:
            rep.n_singletons += 1
        for sub in _submasks(part.admissible):
            H = tmask | sub
            if H in owner:
                rep.disjoint = False
                rep.messages.append(f"subgraph {H:#x} lies in two intervals")
            owner[H] = tmask
    if set(owner) != set(conn):
        rep.covering = False
        rep.messages.append(
            f"intervals cover {len(owner)} subgraphs, {len(set(conn) - set(owner))} missed,"
            f" {len(set(owner) - set(conn))} spurious"
        )
    rmask = returning_masks(kind, G) if kind.tag != PENROSE else None
    explored: dict[int, int] = {}
    for H in conn:
        t = explore_mask(kind, G, H, rmask)
        explored[H] = t
        if owner.get(H) != t:
            rep.explore_consistent = False
            if len(rep.messages) < 10:
                rep.messages.append(f"explore({H:#x}) = {t:#x}, interval owner {owner.get(H)}")
    for H, t in owner.items():
        part = parts[t]
        for k in bits(part.admissible & ~H):
            if explored.get(H | 1 << k) != t:
                rep.compatible = False
        for k in bits(part.conflicting & ~H):
            if explored.get(H | 1 << k) == t:
                rep.compatible = False
    if not rep.compatible:
        rep.messages.append("an edge addition broke the admissible/conflicting contract")
    return rep


def singleton_trees(kind: SchemeKind, G: Cluster) -> list[RootedTree]:
    """Spanning trees T with S(T) = T."""
    if not G.connected:
        raise Disconnected("cluster is not connected")
    out = []
    for tmask in spanning_tree_masks(G):
        T = RootedTree.from_mask(G, tmask)
        if edge_partition(kind, T).admissible == 0:
            out.append(T)
    return out


def penrose_identity_check(kind: SchemeKind, G: Cluster) -> int:
    """Signed connected-subgraph sum minus the signed singleton count; 0 when the identity holds."""
    return ursell(G) - (-1) ** (G.n - 1) * len(singleton_trees(kind, G))


# ---------------------------------------------------------------------------
# structure of singleton trees
# ---------------------------------------------------------------------------


@dataclass
class PropertiesReport:
    trees: int = 0
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def _compatible(sys, labels) -> bool:
    distinct = list(dict.fromkeys(labels))
    for a in range(len(distinct)):
        for b in range(a + 1, len(distinct)):
            if sys.incompatible(distinct[a], distinct[b]):
                return False
    return True


def _lazy_self_avoiding(seq) -> bool:
    seen = set()
    prev = object()
    for x in seq:
        if x != prev:
            if x in seen:
                return False
            seen.add(x)
            prev = x
    return True


def singleton_properties_check(kind: SchemeKind, G: Cluster) -> PropertiesReport:
    """Check the label structure of every singleton tree of a greedy or returning scheme."""
    if kind.tag not in (PENROSE, GREEDY, RETURNING):
        raise WrongKind("structural properties are stated for the greedy and returning schemes")
    if G.labels is None or G.system is None:
        raise MissingLabels("structural properties need a cluster induced by a polymer system")
    sys = G.system
    lab = G.labels
    rep = PropertiesReport()
    rmask = returning_masks(Returning, G)
    for T in singleton_trees(kind, G):
        rep.trees += 1
        tag = f"tree {T.edges()}"
        for i in range(G.n):
            kids = T.children[i]
            kid_labels = [lab[c] for c in kids]
            if len(kids) != len(set(kid_labels)):
                rep.failures.append(f"{tag}: children of {i} repeat a label")
            if kind.tag != RETURNING:
                if not all(sys.incompatible(lab[i], x) for x in kid_labels):
                    rep.failures.append(f"{tag}: child label of {i} outside its neighbourhood")
                if not _compatible(sys, kid_labels):
                    rep.failures.append(f"{tag}: children of {i} incompatible")
            else:
                others = [x for x in kid_labels if x != lab[i]]
                if not all(sys.incompatible(lab[i], x) for x in others) or not _compatible(sys, others):
                    rep.failures.append(f"{tag}: differing children of {i} not compatible")
        if kind.tag != RETURNING:
            for level in T.levels():
                if not _compatible(sys, [lab[v] for v in level]):
                    rep.failures.append(f"{tag}: level {level} incompatible")
            continue
        step_r, cls = returning_classes(T, rmask)
        groups: dict[tuple, list[int]] = {}
        for v in range(G.n):
            groups.setdefault(cls[v], []).append(v)
        for c, members in groups.items():
            if not _compatible(sys, [lab[v] for v in members]):
                rep.failures.append(f"{tag}: class {c} incompatible")
        for v in range(1, G.n):
            path = T.root_path(v)
            if step_r[v] and lab[v] in {lab[w] for w in path[:-1]}:
                rep.failures.append(f"{tag}: vertex {v} returns to a label on its root path")
            if not _lazy_self_avoiding([lab[w] for w in path]):
                rep.failures.append(f"{tag}: root path of {v} is not lazy self-avoiding")
    return rep
