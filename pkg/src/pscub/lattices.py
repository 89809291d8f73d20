"""Hard-core lattice gases as polymer systems: a polymer per vertex, incompatible along edges."""
from __future__ import annotations

from dataclasses import dataclass

import networkx as nx

from .errors import PreconditionViolated
from .polymer_core import PolymerSystem, build_system


@dataclass(frozen=True)
class LatticePatch:
    system: PolymerSystem
    center: str
    name: str


def _node_name(node) -> str:
    if isinstance(node, tuple):
        return "_".join(_node_name(x) for x in node)
    return str(node)


def system_from_graph(G: nx.Graph) -> PolymerSystem:
    names = {v: _node_name(v) for v in G.nodes}
    if len(set(names.values())) != len(names):
        raise PreconditionViolated("node names collide after flattening")
    pairs = [(names[u], names[v]) for u, v in G.edges if u != v]
    return build_system([names[v] for v in G.nodes], pairs)


def _central_node(G: nx.Graph):
    """Highest-degree node of least eccentricity."""
    if G.number_of_nodes() == 1:
        return next(iter(G.nodes))
    ecc = nx.eccentricity(G)
    top = max(d for _, d in G.degree())
    return min((v for v in G.nodes if G.degree(v) == top), key=lambda v: (ecc[v], _node_name(v)))


def patch_from_graph(G: nx.Graph, name: str) -> LatticePatch:
    return LatticePatch(system_from_graph(G), _node_name(_central_node(G)), name)


def hexagonal(rows: int = 4, cols: int = 4, periodic: bool = True) -> LatticePatch:
    """Honeycomb lattice (degree 3); periodic patches are vertex transitive."""
    return patch_from_graph(nx.hexagonal_lattice_graph(rows, cols, periodic=periodic), "hexagonal")


def hex_line_graph(rows: int = 4, cols: int = 4, periodic: bool = True) -> LatticePatch:
    """Line graph of the honeycomb lattice (degree 4, each vertex in two triangles)."""
    G = nx.line_graph(nx.hexagonal_lattice_graph(rows, cols, periodic=periodic))
    return patch_from_graph(G, "hex-line")


def cycle(n: int) -> LatticePatch:
    return patch_from_graph(nx.cycle_graph(n), f"cycle-{n}")


def path(n: int) -> LatticePatch:
    return patch_from_graph(nx.path_graph(n), f"path-{n}")


def complete(n: int) -> LatticePatch:
    return patch_from_graph(nx.complete_graph(n), f"complete-{n}")


def regular_tree_truncation(D: int, depth: int) -> LatticePatch:
    """Ball of radius ``depth`` around a vertex of the D-regular tree."""
    if D < 2 or depth < 0:
        raise PreconditionViolated("need D >= 2 and depth >= 0")
    G = nx.Graph()
    G.add_node(0)
    frontier, nxt = [0], 1
    for level in range(depth):
        new = []
        for v in frontier:
            for _ in range(D if level == 0 else D - 1):
                G.add_edge(v, nxt)
                new.append(nxt)
                nxt += 1
        frontier = new
    return LatticePatch(system_from_graph(G), "0", f"tree-{D}-{depth}")


def named_patch(name: str) -> LatticePatch:
    """Patch by CLI name: hex, hex-line, cycle-N, path-N, complete-N, tree-D-DEPTH."""
    if name in ("hex", "hexagonal"):
        return hexagonal()
    if name in ("hex-line", "line"):
        return hex_line_graph()
    head, _, rest = name.partition("-")
    try:
        if head == "cycle":
            return cycle(int(rest))
        if head == "path":
            return path(int(rest))
        if head == "complete":
            return complete(int(rest))
        if head == "tree":
            d, k = rest.split("-")
            return regular_tree_truncation(int(d), int(k))
    except ValueError:
        pass
    raise PreconditionViolated(f"unknown lattice {name!r}")
