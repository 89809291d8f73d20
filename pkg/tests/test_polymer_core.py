import itertools
import json

import pytest
from hypothesis import given, settings, strategies as st

from pscub.errors import (
    Disconnected,
    DisconnectedSystem,
    DuplicatePolymer,
    EmptyVector,
    NotSpanningTree,
    ParseError,
    UnknownPolymer,
    UnknownPolymerInPair,
)
from pscub.polymer_core import (
    Cluster,
    RootedTree,
    build_system,
    connected_masks,
    enumerate_connected_spanning_subgraphs,
    enumerate_spanning_trees,
    induce_cluster,
    load_system,
    spanning_tree_masks,
    system_from_json,
)


def brute_connected(G):
    out = []
    for mask in range(1 << G.n_edges):
        seen, frontier = {0}, [0]
        while frontier:
            v = frontier.pop()
            for k, (i, j) in enumerate(G.edges):
                if mask >> k & 1 and v in (i, j):
                    w = j if v == i else i
                    if w not in seen:
                        seen.add(w)
                        frontier.append(w)
        if len(seen) == G.n:
            out.append(mask)
    return out


def triangle():
    return Cluster(3, [(0, 1), (0, 2), (1, 2)])


def test_single_polymer_has_loop_only():
    s = build_system(["a"], [])
    assert s.incompatible_set("a") == ("a",)
    assert s.incompatible_others("a") == ()


def test_pair_closure_is_symmetric():
    s = build_system(["a", "b"], [("a", "b")])
    assert s.incompatible("a", "b") and s.incompatible("b", "a")
    assert s.incompatible("a", "a")


def test_fig2_neighbourhoods(fig2):
    assert fig2.is_connected()
    assert set(fig2.incompatible_set("b")) == {"a", "b", "c", "e"}
    assert fig2.incompatible_others("d") == ("a",)


def test_build_errors():
    with pytest.raises(DuplicatePolymer):
        build_system(["a", "a"], [])
    with pytest.raises(UnknownPolymerInPair):
        build_system(["a"], [("a", "z")])
    with pytest.raises(DisconnectedSystem):
        build_system(["a", "b"], [], require_connected=True)
    with pytest.raises(UnknownPolymer):
        build_system(["a"], []).idx("q")


def test_json_round_trip(tmp_path, fig2):
    path = tmp_path / "g.json"
    path.write_text(json.dumps(fig2.to_json()))
    assert load_system(str(path)) == fig2
    with pytest.raises(ParseError):
        system_from_json("{not json")
    with pytest.raises(ParseError):
        system_from_json({"edges": []})


def test_induce_cluster_basics(fig2):
    G = induce_cluster(fig2, ["a"])
    assert G.n == 1 and G.connected
    G = induce_cluster(fig2, ["a", "a"])
    assert G.edges == ((0, 1),)
    with pytest.raises(EmptyVector):
        induce_cluster(fig2, [])
    with pytest.raises(UnknownPolymer):
        induce_cluster(fig2, ["zz"])


def test_fig2_cluster(fig2):
    xi = list("aabcadce")
    G = induce_cluster(fig2, xi)
    assert G.connected
    expected = {(i, j) for i, j in itertools.combinations(range(8), 2)
                if fig2.incompatible(xi[i], xi[j])}
    assert set(G.edges) == expected


def test_connected_subgraph_counts():
    assert len(list(enumerate_connected_spanning_subgraphs(Cluster(2, [(0, 1)])))) == 1
    assert len(list(enumerate_connected_spanning_subgraphs(triangle()))) == 4
    assert len(list(enumerate_connected_spanning_subgraphs(Cluster(3, [(0, 1), (1, 2)])))) == 1


def test_spanning_tree_counts():
    assert len(list(enumerate_spanning_trees(triangle()))) == 3
    assert len(list(enumerate_spanning_trees(Cluster(3, [(0, 1), (1, 2)])))) == 1
    square = Cluster(4, [(0, 1), (1, 2), (2, 3), (0, 3)])
    assert len(list(enumerate_spanning_trees(square))) == 4
    k4 = Cluster(4, list(itertools.combinations(range(4), 2)))
    assert len(spanning_tree_masks(k4)) == 16


def test_rooted_tree_structure():
    G = Cluster(4, [(0, 1), (1, 2), (1, 3), (2, 3)])
    T = RootedTree.from_edges(G, [(0, 1), (1, 2), (1, 3)])
    assert T.parent == (-1, 0, 1, 1)
    assert T.depth == (0, 1, 2, 2)
    assert T.levels() == [[0], [1], [2, 3]]
    assert T.root_path(3) == [0, 1, 3]
    with pytest.raises(NotSpanningTree):
        RootedTree.from_edges(G, [(0, 1), (1, 2)])
    with pytest.raises(NotSpanningTree):
        RootedTree.from_edges(G, [(1, 2), (1, 3), (2, 3)])


@st.composite
def graphs(draw):
    n = draw(st.integers(1, 6))
    pairs = list(itertools.combinations(range(n), 2))
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs))) if pairs else []
    return Cluster(n, chosen)


@settings(max_examples=120, deadline=None)
@given(graphs())
def test_connected_masks_match_brute_force(G):
    assert sorted(connected_masks(G).tolist()) == brute_connected(G)


@settings(max_examples=120, deadline=None)
@given(graphs())
def test_spanning_trees_are_the_minimal_connected_subgraphs(G):
    conn = brute_connected(G)
    if not conn:
        with pytest.raises(Disconnected):
            spanning_tree_masks(G)
        return
    minimal = sorted(m for m in conn if bin(m).count("1") == G.n - 1)
    assert spanning_tree_masks(G) == minimal
    for T in enumerate_spanning_trees(G):
        assert T.as_subgraph().is_tree()
