"""Tree-generating operators: weighted sums over labelled rooted trees of bounded depth.

The depth-one operator sums over stars with leaf multisets; the depth-k
operator sums over plane trees (children ordered) grown breadth first, with
weight 1 / prod(children counts!) per tree.  Both equal the sum over rooted
trees weighted by 1 / |Aut|, so they must agree at depth one.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from itertools import combinations, combinations_with_replacement
from typing import Callable, Hashable, Mapping, Sequence

from .errors import TruncationExceeded
from .polymer_core import PolymerSystem

Label = Hashable
TERM_LIMIT = 2_000_000


@dataclass(frozen=True)
class StarWeights:
    """c(root label, sorted leaf labels); symmetric in the leaves."""

    weight: Callable[[Label, tuple], float]
    max_leaves: int
    candidates: Callable[[Label], Sequence[Label]] | None = None


@dataclass(frozen=True)
class TreeWeights:
    """c(parents, labels) on plane trees in breadth-first order; vertex 0 is the root."""

    weight: Callable[[tuple[int, ...], tuple], float]
    max_children: int
    candidates: Callable[[Label], Sequence[Label]] | None = None


def _cands(c, label, labels):
    return list(labels) if c is None else list(c(label))


def depth_one_tree_operator(weights: StarWeights, rho: Mapping, mu: Mapping,
                            labels: Sequence[Label]) -> dict:
    """T(mu)_l = rho_l * sum over leaf multisets L of c(l, L) * prod mu / prod multiplicity!."""
    out = {}
    budget = TERM_LIMIT
    for l in labels:
        cands = sorted(_cands(weights.candidates, l, labels), key=repr)
        total = 0.0
        for m in range(weights.max_leaves + 1):
            count = math.comb(len(cands) + m - 1, m)
            budget -= count
            if budget < 0:
                raise TruncationExceeded("star enumeration exceeds the term limit")
            for leaves in combinations_with_replacement(cands, m):
                c = weights.weight(l, leaves)
                if not c:
                    continue
                term = c
                for x, k in Counter(leaves).items():
                    term *= mu[x] ** k / math.factorial(k)
                total += term
        out[l] = rho[l] * total
    return out


def _plane_trees(depth: int, max_children: int):
    """Breadth-first plane trees as (parents, depths, children counts)."""

    def grow(parents, depths, counts, frontier_pos):
        if frontier_pos == len(parents):
            yield tuple(parents), tuple(depths), tuple(counts)
            return
        if depths[frontier_pos] == depth:
            counts.append(0)
            yield from grow(parents, depths, counts, frontier_pos + 1)
            counts.pop()
            return
        for k in range(max_children + 1):
            counts.append(k)
            for _ in range(k):
                parents.append(frontier_pos)
                depths.append(depths[frontier_pos] + 1)
            yield from grow(parents, depths, counts, frontier_pos + 1)
            for _ in range(k):
                parents.pop()
                depths.pop()
            counts.pop()

    yield from grow([-1], [0], [], 0)


def depth_k_tree_operator(k: int, weights: TreeWeights, rho: Mapping, mu: Mapping,
                          labels: Sequence[Label]) -> dict:
    """Sum over labelled plane trees of depth <= k.

    A vertex above the last level carries rho of its label, a vertex on
    level k carries mu of its label.
    """
    if k < 1:
        raise ValueError("depth must be at least 1")
    shapes = list(_plane_trees(k, weights.max_children))
    out = {}
    budget = TERM_LIMIT
    for root in labels:
        total = 0.0
        for parents, depths, counts in shapes:
            norm = 1.0
            for c in counts:
                norm *= math.factorial(c)
            lab = [root] + [None] * (len(parents) - 1)

            def fill(v: int):
                nonlocal total, budget
                if v == len(parents):
                    budget -= 1
                    if budget < 0:
                        raise TruncationExceeded("tree enumeration exceeds the term limit")
                    c = weights.weight(parents, tuple(lab))
                    if not c:
                        return
                    term = c / norm
                    for u, d in enumerate(depths):
                        term *= mu[lab[u]] if d == k else rho[lab[u]]
                    total += term
                    return
                for x in _cands(weights.candidates, lab[parents[v]], labels):
                    lab[v] = x
                    fill(v + 1)
                lab[v] = None

            fill(1)
        out[root] = total
    return out


def product_tree_weights(star: StarWeights, k: int) -> TreeWeights:
    """Tree weight = product of star weights over all vertices above level k."""

    def weight(parents, labs):
        n = len(parents)
        depth = [0] * n
        kids = [[] for _ in range(n)]
        for v in range(1, n):
            depth[v] = depth[parents[v]] + 1
            kids[parents[v]].append(labs[v])
        c = 1.0
        for v in range(n):
            if depth[v] < k:
                c *= star.weight(labs[v], tuple(sorted(kids[v], key=repr)))
                if not c:
                    return 0.0
        return c

    return TreeWeights(weight, star.max_leaves, star.candidates)


# star weights of the classical local operators ------------------------------------


def _distinct(leaves) -> bool:
    return len(set(leaves)) == len(leaves)


def dobrushin_star(sys: PolymerSystem) -> StarWeights:
    """Distinct leaves from the incompatibility neighbourhood: sums to prod(1 + mu)."""
    m = max(len(sys.incompatible_set(p)) for p in sys.polymers)
    return StarWeights(lambda l, leaves: 1.0 if _distinct(leaves) else 0.0, m,
                       sys.incompatible_set)


def fp_star(sys: PolymerSystem) -> StarWeights:
    """Distinct, mutually compatible leaves from the neighbourhood: sums to Xi(neighbourhood)."""

    def w(l, leaves):
        if not _distinct(leaves):
            return 0.0
        return 0.0 if any(sys.incompatible(a, b) for a, b in combinations(leaves, 2)) else 1.0

    m = max(len(sys.incompatible_set(p)) for p in sys.polymers)
    return StarWeights(w, m, sys.incompatible_set)


def kp_star(sys: PolymerSystem, max_leaves: int) -> StarWeights:
    """Any leaves from the neighbourhood: sums to a truncated exp(sum mu)."""
    return StarWeights(lambda l, leaves: 1.0, max_leaves, sys.incompatible_set)


def iterate_to_fixpoint(op: Callable[[dict], dict], labels: Sequence[Label],
                        max_iter: int = 10_000, rtol: float = 1e-13, guard: float = 1e9):
    """Least fixed point of a monotone operator by iteration from 0, or None on divergence."""
    mu = {l: 0.0 for l in labels}
    for _ in range(max_iter):
        new = op(mu)
        if any(not math.isfinite(v) or v > guard for v in new.values()):
            return None
        if all(abs(new[l] - mu[l]) <= rtol * abs(new[l]) for l in labels):
            return new
        mu = new
    return None


def tree_operator_terms(k: int, max_children: int) -> int:
    """Number of breadth-first plane tree shapes enumerated at depth k."""
    return sum(1 for _ in _plane_trees(k, max_children))


__all__ = [
    "StarWeights", "TreeWeights", "depth_one_tree_operator", "depth_k_tree_operator",
    "product_tree_weights", "dobrushin_star", "fp_star", "kp_star", "iterate_to_fixpoint",
    "tree_operator_terms",
]
