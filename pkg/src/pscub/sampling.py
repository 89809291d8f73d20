"""Seeded random polymer systems, clusters and behaviour vectors."""
from __future__ import annotations

import random
import string

from .polymer_core import Cluster, PolymerSystem, build_system, induce_cluster


def polymer_names(n: int) -> list[str]:
    if n <= 26:
        return list(string.ascii_lowercase[:n])
    return [f"p{i}" for i in range(n)]


def random_system(rng: random.Random, n_polymers: int, p_extra: float = 0.35) -> PolymerSystem:
    """Connected system: a random spanning tree plus independent extra incompatibilities."""
    names = polymer_names(n_polymers)
    pairs = set()
    for v in range(1, n_polymers):
        u = rng.randrange(v)
        pairs.add((names[u], names[v]))
    for a in range(n_polymers):
        for b in range(a + 1, n_polymers):
            if rng.random() < p_extra:
                pairs.add((names[a], names[b]))
    return build_system(names, sorted(pairs), require_connected=True)


def random_cluster(rng: random.Random, sys: PolymerSystem, max_len: int,
                   min_len: int = 1, max_tries: int = 1000) -> Cluster:
    """Uniform length in [min_len, max_len], uniform labels, resampled until connected."""
    for _ in range(max_tries):
        n = rng.randint(min_len, max_len)
        xi = [rng.choice(sys.polymers) for _ in range(n)]
        G = induce_cluster(sys, xi)
        if G.connected:
            return G
    raise RuntimeError("could not sample a connected cluster")


def random_behaviour(rng: random.Random, sys: PolymerSystem) -> dict[tuple[str, str], str]:
    return {pair: rng.choice("GR") for pair in sys.escape_pairs()}


def random_mixing(rng: random.Random, sys: PolymerSystem) -> dict[str, str]:
    return {p: rng.choice("GR") for p in sys.polymers}


def random_sweep(seed: int, trials: int, max_len: int, max_polymers: int = 6):
    """Deterministic sequence of (system, cluster, synthetic behaviour) triples."""
    rng = random.Random(seed)
    for _ in range(trials):
        sys = random_system(rng, rng.randint(1, max_polymers))
        G = random_cluster(rng, sys, max_len)
        yield sys, G, random_behaviour(rng, sys)
