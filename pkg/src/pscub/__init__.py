"""Exact oracles, partition schemes and local-operator convergence bounds for abstract polymer systems."""
from . import errors, exact_oracle, polymer_core, sampling, schemes, scub_engine, tree_operators
from .polymer_core import Cluster, PolymerSystem, RootedTree, build_system, induce_cluster, load_system
from .exact_oracle import partition_function, ursell
from .scub_engine import LeopKind, Mixing, SyntheticLeop, leop, optimal_rho, scub_holds

__version__ = "0.1.0"

__all__ = [
    "Cluster", "LeopKind", "Mixing", "PolymerSystem", "RootedTree", "SyntheticLeop",
    "build_system", "errors", "exact_oracle", "induce_cluster", "leop",
    "load_system", "optimal_rho", "partition_function", "polymer_core", "sampling", "schemes",
    "scub_engine", "scub_holds", "tree_operators", "ursell",
]
