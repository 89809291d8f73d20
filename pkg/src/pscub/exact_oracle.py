"""Brute-force exact quantities of a finite polymer system.

Everything here is computed by explicit enumeration (independent sets of a
volume, connected spanning subgraphs of a cluster) and serves as ground
truth for the scheme and SCUB modules.
"""
from __future__ import annotations

import math
from functools import lru_cache
from itertools import combinations_with_replacement
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DivisionByZero,
    NonPositivePartitionFunction,
    PreconditionViolated,
    TooLarge,
    UnknownPolymer,
)
from .polymer_core import (
    Cluster,
    PolymerSystem,
    bits,
    connected_masks,
    enum_cap,
    induce_cluster,
)

def fugacity_list(sys: PolymerSystem, z) -> list:
    """Per-index fugacity list; a mapping defaults missing polymers to 0, a scalar is homogeneous."""
    if isinstance(z, Mapping):
        for k in z:
            if k not in sys.index:
                raise UnknownPolymer(f"fugacity given for unknown polymer {k!r}")
        return [z.get(p, 0.0) for p in sys.polymers]
    if isinstance(z, (list, tuple, np.ndarray)):
        if len(z) != len(sys):
            raise ValueError("fugacity sequence length differs from the system size")
        return list(z)
    return [z] * len(sys)


def _as_mask(sys: PolymerSystem, vol) -> int:
    if isinstance(vol, int):
        return vol
    return sys.mask(vol)


def xi_mask(nbr: Sequence[int], mask: int, z: Sequence) -> complex:
    """Sum of weights of the independent subsets of ``mask``.

    Depth-first enumeration of independent sets: each set is reached exactly
    once by deciding membership of the lowest remaining polymer, and its
    weight is accumulated as an explicit product.
    """
    total = 0.0
    stack = [(mask, 1.0)]
    while stack:
        rest, weight = stack.pop()
        if not rest:
            total += weight
            continue
        low = rest & -rest
        v = low.bit_length() - 1
        # either v stays out, or v joins and knocks out its neighbourhood
        stack.append((rest & ~low, weight))
        if z[v] != 0:
            stack.append((rest & ~nbr[v], weight * z[v]))
    return total


def partition_function(sys: PolymerSystem, vol, z) -> float:
    """Grand canonical partition function of the volume at fugacity ``z``."""
    mask = _as_mask(sys, vol)
    cap = enum_cap()
    if bin(mask).count("1") > cap:
        raise TooLarge(f"volume of {bin(mask).count('1')} polymers exceeds the enumeration cap")
    return xi_mask(sys.nbr, mask, fugacity_list(sys, z))


def one_polymer_ratio(sys: PolymerSystem, vol, g: str, z) -> float:
    """Xi_vol / Xi_{vol minus g}."""
    mask = _as_mask(sys, vol)
    i = sys.idx(g)
    if not mask >> i & 1:
        raise PreconditionViolated(f"{g!r} is not in the volume")
    zl = fugacity_list(sys, z)
    den = xi_mask(sys.nbr, mask & ~(1 << i), zl)
    if den == 0:
        raise DivisionByZero("partition function of the reduced volume vanishes")
    return xi_mask(sys.nbr, mask, zl) / den


def reduced_correlation(sys: PolymerSystem, vol, pins: Sequence[str], z) -> float:
    """Xi of the volume minus the incompatible sets of all pins, over Xi of the volume."""
    mask = _as_mask(sys, vol)
    if len(set(pins)) != len(pins):
        raise PreconditionViolated("pins must be distinct")
    removed = 0
    for p in pins:
        i = sys.idx(p)
        if not mask >> i & 1:
            raise PreconditionViolated(f"pin {p!r} is not in the volume")
        removed |= sys.nbr[i]
    zl = fugacity_list(sys, z)
    den = xi_mask(sys.nbr, mask, zl)
    if den == 0:
        raise DivisionByZero("partition function of the volume vanishes")
    return xi_mask(sys.nbr, mask & ~removed, zl) / den


def pinned_connected_function(sys: PolymerSystem, vol, g: str, z) -> float:
    """Xi_{vol minus Gamma*(g)} / Xi_vol."""
    return reduced_correlation(sys, vol, [g], z)


def free_energy(sys: PolymerSystem, vol, z) -> float:
    mask = _as_mask(sys, vol)
    size = bin(mask).count("1")
    if size == 0:
        raise PreconditionViolated("free energy needs a nonempty volume")
    xi = xi_mask(sys.nbr, mask, fugacity_list(sys, z))
    if not xi > 0:
        raise NonPositivePartitionFunction(f"partition function is {xi}")
    return -math.log(xi) / size


def fundamental_identity_residual(sys: PolymerSystem, vol, g: str, z) -> float:
    """Xi_vol - Xi_{vol - g} - z_g * Xi_{vol - Gamma*(g)}; zero up to round-off."""
    mask = _as_mask(sys, vol)
    i = sys.idx(g)
    if not mask >> i & 1:
        raise PreconditionViolated(f"{g!r} is not in the volume")
    zl = fugacity_list(sys, z)
    return (
        xi_mask(sys.nbr, mask, zl)
        - xi_mask(sys.nbr, mask & ~(1 << i), zl)
        - zl[i] * xi_mask(sys.nbr, mask & ~sys.nbr[i], zl)
    )


def telescoped_ratios(sys: PolymerSystem, order: Sequence[str], z) -> list[float]:
    """One-polymer ratios along the chain that removes ``order`` from the back.

    The i-th ratio is taken in the volume made of the first i+1 polymers of
    ``order``, so the product of all of them is Xi of the whole volume.
    """
    out = []
    for i in range(len(order)):
        out.append(one_polymer_ratio(sys, order[: i + 1], order[i], z))
    return out


def pinned_product_form(sys: PolymerSystem, vol, g: str, z) -> float:
    """Pinned connected function rebuilt from inverse one-polymer ratios.

    Removes g first, then its incompatible neighbours in system order, each
    time dividing by the ratio of the polymer being removed.
    """
    mask = _as_mask(sys, vol)
    i = sys.idx(g)
    zl = fugacity_list(sys, z)
    cur = mask
    value = 1.0
    for v in [i] + [w for w in bits(sys.nbr[i] & mask) if w != i]:
        num = xi_mask(sys.nbr, cur, zl)
        den = xi_mask(sys.nbr, cur & ~(1 << v), zl)
        if den == 0 or num == 0:
            raise DivisionByZero("vanishing partition function along the product chain")
        value *= den / num
        cur &= ~(1 << v)
    return value


def adaptive_simpson(f: Callable[[float], float], a: float, b: float, tol: float = 1e-10,
                     max_depth: int = 50) -> float:
    """Adaptive Simpson quadrature with Richardson correction."""

    def simpson(fa, fm, fb, lo, hi):
        return (hi - lo) / 6.0 * (fa + 4.0 * fm + fb)

    def rec(lo, hi, fa, fm, fb, whole, eps, depth):
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, lo, mid)
        right = simpson(fm, frm, fb, mid, hi)
        if depth <= 0 or abs(left + right - whole) <= 15.0 * eps:
            return left + right + (left + right - whole) / 15.0
        return rec(lo, mid, fa, flm, fm, left, eps / 2, depth - 1) + rec(
            mid, hi, fm, frm, fb, right, eps / 2, depth - 1
        )

    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    return rec(a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, max_depth)


def integral_form_log_ratio(sys: PolymerSystem, vol, g: str, z, tol: float = 1e-10) -> float:
    """z_g times the integral over alpha in [0,1] of the pinned function at z scaled on g by alpha."""
    zl = fugacity_list(sys, z)
    i = sys.idx(g)
    mask = _as_mask(sys, vol)
    removed = xi_mask(sys.nbr, mask & ~sys.nbr[i], zl)

    def pinned_at(alpha: float) -> float:
        za = list(zl)
        za[i] = alpha * zl[i]
        den = xi_mask(sys.nbr, mask, za)
        if den == 0:
            raise DivisionByZero("partition function vanishes on the integration path")
        return removed / den

    return zl[i] * adaptive_simpson(pinned_at, 0.0, 1.0, tol)


# ---------------------------------------------------------------------------
# Ursell functions
# ---------------------------------------------------------------------------


@lru_cache(maxsize=65536)
def _signed_connected_sum(n: int, edges: tuple) -> int:
    G = Cluster(n, edges)
    masks = connected_masks(G)
    if len(masks) == 0:
        return 0
    parity = np.zeros(len(masks), dtype=np.int64)
    m = masks.copy()
    while np.any(m):
        parity ^= m & 1
        m >>= 1
    odd = int(parity.sum())
    return (len(masks) - odd) - odd


def ursell(G: Cluster) -> int:
    """Signed count of the connected spanning subgraphs of ``G``.

    1 for a single vertex, 0 for a disconnected graph.
    """
    if G.n == 1:
        return 1
    if not G.connected:
        return 0
    if G.n_edges > enum_cap():
        raise TooLarge(f"{G.n_edges} edges exceed the enumeration cap {enum_cap()}")
    return _signed_connected_sum(G.n, G.edges)


def alternating_sign_check(G: Cluster) -> bool:
    return (-1) ** (G.n + 1) * ursell(G) >= 0


def truncated_pinned_series(sys: PolymerSystem, g: str, rho, n_max: int,
                            exclude: str | None = None, partial_sums: bool = False):
    """Sum over n <= n_max of (1/n!) sum over vectors xi of |u(g, xi)| prod rho.

    Vectors range over the system minus ``exclude``. Vectors are grouped by
    their multiset of labels: a multiset with multiplicities m_k stands for
    n!/prod(m_k!) orderings, all with the same Ursell value.
    """
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    rl = fugacity_list(sys, rho)
    if any(r < 0 for r in rl):
        raise PreconditionViolated("rho must be nonnegative")
    if n_max > 6 and enum_cap() < (n_max + 1) * n_max // 2:
        raise TooLarge("truncation order exceeds the enumeration cap")
    sys.idx(g)
    pool = [p for p in sys.polymers if p != exclude]
    if exclude is not None:
        sys.idx(exclude)
    pool = [p for p in pool if rl[sys.idx(p)] != 0]
    sums = [1.0]
    acc = 1.0
    for n in range(1, n_max + 1):
        term = 0.0
        for combo in combinations_with_replacement(pool, n):
            G = induce_cluster(sys, (g,) + combo)
            if not G.connected:
                continue
            weight = 1.0
            for p in combo:
                weight *= rl[sys.idx(p)]
            denom = 1
            for p in set(combo):
                denom *= math.factorial(combo.count(p))
            term += abs(ursell(G)) * weight / denom
        acc += term
        sums.append(acc)
    return sums if partial_sums else acc


# ---------------------------------------------------------------------------
# monotonicity of one-polymer ratios
# ---------------------------------------------------------------------------


def monotonicity_check(sys: PolymerSystem, vol, sub_vol, g: str, rho, nu,
                       tol: float = 1e-12) -> bool:
    """Volume and parameter monotonicity of the ratio at negative real fugacity.

    With ``sub_vol`` inside ``vol``, both containing g, and 0 <= nu <= rho:
    ratio(vol, -rho) <= ratio(sub_vol, -rho) and ratio(vol, -rho) <= ratio(vol, -nu).
    """
    big = _as_mask(sys, vol)
    small = _as_mask(sys, sub_vol)
    i = sys.idx(g)
    if small & ~big or not small >> i & 1:
        raise PreconditionViolated("need g in sub_vol and sub_vol inside vol")
    rl = fugacity_list(sys, rho)
    nl = fugacity_list(sys, nu)
    if any(not (0 <= a <= b) for a, b in zip(nl, rl)):
        raise PreconditionViolated("need 0 <= nu <= rho")
    neg_rho = [-r for r in rl]
    neg_nu = [-r for r in nl]
    if not xi_mask(sys.nbr, big & ~(1 << i), neg_rho) > 0:
        raise PreconditionViolated("Xi of the reduced volume at -rho is not positive")

    def ratio(mask, z):
        return xi_mask(sys.nbr, mask, z) / xi_mask(sys.nbr, mask & ~(1 << i), z)

    r_big = ratio(big, neg_rho)
    volume_ok = r_big <= ratio(small, neg_rho) + tol
    param_ok = r_big <= ratio(big, neg_nu) + tol
    return bool(volume_ok and param_ok)


def admissible(sys: PolymerSystem, rho, vols: Iterable[int] | None = None) -> bool:
    """True when Xi_vol(-rho) > 0 for every volume (all subsets by default)."""
    neg = [-r for r in fugacity_list(sys, rho)]
    if vols is None:
        vols = range(1 << len(sys))
    return all(xi_mask(sys.nbr, m, neg) > 0 for m in vols)
