"""Local-operator bounds (SCUBs) for negative-fugacity polymer systems.

Each bound is a family of local operators ``phi_g(mu)``.  A fugacity ``rho``
satisfies the bound when some ``mu >= 0`` has ``rho * phi(mu) <= mu`` (or
``<`` for the reduced, returning, mixing and synthetic forms).  The least
such ``mu`` is found by monotone iteration from 0.
"""
from __future__ import annotations

import math
import random
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    NoIncompatibleNeighbour,
    NonUnimodal,
    NotConverged,
    OutOfRange,
    PreconditionViolated,
    TooLarge,
    UnknownPair,
    WrongKind,
)
from .exact_oracle import fugacity_list, truncated_pinned_series, xi_mask
from .polymer_core import PolymerSystem, bit_list, bits, popcount

KP = "kp"
DOBRUSHIN = "dob"
FP = "fp"
REDUCED = "red"
RETURNING = "ret"
MIXING = "mix"
SYNTHETIC = "syn"

CLASSIC = (KP, DOBRUSHIN, FP)
STRICT = (REDUCED, RETURNING, MIXING, SYNTHETIC)

DIVERGENCE_GUARD = 1e9
MAX_ITERATIONS = 10_000
RELATIVE_STABILITY = 1e-12
STRICT_DELTA = 1e-6


@dataclass(frozen=True)
class LeopKind:
    """Which local operator to use.

    Mixing carries a behaviour per polymer, synthetic one per escape pair
    ``(polymer, escape)``.  A missing behaviour means the best one, chosen
    polymer by polymer.  ``sup_over`` selects the domain of the escape
    supremum of the synthetic form: ``"out"`` (returning-outgoing escapes,
    the default) or ``"in"`` (returning-incoming escapes).
    """

    tag: str
    behaviour: Mapping | None = field(default=None, compare=False)
    sup_over: str = "out"

    def __post_init__(self):
        if self.tag not in CLASSIC + STRICT:
            raise WrongKind(f"unknown local operator {self.tag!r}")
        if self.sup_over not in ("out", "in"):
            raise ValueError("sup_over must be 'out' or 'in'")

    @property
    def strict(self) -> bool:
        return self.tag in STRICT

    def __repr__(self) -> str:
        extra = "" if self.behaviour is None else ", g"
        return f"LeopKind({self.tag}{extra})"


KP_KIND = LeopKind(KP)
DOB_KIND = LeopKind(DOBRUSHIN)
FP_KIND = LeopKind(FP)
RED_KIND = LeopKind(REDUCED)
RET_KIND = LeopKind(RETURNING)


def Mixing(behaviour: Mapping[str, str] | None = None) -> LeopKind:
    return LeopKind(MIXING, None if behaviour is None else dict(behaviour))


def SyntheticLeop(behaviour: Mapping[tuple[str, str], str] | None = None,
                  sup_over: str = "out") -> LeopKind:
    return LeopKind(SYNTHETIC, None if behaviour is None else dict(behaviour), sup_over)


def kind_from_name(name: str) -> LeopKind:
    table = {
        "kp": KP_KIND, "dob": DOB_KIND, "dobrushin": DOB_KIND, "fp": FP_KIND,
        "red": RED_KIND, "reduced": RED_KIND, "ret": RET_KIND, "returning": RET_KIND,
        "mix": Mixing(), "mixing": Mixing(), "syn": SyntheticLeop(), "synthetic": SyntheticLeop(),
    }
    try:
        return table[name.lower()]
    except KeyError:
        raise WrongKind(f"unknown local operator {name!r}") from None


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


class _Xi:
    """Partition functions of sub-volumes at one fixed fugacity, memoised by mask.

    Uses the include/exclude split on the lowest polymer, so a volume's
    value is assembled from those of its sub-volumes; every sub-volume is
    evaluated once per fugacity vector.
    """

    __slots__ = ("nbr", "z", "memo")

    def __init__(self, nbr, z):
        self.nbr = nbr
        self.z = z
        self.memo = {0: 1.0}

    def __call__(self, mask: int) -> float:
        memo = self.memo
        r = memo.get(mask)
        if r is None:
            low = mask & -mask
            v = low.bit_length() - 1
            r = self(mask & ~low)
            if self.z[v]:
                r += self.z[v] * self(mask & ~self.nbr[v])
            memo[mask] = r
        return r


class ReferenceLeop:
    """Local operator of one kind on one system, evaluated on index-ordered vectors."""

    def __init__(self, kind: LeopKind, sys: PolymerSystem, allow_degenerate: bool = True):
        self.kind = kind
        self.sys = sys
        n = len(sys)
        self.nbr = sys.nbr
        self.others = [sys.nbr[i] & ~(1 << i) for i in range(n)]
        if not allow_degenerate and kind.tag in (REDUCED, RETURNING, MIXING, SYNTHETIC):
            for i in range(n):
                if not self.others[i]:
                    raise NoIncompatibleNeighbour(f"{sys.polymers[i]!r} has no other incompatible polymer")
        self.mix_choice = None
        self.rows = None
        self.rows_in = None
        if kind.tag == MIXING and kind.behaviour is not None:
            for p in kind.behaviour:
                sys.idx(p)
            self.mix_choice = [kind.behaviour.get(p, "G") for p in sys.polymers]
        if kind.tag == SYNTHETIC:
            if kind.behaviour is None:
                # every returning-outgoing subset of every neighbourhood
                self.rows = [list(_all_submasks(self.others[i])) for i in range(n)]
            else:
                out_rows, in_rows = _synthetic_rows(sys, kind.behaviour)
                self.rows = [[r] for r in out_rows]
                self.rows_in = in_rows

    # individual forms -------------------------------------------------------

    def _fp(self, i, xi):
        return xi(self.nbr[i])

    def _ret(self, i, mu, xi):
        others = self.others[i]
        if not others:
            return 1.0 + mu[i]
        return (1.0 + mu[i]) * max(xi(others & ~(1 << e)) for e in bit_list(others))

    def _red(self, i, mu):
        others = self.others[i]
        if not others:
            return 1.0 + mu[i]
        prods = []
        for e in bit_list(others):
            p = 1.0
            for w in bit_list(others & ~(1 << e)):
                p *= 1.0 + mu[w]
            prods.append(p)
        return (1.0 + mu[i]) * max(prods)

    def _syn_row(self, i, rout, rin, mu, xi):
        others = self.others[i]
        if not others:
            return 1.0 + mu[i]
        left = 0.0
        if rout != others:
            left = xi(rout) * xi(self.nbr[i] & ~rout)
        right = 0.0
        if rout:
            domain = rout if rin is None else rin
            best = 0.0
            for e in bit_list(domain):
                eb = 1 << e
                best = max(best, xi(rout & ~eb) * xi(others & ~(rout | eb)))
            right = (1.0 + mu[i]) * best
        return max(left, right)

    def value(self, i: int, mu: Sequence[float], xi: _Xi | None = None) -> float:
        if xi is None:
            xi = _Xi(self.nbr, mu)
        tag = self.kind.tag
        if tag == KP:
            s = 0.0
            for w in bit_list(self.nbr[i]):
                s += mu[w]
            return math.exp(s)
        if tag == DOBRUSHIN:
            p = 1.0
            for w in bit_list(self.nbr[i]):
                p *= 1.0 + mu[w]
            return p
        if tag == FP:
            return self._fp(i, xi)
        if tag == RETURNING:
            return self._ret(i, mu, xi)
        if tag == REDUCED:
            return self._red(i, mu)
        if tag == MIXING:
            if self.mix_choice is None:
                return min(self._fp(i, xi), self._ret(i, mu, xi))
            return self._fp(i, xi) if self.mix_choice[i] == "G" else self._ret(i, mu, xi)
        # synthetic
        rin = None
        if self.rows_in is not None and self.kind.sup_over == "in":
            rin = self.rows_in[i]
        return min(self._syn_row(i, r, rin, mu, xi) for r in self.rows[i])

    def vector(self, mu: Sequence[float]) -> list[float]:
        xi = _Xi(self.nbr, mu)
        return [self.value(i, mu, xi) for i in range(len(mu))]

    def best_rows(self, mu: Sequence[float]) -> list:
        """Per polymer, the behaviour attaining the optimum (mixing: 'G'/'R'; synthetic: R-out set)."""
        xi = _Xi(self.nbr, mu)
        out = []
        for i in range(len(mu)):
            if self.kind.tag == MIXING:
                out.append("G" if self._fp(i, xi) <= self._ret(i, mu, xi) else "R")
            elif self.kind.tag == SYNTHETIC:
                vals = [(self._syn_row(i, r, None, mu, xi), r) for r in self.rows[i]]
                out.append(self.sys.names(min(vals)[1]))
            else:
                raise WrongKind("only mixing and synthetic operators have behaviours")
        return out


def _all_submasks(m: int):
    sub = m
    while True:
        yield sub
        if sub == 0:
            return
        sub = (sub - 1) & m


def _synthetic_rows(sys: PolymerSystem, behaviour: Mapping[tuple[str, str], str]):
    n = len(sys)
    out_rows = [0] * n
    in_rows = [0] * n
    for (g, e), b in behaviour.items():
        gi, ei = sys.idx(g), sys.idx(e)
        if gi == ei or not sys.nbr[gi] >> ei & 1:
            raise UnknownPair(f"{(g, e)} is not an escape pair")
        if b not in ("G", "R"):
            raise ValueError(f"behaviour must be 'G' or 'R', got {b!r}")
    for g, e in sys.escape_pairs():
        if (g, e) not in behaviour:
            raise UnknownPair(f"behaviour missing for escape pair {(g, e)}")
        if behaviour[(g, e)] == "R":
            out_rows[sys.idx(g)] |= 1 << sys.idx(e)
            in_rows[sys.idx(e)] |= 1 << sys.idx(g)
    return out_rows, in_rows


def leop(kind: LeopKind, sys: PolymerSystem, g: str, mu) -> float:
    """Value of the local operator at polymer ``g``."""
    ml = fugacity_list(sys, mu)
    if any(m < 0 for m in ml):
        raise PreconditionViolated("mu must be nonnegative")
    return ReferenceLeop(kind, sys).value(sys.idx(g), ml)


def leop_vector(kind: LeopKind, sys: PolymerSystem, mu) -> dict[str, float]:
    ml = fugacity_list(sys, mu)
    vals = ReferenceLeop(kind, sys).vector(ml)
    return dict(zip(sys.polymers, vals))


def homogeneous_shape(kind: LeopKind, sys: PolymerSystem, g: str | None = None):
    """phi(t) = operator at ``g`` with mu = t everywhere (worst polymer when ``g`` is None)."""
    ev = ReferenceLeop(kind, sys)
    n = len(sys)
    idx = None if g is None else sys.idx(g)

    def phi(t: float) -> float:
        mu = [t] * n
        if idx is not None:
            return ev.value(idx, mu)
        return max(ev.vector(mu))

    return phi


# ---------------------------------------------------------------------------
# fixpoint iteration
# ---------------------------------------------------------------------------


@dataclass
class FixpointReport:
    converged: bool
    iterations: int
    limit: dict[str, float] | None
    witness_mu: dict[str, float] | None = None
    strict: bool = False
    reason: str = ""
    upper_limit: dict[str, float] | None = None
    strict_required: bool = False

    @property
    def holds(self) -> bool:
        """Converged, plus the strict inequality for the forms that need it."""
        if not self.converged:
            return False
        return self.strict if self.strict_required else True


class CompiledLeop:
    """Vectorised operator: all partition functions come from one matrix product.

    Every volume the operator needs is a subset of some neighbourhood.  The
    independent subsets of those volumes are listed once; at a fugacity
    their weights are products of coordinates and each volume's partition
    function is the sum of the weights of its subsets.  Columns of the
    input are independent fugacity vectors.
    """

    def __init__(self, kind: LeopKind, sys: PolymerSystem):
        self.kind = kind
        self.sys = sys
        n = len(sys)
        self.n = n
        nbr = sys.nbr
        others = [nbr[i] & ~(1 << i) for i in range(n)]
        self.degenerate = np.array([others[i] == 0 for i in range(n)])
        vols: dict[int, int] = {}

        def vol(m: int) -> int:
            if m not in vols:
                vols[m] = len(vols)
            return vols[m]

        vol(0)
        tag = kind.tag
        self.nbr_matrix = np.zeros((n, n))
        for i in range(n):
            for w in bit_list(nbr[i]):
                self.nbr_matrix[i, w] = 1.0
        self.others_matrix = self.nbr_matrix - np.eye(n)
        self.fp_idx = np.array([vol(nbr[i]) for i in range(n)]) if tag in (FP, MIXING) else None
        if tag in (RETURNING, MIXING):
            width = max(1, max(popcount(o) for o in others))
            self.ret_idx = np.full((n, width), -1)
            for i in range(n):
                es = bit_list(others[i]) or (None,)
                for k, e in enumerate(es):
                    self.ret_idx[i, k] = vol(others[i] if e is None else others[i] & ~(1 << e))
        if tag == MIXING and kind.behaviour is not None:
            for p in kind.behaviour:
                sys.idx(p)
            self.mix_g = np.array([kind.behaviour.get(p, "G") == "G" for p in sys.polymers])
        else:
            self.mix_g = None
        if tag == SYNTHETIC:
            if kind.behaviour is None:
                rows = [list(_all_submasks(others[i])) for i in range(n)]
                rins = [None] * n
            else:
                out_rows, in_rows = _synthetic_rows(sys, kind.behaviour)
                rows = [[r] for r in out_rows]
                rins = in_rows if kind.sup_over == "in" else [None] * n
            # one entry per (polymer, row): left factor volumes and flag
            owner, left_a, left_b, left_on, right_on = [], [], [], [], []
            pair_row, pair_a, pair_b = [], [], []
            for i in range(n):
                for r in rows[i]:
                    k = len(owner)
                    owner.append(i)
                    left_on.append(r != others[i])
                    left_a.append(vol(r))
                    left_b.append(vol(nbr[i] & ~r))
                    right_on.append(r != 0)
                    domain = r if rins[i] is None else rins[i]
                    for e in bit_list(domain):
                        eb = 1 << e
                        pair_row.append(k)
                        pair_a.append(vol(r & ~eb))
                        pair_b.append(vol(others[i] & ~(r | eb)))
            self.syn_owner = np.array(owner)
            self.syn_left = (np.array(left_a), np.array(left_b), np.array(left_on))
            self.syn_right_on = np.array(right_on)
            self.syn_pairs = (np.array(pair_row, dtype=int), np.array(pair_a, dtype=int),
                              np.array(pair_b, dtype=int))
            self.syn_rows = len(owner)
        volumes = list(vols)
        sets: dict[int, int] = {}
        for m in volumes:
            for s in _independent_subsets(nbr, m):
                sets.setdefault(s, len(sets))
        set_list = list(sets)
        self.members = np.zeros((len(set_list), n), dtype=bool)
        for k, s in enumerate(set_list):
            for v in bit_list(s):
                self.members[k, v] = True
        self.contains = np.zeros((len(volumes), len(set_list)))
        for a, m in enumerate(volumes):
            for k, s in enumerate(set_list):
                if s & ~m == 0:
                    self.contains[a, k] = 1.0

    def xi_volumes(self, mu: np.ndarray) -> np.ndarray:
        # weights of independent sets, one column per fugacity vector
        w = np.where(self.members[:, :, None], mu[None, :, :], 1.0).prod(axis=1)
        return self.contains @ w

    def _ret(self, mu, xi):
        vals = np.where((self.ret_idx >= 0)[:, :, None], xi[self.ret_idx], 0.0)
        return (1.0 + mu) * vals.max(axis=1)

    def __call__(self, mu: np.ndarray) -> np.ndarray:
        """Operator values for ``mu`` of shape (n,) or (n, B)."""
        squeeze = mu.ndim == 1
        if squeeze:
            mu = mu[:, None]
        tag = self.kind.tag
        with np.errstate(over="ignore", invalid="ignore"):
            if tag == KP:
                out = np.exp(self.nbr_matrix @ mu)
            elif tag == DOBRUSHIN:
                out = np.exp(self.nbr_matrix @ np.log1p(mu))
            elif tag == REDUCED:
                logs = np.log1p(mu)
                total = self.others_matrix @ logs
                masked = np.where(self.others_matrix[:, :, None] > 0, logs[None, :, :], np.inf)
                drop = np.where(self.degenerate[:, None], 0.0, masked.min(axis=1))
                out = (1.0 + mu) * np.exp(total - drop)
            else:
                xi = self.xi_volumes(mu)
                if tag == FP:
                    out = xi[self.fp_idx]
                elif tag == RETURNING:
                    out = self._ret(mu, xi)
                elif tag == MIXING:
                    fp, ret = xi[self.fp_idx], self._ret(mu, xi)
                    out = np.minimum(fp, ret) if self.mix_g is None else np.where(
                        self.mix_g[:, None], fp, ret)
                else:
                    out = self._syn(mu, xi)
        return out[:, 0] if squeeze else out

    def _syn(self, mu, xi):
        a, b, on = self.syn_left
        left = np.where(on[:, None], xi[a] * xi[b], 0.0)
        rows, pa, pb = self.syn_pairs
        best = np.zeros((self.syn_rows, mu.shape[1]))
        if len(rows):
            np.maximum.at(best, rows, xi[pa] * xi[pb])
        right = np.where(self.syn_right_on[:, None], (1.0 + mu[self.syn_owner]) * best, 0.0)
        row_val = np.maximum(left, right)
        out = np.full(mu.shape, np.inf)
        np.minimum.at(out, self.syn_owner, row_val)
        return np.where(self.degenerate[:, None], 1.0 + mu, out)


def _independent_subsets(nbr: Sequence[int], mask: int):
    stack = [(mask, 0)]
    while stack:
        rest, chosen = stack.pop()
        if not rest:
            yield chosen
            continue
        low = rest & -rest
        v = low.bit_length() - 1
        stack.append((rest & ~low, chosen))
        stack.append((rest & ~nbr[v], chosen | low))


def _iterate(ev: CompiledLeop, rho: np.ndarray, start: np.ndarray, max_iter: int,
             guard: float, rtol: float):
    """Monotone iteration for every column at once.

    Returns (status per column, iterations per column, final point) with
    status 1 converged, -1 diverged and 0 undecided after ``max_iter``.
    """
    mu = start.copy()
    B = mu.shape[1]
    status = np.zeros(B, dtype=int)
    iters = np.full(B, max_iter)
    active = np.ones(B, dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        for it in range(1, max_iter + 1):
            new = rho * ev(mu)
            bad = active & (~np.isfinite(new).all(axis=0) | (new > guard).any(axis=0))
            stable = active & ~bad & (np.abs(new - mu) <= rtol * np.abs(new)).all(axis=0)
            if bad.any() or stable.any():
                status[bad] = -1
                status[stable] = 1
                iters[bad | stable] = it
                keep_new = active & ~bad
                active &= ~(bad | stable)
                mu = np.where(keep_new[None, :], new, mu)
                if not active.any():
                    break
            elif active.all():
                mu = new
            else:
                mu = np.where(active[None, :], new, mu)
    return status, iters, mu


def _strict_witness(ev: CompiledLeop, rho: np.ndarray, mu_up: np.ndarray) -> bool:
    """rho * phi(w) < w coordinatewise, with w the limit at an inflated rho."""
    w = mu_up.copy()
    pos = w[w > 0]
    w[w == 0] = STRICT_DELTA * (pos.min() if pos.size else 1.0)
    vals = ev(w)
    return bool(np.all(np.isfinite(vals)) and np.all(rho * vals < w))


def scub_holds(kind: LeopKind, sys: PolymerSystem, rho, witness=None,
               max_iter: int = MAX_ITERATIONS, guard: float = DIVERGENCE_GUARD,
               rtol: float = RELATIVE_STABILITY, delta: float = STRICT_DELTA) -> FixpointReport:
    """Iterate mu <- rho * phi(mu) from 0 and report the limit.

    On convergence the limit is itself the witness.  Strictness is checked
    on an explicit point: the limit of the iteration at rho * (1 + delta),
    which satisfies rho * phi(w) < w when it exists.  A supplied
    ``witness`` must be a decreasing point; the iteration is then also run
    downward from it.
    """
    rl = np.array(fugacity_list(sys, rho), dtype=float)
    if (rl < 0).any():
        raise PreconditionViolated("rho must be nonnegative")
    ev = CompiledLeop(kind, sys)
    n = len(sys)
    rho_cols = np.stack([rl, rl * (1 + delta)], axis=1)
    status, iters, mu = _iterate(ev, rho_cols, np.zeros((n, 2)), max_iter, guard, rtol)
    ok = status[0] == 1
    why = {1: "stable", -1: "diverged", 0: "iterations"}[int(status[0])]
    names = sys.polymers
    rep = FixpointReport(bool(ok), int(iters[0]), dict(zip(names, mu[:, 0].tolist())) if ok else None,
                         reason=why, strict_required=kind.strict)
    if ok:
        rep.witness_mu = dict(rep.limit)
        rep.strict = status[1] == 1 and _strict_witness(ev, rl, mu[:, 1])
    if witness is not None:
        wl = np.array(fugacity_list(sys, witness), dtype=float)
        if np.any(rl * ev(wl) > wl * (1 + 1e-12)):
            raise PreconditionViolated("supplied witness is not a decreasing point")
        _, _, upper = _iterate(ev, rl[:, None], wl[:, None], max_iter, guard, rtol)
        rep.upper_limit = dict(zip(names, upper[:, 0].tolist()))
        rep.witness_mu = dict(zip(names, wl.tolist()))
    return rep


def converges_batch(kind: LeopKind, sys: PolymerSystem, rhos: np.ndarray,
                    max_iter: int = MAX_ITERATIONS, guard: float = DIVERGENCE_GUARD,
                    rtol: float = RELATIVE_STABILITY):
    """Convergence status (1, -1 or 0) and limits for each column of ``rhos``."""
    ev = CompiledLeop(kind, sys)
    status, _, mu = _iterate(ev, np.asarray(rhos, dtype=float), np.zeros(rhos.shape),
                             max_iter, guard, rtol)
    return status, mu


def optimal_scaling(kind: LeopKind, sys: PolymerSystem, direction=None, tol: float = 1e-10,
                    max_iter: int = MAX_ITERATIONS, grid: int = 32) -> float:
    """Largest t such that the iteration converges at rho = t * direction.

    Brackets by a batched grid search, one grid of ``grid`` points per round.
    """
    d = np.array(fugacity_list(sys, 1.0 if direction is None else direction), dtype=float)
    if d.max() <= 0:
        raise PreconditionViolated("direction must have a positive coordinate")
    ev = CompiledLeop(kind, sys)
    lo, hi = 0.0, 1.0 / d.max()
    while hi - lo > tol * hi:
        ts = lo + (hi - lo) * np.arange(1, grid + 1) / (grid + 1)
        status, _, _ = _iterate(ev, d[:, None] * ts[None, :], np.zeros((len(d), grid)),
                                max_iter, DIVERGENCE_GUARD, RELATIVE_STABILITY)
        good = np.flatnonzero(status == 1)
        # convergence is monotone in t; take the last converged point before the first failure
        fail = np.flatnonzero(status != 1)
        if fail.size:
            first_fail = fail[0]
            good = good[good < first_fail]
            new_hi = ts[first_fail]
        else:
            new_hi = hi
        new_lo = ts[good[-1]] if good.size else lo
        lo, hi = new_lo, new_hi
    return float(lo)


def critical_scaling(kind: LeopKind, sys: PolymerSystem, direction=None, lo: float = 1e-8,
                     hi: float = 1e4, scan: int = 64,
                     far: Sequence[float] = tuple(10.0 ** k for k in range(5, 14))) -> float:
    """Supremum of t for which rho = t * direction has a fixed point, by continuation.

    Follows the curve of fixed points parametrised by the total mass
    s = sum(mu).  Every point on it certifies a fixed point at its t, so
    the supremum is either a turning point of t(s), refined by golden
    section, or the limit as s grows along the geometric masses ``far``,
    extrapolated by iterated Aitken steps (the tail can decay like a
    fractional power of s).  Unlike ``optimal_scaling`` this has no
    iteration budget bias.
    """
    d = np.array(fugacity_list(sys, 1.0 if direction is None else direction), dtype=float)
    if d.max() <= 0 or (d < 0).any():
        raise PreconditionViolated("direction must be nonnegative with a positive coordinate")
    from scipy.optimize import root  # only this routine needs scipy

    ev = CompiledLeop(kind, sys)
    free = np.flatnonzero(d > 0)

    def unpack(x):
        mu = np.zeros(len(d))
        mu[free] = x[1:]
        return x[0], mu

    def resid(x, s):
        t, mu = unpack(x)
        r = (mu - t * d * ev(mu))[free]
        return np.concatenate([r, [mu.sum() - s]]) / s

    def solve(s, x0):
        with np.errstate(over="ignore", invalid="ignore"):
            sol = root(resid, x0, args=(s,), method="hybr", options={"xtol": 1e-15})
            ok = np.all(np.isfinite(sol.x)) and np.max(np.abs(resid(sol.x, s))) <= 1e-12
        t, mu = unpack(sol.x)
        return sol.x if ok and t > 0 and (mu >= 0).all() else None

    v0 = ev(np.zeros(len(d)))
    base = d[free] * v0[free]
    x = np.concatenate([[lo / base.sum()], lo * base / base.sum()])
    ts, xs, ss = [], [], []
    for s in np.exp(np.linspace(math.log(lo), math.log(hi), scan)):
        x = solve(s, x)
        if x is None:
            break
        ts.append(x[0])
        xs.append(x)
        ss.append(s)
        if x[0] < 0.5 * max(ts):
            break
    if not ts:
        raise NotConverged("no fixed point near zero mass")
    j = int(np.argmax(ts))
    if j < len(ts) - 1:
        best = [ts[j]]

        def along(log_s: float) -> float:
            y = solve(math.exp(log_s), xs[j])
            if y is None:
                return -math.inf
            best.append(y[0])
            return y[0]

        _golden_max(along, math.log(ss[max(j - 1, 0)]), math.log(ss[j + 1]), tol=1e-15)
        return float(max(best))
    if len(ts) < scan:
        raise NotConverged("lost the fixed-point branch before a turning point")
    # t still rising at large mass: some coordinate escapes to infinity
    x, s_prev, far_t = xs[-1], ss[-1], []
    for s in far:
        for step in np.exp(np.linspace(math.log(s_prev), math.log(s), 8))[1:]:
            x = solve(step, x)
            if x is None:
                break
        if x is None:
            break
        s_prev = s
        far_t.append(float(x[0]))
    if len(far_t) < 3:
        raise NotConverged("lost the fixed-point branch at large mass")
    if len(far_t) % 2 == 0:
        far_t = far_t[1:]
    while len(far_t) > 1:
        far_t = [_aitken(a, b, c) for a, b, c in zip(far_t, far_t[1:], far_t[2:])]
    return far_t[0]


def _aitken(a: float, b: float, c: float) -> float:
    den = (c - b) - (b - a)
    return c if den == 0 else c - (c - b) ** 2 / den


# ---------------------------------------------------------------------------
# optimal homogeneous fugacity
# ---------------------------------------------------------------------------


def _golden_max(f, a: float, b: float, tol: float = 1e-13) -> float:
    inv = (math.sqrt(5) - 1) / 2
    c = b - inv * (b - a)
    d = a + inv * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol * max(1.0, abs(a) + abs(b)):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def optimal_point(kind: LeopKind, sys: PolymerSystem, polymer: str | None = None,
                  lo: float = 1e-8, hi: float = 1e4, scan: int = 240):
    """Maximiser of t / phi(t) over homogeneous mu = t.  Returns (rho, t)."""
    return maximise_ratio(homogeneous_shape(kind, sys, polymer), lo, hi, scan)


def maximise_ratio(phi, lo: float = 1e-8, hi: float = 1e4, scan: int = 240):
    """(max of t / phi(t), maximiser) for a positive increasing shape phi."""

    def ratio_log(s: float) -> float:
        t = math.exp(s)
        try:
            return t / phi(t)
        except OverflowError:
            return 0.0

    a, b = math.log(lo), math.log(hi)
    grid = [a + (b - a) * k / (scan - 1) for k in range(scan)]
    vals = [ratio_log(s) for s in grid]
    k = max(range(scan), key=vals.__getitem__)
    rising = all(vals[j] <= vals[j + 1] for j in range(k))
    falling = all(vals[j] >= vals[j + 1] for j in range(k, scan - 1))
    if not (rising and falling) or k in (0, scan - 1):
        warnings.warn("ratio mu/phi(mu) is not unimodal on the scan; using a dense grid",
                      NonUnimodal, stacklevel=2)
        t_hi = math.exp(grid[min(k + 1, scan - 1)])
        steps = min(int(t_hi / 1e-4) + 1, 2_000_000)
        best_t = max((j * 1e-4 for j in range(1, steps + 1)), key=lambda t: t / phi(t))
        return best_t / phi(best_t), best_t
    s_lo, s_hi = grid[max(k - 1, 0)], grid[min(k + 1, scan - 1)]
    s = _golden_max(ratio_log, s_lo, s_hi)
    s = _stationary_refine(phi, s, s_lo, s_hi)
    t = math.exp(s)
    return t / phi(t), t


def _stationary_refine(phi, s: float, s_lo: float, s_hi: float) -> float:
    """Bisection on the sign of d/ds log(t/phi(t)) near the golden-section estimate."""

    def slope(x: float) -> float:
        h = 1e-6
        up, dn = math.exp(x + h), math.exp(x - h)
        return (2 * h - math.log(phi(up)) + math.log(phi(dn))) / (2 * h)

    a, b = max(s_lo, s - 1e-3), min(s_hi, s + 1e-3)
    if not (slope(a) > 0 > slope(b)):
        return s
    for _ in range(60):
        m = 0.5 * (a + b)
        if slope(m) > 0:
            a = m
        else:
            b = m
    return 0.5 * (a + b)


def optimal_rho(kind: LeopKind, sys: PolymerSystem, homogeneous: bool = True,
                polymer: str | None = None) -> float:
    """max over t of t / phi(t) for the homogeneous shape at ``polymer``.

    Without a polymer, phi is the largest operator value over all polymers,
    which is the per-polymer uniform scaling of the bound.
    """
    if not homogeneous and polymer is None:
        raise PreconditionViolated("non-homogeneous optimisation needs a polymer")
    return optimal_point(kind, sys, polymer)[0]


# ---------------------------------------------------------------------------
# multiplexed operators over escape pairs
# ---------------------------------------------------------------------------


def multiplex(sys: PolymerSystem, mu) -> dict[tuple[str, str], float]:
    """Lift a polymer vector to escape pairs by ignoring the escape."""
    ml = fugacity_list(sys, mu)
    return {(g, e): ml[sys.idx(g)] for g, e in sys.escape_pairs()}


def multiplexed_operator(kind: LeopKind | str, sys: PolymerSystem, rho,
                         u: Mapping[tuple[str, str], float], behaviour=None) -> dict:
    """Operator on escape-pair vectors for the returning, reduced or synthetic form.

    At (g, e) the vertex is labelled g and must not have a differing child
    labelled e; children differing from g carry the pair (child, g), a child
    with the same label carries (g, e) again.
    """
    tag = kind.tag if isinstance(kind, LeopKind) else kind
    if tag not in (RETURNING, REDUCED, SYNTHETIC):
        raise WrongKind("multiplexed operators exist for returning, reduced and synthetic forms")
    if tag == SYNTHETIC:
        if behaviour is None and isinstance(kind, LeopKind):
            behaviour = kind.behaviour
        if behaviour is None:
            raise WrongKind("the synthetic multiplexed operator needs a behaviour")
        out_rows, _ = _synthetic_rows(sys, behaviour)
    pairs = sys.escape_pairs()
    for p in pairs:
        if p not in u:
            raise UnknownPair(f"u has no value for escape pair {p}")
    for p in u:
        if p not in set(pairs):
            raise UnknownPair(f"{p} is not an escape pair")
    rl = fugacity_list(sys, rho)
    result = {}
    for g, e in pairs:
        gi, ei = sys.idx(g), sys.idx(e)
        others = sys.nbr[gi] & ~(1 << gi)
        nu = [0.0] * len(sys)
        for w in bits(others):
            nu[w] = u[(sys.polymers[w], g)]
        nu[gi] = u[(g, e)]
        xi = _Xi(sys.nbr, nu)
        if tag == RETURNING:
            val = (1.0 + nu[gi]) * xi(others & ~(1 << ei))
        elif tag == REDUCED:
            val = 1.0 + nu[gi]
            for w in bits(others & ~(1 << ei)):
                val *= 1.0 + nu[w]
        else:
            rout = out_rows[gi]
            if behaviour[(g, e)] == "G":
                val = xi(rout) * xi(sys.nbr[gi] & ~rout)
            else:
                val = (1.0 + nu[gi]) * xi(rout & ~(1 << ei)) * xi(others & ~(rout | 1 << ei))
        result[(g, e)] = rl[gi] * val
    return result


def project_sup(sys: PolymerSystem, values: Mapping[tuple[str, str], float]) -> dict[str, float]:
    """Supremum over escapes, per polymer (0 for a polymer without escape pairs)."""
    out = {p: 0.0 for p in sys.polymers}
    for (g, _), v in values.items():
        out[g] = max(out[g], v)
    return out


# ---------------------------------------------------------------------------
# series and generic bounds
# ---------------------------------------------------------------------------


@dataclass
class SeriesReport:
    checked: int = 0
    violations: list = field(default_factory=list)
    worst_ratio: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.violations


def escaping_series_bound_check(sys: PolymerSystem, rho, mu_witness, n_max: int,
                                kind: LeopKind = RET_KIND) -> SeriesReport:
    """Check rho_g * (escaping pinned series up to order n) <= mu_g for all pairs and orders.

    ``mu_witness`` must be a decreasing point of ``kind`` at ``rho``.
    """
    rl = [float(r) for r in fugacity_list(sys, rho)]
    ml = [float(m) for m in fugacity_list(sys, mu_witness)]
    vals = ReferenceLeop(kind, sys).vector(ml)
    if any(r * v > m * (1 + 1e-9) + 1e-300 for r, v, m in zip(rl, vals, ml)):
        raise PreconditionViolated("mu_witness is not a decreasing point at rho")
    rep = SeriesReport()
    for g, e in sys.escape_pairs():
        gi = sys.idx(g)
        sums = truncated_pinned_series(sys, g, rho, n_max, exclude=e, partial_sums=True)
        for order, s in enumerate(sums):
            rep.checked += 1
            lhs = rl[gi] * s
            if ml[gi] > 0:
                rep.worst_ratio = max(rep.worst_ratio, lhs / ml[gi])
            if lhs > ml[gi] * (1 + 1e-12):
                rep.violations.append((g, e, order, lhs, ml[gi]))
    return rep


def generic_scub_bound(sys: PolymerSystem, rho, nu, certify: bool = True) -> dict[str, float]:
    """Lower bound (nu - rho)/nu (1 where nu = 0) on limiting one-polymer ratios."""
    rl = [float(r) for r in fugacity_list(sys, rho)]
    nl = [float(v) for v in fugacity_list(sys, nu)]
    if any(not (0 <= r <= v) for r, v in zip(rl, nl)):
        raise PreconditionViolated("need 0 <= rho <= nu")
    if certify:
        if len(sys) > 20:
            raise TooLarge("cannot certify nu by a volume sweep on this many polymers")
        neg = [-v for v in nl]
        for m in range(1 << len(sys)):
            if not xi_mask(sys.nbr, m, neg) > 0:
                raise PreconditionViolated("nu is not admissible")
    return {p: (1.0 if v == 0 else (v - r) / v) for p, r, v in zip(sys.polymers, rl, nl)}


# ---------------------------------------------------------------------------
# synthetic versus mixing
# ---------------------------------------------------------------------------


def embed_mixing(sys: PolymerSystem, g: Mapping[str, str]) -> dict[tuple[str, str], str]:
    """Synthetic behaviour that gives every escape pair its polymer's mixing behaviour."""
    return {(x, e): g[x] for x, e in sys.escape_pairs()}


def collapse_synthetic(sys: PolymerSystem, g: Mapping[tuple[str, str], str]) -> dict[str, str]:
    """Mixing behaviour R exactly where every outgoing pair is R."""
    out = {}
    for p in sys.polymers:
        others = sys.incompatible_others(p)
        out[p] = "R" if others and all(g[(p, e)] == "R" for e in others) else "G"
    return out


def improve_synthetic(sys: PolymerSystem, g: Mapping[tuple[str, str], str], p: str):
    """Set all outgoing pairs of ``p`` to G."""
    h = dict(g)
    for e in sys.incompatible_others(p):
        h[(p, e)] = "G"
    return h


@dataclass
class MixingReport:
    extremes_equal: bool = True
    embed_equal: bool = True
    improvement_ok: bool = True
    submult_ok: bool = True
    equality_stated_ok: bool = True
    equality_exact_ok: bool = True
    collapse_ok: bool = True
    instances: int = 0
    messages: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return (self.extremes_equal and self.embed_equal and self.improvement_ok
                and self.submult_ok and self.equality_stated_ok and self.collapse_ok)


def _close(a: float, b: float, tol: float) -> bool:
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def mixing_reduction_check(sys: PolymerSystem, mu, rng: random.Random | None = None,
                           samples: int = 8, tol: float = 1e-10,
                           sup_over: str = "out") -> MixingReport:
    """Check the algebra linking the FP, returning, mixing and synthetic operators at ``mu``.

    Covers the extreme mixing behaviours, the embedding of mixing into
    synthetic behaviours, the improvement of a synthetic behaviour by
    switching a polymer's outgoing pairs to G, submultiplicativity of the
    partition function (with the equality condition as usually stated),
    and the collapse of any synthetic behaviour to a mixing one.
    """
    if len(sys) > 20:
        raise TooLarge("mixing checks enumerate behaviours on at most 20 polymers")
    rng = rng or random.Random(0)
    ml = [float(m) for m in fugacity_list(sys, mu)]
    rep = MixingReport()
    names = sys.polymers
    fp = ReferenceLeop(FP_KIND, sys).vector(ml)
    ret = ReferenceLeop(RET_KIND, sys).vector(ml)
    all_g = ReferenceLeop(Mixing({p: "G" for p in names}), sys).vector(ml)
    all_r = ReferenceLeop(Mixing({p: "R" for p in names}), sys).vector(ml)
    if all_g != fp or all_r != ret:
        rep.extremes_equal = False
        rep.messages.append("mixing extremes differ from FP/returning")

    pairs = sys.escape_pairs()
    for _ in range(samples):
        rep.instances += 1
        h = {p: rng.choice("GR") for p in names}
        mix = ReferenceLeop(Mixing(h), sys).vector(ml)
        emb = ReferenceLeop(SyntheticLeop(embed_mixing(sys, h), sup_over), sys).vector(ml)
        if any(not _close(a, b, tol) for a, b in zip(mix, emb)):
            rep.embed_equal = False
            rep.messages.append(f"embedded mixing behaviour {h} differs")

        g = {pr: rng.choice("GR") for pr in pairs}
        syn = ReferenceLeop(SyntheticLeop(g, sup_over), sys).vector(ml)
        for p in names:
            others = sys.incompatible_others(p)
            if not others or all(g[(p, e)] == "R" for e in others):
                continue
            g2 = improve_synthetic(sys, g, p)
            syn2 = ReferenceLeop(SyntheticLeop(g2, sup_over), sys).vector(ml)
            if any(b > a + tol * max(1.0, a) for a, b in zip(syn, syn2)):
                rep.improvement_ok = False
                rep.messages.append(f"switching {p} to G increased the operator")
        collapsed = ReferenceLeop(Mixing(collapse_synthetic(sys, g)), sys).vector(ml)
        if any(b > a + tol * max(1.0, a) for a, b in zip(syn, collapsed)):
            rep.collapse_ok = False
            rep.messages.append("a synthetic behaviour beats its collapsed mixing behaviour")

        # disjoint volumes
        labels = [rng.choice((0, 1, 2)) for _ in names]
        v1 = sum(1 << i for i, c in enumerate(labels) if c == 1)
        v2 = sum(1 << i for i, c in enumerate(labels) if c == 2)
        z = list(ml)
        if rng.random() < 0.25:
            for i in bits(v1 if rng.random() < 0.5 else v2):
                z[i] = 0.0
        x1, x2, x12 = xi_mask(sys.nbr, v1, z), xi_mask(sys.nbr, v2, z), xi_mask(sys.nbr, v1 | v2, z)
        if x1 * x2 < x12 - tol * max(1.0, x12):
            rep.submult_ok = False
            rep.messages.append("submultiplicativity failed")
        equal = _close(x1 * x2, x12, tol)
        stated = (v1 == 0 or all(z[i] == 0 for i in bits(v1))
                  or v2 == 0 or all(z[i] == 0 for i in bits(v2)))
        cross = any(sys.nbr[i] >> j & 1 and z[i] * z[j] > 0 for i in bits(v1) for j in bits(v2))
        if equal != stated:
            rep.equality_stated_ok = False
            if len(rep.messages) < 20:
                rep.messages.append(
                    f"equality {equal} but stated condition {stated} for "
                    f"{sys.names(v1)} | {sys.names(v2)}"
                )
        if equal != (not cross):
            rep.equality_exact_ok = False
    return rep


# ---------------------------------------------------------------------------
# homogeneous tree
# ---------------------------------------------------------------------------


def tree_critical_rho(D: int) -> float:
    if D < 2:
        raise OutOfRange("degree must be at least 2")
    return (D - 1) ** (D - 1) / D ** D


def homogeneous_tree(D: int, rho: float, max_iter: int = 200_000) -> tuple[float, float]:
    """Stable fixed point of alpha = 1 - rho / alpha**(D-1) and the critical rho.

    Iterates downward from alpha = 1 and polishes by bisection on the
    stable branch [(D-1)/D, 1] of rho = alpha**(D-1) * (1 - alpha).
    """
    rho_star = tree_critical_rho(D)
    if rho < 0:
        raise OutOfRange("rho must be nonnegative")
    if rho > rho_star * (1 + 1e-15):
        raise OutOfRange(f"rho={rho} exceeds the critical value {rho_star}")
    a_star = (D - 1) / D
    if rho >= rho_star:
        return a_star, rho_star
    alpha = 1.0
    for _ in range(max_iter):
        nxt = 1.0 - rho / alpha ** (D - 1)
        if abs(nxt - alpha) <= 1e-15 or nxt < a_star:
            alpha = max(nxt, a_star)
            break
        alpha = nxt
    lo, hi = a_star, 1.0

    def excess(a: float) -> float:
        return a ** (D - 1) * (1.0 - a) - rho

    # excess decreases on the stable branch, from rho_star - rho down to -rho
    if excess(alpha) >= 0:
        lo = alpha
    else:
        hi = alpha
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if excess(mid) >= 0:
            lo = mid
        else:
            hi = mid
    return (lo if abs(excess(lo)) <= abs(excess(hi)) else hi), rho_star


def tree_alpha_derivative(D: int, rho: float) -> float:
    """d alpha / d rho on the stable branch (diverges at the critical rho)."""
    alpha, rho_star = homogeneous_tree(D, rho)
    a_star = (D - 1) / D
    if alpha == a_star:
        return -math.inf
    return -1.0 / (alpha ** (D - 2) * D * (alpha - a_star))
