"""Acceptance suite: one group of tests per criterion, summarised at the end of the run."""
import itertools
import json
import math
import random
import shutil
import subprocess
import sys
import time
from functools import lru_cache

import numpy as np
import pytest

from conftest import record
from pscub.exact_oracle import (
    admissible,
    fugacity_list,
    fundamental_identity_residual,
    integral_form_log_ratio,
    one_polymer_ratio,
    partition_function,
    pinned_connected_function,
    pinned_product_form,
    telescoped_ratios,
    ursell,
    xi_mask,
)
from pscub.lattices import hexagonal, named_patch
from pscub.sampling import random_behaviour, random_mixing, random_sweep, random_system
from pscub.schemes import (
    Greedy,
    PenroseStatic,
    Returning,
    Synthetic,
    penrose_identity_check,
    singleton_properties_check,
    singleton_trees,
    verify_partition_scheme,
)
from pscub.scub_engine import (
    DOB_KIND,
    FP_KIND,
    KP_KIND,
    RED_KIND,
    RET_KIND,
    Mixing,
    ReferenceLeop,
    SyntheticLeop,
    converges_batch,
    critical_scaling,
    escaping_series_bound_check,
    homogeneous_tree,
    mixing_reduction_check,
    optimal_rho,
    optimal_scaling,
    scub_holds,
    tree_critical_rho,
)

SEED = 20240611
TABLE = {
    ("hex", "dob"): 0.1055, ("hex", "fp"): 0.1290, ("hex", "red"): 0.1481, ("hex", "ret"): 0.1481,
    ("line", "dob"): 0.0819, ("line", "fp"): 0.1111, ("line", "red"): 0.1055, ("line", "ret"): 0.1134,
}


@lru_cache(maxsize=1)
def sweep():
    """500 seed-fixed (system, cluster, behaviour) triples, clusters of length <= 6."""
    return list(random_sweep(SEED, 500, 6, max_polymers=6))


# 1 -------------------------------------------------------------------------


def test_criterion_01_table():
    exe = shutil.which("pscub")
    cmd = [exe] if exe else [sys.executable, "-m", "pscub.cli"]
    t0 = time.perf_counter()
    proc = subprocess.run(cmd + ["--json", "table1"], capture_output=True, text=True, check=True)
    elapsed = time.perf_counter() - t0
    rows = [json.loads(line) for line in proc.stdout.splitlines()]
    worst = max(abs(r["rho"] - TABLE[(r["lattice"], r["scub"])]) for r in rows)
    ok = len(rows) == 8 and worst <= 5e-4 and elapsed < 1.0
    record(1, ok, f"8 rows, max deviation {worst:.2e}, {elapsed:.2f} s")
    assert len(rows) == 8
    assert worst <= 5e-4
    assert elapsed < 1.0


# 2 -------------------------------------------------------------------------


def test_criterion_02_penrose_identity():
    data = sweep()
    t0 = time.perf_counter()
    bad = 0
    for _, G, g in data:
        for kind in (Greedy, Returning, Synthetic(g)):
            if penrose_identity_check(kind, G) != 0:
                bad += 1
    elapsed = time.perf_counter() - t0
    record(2, bad == 0 and elapsed < 60, f"{len(data)} clusters x 3 schemes, {bad} failures, {elapsed:.1f} s")
    assert bad == 0
    assert elapsed < 60


# 3 -------------------------------------------------------------------------


@pytest.mark.parametrize("scheme", ["greedy", "ret", "syn"])
def test_criterion_03_partition_axiom(scheme):
    bad = []
    for _, G, g in sweep():
        kind = {"greedy": Greedy, "ret": Returning}.get(scheme) or Synthetic(g)
        rep = verify_partition_scheme(kind, G)
        if not rep.ok:
            bad.append(rep.messages[:2])
    record(3, not bad, f"{scheme}: {len(bad)} failing clusters")
    assert not bad


# 4 -------------------------------------------------------------------------


def test_criterion_04_singleton_counts():
    bad = 0
    for _, G, g in sweep():
        counts = [len(singleton_trees(k, G)) for k in (PenroseStatic, Returning, Synthetic(g))]
        if len(set(counts)) != 1 or counts[0] != abs(ursell(G)):
            bad += 1
    record(4, bad == 0, f"{bad} clusters with differing counts")
    assert bad == 0


# 5 -------------------------------------------------------------------------


@pytest.mark.parametrize("kind", [Greedy, Returning], ids=["greedy", "ret"])
def test_criterion_05_singleton_structure(kind):
    trees = 0
    failures = []
    for _, G, _ in sweep():
        rep = singleton_properties_check(kind, G)
        trees += rep.trees
        failures += rep.failures
    record(5, not failures, f"{kind.tag}: {trees} singleton trees, {len(failures)} failures")
    assert not failures


# 6 -------------------------------------------------------------------------


def admissible_instances(n_instances, seed):
    rng = random.Random(seed)
    out = []
    while len(out) < n_instances:
        sys_ = random_system(rng, rng.randint(1, 6))
        rho = {p: rng.uniform(0, 0.3) for p in sys_.polymers}
        if not admissible(sys_, rho):
            continue
        vol = [p for p in sys_.polymers if rng.random() < 0.8] or [sys_.polymers[0]]
        out.append((sys_, rho, vol, rng.choice(vol)))
    return out


def test_criterion_06_identities():
    worst = {"fundamental": 0.0, "telescoping": 0.0, "product": 0.0, "integral": 0.0}
    for sys_, rho, vol, g in admissible_instances(200, SEED + 6):
        z = {p: -r for p, r in rho.items()}
        worst["fundamental"] = max(worst["fundamental"], abs(fundamental_identity_residual(sys_, vol, g, z)))
        xi = partition_function(sys_, vol, z)
        tel = math.prod(telescoped_ratios(sys_, vol, z))
        worst["telescoping"] = max(worst["telescoping"], abs(tel - xi) / abs(xi))
        pin = pinned_connected_function(sys_, vol, g, z)
        worst["product"] = max(worst["product"], abs(pinned_product_form(sys_, vol, g, z) - pin))
        lhs = math.log(one_polymer_ratio(sys_, vol, g, z))
        worst["integral"] = max(worst["integral"], abs(integral_form_log_ratio(sys_, vol, g, z) - lhs))
    ok = (worst["fundamental"] <= 1e-12 and worst["telescoping"] <= 1e-12
          and worst["product"] <= 1e-12 and worst["integral"] <= 1e-8)
    record(6, ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
    assert worst["fundamental"] <= 1e-12
    assert worst["telescoping"] <= 1e-12
    assert worst["product"] <= 1e-12
    assert worst["integral"] <= 1e-8


# 7 -------------------------------------------------------------------------

SOUNDNESS_KINDS = ["kp", "dob", "fp", "red", "ret", "mix", "syn"]


@lru_cache(maxsize=1)
def soundness_sweep():
    """Per kind: converged samples, and violations split into whole-system and proper sub-volumes."""
    rng = random.Random(SEED + 7)
    stats = {k: {"converged": 0, "whole": 0, "proper": 0, "example": None} for k in SOUNDNESS_KINDS}
    for _ in range(100):
        sys_ = random_system(rng, rng.randint(1, 6))
        n = len(sys_)
        d = np.array([rng.uniform(0.2, 1.0) for _ in sys_.polymers])
        kinds = {"kp": KP_KIND, "dob": DOB_KIND, "fp": FP_KIND, "red": RED_KIND, "ret": RET_KIND,
                 "mix": Mixing(random_mixing(rng, sys_)), "syn": SyntheticLeop(random_behaviour(rng, sys_))}
        for name, kind in kinds.items():
            # a coarse grid over the whole range, then a finer one past the last converged point
            ts = np.arange(1, 25) / 24 / d.max()
            status, _ = converges_batch(kind, sys_, d[:, None] * ts[None, :])
            good = np.flatnonzero(status == 1)
            if good.size and good[-1] + 1 < len(ts):
                lo, hi = ts[good[-1]], ts[good[-1] + 1]
                fine = lo + (hi - lo) * np.arange(1, 13) / 13
                st2, _ = converges_batch(kind, sys_, d[:, None] * fine[None, :])
                ts, status = np.concatenate([ts, fine]), np.concatenate([status, st2])
            for j in np.flatnonzero(status == 1):
                stats[name]["converged"] += 1
                neg = list(-d * ts[j] * (1 - 1e-6))
                bad = [m for m in range(1, 1 << n) if not xi_mask(sys_.nbr, m, neg) > 0]
                full = (1 << n) - 1
                if full in bad:
                    stats[name]["whole"] += 1
                if any(m != full for m in bad):
                    stats[name]["proper"] += 1
                    if stats[name]["example"] is None:
                        stats[name]["example"] = (sys_.pairs(), sys_.names([m for m in bad if m != full][0]))
    return stats


def test_criterion_07_batch_matches_scub_holds():
    # the sweep decides convergence in batches; spot-check against single calls
    rng = random.Random(SEED + 70)
    for _ in range(10):
        sys_ = random_system(rng, rng.randint(2, 5))
        ts = np.linspace(0.02, 0.4, 6)
        for kind in (FP_KIND, RET_KIND):
            status, _ = converges_batch(kind, sys_, np.ones((len(sys_), 6)) * ts)
            for t, s in zip(ts, status):
                assert (s == 1) == scub_holds(kind, sys_, float(t)).converged


@pytest.mark.parametrize("name", SOUNDNESS_KINDS)
def test_criterion_07_soundness(name):
    s = soundness_sweep()[name]
    bad = s["whole"] + s["proper"]
    detail = f"{name}: {s['converged']} converged rho, violations whole-system {s['whole']}, proper sub-volume {s['proper']}"
    record(7, bad == 0, detail)
    assert s["converged"] > 0
    assert bad == 0, detail


@pytest.mark.parametrize("name", ["kp", "dob", "fp", "red", "ret"])
def test_criterion_07_proper_subvolumes(name):
    # reduced and returning bounds control escaping ratios, which exist for every proper sub-volume
    s = soundness_sweep()[name]
    assert s["proper"] == 0, s["example"]


# 8 -------------------------------------------------------------------------


def test_criterion_08_dominance():
    rng = random.Random(SEED + 8)
    violations = []
    slack = 1e-12
    for _ in range(1000):
        sys_ = random_system(rng, rng.randint(1, 6))
        i = rng.randrange(len(sys_))
        mu = [rng.choice([0.0, rng.uniform(0, 2)]) for _ in sys_.polymers]
        v = {name: ReferenceLeop(kind, sys_).value(i, mu) for name, kind in
             [("kp", KP_KIND), ("dob", DOB_KIND), ("fp", FP_KIND), ("red", RED_KIND), ("ret", RET_KIND),
              ("mix", Mixing()), ("mix_h", Mixing(random_mixing(rng, sys_)))]}

        def le(a, b):
            if v[a] > v[b] * (1 + slack):
                violations.append((a, b, v[a], v[b]))

        le("fp", "dob")
        le("dob", "kp")
        le("ret", "red")
        le("red", "dob")
        if v["mix"] > min(v["fp"], v["ret"]) * (1 + slack):
            violations.append(("mix", "min", v["mix"]))
        if not min(v["fp"], v["ret"]) <= v["mix_h"] <= max(v["fp"], v["ret"]):
            violations.append(("mix_h", "range", v["mix_h"]))
    record(8, not violations, f"1000 samples, {len(violations)} violations")
    assert not violations


# 9 -------------------------------------------------------------------------


@lru_cache(maxsize=1)
def mixing_reports():
    rng = random.Random(SEED + 9)
    reports = []
    for _ in range(500):
        sys_ = random_system(rng, rng.randint(1, 6))
        mu = {p: rng.choice([0.0, rng.uniform(0, 1.5)]) for p in sys_.polymers}
        reports.append(mixing_reduction_check(sys_, mu, rng, samples=1, tol=1e-10))
    return reports


def test_criterion_09_equalities():
    reps = mixing_reports()
    ok = all(r.extremes_equal and r.embed_equal for r in reps)
    record(9, ok, f"mixing extremes and embedding exact on {len(reps)} instances")
    assert ok


def test_criterion_09_improvement():
    reps = mixing_reports()
    bad = sum(1 for r in reps if not (r.improvement_ok and r.collapse_ok))
    record(9, bad == 0, f"switching a polymer to G never increases the operator ({bad} failures)")
    assert bad == 0


def test_criterion_09_submultiplicativity():
    reps = mixing_reports()
    bad = sum(1 for r in reps if not r.submult_ok)
    record(9, bad == 0, f"Xi(A)Xi(B) >= Xi(A+B) ({bad} failures)")
    assert bad == 0


def test_criterion_09_stated_equality_condition():
    reps = mixing_reports()
    bad = [r for r in reps if not r.equality_stated_ok]
    example = next((m for r in bad for m in r.messages if m.startswith("equality")), "")
    record(9, not bad, f"equality iff one side empty or zero: {len(bad)} counterexamples, e.g. {example}")
    assert not bad, example


def test_criterion_09_exact_equality_condition():
    # equality iff no incompatible cross pair with positive weights on both ends
    reps = mixing_reports()
    assert all(r.equality_exact_ok for r in reps)


def optimum_instances():
    """Seed-fixed systems of at most four polymers with few enough escape pairs to enumerate."""
    rng = random.Random(SEED + 90)
    out = [(named_patch(name).system, None) for name in ("path-3", "path-4", "cycle-4", "complete-3")]
    while len(out) < 16:
        sys_ = random_system(rng, rng.randint(2, 4))
        d = [rng.uniform(0.3, 1.0) for _ in sys_.polymers]
        if len(sys_.escape_pairs()) <= 8:
            out.append((sys_, d))
    return out


@lru_cache(maxsize=1)
def optima():
    rows = []
    for sys_, d in optimum_instances():
        pairs = sys_.escape_pairs()
        best_syn = max(critical_scaling(SyntheticLeop(dict(zip(pairs, v))), sys_, d)
                       for v in itertools.product("GR", repeat=len(pairs)))
        best_mix = max(critical_scaling(Mixing(dict(zip(sys_.polymers, v))), sys_, d)
                       for v in itertools.product("GR", repeat=len(sys_)))
        rows.append({
            "system": sys_, "direction": d, "best_syn": best_syn, "best_mix": best_mix,
            "min_syn": critical_scaling(SyntheticLeop(), sys_, d),
            "min_mix": critical_scaling(Mixing(), sys_, d),
        })
    return rows


def test_criterion_09_optima_by_enumeration():
    rows = optima()
    worst = max(abs(r["best_syn"] - r["best_mix"]) for r in rows)
    record(9, worst <= 1e-10, f"best synthetic vs best mixing optimum over {len(rows)} systems, "
                              f"every behaviour enumerated: max gap {worst:.1e}")
    assert worst <= 1e-10


def test_criterion_09_pointwise_minimum_reaches_optimum():
    rows = optima()
    for r in rows:
        assert abs(r["min_mix"] - r["best_mix"]) <= 1e-10
        assert abs(r["min_syn"] - r["best_syn"]) <= 1e-10


def test_criterion_09_optimum_matches_iteration():
    # the continuation value bounds the budgeted iteration from above and stays close to it
    for r in optima()[:6]:
        t_iter = optimal_scaling(Mixing(), r["system"], r["direction"], tol=1e-9)
        assert t_iter <= r["min_mix"] * (1 + 1e-9)
        assert t_iter >= r["min_mix"] * (1 - 1e-2)
        rho = [0.95 * r["min_mix"] * x for x in fugacity_list(r["system"], r["direction"] or 1.0)]
        assert scub_holds(Mixing(), r["system"], rho).converged


# 10 ------------------------------------------------------------------------


def test_criterion_10_homogeneous_tree():
    worst_star = 0.0
    worst_residual = 0.0
    blowup = {}
    for D in range(2, 7):
        rs = tree_critical_rho(D)
        alpha, _ = homogeneous_tree(D, rs)
        worst_star = max(worst_star, abs(alpha - (D - 1) / D))
        for rho in np.linspace(0, rs, 41)[:-1]:
            a, _ = homogeneous_tree(D, float(rho))
            worst_residual = max(worst_residual, abs(a - (1 - rho / a ** (D - 1))))
        best = 0.0
        for k in (6, 7, 8, 9):
            rho = rs - 10.0 ** -k
            h = 10.0 ** -(k + 3)
            fd = (homogeneous_tree(D, rho + h)[0] - homogeneous_tree(D, rho - h)[0]) / (2 * h)
            best = max(best, abs(fd))
        blowup[D] = best
    hex_patch = hexagonal()
    hex_opt = optimal_rho(RED_KIND, hex_patch.system, polymer=hex_patch.center)
    ok = (worst_star <= 1e-10 and worst_residual <= 1e-12 and min(blowup.values()) > 1e3
          and abs(hex_opt - 4 / 27) <= 1e-10)
    record(10, ok, f"alpha* err {worst_star:.1e}, residual {worst_residual:.1e}, "
               f"min |alpha'| near rho* {min(blowup.values()):.2e}, hex reduced {hex_opt:.10f}")
    assert worst_star <= 1e-10
    assert worst_residual <= 1e-12
    assert min(blowup.values()) > 1e3
    assert abs(hex_opt - 4 / 27) <= 1e-10


# 11 ------------------------------------------------------------------------


def test_criterion_11_escaping_series():
    rng = random.Random(SEED + 11)
    checked = 0
    violations = []
    for _ in range(20):
        sys_ = random_system(rng, 4)
        d = [rng.uniform(0.3, 1.0) for _ in sys_.polymers]
        t = optimal_scaling(RET_KIND, sys_, d, tol=1e-6)
        rho = [0.95 * t * x for x in d]
        fix = scub_holds(RET_KIND, sys_, rho)
        assert fix.holds
        rep = escaping_series_bound_check(sys_, rho, fix.limit, 5)
        checked += rep.checked
        violations += rep.violations
    record(11, not violations, f"{checked} (pair, order) checks, {len(violations)} violations")
    assert not violations
