"""Command-line front end: ``pscub table1 | verify | ursell | scub | tree``."""
from __future__ import annotations

import argparse
import json
import os
import sys
import time

from .errors import PscubError
from .exact_oracle import admissible, ursell
from .polymer_core import induce_cluster, load_system
from .sampling import random_sweep
from .schemes import (
    Greedy,
    PenroseStatic,
    Returning,
    Synthetic,
    penrose_identity_check,
    singleton_trees,
    verify_partition_scheme,
)
from .scub_engine import (
    critical_scaling,
    kind_from_name,
    maximise_ratio,
    optimal_point,
    scub_holds,
    homogeneous_tree,
    tree_critical_rho,
)

# interior-vertex shapes phi(mu) of homogeneous lattice neighbourhoods
# hex: three mutually compatible neighbours
# line: four neighbours forming two incompatible pairs
TABLE1 = [
    ("hex", "dob", "(1+u)^4", lambda u: (1 + u) ** 4),
    ("hex", "fp", "u + (1+u)^3", lambda u: u + (1 + u) ** 3),
    ("hex", "red", "(1+u)(1+u)^2", lambda u: (1 + u) ** 3),
    ("hex", "ret", "(1+u)(1+u)^2", lambda u: (1 + u) * (1 + u) ** 2),
    ("line", "dob", "(1+u)^5", lambda u: (1 + u) ** 5),
    ("line", "fp", "u + (1+2u)^2", lambda u: u + (1 + 2 * u) ** 2),
    ("line", "red", "(1+u)(1+u)^3", lambda u: (1 + u) ** 4),
    ("line", "ret", "(1+u)(1+u)(1+2u)", lambda u: (1 + u) * (1 + u) * (1 + 2 * u)),
]


def table1() -> list[dict]:
    rows = []
    for lattice, kind, shape, phi in TABLE1:
        rho, mu = maximise_ratio(phi)
        rows.append({"lattice": lattice, "scub": kind, "shape": shape, "rho": rho, "mu": mu})
    return rows


def _emit(obj, as_json: bool) -> None:
    if as_json:
        print(json.dumps(obj, sort_keys=True))
    else:
        for k, v in obj.items():
            print(f"{k}: {v}")


def cmd_table1(args) -> int:
    t0 = time.perf_counter()
    rows = table1()
    if args.json:
        for r in rows:
            print(json.dumps(r, sort_keys=True))
    else:
        print(f"{'lattice':<8}{'scub':<6}{'shape':<22}{'optimal rho':>12}")
        for r in rows:
            print(f"{r['lattice']:<8}{r['scub']:<6}{r['shape']:<22}{r['rho']:>12.4f}")
        print(f"({time.perf_counter() - t0:.3f} s)")
    return 0


def cmd_verify(args) -> int:
    failures = 0
    clusters = 0
    for sysm, G, g in random_sweep(args.seed, args.trials, args.max_len, args.max_polymers):
        kind = {"pen": PenroseStatic, "greedy": Greedy, "ret": Returning}.get(args.scheme)
        if kind is None:
            kind = Synthetic(g)
        clusters += 1
        rep = verify_partition_scheme(kind, G)
        ident = penrose_identity_check(kind, G)
        count_ok = len(singleton_trees(kind, G)) == abs(ursell(G))
        if not (rep.ok and ident == 0 and count_ok):
            failures += 1
            if not args.json:
                print(f"FAIL {G!r}: {rep.messages[:3]} identity residual {ident}")
    _emit({"scheme": args.scheme, "clusters": clusters, "failures": failures,
           "ok": failures == 0}, args.json)
    return 0 if failures == 0 else 1


def _system_arg(source: str):
    if os.path.exists(source):
        return load_system(source), None
    from .lattices import named_patch  # networkx is slow to import

    patch = named_patch(source)
    return patch.system, patch.center


def cmd_ursell(args) -> int:
    sysm, _ = _system_arg(args.graph)
    xi = [x for x in args.xi.split(",") if x]
    G = induce_cluster(sysm, xi)
    _emit({"xi": xi, "connected": G.connected, "ursell": ursell(G)}, args.json)
    return 0


def cmd_scub(args) -> int:
    sysm, center = _system_arg(args.graph)
    kind = kind_from_name(args.kind)
    out: dict = {"kind": kind.tag, "polymers": len(sysm)}
    ok = True
    if args.optimal:
        rho, mu = optimal_point(kind, sysm, center)
        out.update(optimal_rho=rho, optimal_mu=mu, polymer=center)
    if args.critical:
        out["critical_scaling"] = critical_scaling(kind, sysm)
    if args.homogeneous is not None or args.rho is not None:
        if args.rho is not None:
            with open(args.rho) as fh:
                rho = json.load(fh)
        else:
            rho = args.homogeneous
        rep = scub_holds(kind, sysm, rho)
        out.update(converged=rep.converged, strict=rep.strict, holds=rep.holds,
                   iterations=rep.iterations)
        ok = rep.holds
        if args.certify:
            if len(sysm) > 20:
                raise PscubError("--certify sweeps every volume; at most 20 polymers")
            out["certified"] = admissible(sysm, rho)
            ok = ok and out["certified"]
        if args.json and rep.limit is not None:
            out["limit"] = rep.limit
    _emit(out, args.json)
    return 0 if ok else 1


def cmd_tree(args) -> int:
    if args.star:
        _emit({"degree": args.degree, "rho_star": tree_critical_rho(args.degree),
               "alpha_star": (args.degree - 1) / args.degree}, args.json)
        return 0
    alpha, rho_star = homogeneous_tree(args.degree, args.rho)
    _emit({"degree": args.degree, "rho": args.rho, "alpha": alpha, "rho_star": rho_star},
          args.json)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pscub", description=__doc__)
    p.add_argument("--json", action="store_true", help="emit JSON lines")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("table1", help="optimal homogeneous fugacities on hex and its line graph")
    t.set_defaults(func=cmd_table1)

    v = sub.add_parser("verify", help="check a partition scheme on random clusters")
    v.add_argument("--scheme", choices=["pen", "greedy", "ret", "syn"], required=True)
    v.add_argument("--trials", type=int, default=100)
    v.add_argument("--max-len", type=int, default=6)
    v.add_argument("--max-polymers", type=int, default=6)
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_verify)

    u = sub.add_parser("ursell", help="Ursell function of a cluster")
    u.add_argument("--graph", required=True, help="system JSON file or lattice name")
    u.add_argument("--xi", required=True, help="comma-separated polymer labels")
    u.set_defaults(func=cmd_ursell)

    s = sub.add_parser("scub", help="run a local-operator bound")
    s.add_argument("--graph", required=True, help="system JSON file or lattice name")
    s.add_argument("--kind", required=True,
                   choices=["kp", "dob", "fp", "red", "ret", "mix", "syn"])
    grp = s.add_mutually_exclusive_group()
    grp.add_argument("--homogeneous", type=float, metavar="R")
    grp.add_argument("--rho", metavar="FILE", help="JSON object polymer -> rho")
    s.add_argument("--optimal", action="store_true",
                   help="best homogeneous rho for the shape at the patch centre")
    s.add_argument("--critical", action="store_true",
                   help="largest uniform rho with a fixed point, over the whole system")
    s.add_argument("--certify", action="store_true",
                   help="also check Xi(-rho) > 0 on every volume")
    s.set_defaults(func=cmd_scub)

    tr = sub.add_parser("tree", help="homogeneous regular tree")
    tr.add_argument("--degree", type=int, required=True)
    g2 = tr.add_mutually_exclusive_group(required=True)
    g2.add_argument("--rho", type=float)
    g2.add_argument("--star", action="store_true")
    tr.set_defaults(func=cmd_tree)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PscubError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
