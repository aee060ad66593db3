"""Command line: ``doptbb {generate, solve, bounds, bench}``.

Exit codes: 0 on success, 1 when the solver fails, 2 for usage errors and
unreadable input files.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

import numpy as np

from . import fusion
from .bnb import CSV_HEADER, BnbConfig, root_bound, root_incumbent, solve
from .errors import ContractViolation, DoptError, ParseError
from .model import (BINARY, INTEGER, Instance, gen_binary_gaussian, gen_integer_sparse, read_instance,
                    write_instance, write_solution)

EXIT_OK, EXIT_SOLVER, EXIT_USAGE = 0, 1, 2
ABLATION_CONFIGS = (("none", False, False), ("vbt", True, False), ("ls", False, True), ("vbt+ls", True, True))


class UsageError(Exception):
    pass


def _write_csv(rows, header, path, append=False) -> str:
    """Write ``rows`` under ``header`` to ``path`` (or return the text when ``path`` is None)."""
    if path is None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return buf.getvalue()
    p = Path(path)
    fresh = not (append and p.exists() and p.stat().st_size > 0)
    with p.open("w" if not append else "a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if fresh:
            w.writerow(header)
        w.writerows(rows)
    return ""


# ---------------------------------------------------------------- generate

def cmd_generate(args) -> int:
    if args.n < 1 or args.m < 1 or args.m > args.n:
        raise UsageError(f"need 1 <= m <= n, got n={args.n}, m={args.m}")
    try:
        if args.kind == BINARY:
            inst = gen_binary_gaussian(args.n, args.m, args.seed, args.s)
        else:
            inst = gen_integer_sparse(args.n, args.m, args.density, args.seed, args.s)
    except ContractViolation as exc:
        raise UsageError(str(exc)) from None
    write_instance(inst, args.out)
    rank = int(np.linalg.matrix_rank(inst.A))
    print(f"wrote {args.out}")
    print(f"n={inst.n} m={inst.m} s={inst.s} kind={inst.kind} rank={rank} (full column rank: {rank == inst.m})")
    return EXIT_OK


# ---------------------------------------------------------------- solve

def _load(path) -> Instance:
    try:
        return read_instance(path)
    except (OSError, ParseError, ContractViolation) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None


def cmd_solve(args) -> int:
    inst = _load(args.path)
    try:
        cfg = BnbConfig(bound_kind=args.bound, vbt=not args.no_vbt, ls=not args.no_ls,
                        time_limit_seconds=args.time_limit, threads=args.threads, seed=args.seed)
    except ContractViolation as exc:
        raise UsageError(str(exc)) from None
    sol, stats = solve(inst, cfg)
    out = args.out or f"{args.path}.sol"
    write_solution(sol, out)
    if args.csv:
        _write_csv([stats.csv_row()], CSV_HEADER, args.csv, append=True)
    print(f"objective={float(sol.objective):.9f} optimal={'true' if stats.optimal else 'false'}")
    print(f"root_gap={stats.root_gap:.6g} gap={stats.final_gap:.6g} nodes={stats.nodes} "
          f"cuts={stats.cuts} fixed={stats.fixed} lsi={stats.lsi} time={stats.time_seconds:.2f}s")
    print(f"solution written to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- bounds

def fusion_from_instance(inst: Instance, p: int | None = None):
    """Split an instance into ``(G, H)``.

    Without ``p`` the rows with ``l = u = 1`` form ``H``; otherwise the first
    ``p`` rows are ``G`` and the rest ``H``.
    """
    if p is None:
        fixed = (inst.l == 1) & (inst.u == 1)
        G, H = inst.A[~fixed], inst.A[fixed]
    else:
        if not 0 < p < inst.n:
            raise UsageError(f"--p must lie in (0, {inst.n})")
        G, H = inst.A[:p], inst.A[p:]
    if len(H) == 0 or len(G) == 0:
        raise UsageError("no G/H split found (mark the H rows with l = u = 1 or pass --p)")
    return G, H


def _fusion_source(args):
    if args.path is not None:
        return fusion_from_instance(_load(args.path), args.p)
    if args.example is not None:
        return {1: fusion.EXAMPLE1_G, 2: fusion.EXAMPLE2_G}[args.example], fusion.EXAMPLE_H
    if args.p is None or args.m is None:
        raise UsageError("give an instance file, --example, or --p and --m for a random instance")
    q = args.q if args.q is not None else args.m
    if args.p < 2 or args.m < 1 or q < args.m:
        raise UsageError("need p >= 2, m >= 1 and q >= m")
    fu = fusion.random_fusion(args.p, args.m, q, 1, args.seed)
    return fu.G, fu.H


def bounds_reports(G, H, budgets, brute_force=False):
    try:
        base = fusion.FusionInstance.from_blocks(G, H, 1)
    except ContractViolation as exc:
        raise UsageError(str(exc)) from None
    p = base.p
    budgets = list(range(1, p)) if not budgets else budgets
    bad = [k for k in budgets if not 0 < k < p]
    if bad:
        raise UsageError(f"budget {bad[0]} outside (0, {p})")
    return [fusion.bound_report(base.with_budget(k), brute_force) for k in budgets]


def cmd_bounds(args) -> int:
    G, H = _fusion_source(args)
    reports = bounds_reports(G, H, args.budget, args.brute_force)
    text = fusion.reports_to_csv(reports)
    if args.csv:
        Path(args.csv).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------- bench

CROSSOVER_HEADER = ["n", "m", "s", "seed", "incumbent", "natural_bound", "gamma_bound", "natural_root_gap",
                    "gamma_root_gap"]


def crossover_rows(n: int, seeds, ratios=(0.25, 0.5, 0.75)):
    """Root bounds of both kinds at ``s = m`` for each ``m = ratio * n``."""
    rows = []
    for ratio in ratios:
        m = max(1, int(round(ratio * n)))
        for seed in seeds:
            inst = gen_binary_gaussian(n, m, seed, s=m)
            _, lb, _ = root_incumbent(inst)
            zn, zg = root_bound(inst, "natural"), root_bound(inst, "gamma")
            rows.append([n, m, m, seed, f"{lb:.9g}", f"{zn:.9g}", f"{zg:.9g}", f"{zn - lb:.9g}", f"{zg - lb:.9g}"])
    return rows


def ablation_rows(n: int, m: int, seeds, time_limit: float, bound: str = "gamma"):
    """Four rows per instance: VBT and LS each on or off."""
    rows = []
    for seed in seeds:
        inst = gen_binary_gaussian(n, m, seed, s=n // 2)
        for name, vbt, ls in ABLATION_CONFIGS:
            _, st = solve(inst, BnbConfig(bound_kind=bound, vbt=vbt, ls=ls, time_limit_seconds=time_limit))
            rows.append([seed, name, *st.csv_row()])
    return rows


def dominance_rows(seeds):
    return [[name, checked, bad] for name, (checked, bad) in fusion.dominance_suite(seeds).items()]


def cmd_bench(args) -> int:
    seeds = range(args.seed, args.seed + args.seeds)
    if args.suite == "crossover":
        n = args.n or 24
        rows, header = crossover_rows(n, seeds), CROSSOVER_HEADER
    elif args.suite == "ablation":
        n = args.n or 14
        m = args.m or 4
        if not 0 < m <= n:
            raise UsageError("need 0 < m <= n")
        rows, header = ablation_rows(n, m, seeds, args.time_limit, args.bound), ["seed", "config", *CSV_HEADER]
    else:
        rows, header = dominance_rows(seeds), ["property", "checked", "violations"]
    text = _write_csv(rows, header, None)
    if args.csv:
        Path(args.csv).write_text(text)
    sys.stdout.write(text)
    if args.suite == "dominance" and any(int(r[2]) for r in rows):
        return EXIT_SOLVER
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="doptbb", description="Exact D-optimal design by branch and bound.")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a random instance")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--s", type=int, default=None, help="default: m (binary) or round(0.75 n) (integer)")
    g.add_argument("--kind", choices=(BINARY, INTEGER), default=BINARY)
    g.add_argument("--density", type=float, default=0.5, help="nonzero fraction of A (integer kind)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve an instance file")
    s.add_argument("path")
    s.add_argument("--bound", choices=("natural", "gamma"), default="natural")
    s.add_argument("--time-limit", type=float, default=60.0)
    s.add_argument("--no-vbt", action="store_true")
    s.add_argument("--no-ls", action="store_true")
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--csv", default=None, help="append the stats row here")
    s.add_argument("--out", default=None, help="solution file (default: PATH.sol)")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bounds", help="data-fusion bound table")
    b.add_argument("path", nargs="?", default=None)
    b.add_argument("--example", type=int, choices=(1, 2), default=None)
    b.add_argument("--p", type=int, default=None, help="number of G rows (file split or random instance)")
    b.add_argument("--m", type=int, default=None)
    b.add_argument("--q", type=int, default=None)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--budget", type=int, nargs="+", default=None)
    b.add_argument("--brute-force", action="store_true")
    b.add_argument("--csv", default=None)
    b.set_defaults(func=cmd_bounds)

    c = sub.add_parser("bench", help="benchmark sweeps")
    c.add_argument("--suite", choices=("crossover", "ablation", "dominance"), required=True)
    c.add_argument("--seeds", type=int, default=20)
    c.add_argument("--seed", type=int, default=0, help="first seed")
    c.add_argument("--n", type=int, default=None)
    c.add_argument("--m", type=int, default=None)
    c.add_argument("--bound", choices=("natural", "gamma"), default="gamma")
    c.add_argument("--time-limit", type=float, default=60.0)
    c.add_argument("--csv", default=None)
    c.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"doptbb {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DoptError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"doptbb {args.command}: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
