"""Best-bound-first branch and bound with dual-certificate bound tightening
and local-search incumbents."""

from __future__ import annotations

import heapq
import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ContractViolation, Infeasible, NodePruneSingular, TooLarge
from .heuristics.construct import initial_solutions, make_nonsingular, round_heuristic
from .heuristics.localsearch import SearchStats, escalating_search, local_search
from .model import Instance, Solution, count_feasible, enumerate_feasible, expand_binary
from .relax.common import repair_into_box
from .relax.gamma import build_gamma_context, solve_gamma_relaxation
from .relax.natural import solve_natural_relaxation

PRUNE_TOL = 1e-9
VBT_EPS = 1e-9  # slack on (bound - LB) before flooring, against round-off in the certificate
MULT_TOL = 1e-12
BRUTE_MAX = 5_000_000
STRONG_DEPTH = 2
STRONG_CANDIDATES = 2
CSV_HEADER = ["n", "m", "s", "bound", "root_gap", "gap", "time", "nodes", "cuts", "fixed", "lsi", "k_bin",
              "k_int", "optimal"]


@dataclass(frozen=True)
class BnbNode:
    l: np.ndarray
    u: np.ndarray
    parent_bound: float
    depth: int
    warm: np.ndarray | None = None  # primal warm start, in the bounder's own space
    branch: tuple | None = None  # (variable, direction, fraction) that created the node


@dataclass
class SolveStats:
    n: int = 0
    m: int = 0
    s: int = 0
    bound: str = "natural"
    root_gap: float = math.inf
    final_gap: float = math.inf
    time_seconds: float = 0.0
    nodes: int = 0
    cuts: int = 0
    fixed: int = 0
    lsi: int = 0
    k_bin: int = 0
    k_int: int = 0
    optimal: bool = False

    @staticmethod
    def csv_header() -> list[str]:
        return list(CSV_HEADER)

    def csv_row(self) -> list[str]:
        return [str(self.n), str(self.m), str(self.s), self.bound, f"{self.root_gap:.9g}", f"{self.final_gap:.9g}",
                f"{self.time_seconds:.3f}", str(self.nodes), str(self.cuts), str(self.fixed), str(self.lsi),
                str(self.k_bin), str(self.k_int), "true" if self.optimal else "false"]


@dataclass(frozen=True)
class BnbConfig:
    bound_kind: str = "natural"
    vbt: bool = True
    ls: bool = True
    time_limit_seconds: float = 60.0
    int_tol: float = 1e-5
    relax_tol: float = 1e-6
    node_order: str = "best_bound"
    threads: int = 1
    seed: int = 0
    max_iter: int = 2000

    def __post_init__(self):
        if self.bound_kind not in ("natural", "gamma"):
            raise ContractViolation(f"unknown bound kind {self.bound_kind!r}")
        if self.int_tol <= 0:
            raise ContractViolation("int_tol must be positive")
        if self.node_order != "best_bound":
            raise ContractViolation("only best_bound node order is available")
        if self.threads < 1:
            raise ContractViolation("threads must be at least 1")


@dataclass(frozen=True)
class NodeRelax:
    bound: float
    x_hat: np.ndarray  # original coordinates
    omega: np.ndarray  # multiplier of the lower bounds, original coordinates
    nu: np.ndarray  # multiplier of the upper bounds
    warm: np.ndarray  # warm start for children
    row_penalties: list | None = None  # gamma on expanded rows: per-row copy multipliers


# ---------------------------------------------------------------- bounders

class NaturalBounder:
    def __init__(self, inst: Instance, cfg: BnbConfig):
        self.inst = inst
        self.cfg = cfg

    def relax(self, l, u, warm, prune_below=None) -> NodeRelax:
        r = solve_natural_relaxation(self.inst, tol=self.cfg.relax_tol, max_iter=self.cfg.max_iter, l=l, u=u,
                                     x0=warm, prune_below=prune_below)
        c = r.certificate
        return NodeRelax(c.value, r.x_hat, c.omega, c.nu, r.x_hat)


class GammaBounder:
    """Gamma bound on the 0/1 expansion: ``u_i`` copies of row i.

    A node box ``[l, u]`` fixes the first ``l_i`` copies at one, leaves the
    next ``u_i - l_i`` free and fixes the rest at zero.
    """

    def __init__(self, inst: Instance, cfg: BnbConfig):
        self.inst = inst
        self.cfg = cfg
        self.exp, self.index_map = expand_binary(inst)
        self.ctx = build_gamma_context(self.exp.A)
        self.n_exp = self.exp.n
        self.t = self.n_exp - self.exp.s
        self.copies = [np.flatnonzero(self.index_map == i) for i in range(inst.n)]
        self.extra = np.flatnonzero(self.index_map < 0)

    def expanded_box(self, l, u):
        lx = np.zeros(self.n_exp)
        ux = np.zeros(self.n_exp)
        for i, cp in enumerate(self.copies):
            lx[cp[: l[i]]] = 1.0
            ux[cp[: u[i]]] = 1.0
        lx[self.extra] = 1.0
        ux[self.extra] = 1.0
        return lx, ux

    def relax(self, l, u, warm, prune_below=None) -> NodeRelax:
        lx, ux = self.expanded_box(l, u)
        r = solve_gamma_relaxation(self.ctx, 1.0 - ux, 1.0 - lx, self.t, tol=self.cfg.relax_tol,
                                   max_iter=self.cfg.max_iter, x0=warm, prune_below=prune_below)
        c = r.certificate.in_x_space()
        x_exp = 1.0 - r.x_hat
        x_hat = np.array([x_exp[cp].sum() for cp in self.copies])
        rows = []
        for i, cp in enumerate(self.copies):
            free = cp[l[i]:u[i]]
            rows.append((c.omega[free], c.nu[free]))
        return NodeRelax(c.value, x_hat, None, None, r.x_hat, rows)


# ---------------------------------------------------------------- tightening

def vbt_tighten(l, u, omega, nu, bound: float, lb: float):
    """Bound tightening from dual multipliers and an incumbent value ``lb``.

    ``u_k <- min(u_k, l_k + floor(gap / omega_k))`` and
    ``l_k <- max(l_k, u_k - floor(gap / nu_k))`` with ``gap = bound - lb``.
    Returns ``(l', u', cuts, fixed)`` or ``None`` when the box empties.
    """
    l = np.asarray(l, np.int64)
    u = np.asarray(u, np.int64)
    gap = bound - lb + VBT_EPS
    nl, nu_ = l.copy(), u.copy()
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.asarray(omega, float)
        v = np.asarray(nu, float)
        up = w > MULT_TOL
        dn = v > MULT_TOL
        cap_u = np.where(up, np.floor(gap / np.where(up, w, 1.0)), np.inf)
        cap_l = np.where(dn, np.floor(gap / np.where(dn, v, 1.0)), np.inf)
    nu_ = np.where(up, np.minimum(u, l + np.minimum(cap_u, u - l).astype(np.int64)), u)
    nl = np.where(dn, np.maximum(l, u - np.minimum(cap_l, u - l).astype(np.int64)), l)
    return _finish_tightening(l, u, nl, nu_)


def _finish_tightening(l, u, nl, nu_):
    if np.any(nl > nu_):
        return None
    cuts = int(np.count_nonzero(nl > l) + np.count_nonzero(nu_ < u))
    fixed = int(np.count_nonzero((nl == nu_) & (l < u)))
    return nl.astype(np.int64), nu_.astype(np.int64), cuts, fixed


def vbt_tighten_rows(l, u, rows, bound: float, lb: float):
    """Tightening when each original variable is a sum of 0/1 copies.

    For row i with free copies ``F`` carrying multipliers ``(omega_c, nu_c)``,
    setting ``r`` of them to one costs at least ``sum nu_F + (sum of the r
    smallest omega_c - nu_c)`` in the dual bound; values of ``r`` whose
    cheapest arrangement already exceeds ``bound - lb`` are cut.
    """
    l = np.asarray(l, np.int64)
    u = np.asarray(u, np.int64)
    gap = bound - lb + VBT_EPS
    nl, nu_ = l.copy(), u.copy()
    for i, (w, v) in enumerate(rows):
        if w.size == 0:
            continue
        w = np.where(w > MULT_TOL, w, 0.0)
        v = np.where(v > MULT_TOL, v, 0.0)
        cost = v.sum() + np.concatenate([[0.0], np.cumsum(np.sort(w - v))])  # cost[r], r = 0..|F|
        ok = np.flatnonzero(cost <= gap)
        if ok.size == 0:
            return None
        nl[i] = l[i] + int(ok[0])
        nu_[i] = l[i] + int(ok[-1])
    return _finish_tightening(l, u, nl, nu_)


# ---------------------------------------------------------------- heuristics at nodes

def _moves(inst: Instance, root: bool):
    if inst.kind == "binary" or inst.u.max(initial=0) <= 1:
        return ("rank2_unit",)
    return ("rank2_opt_k", "rank3") if root else ("rank2_opt_k",)


def node_local_search(inst: Instance, x_hat, l, u, incumbent_value: float, budget_seconds=None):
    """Round the relaxation point into the node box, then FI (escalating to FI+ and BI).

    Returns ``(x or None, objective, stats)``; ``x`` is returned only when it
    beats ``incumbent_value`` by more than ``PRUNE_TOL``.
    """
    x0 = round_heuristic(repair_into_box(x_hat, l, u, inst.s), l, u, inst.s)
    if x0.sum() != inst.s:
        return None, -math.inf, SearchStats()
    x0 = make_nonsingular(inst, x0, x_hat)
    if not math.isfinite(float(inst.objective(x0))):
        return None, -math.inf, SearchStats()
    st = escalating_search(inst, x0, _moves(inst, root=False), budget_seconds)
    if st.objective > incumbent_value + PRUNE_TOL:
        return st.x.copy(), st.objective, st.stats
    return None, st.objective, st.stats


def root_incumbent(inst: Instance, budget_seconds=None):
    """Best point over every construction, each improved by FI, FI+ and BI."""
    best_x, best = None, -math.inf
    stats = SearchStats()
    moves = _moves(inst, root=True)
    for x0 in initial_solutions(inst):
        if not math.isfinite(float(inst.objective(x0))):
            continue
        for variant in ("FI", "FI_PLUS", "BI"):
            st = local_search(inst, x0, variant, moves, budget_seconds)
            stats.merge(st.stats)
            if st.objective > best:
                best_x, best = st.x.copy(), st.objective
    return best_x, best, stats


def root_bound(inst: Instance, bound_kind: str, tol: float = 1e-7) -> float:
    """Certified root relaxation value, solved to ``tol`` with no pruning."""
    cfg = BnbConfig(bound_kind=bound_kind, relax_tol=tol)
    bounder = (GammaBounder if bound_kind == "gamma" else NaturalBounder)(inst, cfg)
    return bounder.relax(inst.l, inst.u, None).bound


# ---------------------------------------------------------------- branching

def _fractional(x_hat, int_tol):
    return np.abs(x_hat - np.round(x_hat)) > int_tol


class Pseudocosts:
    def __init__(self, n):
        self.sum = np.zeros((n, 2))
        self.cnt = np.zeros((n, 2))

    def record(self, var, direction, frac, parent_bound, child_bound):
        if not math.isfinite(child_bound):
            child_bound = parent_bound - 1.0 if math.isfinite(parent_bound) else 0.0
        if frac <= 0 or not math.isfinite(parent_bound):
            return
        self.sum[var, direction] += max(parent_bound - child_bound, 0.0) / frac
        self.cnt[var, direction] += 1

    def scores(self, cand, fracs):
        known = self.cnt > 0
        with np.errstate(invalid="ignore", divide="ignore"):
            avg = np.where(known, self.sum / np.maximum(self.cnt, 1), np.nan)
        if not np.any(known):
            return None
        fill = [np.nanmean(avg[:, d]) if np.any(known[:, d]) else 1.0 for d in (0, 1)]
        down = np.where(known[cand, 0], avg[cand, 0], fill[0]) * fracs
        up = np.where(known[cand, 1], avg[cand, 1], fill[1]) * (1.0 - fracs)
        return np.maximum(down, 1e-6) * np.maximum(up, 1e-6)


def branch(node: BnbNode, x_hat, int_tol: float = 1e-5, var: int | None = None, bound=None):
    """Split on ``var`` (default: most fractional): ``u_i = floor`` / ``l_i = ceil``."""
    x_hat = np.asarray(x_hat, float)
    frac_mask = _fractional(x_hat, int_tol)
    if var is None:
        if not frac_mask.any():
            raise ContractViolation("x_hat is integral; nothing to branch on")
        f = x_hat - np.floor(x_hat)
        var = int(np.argmax(np.where(frac_mask, -np.abs(f - 0.5), -np.inf)))
    if not frac_mask[var]:
        raise ContractViolation(f"x_hat[{var}] is integral")
    lo, hi = math.floor(x_hat[var]), math.ceil(x_hat[var])
    frac = x_hat[var] - lo
    pb = node.parent_bound if bound is None else bound
    du = node.u.copy()
    du[var] = lo
    ul = node.l.copy()
    ul[var] = hi
    down = BnbNode(node.l.copy(), du, pb, node.depth + 1, None, (var, 0, frac))
    up = BnbNode(ul, node.u.copy(), pb, node.depth + 1, None, (var, 1, 1.0 - frac))
    return down, up


def _split_integral(node: BnbNode, x_int, bound):
    """Children splitting a free variable at its (integral) relaxation value."""
    free = np.flatnonzero(node.l < node.u)
    if free.size == 0:
        return []
    var = int(free[np.argmax((node.u - node.l)[free])])
    v = int(np.clip(x_int[var], node.l[var], node.u[var]))
    if v == node.u[var]:
        v -= 1
    du = node.u.copy()
    du[var] = v
    ul = node.l.copy()
    ul[var] = v + 1
    return [BnbNode(node.l.copy(), du, bound, node.depth + 1), BnbNode(ul, node.u.copy(), bound, node.depth + 1)]


def _box_ok(inst, l, u):
    return np.all(l <= u) and l.sum() <= inst.s <= u.sum()


# ---------------------------------------------------------------- driver

class _Solver:
    def __init__(self, inst: Instance, cfg: BnbConfig, trace=None):
        self.inst = inst
        self.cfg = cfg
        self.trace = trace
        self.bounder = GammaBounder(inst, cfg) if cfg.bound_kind == "gamma" else NaturalBounder(inst, cfg)
        self.stats = SolveStats(inst.n, inst.m, inst.s, cfg.bound_kind)
        self.pc = Pseudocosts(inst.n)
        self.best_x = None
        self.lb = -math.inf
        self.heap = []
        self.tie = itertools.count()
        self.deadline = time.perf_counter() + cfg.time_limit_seconds

    def offer(self, x, value, source=None) -> bool:
        if value > self.lb + PRUNE_TOL or self.best_x is None and math.isfinite(value):
            self.best_x, self.lb = np.asarray(x, np.int64).copy(), float(value)
            if self.trace:
                self.trace("incumbent", {"x": self.best_x.copy(), "value": self.lb, "source": source})
            return True
        return False

    def push(self, node: BnbNode):
        if _box_ok(self.inst, node.l, node.u):
            heapq.heappush(self.heap, (-node.parent_bound, next(self.tie), node))

    def relax(self, node: BnbNode):
        try:
            return self.bounder.relax(node.l, node.u, node.warm,
                                      None if not math.isfinite(self.lb) else self.lb + PRUNE_TOL)
        except (NodePruneSingular, Infeasible):
            return None

    def tighten(self, node, rel):
        if rel.row_penalties is not None:
            out = vbt_tighten_rows(node.l, node.u, rel.row_penalties, rel.bound, self.lb)
        else:
            out = vbt_tighten(node.l, node.u, rel.omega, rel.nu, rel.bound, self.lb)
        if self.trace:
            self.trace("vbt", {"l": node.l.copy(), "u": node.u.copy(),
                               "l_new": None if out is None else out[0].copy(),
                               "u_new": None if out is None else out[1].copy()})
        return out

    def strong_branch(self, node, rel, cand):
        """Solve both children of the first candidates to seed pseudocosts."""
        for var in cand[:STRONG_CANDIDATES]:
            for child in branch(node, rel.x_hat, self.cfg.int_tol, int(var), rel.bound):
                if not _box_ok(self.inst, child.l, child.u):
                    continue
                r = self.relax(replace(child, warm=rel.warm))
                self.stats.nodes += 1
                v, d, f = child.branch
                self.pc.record(v, d, f, rel.bound, -math.inf if r is None else r.bound)

    def choose(self, node, rel):
        x = rel.x_hat
        frac = _fractional(x, self.cfg.int_tol) & (node.l < node.u)
        cand = np.flatnonzero(frac)
        if cand.size == 0:
            return None
        f = x[cand] - np.floor(x[cand])
        cand = cand[np.argsort(np.abs(f - 0.5), kind="stable")]
        if node.depth <= STRONG_DEPTH and time.perf_counter() < self.deadline:
            self.strong_branch(node, rel, cand)
        f = x[cand] - np.floor(x[cand])
        sc = self.pc.scores(cand, f)
        if sc is None:
            return int(cand[0])
        return int(cand[int(np.argmax(sc))])

    def process(self, node: BnbNode, rel):
        """Handle a solved node; returns children to enqueue."""
        inst, cfg = self.inst, self.cfg
        if node.branch is not None:
            v, d, f = node.branch
            self.pc.record(v, d, f, node.parent_bound, -math.inf if rel is None else rel.bound)
        if rel is None:
            return []
        bound = min(rel.bound, node.parent_bound)
        x = rel.x_hat
        integral = not _fractional(x, cfg.int_tol).any()
        x_int = None
        if integral:
            x_int = np.clip(np.round(x).astype(np.int64), node.l, node.u)
            if x_int.sum() == inst.s:
                val = float(inst.objective(x_int))
                if math.isfinite(val):
                    self.offer(x_int, val, "relaxation")
                    if bound - val <= cfg.relax_tol:
                        return []
        if bound <= self.lb + PRUNE_TOL:
            return []
        l, u = node.l, node.u
        if cfg.vbt and math.isfinite(self.lb):
            out = self.tighten(node, rel)
            if out is None:
                return []
            l, u, cuts, fixed = out
            self.stats.cuts += cuts
            self.stats.fixed += fixed
            if not _box_ok(inst, l, u):
                return []
        if cfg.ls and time.perf_counter() < self.deadline:
            xs, val, st = node_local_search(inst, x, node.l, node.u, self.lb,
                                            max(self.deadline - time.perf_counter(), 0.0))
            self.stats.k_bin += st.k_bin
            self.stats.k_int += st.k_int
            if xs is not None and self.offer(xs, val, "local_search"):
                self.stats.lsi += 1
            if bound <= self.lb + PRUNE_TOL:
                return []
        tnode = BnbNode(l, u, bound, node.depth, rel.warm, None)
        if integral:
            return [replace(c, warm=rel.warm) for c in _split_integral(tnode, x_int, bound)]
        var = self.choose(tnode, rel)
        if var is None:
            # every fractional coordinate got fixed by tightening: solve the smaller box again
            return [tnode]
        return [replace(c, warm=rel.warm) for c in branch(tnode, x, cfg.int_tol, var, bound)]

    def run(self):
        inst, cfg = self.inst, self.cfg
        t0 = time.perf_counter()
        x0, v0, st0 = root_incumbent(inst, max(self.deadline - time.perf_counter(), 0.0))
        self.stats.k_bin += st0.k_bin
        self.stats.k_int += st0.k_int
        if x0 is not None:
            self.offer(x0, v0, "root")
        root = BnbNode(inst.l.copy(), inst.u.copy(), math.inf, 0)
        rel = self.relax(root)
        self.stats.nodes += 1
        root_bound = -math.inf if rel is None else rel.bound
        pending = self.process(root, rel)
        for c in pending:
            self.push(c)
        timed_out = False
        pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
        try:
            while self.heap:
                if time.perf_counter() >= self.deadline:
                    timed_out = True
                    break
                batch = []
                while self.heap and len(batch) < cfg.threads:
                    negb, _, node = heapq.heappop(self.heap)
                    if -negb <= self.lb + PRUNE_TOL:
                        continue
                    batch.append(node)
                if not batch:
                    continue
                if pool is None:
                    results = [self.relax(batch[0])]
                else:
                    results = list(pool.map(self.relax, batch))
                for node, r in zip(batch, results):
                    self.stats.nodes += 1
                    for c in self.process(node, r):
                        self.push(c)
        finally:
            if pool is not None:
                pool.shutdown()
        open_bounds = [-b for b, _, nd in self.heap if -b > self.lb + PRUNE_TOL]
        st = self.stats
        st.time_seconds = time.perf_counter() - t0
        st.optimal = not timed_out or not open_bounds
        st.root_gap = root_bound - self.lb if math.isfinite(root_bound) else 0.0
        if st.optimal:
            st.final_gap = 0.0
        else:
            st.final_gap = max(max(open_bounds) - self.lb, 0.0)
        if self.best_x is None:
            raise Infeasible("no feasible point with a nonsingular information matrix")
        return Solution(self.best_x, self.lb), st


def solve(inst: Instance, config: BnbConfig | None = None, trace=None):
    """Solve ``inst``; returns ``(Solution, SolveStats)``.

    ``trace(event, data)`` is called on incumbent updates (``"incumbent"``) and
    on every bound tightening (``"vbt"``, with the node box before and after).
    """
    return _Solver(inst, config or BnbConfig(), trace).run()


# ---------------------------------------------------------------- oracle

def enumerate_objectives(inst: Instance, l=None, u=None):
    """All feasible integer points in the box and their objectives (``-inf`` if singular)."""
    l = inst.l if l is None else np.asarray(l, np.int64)
    u = inst.u if u is None else np.asarray(u, np.int64)
    count = count_feasible(l, u, inst.s)
    if count > BRUTE_MAX:
        raise TooLarge(f"{count} feasible points exceed {BRUTE_MAX}")
    X = np.array(list(enumerate_feasible(l, u, inst.s)), dtype=np.int64).reshape(-1, inst.n)
    vals = np.full(len(X), -np.inf)
    for start in range(0, len(X), 20000):
        Xc = X[start:start + 20000].astype(float)
        M = np.einsum("ki,ij,il->kjl", Xc, inst.A, inst.A)
        if inst.baseline is not None:
            M = M + inst.baseline
        sign, ld = np.linalg.slogdet(M)
        # match logdet_psd: a pivot at or below its tolerance means singular
        good = sign > 0
        vals[start:start + len(Xc)] = np.where(good, ld, -np.inf)
    return X, vals


def brute_force_dopt(inst: Instance) -> Solution:
    X, vals = enumerate_objectives(inst)
    if len(X) == 0:
        raise Infeasible("no feasible point")
    k = int(np.argmax(vals))
    return Solution(X[k].copy(), float(inst.objective(X[k])))
