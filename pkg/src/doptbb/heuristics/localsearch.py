"""Exchange local searches over ``x + k d`` moves.

Rank-2 moves use ``d = e_i - e_j``; rank-3 moves use ``d = 2e_i - e_j - e_k``.
Scores come from cached inverses: for a fixed ``i`` the inverse of
``B + v_i v_i^T`` is formed once and every ``j`` is scored by the determinant
lemma, all ``j`` at once.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractViolation
from ..linalg import FimState, sherman_morrison_update
from ..model import Instance

IMPROVE_TOL = 1e-9
REFRESH_EVERY = 20
VARIANTS = ("FI", "FI_PLUS", "BI")
MOVES = ("rank2_unit", "rank2_opt_k", "rank3")


@dataclass
class SearchStats:
    improvements: int = 0
    k_bin: int = 0
    k_int: int = 0
    rank3: int = 0

    def merge(self, other: "SearchStats") -> None:
        self.improvements += other.improvements
        self.k_bin += other.k_bin
        self.k_int += other.k_int
        self.rank3 += other.rank3


@dataclass
class SearchState:
    x: np.ndarray
    fim: FimState
    stats: SearchStats = field(default_factory=SearchStats)

    @classmethod
    def start(cls, inst: Instance, x) -> "SearchState":
        x = np.asarray(x, np.int64).copy()
        return cls(x, FimState.from_matrix(inst.full_information(x)))

    @property
    def objective(self) -> float:
        return float(self.fim.logdet)


def unit_exchange_scores(Binv, A, x, l, u, i) -> np.ndarray:
    """Log-det change of ``x + e_i - e_j`` for every ``j`` (``-inf`` where infeasible).

    One Sherman-Morrison update for ``+v_i``, then one determinant-lemma
    factor per ``j``: O(m^2) per scored move.
    """
    out = np.full(A.shape[0], -np.inf)
    if x[i] >= u[i]:
        return out
    vi = A[i]
    fi = 1.0 + vi @ Binv @ vi
    Bi = sherman_morrison_update(Binv, vi, vi)
    q = 1.0 - np.einsum("ij,ij->i", A @ Bi, A)
    ok = (x > l) & (q > 0.0)
    ok[i] = False
    out[ok] = math.log(fi) + np.log(q[ok])
    return out


def opt_k_exchange_scores(Binv, gdiag, A, x, l, u, i):
    """Best integer ``k >= 1`` along ``e_i - e_j`` for every ``j``.

    Returns ``(delta, k)`` arrays; uses the closed-form stationary point of
    ``log(k^2 (g12^2 - g11 g22) + k (g11 - g22) + 1)``.
    """
    n = A.shape[0]
    delta = np.full(n, -np.inf)
    kbest = np.zeros(n, np.int64)
    if x[i] >= u[i]:
        return delta, kbest
    g12 = A @ (Binv @ A[i])
    g11 = gdiag[i]
    g22 = gdiag
    kmax = np.minimum(u[i] - x[i], x - l)
    ok = kmax >= 1
    ok[i] = False
    det = g11 * g22 - g12 * g12
    with np.errstate(divide="ignore", invalid="ignore"):
        kbar = np.where(det > 1e-14, (g11 - g22) / (2.0 * det), 1.0)
    kbar = np.nan_to_num(kbar, nan=1.0, posinf=1.0, neginf=1.0)
    cands = [np.ones(n), kmax.astype(float), np.floor(kbar), np.ceil(kbar)]
    for k in cands:
        k = np.clip(k, 1, np.maximum(kmax, 1)).astype(np.int64)
        h = k * k * (-det) + k * (g11 - g22) + 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.where(h > 0, np.log(np.where(h > 0, h, 1.0)), -np.inf)
        better = ok & (val > delta)
        delta[better] = val[better]
        kbest[better] = k[better]
    return delta, kbest


def rank3_scores(G, x, l, u, i):
    """Best integer step along ``2e_i - e_j - e_k`` for all pairs ``j < k``.

    ``G = A B^{-1} A^T``.  Returns ``(pairs, delta, k)``; pairs whose update
    has rank below three are skipped.
    """
    n = G.shape[0]
    others = np.array([j for j in range(n) if j != i], dtype=np.int64)
    if others.size < 2:
        return np.zeros((0, 2), np.int64), np.zeros(0), np.zeros(0, np.int64)
    jj, kk = np.triu_indices(others.size, 1)
    P = np.column_stack([others[jj], others[kk]])
    idx = np.column_stack([np.full(len(P), i), P])
    GS = G[idx[:, :, None], idx[:, None, :]]  # (K, 3, 3)
    D = np.array([2.0, -1.0, -1.0])
    lam = np.sort(np.linalg.eigvals(GS * D[None, None, :]).real, axis=1)[:, ::-1]
    scale = np.max(np.abs(lam), axis=1)
    full = np.min(np.abs(lam), axis=1) > 1e-9 * np.maximum(scale, 1e-300)
    # step interval along d = (2, -1, -1) at (i, j, k)
    xi, xj, xk = x[i], x[P[:, 0]], x[P[:, 1]]
    ui, li = u[i], l[i]
    kmax = np.minimum.reduce([np.full(len(P), (ui - xi) // 2), xj - l[P[:, 0]], xk - l[P[:, 1]]])
    kmin = np.maximum.reduce([np.full(len(P), -((xi - li) // 2)), xj - u[P[:, 0]], xk - u[P[:, 1]]])
    with np.errstate(divide="ignore", invalid="ignore"):
        lo = np.where(lam[:, 0] > 0, -1.0 / lam[:, 0], -np.inf)
        hi = np.where(lam[:, 2] < 0, -1.0 / lam[:, 2], np.inf)
        a = 3.0 * lam.prod(axis=1)
        b = 2.0 * (lam[:, 0] * lam[:, 1] + lam[:, 0] * lam[:, 2] + lam[:, 1] * lam[:, 2])
        c = lam.sum(axis=1)
        kbar = (-b - np.sqrt(np.maximum(b * b - 4 * a * c, 0.0))) / (2 * a)
    kbar = np.nan_to_num(kbar, nan=0.0, posinf=0.0, neginf=0.0)
    delta = np.full(len(P), -np.inf)
    kbest = np.zeros(len(P), np.int64)
    for cand in (kmin, kmax, np.floor(kbar), np.ceil(kbar)):
        k = np.clip(cand, kmin, kmax).astype(np.int64)
        inside = full & (k != 0) & (k > lo) & (k < hi)
        with np.errstate(invalid="ignore", divide="ignore"):
            val = np.sum(np.log(np.where(inside[:, None], 1.0 + k[:, None] * lam, 1.0)), axis=1)
        val = np.where(inside & (kmin <= kmax), val, -np.inf)
        better = val > delta
        delta[better] = val[better]
        kbest[better] = k[better]
    return P, delta, kbest


def _apply(inst, state: SearchState, d: np.ndarray, since_refresh: int) -> tuple[bool, int]:
    """Move to ``x + d`` if it strictly improves; returns (accepted, counter)."""
    old = state.objective
    fim = state.fim
    for j in sorted(np.flatnonzero(d), key=lambda j: -d[j]):  # additions first
        fim = fim.rank_one_update(inst.A[j], float(d[j]))
    since_refresh += 1
    if since_refresh >= REFRESH_EVERY or fim.is_singular:
        fim, since_refresh = FimState.from_matrix(inst.full_information(state.x + d)), 0
    if fim.is_singular or float(fim.logdet) <= old + IMPROVE_TOL:
        fim = FimState.from_matrix(inst.full_information(state.x + d))
        since_refresh = 0
        if fim.is_singular or float(fim.logdet) <= old + IMPROVE_TOL:
            return False, since_refresh
    state.x = state.x + d
    state.fim = fim
    return True, since_refresh


def _pick(scores, variant):
    """Index chosen among improving entries, or None."""
    good = np.flatnonzero(scores > IMPROVE_TOL)
    if good.size == 0:
        return None
    if variant == "FI":
        return int(good[0])
    return int(good[np.argmax(scores[good])])


def local_search(inst: Instance, x, variant: str = "FI", moves=("rank2_unit",),
                 budget_seconds: float | None = None) -> SearchState:
    """Improve a feasible ``x`` with finite objective until no move improves it.

    ``variant``: ``FI`` takes the first improving pair in index order, ``FI_PLUS``
    the best partner of the first improving ``i``, ``BI`` the best pair overall.
    FI-type scans restart from the first index after each accepted move.
    """
    if variant not in VARIANTS:
        raise ContractViolation(f"variant must be one of {VARIANTS}")
    moves = tuple(moves)
    if any(mv not in MOVES for mv in moves):
        raise ContractViolation(f"moves must be drawn from {MOVES}")
    state = x if isinstance(x, SearchState) else SearchState.start(inst, x)
    if state.fim.is_singular:
        raise ContractViolation("local search needs a start with finite objective")
    deadline = math.inf if budget_seconds is None else time.perf_counter() + budget_seconds
    A, l, u = inst.A, inst.l, inst.u
    n = inst.n
    since = 0
    rank2 = [mv for mv in moves if mv != "rank3"]
    use_rank3 = "rank3" in moves
    while time.perf_counter() < deadline:
        moved = False
        for mv in rank2:
            Binv = state.fim.inverse
            gdiag = np.einsum("ij,ij->i", A @ Binv, A) if mv == "rank2_opt_k" else None
            best = (IMPROVE_TOL, None, None, 0)
            for i in range(n):
                if time.perf_counter() >= deadline:
                    break
                if mv == "rank2_unit":
                    sc = unit_exchange_scores(Binv, A, state.x, l, u, i)
                    ks = np.ones(n, np.int64)
                else:
                    sc, ks = opt_k_exchange_scores(Binv, gdiag, A, state.x, l, u, i)
                j = _pick(sc, variant)
                if j is None:
                    continue
                if variant == "BI":
                    if sc[j] > best[0]:
                        best = (sc[j], i, j, int(ks[j]))
                    continue
                best = (sc[j], i, j, int(ks[j]))
                break
            if best[1] is not None:
                _, i, j, k = best
                d = np.zeros(n, np.int64)
                d[i], d[j] = k, -k
                ok, since = _apply(inst, state, d, since)
                if ok:
                    state.stats.improvements += 1
                    if k == 1:
                        state.stats.k_bin += 1
                    else:
                        state.stats.k_int += 1
                    moved = True
                    break
        if moved:
            continue
        if use_rank3 and n >= 3:
            Binv = state.fim.inverse
            G = A @ Binv @ A.T
            best = (IMPROVE_TOL, None, None, 0)
            for i in range(n):
                if time.perf_counter() >= deadline or state.x[i] + 2 > u[i] and state.x[i] - 2 < l[i]:
                    continue
                P, sc, ks = rank3_scores(G, state.x, l, u, i)
                t = _pick(sc, variant)
                if t is None:
                    continue
                cand = (sc[t], i, tuple(P[t]), int(ks[t]))
                if variant == "BI":
                    if cand[0] > best[0]:
                        best = cand
                    continue
                best = cand
                break
            if best[1] is not None:
                _, i, (j, k2), k = best
                d = np.zeros(n, np.int64)
                d[i], d[j], d[k2] = 2 * k, -k, -k
                ok, since = _apply(inst, state, d, since)
                if ok:
                    state.stats.improvements += 1
                    state.stats.rank3 += 1
                    continue
        break
    if since:
        state.fim = FimState.from_matrix(inst.full_information(state.x))
    return state


def escalating_search(inst: Instance, x, moves=("rank2_unit",), budget_seconds: float | None = None) -> SearchState:
    """FI first; when it improved on the start, FI_PLUS and then BI from its result."""
    state = SearchState.start(inst, x)
    state = local_search(inst, state, "FI", moves, budget_seconds)
    if state.stats.improvements:
        state = local_search(inst, state, "FI_PLUS", moves, budget_seconds)
        state = local_search(inst, state, "BI", moves, budget_seconds)
    return state
