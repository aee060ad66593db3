"""Starting points: an independent row set, leverage-score orderings, the
Bin/Int constructions and rounding of relaxation solutions."""

from __future__ import annotations

import math

import numpy as np

from ..errors import RankDeficient
from ..model import Instance


def independent_rows(A, tol: float = 1e-8):
    """Greedily pick, in index order, rows that enlarge the span.

    Returns ``(idx, x_tilde)`` with ``len(idx) == m`` and ``x_tilde`` the 0/1
    incidence vector of ``idx``.
    """
    A = np.asarray(A, dtype=float)
    n, m = A.shape
    Q = np.zeros((m, 0))
    idx = []
    for i in range(n):
        a = A[i]
        na = np.linalg.norm(a)
        if na == 0.0:
            continue
        r = a - Q @ (Q.T @ a)
        r = r - Q @ (Q.T @ r)  # second pass for orthogonality
        nr = np.linalg.norm(r)
        if nr > tol * na:
            Q = np.column_stack([Q, r / nr])
            idx.append(i)
            if len(idx) == m:
                break
    if len(idx) < m:
        raise RankDeficient(f"rows span only {len(idx)} of {m} dimensions")
    x = np.zeros(n, dtype=np.int64)
    x[idx] = 1
    return np.array(idx, dtype=np.int64), x


def leverage_init(A, s: int, weighted: bool = False) -> np.ndarray:
    """Row scores from the SVD of ``A``.

    Unweighted: ``sum_{k<=s} U_jk^2`` over the first ``s`` columns of the
    full left factor.  Weighted: ``sum_i (U_ji sigma_i)^2`` over the thin part.
    """
    A = np.asarray(A, dtype=float)
    n, m = A.shape
    U, sigma, _ = np.linalg.svd(A, full_matrices=True)
    if weighted:
        return np.sum((U[:, :m] * sigma) ** 2, axis=1)
    k = min(int(s), n)
    return np.sum(U[:, :k] ** 2, axis=1)


def _order(scores) -> np.ndarray:
    """Indices by decreasing score, ties by lower index."""
    return np.argsort(-np.asarray(scores, dtype=float), kind="stable")


def _fill(start, scores, cap, s):
    """Add units to ``start`` in score order, each index up to ``cap``, until the sum is ``s``."""
    x = np.array(start, dtype=np.int64)
    need = int(s - x.sum())
    for j in _order(scores):
        if need <= 0:
            break
        add = min(int(cap[j] - x[j]), need)
        if add > 0:
            x[j] += add
            need -= add
    return x


def _trim(x, scores, keep_at_least, s):
    """Remove units (lowest score first) down to ``keep_at_least`` until the sum is ``s``."""
    x = np.array(x, dtype=np.int64)
    extra = int(x.sum() - s)
    for j in _order(scores)[::-1]:
        if extra <= 0:
            break
        take = min(int(x[j] - keep_at_least[j]), extra)
        if take > 0:
            x[j] -= take
            extra -= take
    return x


def init_bin(scores, x_tilde, idx, s: int, l=None, u=None) -> np.ndarray:
    """Ones on ``idx`` plus the ``s - |idx|`` best-scored indices outside it.

    With bounds given, indices with ``l = 1`` are forced in and ``u = 0`` ones
    are excluded; anchor rows are dropped (lowest score first) if the forced
    ones already exhaust the budget.
    """
    n = len(scores)
    l = np.zeros(n, np.int64) if l is None else np.asarray(l, np.int64)
    u = np.ones(n, np.int64) if u is None else np.minimum(np.asarray(u, np.int64), 1)
    start = np.minimum(np.maximum(np.asarray(x_tilde, np.int64), l), u)
    if start.sum() > s:
        return _trim(start, scores, l, s)
    return _fill(start, scores, u, s)


def init_int(scores, x_tilde, u, s: int, l=None) -> np.ndarray:
    """``x_tilde`` plus a greedy fill of the remaining budget in score order, each index up to ``u``."""
    u = np.asarray(u, np.int64)
    l = np.zeros_like(u) if l is None else np.asarray(l, np.int64)
    start = np.minimum(np.maximum(np.asarray(x_tilde, np.int64), l), u)
    if start.sum() > s:
        return _trim(start, scores, l, s)
    return _fill(start, scores, u, s)


def round_heuristic(x_hat, l, u, s: int) -> np.ndarray:
    """Floor, then add one at the largest fractional parts until the sum is ``s``.

    Indices already at ``u`` are skipped; the shortfall moves on to the next
    fraction in line.  Ties go to the lower index.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    l = np.asarray(l, np.int64)
    u = np.asarray(u, np.int64)
    near = np.abs(x_hat - np.round(x_hat)) <= 1e-9
    base = np.where(near, np.round(x_hat), np.floor(x_hat))
    x = np.clip(base, l, u).astype(np.int64)
    frac = np.where(near, 0.0, x_hat - np.floor(x_hat))
    if x.sum() > s:
        return _trim(x, x_hat - x, l, s)
    x = _fill(x, frac, np.minimum(x + 1, u), s)  # one unit per index first
    return _fill(x, frac, u, s)


def anchor_rows(inst: Instance):
    """Independent rows among those allowed by ``u``; ``None`` if there are not enough."""
    allowed = np.flatnonzero(inst.u > 0)
    try:
        idx, _ = independent_rows(inst.A[allowed])
    except RankDeficient:
        return None
    idx = allowed[idx]
    x = np.zeros(inst.n, dtype=np.int64)
    x[idx] = 1
    return idx, x


def make_nonsingular(inst: Instance, x, scores) -> np.ndarray:
    """Swap anchor rows into ``x`` when its information matrix is singular.

    Each missing anchor row takes one unit from the lowest-scored
    non-anchor index above its lower bound.  Returns ``x`` unchanged when it
    is already fine or no repair is possible.
    """
    x = np.asarray(x, np.int64)
    if math.isfinite(float(inst.objective(x))):
        return x
    anchor = anchor_rows(inst)
    if anchor is None:
        return x
    idx, _ = anchor
    y = x.copy()
    donors = [j for j in _order(scores)[::-1] if j not in set(idx.tolist())]
    for i in idx:
        if y[i] > 0:
            continue
        for j in donors:
            if y[j] > inst.l[j]:
                y[j] -= 1
                y[i] += 1
                break
    return y if math.isfinite(float(inst.objective(y))) else x


def initial_solutions(inst: Instance, integer_starts: bool | None = None) -> list[np.ndarray]:
    """Bin starts from both score vectors, plus Int starts for integer instances."""
    if integer_starts is None:
        integer_starts = inst.kind == "integer"
    anchor = anchor_rows(inst)
    if anchor is None:
        idx, xt = np.zeros(0, np.int64), np.zeros(inst.n, np.int64)
    else:
        idx, xt = anchor
    starts = []
    for weighted in (False, True):
        try:
            scores = leverage_init(inst.A, inst.s, weighted)
        except np.linalg.LinAlgError:
            continue
        if inst.l.max(initial=0) <= 1:
            xb = init_bin(scores, xt, idx, inst.s, inst.l, inst.u)
            if xb.sum() == inst.s:
                starts.append(make_nonsingular(inst, xb, scores))
        if integer_starts:
            starts.append(make_nonsingular(inst, init_int(scores, xt, inst.u, inst.s, inst.l), scores))
    if not starts:
        raise RankDeficient("no construction produced a feasible start")
    return starts
