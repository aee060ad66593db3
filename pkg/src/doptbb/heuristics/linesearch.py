"""Integer steps ``x + k d`` maximizing ``g(k) = ldet(B + k V)`` with
``V = sum d_l v_l v_l^T``, in closed form for two and three nonzeros in ``d``."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ContractViolation, RankDrop

DEGENERATE = 1e-14


@dataclass(frozen=True)
class StepInterval:
    k_min: int
    k_max: int

    def __contains__(self, k) -> bool:
        return self.k_min <= k <= self.k_max


def _ceil_div(a, b):
    return -((-a) // b)


def step_interval(x, d, l, u) -> StepInterval:
    """Integer ``k`` range keeping ``l <= x + k d <= u``."""
    x, d, l, u = (np.asarray(v, np.int64) for v in (x, d, l, u))
    pos = d > 0
    neg = d < 0
    if not (pos.any() or neg.any()):
        raise ContractViolation("direction is zero")
    lows = np.concatenate([_ceil_div(l[pos] - x[pos], d[pos]), _ceil_div(u[neg] - x[neg], d[neg])])
    highs = np.concatenate([(u[pos] - x[pos]) // d[pos], (l[neg] - x[neg]) // d[neg]])
    return StepInterval(int(lows.max()), int(highs.min()))


def _candidates(k_bar, interval: StepInterval):
    ks = {0, interval.k_min, interval.k_max} if interval.k_min <= 0 <= interval.k_max else {
        interval.k_min, interval.k_max}
    if math.isfinite(k_bar):
        for k in (math.floor(k_bar), math.ceil(k_bar)):
            ks.add(min(max(int(k), interval.k_min), interval.k_max))
    return sorted(ks, key=lambda k: (abs(k), k))


def rank2_optimal_step(Binv, v1, v2, interval: StepInterval):
    """Best integer step along ``d = e_i1 - e_i2``.

    ``Binv`` is the inverse of the current information matrix and ``v1``,
    ``v2`` the two rows.  Returns ``(k_bar, k_best, delta)`` where ``delta`` is
    the change in log-det (``0`` at ``k_best = 0``).
    """
    Binv = np.asarray(Binv, float)
    g1 = Binv @ v1
    g11 = float(v1 @ g1)
    g22 = float(v2 @ Binv @ v2)
    g12 = float(v2 @ g1)
    det = g11 * g22 - g12 * g12
    k_bar = (g11 - g22) / (2.0 * det) if det > DEGENERATE else math.nan

    def h(k):
        return k * k * (-det) + k * (g11 - g22) + 1.0

    return (k_bar, *_best(h, _candidates(k_bar, interval)))


def _best(h, ks):
    best_k, best = 0, 0.0
    for k in ks:
        val = h(k)
        if val > 0.0:
            delta = math.log(val)
            if delta > best:
                best_k, best = k, delta
    return best_k, best


def rank3_stationary(lam) -> float:
    """Stationary point ``k_bar_minus`` for eigenvalues with signs ``(+, -, -)``."""
    l1, l2, l3 = sorted((float(v) for v in lam), reverse=True)
    if not (l1 > 0 > l2 >= l3):
        raise ContractViolation(f"eigenvalue signs of {lam} are not (+, -, -)")
    a = 3.0 * l1 * l2 * l3
    b = 2.0 * (l1 * l2 + l1 * l3 + l2 * l3)
    c = l1 + l2 + l3
    disc = b * b - 4.0 * a * c
    if disc < -1e-12 * max(1.0, b * b):
        raise ContractViolation(f"negative discriminant {disc:.3e}")
    return (-b - math.sqrt(max(disc, 0.0))) / (2.0 * a)


def direction_eigenvalues(Binv, rows, coefs) -> np.ndarray:
    """Nonzero eigenvalues of ``B^{-1/2} V B^{-1/2}`` via the small matrix ``L^T D L``,
    ``L L^T = rows B^{-1} rows^T``; sorted non-increasing."""
    rows = np.asarray(rows, float)
    G = rows @ np.asarray(Binv, float) @ rows.T
    try:
        L = np.linalg.cholesky(0.5 * (G + G.T))
    except np.linalg.LinAlgError:
        raise RankDrop("rows are linearly dependent") from None
    M = L.T @ (np.asarray(coefs, float)[:, None] * L)
    lam = np.linalg.eigvalsh(0.5 * (M + M.T))[::-1]
    if np.min(np.abs(lam)) <= 1e-9 * np.max(np.abs(lam)):
        raise RankDrop("update has rank below the number of rows")
    return lam


def rank3_optimal_step(Binv, A, x, d, l, u):
    """Best integer step along a three-term ``d`` summing to zero.

    Returns ``(k_bar, k_best, delta)`` with steps measured along the given
    ``d`` (internally ``d`` is negated when its signs are ``(-, +, +)``).

    Raises RankDrop when ``V`` has rank below three.
    """
    d = np.asarray(d, np.int64)
    S = np.flatnonzero(d)
    if S.size != 3 or d.sum() != 0:
        raise ContractViolation("d needs exactly three nonzeros summing to zero")
    lam = direction_eigenvalues(Binv, np.asarray(A, float)[S], d[S])
    sign = 1
    if np.count_nonzero(lam > 0) != 1:
        sign, lam = -1, -lam[::-1]
    k_bar = rank3_stationary(lam)
    iv = step_interval(x, sign * d, l, u)
    lo, hi = -1.0 / lam[0], -1.0 / lam[2]

    def h(k):
        if not lo < k < hi:
            return -1.0
        return float(np.prod(1.0 + k * lam))

    k_best, delta = _best(h, _candidates(k_bar, iv))
    return sign * k_bar, sign * k_best, delta
