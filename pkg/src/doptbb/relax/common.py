"""Pieces shared by both relaxations: the box-budget linear oracle, dual
multipliers built from it, and the result containers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import Infeasible


@dataclass(frozen=True)
class DualCertificate:
    """A feasible Lagrangian dual point and its objective value.

    ``value`` is a valid upper bound on the integer problem over the box the
    certificate was built for, however inexact the primal point was.
    ``omega``/``nu`` multiply the lower/upper bounds of the space the
    relaxation lives in (``space`` is ``"x"`` or ``"y"`` with ``y = 1 - x``).
    """

    theta: np.ndarray
    omega: np.ndarray
    nu: np.ndarray
    tau: float
    value: float
    space: str = "x"

    def in_x_space(self) -> "DualCertificate":
        """Multipliers re-expressed for bounds on ``x`` when ``y = 1 - x``.

        A lower bound on y is an upper bound on x, so the roles swap.  Only
        ``omega``, ``nu`` and ``value`` are meaningful after the swap.
        """
        if self.space == "x":
            return self
        return DualCertificate(self.theta, self.nu, self.omega, self.tau, self.value, "x")


@dataclass(frozen=True)
class RelaxResult:
    x_hat: np.ndarray
    primal_value: float
    certificate: DualCertificate
    gap: float
    iterations: int

    @property
    def bound(self) -> float:
        return self.certificate.value


@dataclass(frozen=True)
class _Fill:
    x: np.ndarray
    order: np.ndarray
    pivot_pos: int


def _greedy_fill(c, l, u, budget) -> _Fill:
    c = np.asarray(c, dtype=float)
    l = np.asarray(l)
    u = np.asarray(u)
    n = c.size
    remaining = budget - l.sum()
    if remaining < -1e-9 or budget - u.sum() > 1e-9:
        raise Infeasible(f"no point with sum {budget} in the box [l, u]")
    order = np.argsort(-c, kind="stable")
    widths = (u - l)[order]
    cum = np.cumsum(widths)
    # the pivot is the first index whose cumulative width reaches the remaining budget
    phi = int(np.searchsorted(cum, remaining - 1e-12, side="left"))
    phi = min(phi, n - 1)
    integral = (np.issubdtype(l.dtype, np.integer) and np.issubdtype(u.dtype, np.integer)
                and float(budget).is_integer())
    x = l.astype(np.int64 if integral else float)
    top = order[:phi]
    x[top] = u[top]
    pivot = order[phi]
    x[pivot] = l[pivot] + remaining - (cum[phi - 1] if phi > 0 else 0)
    return _Fill(x, order, phi)


def extreme_point(c, l, u, budget):
    """Maximizer of ``c^T x`` over ``{sum(x) = budget, l <= x <= u}``.

    Fills coordinates to their upper bound in order of decreasing ``c``
    (ties by index), puts the remainder on the next one, and leaves the rest
    at their lower bound.
    """
    return _greedy_fill(c, l, u, budget).x


def box_multipliers(c, l, u, budget):
    """Optimal ``(omega, nu, tau)`` of ``min -w^T l + v^T u + tau*budget`` s.t.
    ``omega - nu - tau e = -c``, ``omega, nu >= 0``, and the LP value."""
    c = np.asarray(c, dtype=float)
    fill = _greedy_fill(c, l, u, budget)
    order, phi = fill.order, fill.pivot_pos
    tau = float(c[order[phi]])
    nu = np.zeros_like(c)
    omega = np.zeros_like(c)
    P = order[:phi]
    Q = order[phi + 1:]
    nu[P] = c[P] - tau
    omega[Q] = tau - c[Q]
    value = float(-omega @ np.asarray(l, float) + nu @ np.asarray(u, float) + tau * budget)
    return omega, nu, tau, value, fill.x


def interior_point(l, u, budget) -> np.ndarray:
    """``l + (budget - sum l)(u - l)/sum(u - l)``: positive on every free coordinate."""
    l = np.asarray(l, float)
    u = np.asarray(u, float)
    width = u - l
    total = width.sum()
    if total <= 0:
        return l.copy()
    return l + (budget - l.sum()) * width / total


def repair_into_box(x, l, u, budget) -> np.ndarray:
    """Feasible point near ``x``: clip to the box, then spread the budget error
    proportionally to the available slack."""
    l = np.asarray(l, float)
    u = np.asarray(u, float)
    y = np.clip(np.asarray(x, float), l, u)
    err = budget - y.sum()
    if err > 0:
        slack = u - y
        if slack.sum() > 0:
            y += err * slack / slack.sum()
    elif err < 0:
        slack = y - l
        if slack.sum() > 0:
            y += err * slack / slack.sum()
    return np.clip(y, l, u)
