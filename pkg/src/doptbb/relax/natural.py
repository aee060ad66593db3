"""Continuous relaxation ``max ldet(C + A^T Diag(x) A)`` over the box-budget
polytope, with the closed-form dual certificate built from any primal point."""

from __future__ import annotations

import math

import numpy as np
from scipy import linalg as sla

from ..errors import NodePruneSingular, SingularPrimal
from ..linalg import SINGULAR_TOL
from ..model import Instance
from . import frankwolfe
from .common import DualCertificate, RelaxResult, box_multipliers, interior_point, repair_into_box

MAX_RESTARTS = 50


class _State:
    __slots__ = ("value", "grad", "chol", "theta")

    def __init__(self, value, grad, chol, theta):
        self.value = value
        self.grad = grad
        self.chol = chol
        self.theta = theta


class NaturalOracle:
    """Value, gradient ``diag(A Theta A^T)`` and segment line search of the log-det."""

    def __init__(self, inst: Instance):
        self.A = inst.A
        self.C = inst.baseline
        self.m = inst.m

    def information(self, x) -> np.ndarray:
        M = (self.A.T * x) @ self.A
        if self.C is not None:
            M = M + self.C
        return 0.5 * (M + M.T)

    def evaluate(self, x) -> _State:
        M = self.information(x)
        try:
            L = np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            return _State(-math.inf, None, None, None)
        if np.min(np.diag(L)) <= SINGULAR_TOL:
            return _State(-math.inf, None, None, None)
        Linv = sla.solve_triangular(L, np.eye(self.m), lower=True)
        theta = Linv.T @ Linv
        G = self.A @ Linv.T
        grad = np.einsum("ij,ij->i", G, G)
        return _State(2.0 * float(np.sum(np.log(np.diag(L)))), grad, L, theta)

    def line_search(self, state, x, d, amax) -> float:
        nz = np.flatnonzero(d)
        Ad = self.A[nz]
        D = (Ad.T * d[nz]) @ Ad
        Y = sla.solve_triangular(state.chol, D, lower=True)
        S = sla.solve_triangular(state.chol, Y.T, lower=True)
        mu = np.linalg.eigvalsh(0.5 * (S + S.T))
        mu = mu[np.abs(mu) > 1e-14 * max(1.0, float(np.abs(mu).max(initial=0.0)))]
        if mu.size == 0:
            return 0.0

        def fprime(a):
            den = 1.0 + a * mu
            if np.any(den <= 0):
                return -math.inf
            return float(np.sum(mu / den))

        return frankwolfe.bracketed_root(fprime, float(amax))

    def certificate(self, state, x, l, u, budget):
        omega, nu, tau, lp_value, vertex = box_multipliers(state.grad, l, u, budget)
        value = state.value + lp_value - self.m
        if self.C is not None:
            value += float(np.sum(state.theta * self.C))
        return DualCertificate(state.theta, omega, nu, tau, value, "x"), vertex


def dual_certificate_from_primal(inst: Instance, x_hat, l=None, u=None) -> DualCertificate:
    """Closed-form dual point from a primal point with nonsingular information matrix.

    ``Theta = M(x_hat)^{-1}``; ``omega``, ``nu``, ``tau`` solve the LP that
    minimizes the duality gap for this ``Theta``.
    """
    l = inst.l if l is None else np.asarray(l)
    u = inst.u if u is None else np.asarray(u)
    oracle = NaturalOracle(inst)
    state = oracle.evaluate(np.asarray(x_hat, float))
    if not math.isfinite(state.value):
        raise SingularPrimal("information matrix at x_hat is singular")
    return oracle.certificate(state, x_hat, l, u, inst.s)[0]


def _feasible_start(inst, oracle, l, u, x0):
    base = interior_point(l, u, inst.s)
    candidates = []
    if x0 is not None:
        warm = repair_into_box(x0, l, u, inst.s)
        candidates += [warm, 0.5 * (warm + base)]
    candidates.append(base)
    for cand in candidates:
        if math.isfinite(oracle.evaluate(cand).value):
            return cand
    # numerically singular interior point: pull towards independent rows
    from ..heuristics.construct import independent_rows
    from ..errors import RankDeficient

    allowed = np.flatnonzero(u > 0)
    try:
        idx, _ = independent_rows(inst.A[allowed])
    except RankDeficient:
        raise NodePruneSingular("rows allowed at this node do not span R^m") from None
    target = np.zeros(inst.n)
    target[allowed[idx]] = 1.0
    target = repair_into_box(np.maximum(target, l), l, u, inst.s)
    for k in range(1, MAX_RESTARTS + 1):
        cand = (1 - k / (MAX_RESTARTS + 1)) * base + (k / (MAX_RESTARTS + 1)) * target
        if math.isfinite(oracle.evaluate(cand).value):
            return cand
    raise NodePruneSingular("no feasible point with a nonsingular information matrix")


def solve_natural_relaxation(inst: Instance, tol: float = 1e-6, max_iter: int = 2000, *, l=None, u=None,
                             x0=None, prune_below: float | None = None) -> RelaxResult:
    """Solve the natural relaxation (optionally with node bounds ``l``, ``u``).

    The returned certificate is valid whatever the stopping reason.

    Raises
    ------
    NodePruneSingular
        When every feasible point has a singular information matrix.
    """
    l = inst.l if l is None else np.asarray(l)
    u = inst.u if u is None else np.asarray(u)
    oracle = NaturalOracle(inst)
    start = _feasible_start(inst, oracle, l, u, x0)
    out = frankwolfe.maximize(oracle, start, l, u, inst.s, tol=tol, max_iter=max_iter, prune_below=prune_below)
    return RelaxResult(out.x, out.value, out.certificate, out.certificate.value - out.value, out.iterations)
