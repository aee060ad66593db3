"""The Gamma function and the complementary relaxation of binary D-optimality.

For binary ``x`` with ``y = e - x`` and ``t = n - s``,
``ldet(A^T Diag(x) A) = const + Gamma_t(W^T Diag(y) W)`` where
``W W^T = I - U U^T`` and ``const = 2 sum log sigma``.  Relaxing ``y`` to the
box gives a concave program; its Lagrangian dual yields a certificate from
any iterate with ``rank(W^T Diag(y) W) >= t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ContractViolation, NodePruneSingular, SingularPrimal
from ..linalg import complement_factor, thin_svd
from . import frankwolfe
from .common import DualCertificate, RelaxResult, box_multipliers, interior_point, repair_into_box

RANK_TOL = 1e-9  # eigenvalues below RANK_TOL * lambda_max count as zero


@dataclass(frozen=True)
class GammaContext:
    U: np.ndarray | None
    sigma: np.ndarray | None
    W: np.ndarray
    const_term: float


@dataclass(frozen=True)
class GammaEval:
    t: int
    iota: int
    delta: float
    value: float


def gamma_iota(lam, t: int) -> int:
    """The unique ``iota`` in ``[0, t)`` with
    ``lam[iota-1] > tail_avg(iota) >= lam[iota]`` (0-based, ``lam[-1] = inf``).

    ``tail_avg(i) = sum(lam[i:]) / (t - i)``.  The first ``i`` with
    ``tail_avg(i) >= lam[i]`` also satisfies the left inequality.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.size
    if not 0 < t <= n:
        raise ContractViolation(f"t={t} outside (0, {n}]")
    if np.any(np.diff(lam) > 1e-12 * max(1.0, float(lam[0]))):
        raise ContractViolation("eigenvalues must be sorted non-increasing")
    tails = np.cumsum(lam[::-1])[::-1][:t]  # tails[i] = sum(lam[i:])
    avg = tails / (t - np.arange(t))
    scale = max(1.0, float(lam[0]))
    ok = avg >= lam[:t] - 1e-13 * scale
    return int(np.argmax(ok))  # ok[t-1] always holds


def gamma_value(lam, t: int) -> GammaEval:
    lam = np.asarray(lam, dtype=float)
    iota = gamma_iota(lam, t)
    delta = float(np.sum(lam[iota:])) / (t - iota)
    head = lam[:iota]
    if delta <= 0.0 or np.any(head <= 0.0):
        return GammaEval(t, iota, delta, -math.inf)
    return GammaEval(t, iota, delta, float(np.sum(np.log(head))) + (t - iota) * math.log(delta))


def _sorted_spectrum(X):
    w, V = np.linalg.eigh(0.5 * (X + X.T))
    w, V = w[::-1], V[:, ::-1]
    top = max(float(w[0]), 0.0) if w.size else 0.0
    w = np.where(w > RANK_TOL * top, w, 0.0)
    return w, V


def gamma_of_matrix(X, t: int) -> float:
    """``Gamma_t`` of a PSD matrix; small negative eigenvalues are clamped to zero."""
    X = np.asarray(X, dtype=float)
    if t == 0:
        return 0.0
    lam, _ = _sorted_spectrum(X)
    return gamma_value(lam, t).value


def build_gamma_context(A) -> GammaContext:
    U, sigma, _ = thin_svd(A)
    return GammaContext(U, sigma, complement_factor(U), 2.0 * float(np.sum(np.log(sigma))))


def _betas(lam, t):
    """Eigenvalues of Theta-hat (epsilon = 0), or None when the rank is below t."""
    r = int(np.count_nonzero(lam))
    if r < t:
        return None
    ev = gamma_value(lam, t)
    beta = np.full(lam.size, 1.0 / ev.delta)
    beta[:ev.iota] = 1.0 / lam[:ev.iota]
    return beta, ev


class _State:
    __slots__ = ("value", "grad", "beta", "vecs")

    def __init__(self, value, grad=None, beta=None, vecs=None):
        self.value = value
        self.grad = grad
        self.beta = beta
        self.vecs = vecs


class GammaOracle:
    """Value, supergradient and line search of ``y -> const + Gamma_t(W^T Diag(y) W)``."""

    def __init__(self, ctx: GammaContext, t: int):
        self.W = ctx.W
        self.const = ctx.const_term
        self.t = t

    def _spectrum(self, y):
        return _sorted_spectrum((self.W.T * y) @ self.W)

    def evaluate(self, y) -> _State:
        lam, V = self._spectrum(y)
        got = _betas(lam, self.t)
        if got is None:
            return _State(-math.inf)
        beta, ev = got
        WV = self.W @ V
        grad = (WV * WV) @ beta  # diag(W Theta W^T)
        return _State(self.const + ev.value, grad, beta, V)

    def line_search(self, state, y, d, amax) -> float:
        nz = np.flatnonzero(d)
        Wd = self.W[nz]
        D = (Wd.T * d[nz]) @ Wd

        def fprime(a):
            lam, V = self._spectrum(y + a * d)
            got = _betas(lam, self.t)
            if got is None:
                return -math.inf
            return float(got[0] @ np.einsum("ij,ij->j", V, D @ V))

        return frankwolfe.bracketed_root(fprime, float(amax))

    def certificate(self, state, y, l, u, budget):
        omega, nu, tau, lp_value, vertex = box_multipliers(state.grad, l, u, budget)
        t = self.t
        logs = np.sort(np.log(state.beta))[:t]  # t smallest eigenvalues of Theta
        value = self.const - float(np.sum(logs)) + lp_value - t
        theta = (state.vecs * state.beta) @ state.vecs.T
        return DualCertificate(theta, omega, nu, tau, value, "y"), vertex


def gamma_dual_certificate(ctx: GammaContext, y_hat, ly, uy, t: int) -> DualCertificate:
    """Dual point built from ``y_hat``; ``value`` includes ``ctx.const_term``.

    Raises SingularPrimal when ``rank(W^T Diag(y_hat) W) < t``.
    """
    oracle = GammaOracle(ctx, t)
    state = oracle.evaluate(np.asarray(y_hat, float))
    if not math.isfinite(state.value):
        raise SingularPrimal(f"rank of W^T Diag(y) W is below t={t}")
    return oracle.certificate(state, y_hat, np.asarray(ly, float), np.asarray(uy, float), t)[0]


def solve_gamma_relaxation(ctx: GammaContext, ly, uy, t: int, tol: float = 1e-6, max_iter: int = 2000,
                           x0=None, prune_below: float | None = None) -> RelaxResult:
    """Maximize ``const + Gamma_t(W^T Diag(y) W)`` over ``{sum y = t, ly <= y <= uy}``.

    Everything is in y-space, including the certificate multipliers (use
    ``certificate.in_x_space()`` for bounds on ``x = e - y``).  ``x0`` is a
    warm start in y-space.
    """
    ly = np.asarray(ly, float)
    uy = np.asarray(uy, float)
    n = ctx.W.shape[0]
    if t == 0:
        zero = np.zeros(n)
        cert = DualCertificate(np.eye(ctx.W.shape[1]), zero, zero.copy(), 0.0, ctx.const_term, "y")
        return RelaxResult(ly.copy(), ctx.const_term, cert, 0.0, 0)
    oracle = GammaOracle(ctx, t)
    base = interior_point(ly, uy, t)
    start = None
    if x0 is not None:
        warm = repair_into_box(x0, ly, uy, t)
        for cand in (warm, 0.5 * (warm + base)):
            if math.isfinite(oracle.evaluate(cand).value):
                start = cand
                break
    if start is None:
        if not math.isfinite(oracle.evaluate(base).value):
            # the interior point has the largest support, so nothing else can do better
            raise NodePruneSingular(f"no y in the box gives rank >= {t}")
        start = base
    out = frankwolfe.maximize(oracle, start, ly, uy, t, tol=tol, max_iter=max_iter, prune_below=prune_below)
    return RelaxResult(out.x, out.value, out.certificate, out.certificate.value - out.value, out.iterations)
