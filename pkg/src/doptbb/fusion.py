"""Upper bounds for data fusion: choose ``budget`` rows of ``G`` to add to a
known positive definite information matrix ``B``.

Five bounds are provided (natural, spectral, Hadamard, Gamma and
complementary Gamma) plus brute force and the bridge to a D-optimality
instance whose extra rows ``H`` (with ``B = H^T H``) are fixed at one.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, fields

import numpy as np
from scipy import linalg as sla

from .errors import ContractViolation, RankDeficient, TooLarge
from .linalg import logdet_psd, thin_svd
from .model import BINARY, Instance
from .relax.gamma import GammaContext, solve_gamma_relaxation
from .relax.natural import solve_natural_relaxation

BRUTE_MAX_P = 25
BRUTE_MAX_SUBSETS = 2_000_000

EXAMPLE_H = np.array([[0, 1, 0], [-1, 1, -1], [1, -1, 0]], dtype=float)
EXAMPLE1_G = np.array([[1, -1, 1], [1, 0, 1], [-1, 0, 1], [1, 1, 1], [1, 0, 0]], dtype=float)
EXAMPLE2_G = np.array([[1, 0, 1], [0, -1, 0], [1, 1, 0], [0, 1, 1], [-1, -1, -1]], dtype=float)


@dataclass(frozen=True, eq=False)
class FusionInstance:
    G: np.ndarray
    B: np.ndarray
    budget: int
    H: np.ndarray | None = None

    def __post_init__(self):
        G = np.asarray(self.G, float)
        B = np.asarray(self.B, float)
        p, m = G.shape
        if B.shape != (m, m):
            raise ContractViolation(f"B must be {m}x{m}")
        B = 0.5 * (B + B.T)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "budget", int(self.budget))
        if self.H is not None:
            object.__setattr__(self, "H", np.asarray(self.H, float))
        if not 0 < self.budget < p:
            raise ContractViolation(f"budget must lie in (0, {p}), got {self.budget}")
        if not math.isfinite(float(logdet_psd(B))):
            raise ContractViolation("B is not positive definite")

    @classmethod
    def from_blocks(cls, G, H, budget: int) -> "FusionInstance":
        H = np.asarray(H, float)
        return cls(G, H.T @ H, budget, H)

    def with_budget(self, budget: int) -> "FusionInstance":
        return FusionInstance(self.G, self.B, budget, self.H)

    @property
    def p(self) -> int:
        return self.G.shape[0]

    @property
    def m(self) -> int:
        return self.G.shape[1]

    def objective(self, x) -> float:
        return float(logdet_psd(self.B + (self.G.T * np.asarray(x, float)) @ self.G))


def example1(budget: int) -> FusionInstance:
    return FusionInstance.from_blocks(EXAMPLE1_G, EXAMPLE_H, budget)


def example2(budget: int) -> FusionInstance:
    return FusionInstance.from_blocks(EXAMPLE2_G, EXAMPLE_H, budget)


def _ldet(M) -> float:
    return float(logdet_psd(0.5 * (M + M.T)))


def _gbg(fu: FusionInstance) -> np.ndarray:
    """``G B^{-1} G^T``."""
    L = np.linalg.cholesky(fu.B)
    Y = sla.solve_triangular(L, fu.G.T, lower=True)  # L^{-1} G^T
    return Y.T @ Y


def spectral_bound(fu: FusionInstance) -> float:
    lam = np.sort(np.clip(np.linalg.eigvalsh(_gbg(fu)), 0.0, None))[::-1]
    return _ldet(fu.B) + float(np.sum(np.log1p(lam[: fu.budget])))


def hadamard_bound(fu: FusionInstance) -> float:
    """``ldet B`` plus the ``budget`` largest ``log(1 + ||G_i L^{-T}||^2)``."""
    L = np.linalg.cholesky(fu.B)
    Y = sla.solve_triangular(L, fu.G.T, lower=True)
    rho2 = np.sort(np.sum(Y * Y, axis=0))[::-1]
    return _ldet(fu.B) + float(np.sum(np.log1p(rho2[: fu.budget])))


def natural_bound_fusion(fu: FusionInstance, tol: float = 1e-8) -> float:
    """Certified value of the continuous relaxation with baseline ``B``."""
    inst = Instance(fu.G, np.zeros(fu.p, np.int64), np.ones(fu.p, np.int64), fu.budget, BINARY, baseline=fu.B)
    return solve_natural_relaxation(inst, tol=tol).bound


def natural_relaxation_fusion(fu: FusionInstance, tol: float = 1e-8):
    inst = Instance(fu.G, np.zeros(fu.p, np.int64), np.ones(fu.p, np.int64), fu.budget, BINARY, baseline=fu.B)
    return solve_natural_relaxation(inst, tol=tol)


def psi_factor(fu: FusionInstance) -> np.ndarray:
    """Lower Cholesky factor of ``I + G B^{-1} G^T``; row i is ``psi_i``."""
    return np.linalg.cholesky(np.eye(fu.p) + _gbg(fu))


def phi_factor(fu: FusionInstance) -> np.ndarray:
    """Lower Cholesky factor of ``I - G (B + G^T G)^{-1} G^T``."""
    M = fu.B + fu.G.T @ fu.G
    L = np.linalg.cholesky(0.5 * (M + M.T))
    Y = sla.solve_triangular(L, fu.G.T, lower=True)
    P = np.eye(fu.p) - Y.T @ Y
    return np.linalg.cholesky(0.5 * (P + P.T))


def gamma_bound_fusion(fu: FusionInstance, tol: float = 1e-8, W=None) -> float:
    """``ldet B`` plus the certified max of ``Gamma_budget(sum z_i psi_i psi_i^T)``."""
    W = psi_factor(fu) if W is None else W
    ctx = GammaContext(None, None, W, _ldet(fu.B))
    return solve_gamma_relaxation(ctx, np.zeros(fu.p), np.ones(fu.p), fu.budget, tol=tol).bound


def comp_gamma_bound_fusion(fu: FusionInstance, tol: float = 1e-8, W=None) -> float:
    """``ldet(B + G^T G)`` plus the certified max of ``Gamma_{p-budget}(sum z_i phi_i phi_i^T)``."""
    W = phi_factor(fu) if W is None else W
    ctx = GammaContext(None, None, W, _ldet(fu.B + fu.G.T @ fu.G))
    t = fu.p - fu.budget
    return solve_gamma_relaxation(ctx, np.zeros(fu.p), np.ones(fu.p), t, tol=tol).bound


def fusion_to_partial_dopt(fu: FusionInstance) -> Instance:
    """``A = [G; H]`` with the ``H`` rows fixed at one and ``s = q + budget``."""
    if fu.H is None:
        raise ContractViolation("the rows H behind B are needed")
    A = np.vstack([fu.G, fu.H])
    thin_svd(A)  # raises RankDeficient
    q = fu.H.shape[0]
    l = np.concatenate([np.zeros(fu.p, np.int64), np.ones(q, np.int64)])
    return Instance(A, l, np.ones(fu.p + q, np.int64), q + fu.budget, BINARY)


def brute_force_fusion(fu: FusionInstance) -> float:
    """Exact optimum by enumerating every subset of size ``budget``."""
    count = math.comb(fu.p, fu.budget)
    if fu.p > BRUTE_MAX_P or count > BRUTE_MAX_SUBSETS:
        raise TooLarge(f"p={fu.p}, {count} subsets")
    best = -math.inf
    combos = itertools.combinations(range(fu.p), fu.budget)
    outer = fu.G[:, :, None] * fu.G[:, None, :]  # (p, m, m)
    while True:
        chunk = list(itertools.islice(combos, 20000))
        if not chunk:
            break
        idx = np.array(chunk)
        M = fu.B[None] + outer[idx].sum(axis=1)
        sign, ld = np.linalg.slogdet(M)
        ld = np.where(sign > 0, ld, -np.inf)
        best = max(best, float(ld.max()))
    return best


@dataclass(frozen=True)
class BoundReport:
    budget: int
    z_natural: float
    z_spectral: float
    z_comp_gamma: float
    z_hadamard: float
    z_gamma: float
    z_opt: float | None = None

    @staticmethod
    def header() -> list[str]:
        return [f.name for f in fields(BoundReport)]

    def row(self) -> list[str]:
        return ["" if v is None else (str(v) if isinstance(v, int) else f"{v:.6f}")
                for v in (getattr(self, f.name) for f in fields(self))]


def bound_report(fu: FusionInstance, brute_force: bool = False, tol: float = 1e-8) -> BoundReport:
    return BoundReport(fu.budget, natural_bound_fusion(fu, tol), spectral_bound(fu), comp_gamma_bound_fusion(fu, tol),
                       hadamard_bound(fu), gamma_bound_fusion(fu, tol),
                       brute_force_fusion(fu) if brute_force else None)


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BoundReport.header())
    for r in reports:
        w.writerow(r.row())
    return buf.getvalue()


def random_fusion(p: int, m: int, q: int, budget: int, seed) -> FusionInstance:
    """Gaussian ``G`` (p x m) and ``H`` (q x m, full column rank)."""
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((p, m))
    while True:
        H = rng.standard_normal((q, m))
        try:
            thin_svd(H)
            break
        except RankDeficient:
            continue
    return FusionInstance.from_blocks(G, H, budget)


# ---------------------------------------------------------------- dominance suite

DOMINANCE_PROPERTIES = (
    "gamma_le_spectral",
    "comp_gamma_le_spectral",
    "natural_le_spectral",
    "spectral_is_full_ldet",
    "hadamard_exact_budget1",
    "spectral_hadamard_gap",
    "spectral_hadamard_gap_full_rank",
)


def seeded_fusion(seed) -> FusionInstance:
    """Random fusion instance with ``p <= 12`` and ``m <= 5`` drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 6))
    p = int(rng.integers(max(m, 2), 13))
    q = m + int(rng.integers(0, 3))
    return random_fusion(p, m, q, 1, rng)


def dominance_checks(fu: FusionInstance, tol: float = 1e-6, exact_tol: float = 1e-8) -> dict:
    """Evaluate every property at one budget: name -> True (holds), False (violated) or None (not applicable)."""
    k, m, p = fu.budget, fu.m, fu.p
    zs = spectral_bound(fu)
    zh = hadamard_bound(fu)
    M = np.eye(p) + _gbg(fu)
    d = np.sort(np.diag(M))[::-1]
    lam = np.sort(np.linalg.eigvalsh(M))[::-1]
    tail = slice(k, p)
    full = k >= m
    out = {
        "gamma_le_spectral": gamma_bound_fusion(fu) <= zs + tol,
        "comp_gamma_le_spectral": comp_gamma_bound_fusion(fu) <= zs + tol,
        "natural_le_spectral": natural_bound_fusion(fu) <= zs + tol if full else None,
        "spectral_is_full_ldet": abs(zs - _ldet(fu.B + fu.G.T @ fu.G)) <= exact_tol if full else None,
        "hadamard_exact_budget1": abs(zh - brute_force_fusion(fu)) <= tol if k == 1 else None,
        "spectral_hadamard_gap": zs - zh <= float(np.sum(np.log(d[tail] / lam[tail]))) + tol,
        "spectral_hadamard_gap_full_rank": zs - zh <= float(np.sum(np.log(d[tail]))) + tol if full else None,
    }
    return out


def dominance_suite(seeds) -> dict:
    """Run ``dominance_checks`` at every budget of each seeded instance.

    Returns ``name -> (checked, violations)``.
    """
    counts = {name: [0, 0] for name in DOMINANCE_PROPERTIES}
    for seed in seeds:
        base = seeded_fusion(seed)
        for k in range(1, base.p):
            for name, ok in dominance_checks(base.with_budget(k)).items():
                if ok is None:
                    continue
                counts[name][0] += 1
                counts[name][1] += 0 if ok else 1
    return {name: tuple(v) for name, v in counts.items()}
