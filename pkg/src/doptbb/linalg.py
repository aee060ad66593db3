"""Dense symmetric kernels: log-determinants, rank-one updates, SVD helpers.

Everything here is a pure function of its inputs.  ``FimState`` is frozen;
updating it returns a new state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import total_ordering

import numpy as np
from scipy import linalg as sla

from .errors import ContractViolation, RankDeficient, SingularUpdate

SINGULAR_TOL = 1e-10
SYMMETRY_TOL = 1e-12


@total_ordering
class _NegInfinite:
    """Tagged log-determinant of a singular matrix.

    Orders below every real number and absorbs addition of finite values.
    ``float(NEG_INFINITE)`` gives ``-inf`` for code that needs a number.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NEG_INFINITE"

    def __float__(self):
        return -math.inf

    def __eq__(self, other):
        return other is self

    def __hash__(self):
        return hash("NEG_INFINITE")

    def __lt__(self, other):
        return other is not self

    def __add__(self, other):
        if isinstance(other, (int, float, np.floating)) and other == math.inf:
            raise ArithmeticError("NEG_INFINITE + inf is undefined")
        return self

    __radd__ = __add__

    def __sub__(self, other):
        if other is self:
            raise ArithmeticError("NEG_INFINITE - NEG_INFINITE is undefined")
        return self

    def __rsub__(self, other):
        return math.inf

    def __neg__(self):
        return math.inf


NEG_INFINITE = _NegInfinite()


def is_neg_infinite(value) -> bool:
    return value is NEG_INFINITE


def as_float(value) -> float:
    """Map a real-or-NEG_INFINITE value onto a plain float."""
    return float(value)


def _check_symmetric(M: np.ndarray, tol: float = SYMMETRY_TOL) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ContractViolation(f"expected a square matrix, got shape {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if M.size and np.max(np.abs(M - M.T)) > tol * scale:
        raise ContractViolation("matrix is not symmetric")
    return M


def _cholesky(M: np.ndarray, singular_tol: float):
    """Lower Cholesky factor, or None when a pivot falls below ``singular_tol``."""
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return None
    if M.shape[0] and np.min(np.diag(L)) <= singular_tol:
        return None
    return L


def logdet_psd(M, singular_tol: float = SINGULAR_TOL):
    """Natural log-determinant of a symmetric matrix, or ``NEG_INFINITE``.

    Parameters
    ----------
    M : array_like, shape (m, m)
        Symmetric matrix.
    singular_tol : float
        Absolute threshold on the Cholesky pivots below which ``M`` is
        treated as singular.

    Returns
    -------
    float or NEG_INFINITE
    """
    M = _check_symmetric(M)
    if M.shape[0] == 0:
        return 0.0
    L = _cholesky(M, singular_tol)
    if L is None:
        return NEG_INFINITE
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def sherman_morrison_update(Minv, a, b, tol: float = 1e-12) -> np.ndarray:
    """Inverse of ``M + a b^T`` given ``M^{-1}``, in O(m^2)."""
    Minv = np.asarray(Minv, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    Ma = Minv @ a
    bM = b @ Minv
    denom = 1.0 + bM @ a
    if abs(denom) <= tol:
        raise SingularUpdate(f"Sherman-Morrison denominator {denom:.3e} is zero")
    return Minv - np.outer(Ma, bM) / denom


def det_lemma_factor(Minv, a, b) -> float:
    """``1 + b^T M^{-1} a``, the ratio ``det(M + a b^T) / det(M)``."""
    return 1.0 + float(np.asarray(b, dtype=float) @ (np.asarray(Minv, dtype=float) @ np.asarray(a, dtype=float)))


def _chol_rank_one(L: np.ndarray, v: np.ndarray, sign: float):
    """Rank-one update (sign=+1) or downdate (sign=-1) of a lower Cholesky factor.

    Returns None when a downdate loses positive definiteness.
    """
    L = L.copy()
    x = v.astype(float).copy()
    m = L.shape[0]
    for k in range(m):
        r2 = L[k, k] ** 2 + sign * x[k] ** 2
        if r2 <= 0.0:
            return None
        r = math.sqrt(r2)
        c = r / L[k, k]
        s = x[k] / L[k, k]
        L[k, k] = r
        if k + 1 < m:
            L[k + 1:, k] = (L[k + 1:, k] + sign * s * x[k + 1:]) / c
            x[k + 1:] = c * x[k + 1:] - s * L[k + 1:, k]
    return L


@dataclass(frozen=True)
class FimState:
    """A symmetric information matrix with cached factor, inverse and log-det.

    ``chol`` and ``inverse`` are None when the matrix is singular, in which
    case ``logdet`` is NEG_INFINITE.
    """

    dim: int
    matrix: np.ndarray
    chol: np.ndarray | None
    inverse: np.ndarray | None
    logdet: object

    @classmethod
    def from_matrix(cls, M, singular_tol: float = SINGULAR_TOL) -> "FimState":
        M = _check_symmetric(M, tol=1e-9)
        M = 0.5 * (M + M.T)
        L = _cholesky(M, singular_tol)
        if L is None:
            return cls(M.shape[0], M, None, None, NEG_INFINITE)
        Linv = sla.solve_triangular(L, np.eye(M.shape[0]), lower=True)
        inv = Linv.T @ Linv
        return cls(M.shape[0], M, L, inv, 2.0 * float(np.sum(np.log(np.diag(L)))))

    @classmethod
    def from_design(cls, A, x, singular_tol: float = SINGULAR_TOL) -> "FimState":
        A = np.asarray(A, dtype=float)
        return cls.from_matrix((A.T * np.asarray(x, dtype=float)) @ A, singular_tol)

    @property
    def is_singular(self) -> bool:
        return self.logdet is NEG_INFINITE

    def rank_one_update(self, v, coef: float = 1.0, singular_tol: float = SINGULAR_TOL) -> "FimState":
        """State for ``matrix + coef * v v^T`` using O(m^2) updates."""
        v = np.asarray(v, dtype=float)
        M = self.matrix + coef * np.outer(v, v)
        if self.is_singular:
            return FimState.from_matrix(M, singular_tol)
        factor = det_lemma_factor(self.inverse, coef * v, v)
        if factor <= 1e-12:
            return FimState.from_matrix(M, singular_tol)
        L = _chol_rank_one(self.chol, math.sqrt(abs(coef)) * v, 1.0 if coef >= 0 else -1.0)
        if L is None or np.min(np.diag(L)) <= singular_tol:
            return FimState.from_matrix(M, singular_tol)
        inv = sherman_morrison_update(self.inverse, coef * v, v)
        return FimState(self.dim, M, L, inv, self.logdet + math.log(factor))

    def refreshed(self) -> "FimState":
        """Recompute every cache from ``matrix`` (drops accumulated round-off)."""
        return FimState.from_matrix(self.matrix)


@dataclass(frozen=True)
class SpectralDecomp:
    eigenvalues: np.ndarray  # non-increasing
    eigenvectors: np.ndarray  # columns, orthonormal

    def reconstruct(self) -> np.ndarray:
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.T


def spectral_decomposition(M) -> SpectralDecomp:
    M = _check_symmetric(M, tol=1e-9)
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    return SpectralDecomp(w[::-1].copy(), V[:, ::-1].copy())


def thin_svd(A, rank_tol: float = 1e-10):
    """Thin SVD ``A = U diag(sigma) V^T`` of a full-column-rank matrix.

    Raises
    ------
    RankDeficient
        If the smallest singular value is at most ``rank_tol`` times the largest.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ContractViolation("expected a 2-d matrix")
    n, m = A.shape
    if m > n:
        raise RankDeficient(f"{n}x{m} matrix cannot have full column rank")
    U, sigma, Vt = np.linalg.svd(A, full_matrices=False)
    if m and (sigma[-1] <= rank_tol * sigma[0] or sigma[0] == 0.0):
        raise RankDeficient(f"smallest singular value {sigma[-1]:.3e} vs largest {sigma[0]:.3e}")
    return U, sigma, Vt.T


def complement_factor(U) -> np.ndarray:
    """``W`` with ``W W^T = I - U U^T`` for ``U`` with orthonormal columns.

    Built from the eigenpairs of the projector ``I - U U^T``: the n - m
    eigenvalues nearest one, each column scaled by the root of its eigenvalue.
    """
    U = np.asarray(U, dtype=float)
    n, m = U.shape
    if m and np.max(np.abs(U.T @ U - np.eye(m))) > 1e-10:
        raise ContractViolation("U does not have orthonormal columns")
    P = np.eye(n) - U @ U.T
    w, V = np.linalg.eigh(0.5 * (P + P.T))
    keep = slice(m, n)  # eigh sorts ascending; the m near-zero ones come first
    lam = np.clip(w[keep], 0.0, None)
    return V[:, keep] * np.sqrt(lam)
