"""Problem instances, objective evaluation, generators and the text file format."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractViolation, Infeasible, ParseError
from .linalg import NEG_INFINITE, logdet_psd

BINARY = "binary"
INTEGER = "integer"
KINDS = (BINARY, INTEGER)


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Instance:
    """An integer D-optimality instance.

    Maximize ``ldet(C + A^T Diag(x) A)`` over integer ``x`` with ``sum(x) = s``
    and ``l <= x <= u``.  ``C`` is the optional PSD ``baseline`` (absent for
    plain instances); it carries information from rows that are always in.
    """

    A: np.ndarray
    l: np.ndarray
    u: np.ndarray
    s: int
    kind: str = INTEGER
    baseline: np.ndarray | None = None

    def __post_init__(self):
        A = _frozen(self.A, float)
        if A.ndim != 2:
            raise ContractViolation(f"A must be 2-d, got shape {A.shape}")
        n, m = A.shape
        l = _frozen(self.l, np.int64)
        u = _frozen(self.u, np.int64)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "s", int(self.s))
        if self.baseline is not None:
            C = _frozen(self.baseline, float)
            if C.shape != (m, m) or np.max(np.abs(C - C.T), initial=0.0) > 1e-9:
                raise ContractViolation("baseline must be a symmetric m x m matrix")
            object.__setattr__(self, "baseline", C)
        if self.kind not in KINDS:
            raise ContractViolation(f"kind must be one of {KINDS}, got {self.kind!r}")
        if l.shape != (n,) or u.shape != (n,):
            raise ContractViolation("l and u must have one entry per row of A")
        if np.any(l < 0) or np.any(l > u):
            raise ContractViolation("bounds must satisfy 0 <= l <= u")
        if self.kind == BINARY and np.any(u > 1):
            raise ContractViolation("binary instances need u <= 1")
        if not (l.sum() <= self.s <= u.sum()):
            raise ContractViolation(f"budget s={self.s} outside [sum(l), sum(u)] = [{l.sum()}, {u.sum()}]")
        if self.baseline is None and self.s < m:
            raise ContractViolation(f"budget s={self.s} is below m={m}; every design is singular")
        if logdet_psd(self.full_information(u > 0)) is NEG_INFINITE:
            raise ContractViolation("A (with the baseline) does not have full column rank on rows with u > 0")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[1]

    def full_information(self, x) -> np.ndarray:
        """``C + A^T Diag(x) A`` for a (possibly fractional) weight vector."""
        M = (self.A.T * np.asarray(x, dtype=float)) @ self.A
        if self.baseline is not None:
            M = M + self.baseline
        return 0.5 * (M + M.T)

    def objective(self, x):
        """Unchecked log-det objective; NEG_INFINITE when singular."""
        return logdet_psd(self.full_information(x))

    def check_feasible(self, x, l=None, u=None) -> np.ndarray:
        l = self.l if l is None else l
        u = self.u if u is None else u
        x = np.asarray(x)
        if x.shape != (self.n,):
            raise Infeasible(f"x has shape {x.shape}, expected ({self.n},)")
        xi = np.rint(x).astype(np.int64)
        if np.any(np.abs(x - xi) > 0):
            raise Infeasible("x is not integral")
        bad = np.flatnonzero((xi < l) | (xi > u))
        if bad.size:
            raise Infeasible(f"bound violated at index {bad[0]}: x={xi[bad[0]]}, l={l[bad[0]]}, u={u[bad[0]]}")
        if xi.sum() != self.s:
            raise Infeasible(f"sum(x)={xi.sum()} differs from budget s={self.s}")
        return xi

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        same_base = (self.baseline is None and other.baseline is None) or (
            self.baseline is not None and other.baseline is not None
            and np.array_equal(self.baseline, other.baseline))
        return (self.s == other.s and self.kind == other.kind and same_base
                and np.array_equal(self.A, other.A) and np.array_equal(self.l, other.l)
                and np.array_equal(self.u, other.u))

    __hash__ = None


@dataclass(frozen=True)
class Solution:
    x: np.ndarray
    objective: object


def evaluate(inst: Instance, x):
    """Objective of a feasible integer point; raises Infeasible otherwise."""
    xi = inst.check_feasible(x)
    return inst.objective(xi)


@dataclass(frozen=True)
class BinaryReform:
    instance: Instance  # free 0/1 rows with the budget reduced by sum(l)
    baseline: np.ndarray  # sum of l_i v_i v_i^T (plus the original baseline)
    index_map: np.ndarray  # reformed row -> original row

    def lift(self, y, original: Instance) -> np.ndarray:
        """Integer point of the original instance for a reformed 0/1 point."""
        x = original.l.copy()
        np.add.at(x, self.index_map, np.asarray(y, dtype=np.int64))
        return x


def to_binary_reform(inst: Instance) -> BinaryReform:
    """Repeat each row ``u_i - l_i`` times and move the ``l`` part into a baseline."""
    reps = inst.u - inst.l
    index_map = np.repeat(np.arange(inst.n), reps)
    base = (inst.A.T * inst.l.astype(float)) @ inst.A
    if inst.baseline is not None:
        base = base + inst.baseline
    base = 0.5 * (base + base.T)
    k = int(reps.sum())
    reformed = Instance(inst.A[index_map], np.zeros(k, np.int64), np.ones(k, np.int64),
                        inst.s - int(inst.l.sum()), BINARY, baseline=base)
    return BinaryReform(reformed, base, index_map)


def expand_binary(inst: Instance):
    """0/1 instance with ``u_i`` copies of row i, ``l_i`` of them fixed at one.

    Returns the expanded instance (no baseline) and the map from expanded
    rows back to original rows.  A baseline ``C`` becomes extra rows fixed at
    one whose Gram matrix is ``C``; they map to index -1.
    """
    index_map = np.repeat(np.arange(inst.n), inst.u)
    A = inst.A[index_map]
    lo = np.zeros(index_map.size, np.int64)
    for i in range(inst.n):
        first = np.flatnonzero(index_map == i)[: inst.l[i]]
        lo[first] = 1
    s = inst.s
    if inst.baseline is not None:
        H = baseline_rows(inst.baseline)
        A = np.vstack([A, H])
        lo = np.concatenate([lo, np.ones(len(H), np.int64)])
        index_map = np.concatenate([index_map, -np.ones(len(H), np.int64)])
        s += len(H)
    hi = np.ones(len(lo), np.int64)
    return Instance(A, lo, hi, s, BINARY), index_map


def baseline_rows(C) -> np.ndarray:
    """Rows ``H`` with ``H^T H = C`` for a PSD matrix (zero directions dropped)."""
    w, V = np.linalg.eigh(0.5 * (C + C.T))
    keep = w > 1e-12 * max(1.0, float(w.max(initial=0.0)))
    return (V[:, keep] * np.sqrt(w[keep])).T


def with_fixed_rows(inst: Instance) -> tuple[Instance, int]:
    """Replace a baseline by explicit rows fixed at one (appended at the end).

    Returns the new instance and the number of original rows.
    """
    if inst.baseline is None:
        return inst, inst.n
    H = baseline_rows(inst.baseline)
    q = len(H)
    return Instance(np.vstack([inst.A, H]), np.concatenate([inst.l, np.ones(q, np.int64)]),
                    np.concatenate([inst.u, np.ones(q, np.int64)]), inst.s + q,
                    inst.kind if inst.u.max(initial=0) <= 1 else INTEGER), inst.n


# ---------------------------------------------------------------- enumeration

def count_feasible(l, u, s) -> int:
    """Number of integer points with ``sum = s`` in the box ``[l, u]``."""
    ways = {0: 1}
    for width in np.asarray(u) - np.asarray(l):
        nxt = {}
        for tot, w in ways.items():
            for k in range(int(width) + 1):
                nxt[tot + k] = nxt.get(tot + k, 0) + w
        ways = nxt
    return ways.get(int(s - np.sum(l)), 0)


def enumerate_feasible(l, u, s):
    """Yield every integer point with ``sum = s`` and ``l <= x <= u`` (lexicographic)."""
    l = np.asarray(l, dtype=np.int64)
    u = np.asarray(u, dtype=np.int64)
    n = len(l)
    tail_lo = np.concatenate([np.cumsum(l[::-1])[::-1], [0]])
    tail_hi = np.concatenate([np.cumsum(u[::-1])[::-1], [0]])
    x = l.copy()

    def rec(i, remaining):
        if i == n:
            if remaining == 0:
                yield x.copy()
            return
        lo = max(l[i], remaining - tail_hi[i + 1])
        hi = min(u[i], remaining - tail_lo[i + 1])
        for v in range(lo, hi + 1):
            x[i] = v
            yield from rec(i + 1, remaining - v)
        x[i] = l[i]

    yield from rec(0, int(s))


# ---------------------------------------------------------------- generators

def _full_rank(A) -> bool:
    n, m = A.shape
    if n < m:
        return False
    sv = np.linalg.svd(A, compute_uv=False)
    return sv[-1] > 1e-10 * sv[0]


def gen_binary_gaussian(n: int, m: int, seed, s: int | None = None) -> Instance:
    """Standard-normal ``A`` (redrawn until rank m), ``l = 0``, ``u = 1``; ``s`` defaults to m."""
    if not 0 < m <= n:
        raise ContractViolation(f"need 0 < m <= n, got n={n}, m={m}")
    rng = np.random.default_rng(seed)
    while True:
        A = rng.standard_normal((n, m))
        if _full_rank(A):
            break
    s = m if s is None else s
    return Instance(A, np.zeros(n, np.int64), np.ones(n, np.int64), s, BINARY)


def gen_integer_sparse(n: int, m: int, density: float = 0.5, seed=None, s: int | None = None) -> Instance:
    """Sparse uniform(0,1) ``A`` with ``round(density*n*m)`` nonzeros, ``u`` uniform on 1..10.

    ``s`` defaults to ``round(0.75 n)``.
    """
    if not 0 < m <= n:
        raise ContractViolation(f"need 0 < m <= n, got n={n}, m={m}")
    if not 0 < density <= 1:
        raise ContractViolation(f"density must lie in (0, 1], got {density}")
    rng = np.random.default_rng(seed)
    nnz = max(m, int(round(density * n * m)))
    while True:
        A = np.zeros(n * m)
        pos = rng.choice(n * m, size=nnz, replace=False)
        A[pos] = rng.uniform(0.0, 1.0, size=nnz)
        A = A.reshape(n, m)
        if _full_rank(A):
            break
    u = rng.integers(1, 11, size=n)
    s = int(round(0.75 * n)) if s is None else s
    return Instance(A, np.zeros(n, np.int64), u, s, INTEGER)


# ---------------------------------------------------------------- file format

def write_instance(inst: Instance, path) -> None:
    """Text format: ``n m s kind`` / l / u / one row of A per line."""
    if inst.baseline is not None:
        raise ContractViolation("instances with a baseline have no file form; use with_fixed_rows first")
    lines = [f"{inst.n} {inst.m} {inst.s} {inst.kind}",
             " ".join(str(int(v)) for v in inst.l),
             " ".join(str(int(v)) for v in inst.u)]
    lines += [" ".join(f"{v:.17g}" for v in row) for row in inst.A]
    Path(path).write_text("\n".join(lines) + "\n")


def read_instance(path) -> Instance:
    raw = Path(path).read_text().splitlines()
    lines = [(i + 1, ln.split()) for i, ln in enumerate(raw) if ln.strip()]
    if not lines:
        raise ParseError("empty instance file", 1)
    lineno, head = lines[0]
    if len(head) != 4:
        raise ParseError("header must be 'n m s kind'", lineno)
    try:
        n, m, s = (int(v) for v in head[:3])
    except ValueError:
        raise ParseError("n, m and s must be integers", lineno) from None
    kind = head[3]
    if kind not in KINDS:
        raise ParseError(f"unknown kind {kind!r}", lineno)
    if len(lines) < 3 + n:
        last = lines[-1][0]
        raise ParseError(f"expected {3 + n} non-empty lines, found {len(lines)}", last + 1)

    def ints(entry):
        ln, toks = entry
        if len(toks) != n:
            raise ParseError(f"expected {n} integers, found {len(toks)}", ln)
        try:
            return [int(t) for t in toks]
        except ValueError:
            raise ParseError("bounds must be integers", ln) from None

    l = ints(lines[1])
    u = ints(lines[2])
    rows = []
    for ln, toks in lines[3:3 + n]:
        if len(toks) != m:
            raise ParseError(f"expected {m} values, found {len(toks)}", ln)
        try:
            rows.append([float(t) for t in toks])
        except ValueError:
            raise ParseError("row entries must be real numbers", ln) from None
    if len(lines) > 3 + n:
        raise ParseError("unexpected trailing content", lines[3 + n][0])
    return Instance(np.array(rows).reshape(n, m), l, u, s, kind)


def write_solution(sol: Solution, path) -> None:
    Path(path).write_text(" ".join(str(int(v)) for v in sol.x) + "\n" + f"{float(sol.objective):.17g}\n")
