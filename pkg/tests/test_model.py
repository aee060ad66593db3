import math

import numpy as np
import pytest

from doptbb.bnb import brute_force_dopt, enumerate_objectives
from doptbb.errors import ContractViolation, Infeasible, ParseError
from doptbb.linalg import NEG_INFINITE
from doptbb.model import (BINARY, INTEGER, Instance, evaluate, expand_binary, gen_binary_gaussian,
                          gen_integer_sparse, read_instance, to_binary_reform, with_fixed_rows, write_instance)


def test_evaluate_examples():
    A = np.vstack([np.eye(2), [[1.0, 1.0]]])
    inst = Instance(A, [0, 0, 0], [1, 1, 1], 2, BINARY)
    assert evaluate(inst, [1, 1, 0]) == 0.0
    inst = Instance(np.array([[1.0], [2.0]]), [0, 0], [1, 1], 1, BINARY)
    assert evaluate(inst, [0, 1]) == pytest.approx(math.log(4))
    inst = Instance(np.array([[1.0, 0.0], [2.0, 0.0], [0.0, 1.0]]), [0, 0, 0], [1, 1, 1], 2, BINARY)
    assert evaluate(inst, [1, 1, 0]) is NEG_INFINITE
    with pytest.raises(Infeasible):
        evaluate(inst, [1, 1, 1])


def test_instance_validation():
    A = np.eye(2)
    with pytest.raises(ContractViolation):
        Instance(A, [0, 0], [2, 1], 2, BINARY)
    with pytest.raises(ContractViolation):
        Instance(A, [1, 1], [1, 1], 1, BINARY)


def test_binary_reform_sizes_and_baseline():
    A = np.array([[1.0, 0.0], [0.0, 1.0]])
    inst = Instance(A, [0, 0], [2, 1], 2, INTEGER)
    assert to_binary_reform(inst).instance.n == 3
    inst = Instance(A, [1, 0], [2, 1], 2, INTEGER)
    rf = to_binary_reform(inst)
    assert rf.instance.n == 2
    np.testing.assert_allclose(rf.baseline, np.outer(A[0], A[0]))


@pytest.mark.parametrize("seed", range(6))
def test_binary_reform_preserves_optimum(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((4, 2))
    u = rng.integers(1, 4, size=4)
    l = np.minimum(rng.integers(0, 2, size=4), u - 1)
    s = int(l.sum() + rng.integers(2, max(3, u.sum() - l.sum()) + 1))
    s = min(s, int(u.sum()))
    inst = Instance(A, l, u, s, INTEGER)
    rf = to_binary_reform(inst)
    opt = brute_force_dopt(inst)
    X, vals = enumerate_objectives(rf.instance)
    k = int(np.argmax(vals))
    assert vals[k] == pytest.approx(float(opt.objective), abs=1e-10)
    assert float(inst.objective(rf.lift(X[k], inst))) == pytest.approx(vals[k], abs=1e-10)


def test_expand_binary_keeps_objective():
    rng = np.random.default_rng(11)
    inst = Instance(rng.standard_normal((3, 2)), [1, 0, 0], [2, 2, 1], 3, INTEGER)
    exp, imap = expand_binary(inst)
    assert exp.n == 5 and exp.l.sum() == 1
    x = np.array([2, 0, 1])
    y = np.zeros(exp.n, np.int64)
    for i in range(3):
        y[np.flatnonzero(imap == i)[: x[i]]] = 1
    assert float(exp.objective(y)) == pytest.approx(float(inst.objective(x)))


def test_with_fixed_rows_matches_baseline():
    rng = np.random.default_rng(12)
    C = np.eye(2)
    inst = Instance(rng.standard_normal((4, 2)), [0] * 4, [1] * 4, 1, BINARY, baseline=C)
    full, n0 = with_fixed_rows(inst)
    x = np.array([0, 1, 0, 0])
    xf = np.concatenate([x, np.ones(full.n - n0, np.int64)])
    assert float(full.objective(xf)) == pytest.approx(float(inst.objective(x)))


def test_generators():
    a = gen_binary_gaussian(20, 5, 1)
    b = gen_binary_gaussian(20, 5, 1)
    assert a == b
    assert np.linalg.matrix_rank(a.A) == 5
    big = gen_binary_gaussian(2000, 5, 2)
    assert abs(big.A.mean()) < 0.05
    c = gen_integer_sparse(20, 5, 0.5, seed=3)
    assert c == gen_integer_sparse(20, 5, 0.5, seed=3)
    assert c.u.min() >= 1 and c.u.max() <= 10
    assert c.s == 15
    d = gen_integer_sparse(200, 5, 0.3, seed=4)
    assert abs(np.count_nonzero(d.A) / d.A.size - 0.3) <= 0.2 * 0.3


def test_round_trip_and_parse_errors(tmp_path):
    inst = gen_integer_sparse(9, 3, seed=5)
    p = tmp_path / "inst.txt"
    write_instance(inst, p)
    assert read_instance(p) == inst
    lines = p.read_text().splitlines()
    bad = tmp_path / "bad.txt"
    bad.write_text("\n".join(lines[:-2]) + "\n")
    with pytest.raises(ParseError):
        read_instance(bad)
    over = tmp_path / "over.txt"
    lines[1] = " ".join(["2"] * 9)
    over.write_text("\n".join(lines) + "\n")
    with pytest.raises(ContractViolation):
        read_instance(over)


def test_brute_force_small_cases():
    inst = Instance(np.array([[1.0, 0], [0, 1], [1, 1]]), [0, 0, 0], [2, 1, 1], 4, INTEGER)
    sol = brute_force_dopt(inst)
    np.testing.assert_array_equal(sol.x, inst.u)
    b = gen_binary_gaussian(8, 3, 0, s=4)
    X, vals = enumerate_objectives(b)
    assert len(X) == 70
    assert float(brute_force_dopt(b).objective) == pytest.approx(vals.max())
