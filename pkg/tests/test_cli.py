import csv
import io

import numpy as np
import pytest

from doptbb import cli
from doptbb.bnb import BnbConfig, brute_force_dopt, solve
from doptbb.fusion import bound_report, example1
from doptbb.model import BINARY, Instance, read_instance, write_instance


def _run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_generate_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    for p in (a, b):
        code, out, _ = _run(capsys, "generate", "--n", "20", "--m", "5", "--s", "5", "--kind", "binary",
                            "--seed", "1", "--out", str(p))
        assert code == 0 and "rank=5" in out
    assert a.read_bytes() == b.read_bytes()


def test_generate_integer_defaults(tmp_path, capsys):
    p = tmp_path / "i.txt"
    code, _, _ = _run(capsys, "generate", "--n", "20", "--m", "5", "--kind", "integer", "--out", str(p))
    assert code == 0
    inst = read_instance(p)
    assert inst.s == 15
    assert inst.u.min() >= 1 and inst.u.max() <= 10


def test_usage_errors(tmp_path, capsys):
    assert _run(capsys, "generate", "--n", "3", "--m", "5", "--out", str(tmp_path / "x"))[0] == 2
    assert _run(capsys, "solve", str(tmp_path / "missing.txt"))[0] == 2
    assert _run(capsys, "solve", "--bogus-flag")[0] == 2
    assert _run(capsys, "bounds", "--example", "1", "--budget", "5")[0] == 2
    assert _run(capsys)[0] == 2
    bad = tmp_path / "bad.txt"
    bad.write_text("3 2 2 binary\n0 0\n")
    assert _run(capsys, "solve", str(bad))[0] == 2


def test_solve_matches_library(tmp_path, capsys):
    p = tmp_path / "t.txt"
    _run(capsys, "generate", "--n", "9", "--m", "3", "--s", "4", "--seed", "2", "--out", str(p))
    out_csv = tmp_path / "s.csv"
    code, out, _ = _run(capsys, "solve", str(p), "--bound", "gamma", "--csv", str(out_csv))
    assert code == 0 and "optimal=true" in out
    inst = read_instance(p)
    sol_text = (tmp_path / "t.txt.sol").read_text().split("\n")
    obj = float(sol_text[1])
    assert obj == pytest.approx(float(brute_force_dopt(inst).objective), abs=1e-9)
    lib, st = solve(inst, BnbConfig(bound_kind="gamma"))
    assert obj == pytest.approx(float(lib.objective), abs=1e-12)
    row = _rows(out_csv.read_text())[0]
    assert row["nodes"] == str(st.nodes) and row["optimal"] == "true"


def test_solve_features_off_and_repeatable(tmp_path, capsys):
    p = tmp_path / "t.txt"
    _run(capsys, "generate", "--n", "10", "--m", "3", "--s", "5", "--seed", "4", "--out", str(p))
    out_csv = tmp_path / "s.csv"
    for _ in range(2):
        assert _run(capsys, "solve", str(p), "--no-vbt", "--no-ls", "--csv", str(out_csv))[0] == 0
    rows = _rows(out_csv.read_text())
    assert len(rows) == 2
    for r in rows:
        assert (r["cuts"], r["fixed"], r["lsi"]) == ("0", "0", "0")
    for r in rows:
        r.pop("time")
    assert rows[0] == rows[1]


def test_bounds_tables(capsys):
    code, out, _ = _run(capsys, "bounds", "--example", "1", "--budget", "1", "2", "3")
    assert code == 0
    rows = _rows(out)
    expect = [(2.622, 2.324, 1.946), (3.714, 4.302, 3.738), (4.205, 4.745, 4.836)]
    for r, (zn, zs, zh) in zip(rows, expect):
        assert float(r["z_natural"]) == pytest.approx(zn, abs=1e-3)
        assert float(r["z_spectral"]) == pytest.approx(zs, abs=1e-3)
        assert float(r["z_hadamard"]) == pytest.approx(zh, abs=1e-3)
    code, out, _ = _run(capsys, "bounds", "--example", "2", "--budget", "1", "--brute-force")
    assert float(_rows(out)[0]["z_opt"]) == pytest.approx(1.792, abs=1e-3)


def test_bounds_from_instance_file(tmp_path, capsys):
    fu = example1(2)
    A = np.vstack([fu.G, fu.H])
    l = np.array([0] * 5 + [1] * 3)
    inst = Instance(A, l, np.ones(8, np.int64), 5, BINARY)
    p = tmp_path / "fusion.txt"
    write_instance(inst, p)
    code, out, _ = _run(capsys, "bounds", str(p), "--budget", "2")
    assert code == 0
    lib = bound_report(fu)
    assert float(_rows(out)[0]["z_gamma"]) == pytest.approx(lib.z_gamma, abs=1e-6)
    code, out2, _ = _run(capsys, "bounds", str(p), "--p", "5", "--budget", "2")
    assert out2 == out


def test_bench_suites(tmp_path, capsys):
    code, out, _ = _run(capsys, "bench", "--suite", "ablation", "--seeds", "2", "--n", "9", "--m", "3")
    assert code == 0
    rows = _rows(out)
    assert len(rows) == 8
    assert [r["config"] for r in rows[:4]] == ["none", "vbt", "ls", "vbt+ls"]
    path = tmp_path / "dom.csv"
    code, out, _ = _run(capsys, "bench", "--suite", "dominance", "--seeds", "3", "--csv", str(path))
    assert code == 0 and path.read_text() == out
    assert all(r["violations"] == "0" for r in _rows(out))
    code, out, _ = _run(capsys, "bench", "--suite", "crossover", "--seeds", "1", "--n", "12")
    rows = _rows(out)
    assert [int(r["m"]) for r in rows] == [3, 6, 9]
    for r in rows:
        assert float(r["gamma_root_gap"]) == pytest.approx(float(r["gamma_bound"]) - float(r["incumbent"]), abs=1e-6)
