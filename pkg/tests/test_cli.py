import json

import numpy as np
import pytest

from selclust.cli import loglog_slope, main


@pytest.fixture
def toy_file(tmp_path, toy):
    p = tmp_path / "toy.csv"
    p.write_text("\n".join(repr(float(v)) for v in toy) + "\n")
    return str(p)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_path(capsys, toy_file):
    code, out, _ = run(capsys, "path", "--input", toy_file)
    assert code == 0
    d = json.loads(out)
    assert d["breakpoints"][1] == pytest.approx(1 / 6, abs=1e-12)
    assert d["breakpoints"][2] == pytest.approx(5 / 24, abs=1e-12)
    assert d["merges"][0] == {"step": 1, "lambda": d["breakpoints"][1], "left_cluster": 2,
                              "right_cluster": 4}
    assert d["n_clusters"] == [7, 6, 5, 3, 2, 1]
    code, out, _ = run(capsys, "path", "--input", toy_file, "--format", "csv")
    assert out.splitlines()[0] == "step,lambda,n_clusters"


def test_fit(capsys, toy_file, toy):
    code, out, _ = run(capsys, "fit", "--input", toy_file, "--lambda", "0.5")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "index,x,B_hat,cluster_id"
    rows = [ln.split(",") for ln in lines[1:]]
    assert sorted({float(r[2]) for r in rows}, reverse=True) == [7.5, 6.625, 4.5]
    assert [float(r[1]) for r in rows] == toy.tolist()


def test_test1d(capsys, tmp_path):
    p = tmp_path / "two.csv"
    p.write_text("1\n0\n")
    code, out, _ = run(capsys, "test1d", "--input", str(p), "--lambda", "0.1",
                       "--k1", "0", "--k2", "1")
    assert code == 0
    d = json.loads(out)
    assert d["v_minus"] == pytest.approx(0.2) and d["v_plus"] == "inf"
    assert d["pvalue"] == pytest.approx(0.9194814935826793, rel=1e-12)


def test_testnd(capsys, tmp_path):
    rng = np.random.default_rng(0)
    Y = rng.normal(size=(12, 3))
    Y[:6, 0] += 3
    p = tmp_path / "y.csv"
    p.write_text("a,b,c\n" + "\n".join(",".join(repr(float(v)) for v in row) for row in Y) + "\n")
    labels = tmp_path / "labels.csv"
    code, out, _ = run(capsys, "testnd", "--input", str(p), "--lambda", "0.05",
                       "--labels-output", str(labels))
    assert code == 0
    d = json.loads(out)
    assert 0 <= d["pvalue"] <= 1 and len(d["clustering"]) == 3
    assert d["aggregated"]["K"] == 2
    assert labels.read_text().splitlines()[0] == "row_index,label"


def test_calibrate(capsys):
    code, out, _ = run(capsys, "calibrate", "--n", "1000", "--identity")
    assert code == 0
    assert 0.002 <= float(out) <= 0.003
    code, out, _ = run(capsys, "calibrate", "--n", "50", "--B", "300", "--format", "json",
                       "--seed", "3")
    assert json.loads(out)["seed"] == 3


def test_simulate_and_determinism(capsys, tmp_path):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("# small run\nn = 20\nlambda = 0.05\nreplicates = 6\nseed = 5\n")
    argv = ("simulate", "--config", str(cfg), "--nu", "1")
    code, first, _ = run(capsys, *argv)
    assert code == 0
    _, second, _ = run(capsys, *argv)
    assert first == second
    lines = first.splitlines()
    assert lines[0].startswith("# seed=5 lambda=0.05 accepted=6")
    assert lines[1] == "seed,nu,rho,j,pair,pvalue,method,kappa_beta"
    assert len(lines) == 8


def test_oracle(capsys):
    code, out, _ = run(capsys, "oracle", "--replicates", "30")
    assert code == 0 and out.startswith("PASS checked=30 failures=0")


def test_bench(capsys):
    code, out, _ = run(capsys, "bench", "--sizes", "200", "2000", "--repeats", "1")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "engine,n,seconds"
    assert {ln.split(",")[0] for ln in lines[1:-1]} == {"heap", "naive"}
    assert lines[-1].startswith("# heap_loglog_slope=")


def test_loglog_slope():
    assert loglog_slope([10, 100, 1000], [1, 100, 10000]) == pytest.approx(2.0)


def test_exit_codes(capsys, tmp_path, toy_file):
    assert run(capsys, "path", "--input", str(tmp_path / "missing.csv"))[0] == 2
    assert run(capsys, "fit", "--input", toy_file)[0] == 2
    assert run(capsys, "nonsense")[0] == 2
    assert run(capsys, "test1d", "--input", toy_file, "--lambda", "0.1", "--k1", "0")[0] == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("1\nfoo\n")
    assert run(capsys, "path", "--input", str(bad))[0] == 2
    # one cluster at this lambda: no contrast to test
    code, _, err = run(capsys, "test1d", "--input", toy_file, "--lambda", "5")
    assert code == 1 and "UndefinedContrast" in err


def test_output_file(capsys, tmp_path, toy_file):
    out = tmp_path / "path.json"
    assert run(capsys, "path", "--input", toy_file, "--output", str(out))[0] == 0
    assert json.loads(out.read_text())["sigma"] == [2, 3, 4, 7, 6, 1, 0, 5]
