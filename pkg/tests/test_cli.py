import json
import subprocess
import sys

import numpy as np
import pytest

from rkhsnet import green_from_semigroup, spectral_decompose
from rkhsnet.cli import dumps, main

GRID5 = "[0.1, 0.3, 0.5, 0.7, 0.9]"


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


def diagnostics(result):
    return {d["check_name"]: d for d in result["diagnostics"]}


@pytest.fixture
def path_file(tmp_path):
    p = tmp_path / "path.txt"
    p.write_text("a b 1\nb c 1\nc d 1\nd e 1\n")
    return str(p)


@pytest.fixture
def triangle_file(tmp_path):
    p = tmp_path / "tri.txt"
    p.write_text("# triangle\na b 1\nb c 1\nc a 1\n")
    return str(p)


def test_membership_ladder(capsys):
    code, res = run(capsys, "membership", "--kernel", "ladder:0.5", "--target", "1")
    assert code == 0
    out = res["outputs"]
    assert out["verdict"] == "converged"
    assert out["limit"] == pytest.approx(3.0, abs=1e-6)
    assert res["schema_version"] == "rkhsnet.job/1" and res["command"] == "membership"
    assert all(d["passed"] for d in res["diagnostics"])


def test_membership_bridge_points(capsys):
    code, res = run(capsys, "membership", "--kernel", "bridge", "--points", "[0.25,0.5,0.75]",
                    "--target", "0.5")
    assert code == 0
    t = np.array([0.25, 0.5, 0.75])
    K = np.minimum.outer(t, t) - np.outer(t, t)
    assert res["outputs"]["verdict"] == "converged"
    assert res["outputs"]["limit"] == pytest.approx(np.linalg.inv(K)[1, 1], rel=1e-12)


def test_membership_usage_errors(capsys):
    code, _ = run(capsys, "membership", "--kernel", "bridge", "--points", "[0.25,0.5]", "--target", "0.4")
    assert code == 2
    code, _ = run(capsys, "membership", "--kernel", "gauss", "--target", "1")
    assert code == 2
    code, _ = run(capsys, "membership", "--kernel", "ladder:1.5", "--target", "1")
    assert code == 2
    code, _ = run(capsys, "membership", "--kernel", "bm", "--target", "1")
    assert code == 2


def test_membership_domain_error_exit_1(capsys):
    code, res = run(capsys, "membership", "--kernel", "bridge", "--points", "[0.5, 1.5]", "--target", "0.5")
    assert code == 1
    assert res["error"]["code"] == "OutOfDomain"


def test_membership_edge_list_kernel(capsys, path_file):
    code, res = run(capsys, "membership", "--kernel", path_file, "--base", "a", "--target", "c")
    assert code == 0
    # interior vertex of a unit path: c(x) = 2
    assert res["outputs"]["limit"] == pytest.approx(2.0, rel=1e-12)
    code, _ = run(capsys, "membership", "--kernel", path_file, "--base", "zz", "--target", "c")
    assert code == 2


def test_membership_disk(capsys):
    pts = json.dumps([[0.0, 0.0], [0.5, 0.1], [-0.3, 0.4], [0.2, -0.6]])
    code, res = run(capsys, "membership", "--kernel", "disk2", "--points", pts, "--target", "[0.5, 0.1]")
    assert code == 0
    assert res["outputs"]["verdict"] == "converged"
    assert res["outputs"]["target"] == "(0.5, 0.1)"


def test_membership_threads_env(capsys, monkeypatch):
    _, one = run(capsys, "membership", "--kernel", "ladder:0.3", "--target", "2")
    monkeypatch.setenv("RKHS_THREADS", "4")
    _, four = run(capsys, "membership", "--kernel", "ladder:0.3", "--target", "2")
    assert one == four
    monkeypatch.setenv("RKHS_THREADS", "0")
    _, auto = run(capsys, "membership", "--kernel", "ladder:0.3", "--target", "2")
    assert auto == one
    monkeypatch.setenv("RKHS_THREADS", "many")
    code, _ = run(capsys, "membership", "--kernel", "ladder:0.3", "--target", "2")
    assert code == 2


def test_network_resistance_path_and_triangle(capsys, path_file, triangle_file):
    code, res = run(capsys, "network", "--graph", path_file, "--base", "c", "--emit", "resistance")
    assert code == 0
    idx = np.arange(5)
    np.testing.assert_allclose(res["outputs"]["resistance"], np.abs(idx[:, None] - idx), atol=1e-13)
    checks = diagnostics(res)
    assert set(checks) == {"gm1_reconstruction", "triangle_inequality", "conditionally_negative_definite"}
    assert all(c["passed"] for c in checks.values())
    code, res = run(capsys, "network", "--graph", triangle_file, "--emit", "resistance")
    R = np.array(res["outputs"]["resistance"])
    np.testing.assert_allclose(R[~np.eye(3, dtype=bool)], 2 / 3, atol=1e-12)


def test_network_other_emits(capsys, path_file):
    code, res = run(capsys, "network", "--graph", path_file, "--base", "a", "--emit", "dipoles")
    assert code == 0
    np.testing.assert_allclose(res["outputs"]["dipoles"]["c"], [0, 1, 2, 2, 2])
    code, res = run(capsys, "network", "--graph", path_file, "--base", "a", "--emit", "kernel")
    np.testing.assert_allclose(res["outputs"]["gram"], np.minimum.outer(idx := np.arange(1, 5), idx))
    code, res = run(capsys, "network", "--graph", path_file, "--base", "a", "--emit", "laplacian")
    assert code == 0 and all(d["passed"] for d in res["diagnostics"])
    assert np.array(res["outputs"]["grounded_laplacian"]).shape == (4, 4)


def test_network_errors(capsys, tmp_path, triangle_file):
    code, _ = run(capsys, "network", "--graph", triangle_file, "--base", "z", "--emit", "kernel")
    assert code == 2
    bad = tmp_path / "bad.txt"
    bad.write_text("a b 1\nc d 1\n")
    code, res = run(capsys, "network", "--graph", str(bad), "--emit", "kernel")
    assert code == 1 and res["error"]["code"] == "Disconnected"
    code, res = run(capsys, "network", "--graph", str(tmp_path / "missing.txt"), "--emit", "kernel")
    assert code == 1 and res["error"]["code"] == "IOError"
    bad.write_text("a b 1\nb c\n")
    code, res = run(capsys, "network", "--graph", str(bad), "--emit", "kernel")
    assert code == 1 and res["error"]["code"] == "ParseError"
    with pytest.raises(SystemExit) as exc:
        main(["network", "--graph", triangle_file, "--emit", "everything"])
    assert exc.value.code == 2


def test_bridge_sample(capsys, tmp_path):
    out = tmp_path / "a.csv"
    code, res = run(capsys, "bridge-sample", "--grid", GRID5, "--paths", "10000", "--seed", "42",
                    "--out", str(out))
    assert code == 0
    assert all(d["passed"] for d in res["diagnostics"])
    first = out.read_bytes()
    run(capsys, "bridge-sample", "--grid", GRID5, "--paths", "10000", "--seed", "42", "--out", str(out))
    assert out.read_bytes() == first
    rows = np.loadtxt(out, delimiter=",")
    assert rows.shape == (10001, 5)


def test_bridge_sample_errors(capsys, tmp_path):
    code, _ = run(capsys, "bridge-sample", "--grid", GRID5, "--paths", "0", "--out", str(tmp_path / "x.csv"))
    assert code == 2
    code, res = run(capsys, "bridge-sample", "--grid", GRID5, "--paths", "5",
                    "--out", str(tmp_path / "no" / "such" / "dir.csv"))
    assert code == 1 and res["error"]["code"] == "IOError"
    code, res = run(capsys, "bridge-sample", "--grid", "[0.5, 1.2]", "--paths", "5",
                    "--out", str(tmp_path / "x.csv"))
    assert code == 1 and res["error"]["code"] == "BadParameter"


def test_bridge_sample_default_seed_is_zero(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run(capsys, "bridge-sample", "--grid", GRID5, "--paths", "10", "--out", str(a))
    run(capsys, "bridge-sample", "--grid", GRID5, "--paths", "10", "--seed", "0", "--out", str(b))
    assert a.read_bytes() == b.read_bytes()


def test_heat(capsys):
    code, res = run(capsys, "heat", "--laplacian", "[[2,-1],[-1,1]]", "--check", "green")
    assert code == 0
    np.testing.assert_allclose(res["outputs"]["green"], [[1, 1], [1, 2]], atol=1e-14)
    assert all(d["passed"] for d in res["diagnostics"])
    code, res = run(capsys, "heat", "--laplacian", "[[2,-1],[-1,1]]", "--times", "[0, 0.3, 0.7]")
    assert res["outputs"]["heat_kernels"][0] == [[1, 0], [0, 1]]
    assert all(d["passed"] for d in res["diagnostics"])


def test_heat_errors(capsys):
    code, res = run(capsys, "heat", "--laplacian", "[[1,-1],[-1,1]]", "--check", "green")
    assert code == 1 and res["error"]["code"] == "NotInvertible"
    code, res = run(capsys, "heat", "--laplacian", "[[1,0.5],[0,1]]")
    assert code == 1 and res["error"]["code"] == "NotSymmetric"
    code, res = run(capsys, "heat", "--laplacian", "[[1,2],[2,1]]")
    assert code == 1 and res["error"]["code"] == "NotPositive"
    code, _ = run(capsys, "heat", "--laplacian", "[[1,2],[2,1]", "--check", "green")
    assert code == 2


def test_json_round_trip(capsys, tmp_path, triangle_file):
    # grounded Laplacian emitted by one job feeds the next with identical results
    _, res = run(capsys, "network", "--graph", triangle_file, "--base", "a", "--emit", "laplacian")
    L = res["outputs"]["grounded_laplacian"]
    f = tmp_path / "L.json"
    f.write_text(dumps(L))
    _, from_file = run(capsys, "heat", "--laplacian", str(f), "--check", "green")
    K = green_from_semigroup(spectral_decompose(np.array(L)))
    assert np.array_equal(np.array(from_file["outputs"]["green"]), K)


def test_dumps_round_trips_floats():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(100) * 10.0 ** rng.integers(-300, 300, 100)
    back = json.loads(dumps({"x": x}))["x"]
    assert np.array_equal(np.array(back), x)


def test_digest_stable_and_sensitive(capsys, triangle_file):
    _, a = run(capsys, "heat", "--laplacian", "[[2,-1],[-1,1]]")
    _, b = run(capsys, "heat", "--laplacian", "[[2,-1],[-1,1]]")
    _, c = run(capsys, "heat", "--laplacian", "[[3,-1],[-1,1]]")
    assert a["inputs_digest"] == b["inputs_digest"] != c["inputs_digest"]
    assert len(a["inputs_digest"]) == 64


def test_output_file(capsys, tmp_path):
    target = tmp_path / "job.json"
    code = main(["heat", "--laplacian", "[[1]]", "--output", str(target)])
    printed = capsys.readouterr().out
    assert code == 0 and target.read_text() == printed


def test_console_script_exit_codes(tmp_path):
    cmd = [sys.executable, "-m", "rkhsnet.cli"]
    ok = subprocess.run(cmd + ["heat", "--laplacian", "[[2]]"], capture_output=True, text=True)
    assert ok.returncode == 0 and json.loads(ok.stdout)["outputs"]["heat_kernels"] == [[[1]]]
    usage = subprocess.run(cmd + ["membership", "--kernel", "nope", "--target", "1"], capture_output=True)
    assert usage.returncode == 2
    err = subprocess.run(cmd + ["heat", "--laplacian", "[[0]]", "--check", "green"], capture_output=True)
    assert err.returncode == 1
