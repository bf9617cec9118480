import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from adlab import __version__
from adlab.cli import main
from adlab.model import PerturbationModel, direct_sum_model, direct_sum_parts
from adlab.modelfile import load_model, model_hash, model_to_dict, save_model
from adlab.model import spectral_matrix_measure
from adlab.measures import trace_measure


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def files(tmp_path):
    f = {k: tmp_path / f"{k}.json" for k in ("rand", "r1", "ds", "bs", "nc", "triv")}
    assert run("model-gen", "--kind", "random", "--n", 6, "--d", 2, "--seed", 3, "--out", f["rand"]) == 0
    assert run("model-gen", "--kind", "rank-one", "--n", 4, "--seed", 1, "--out", f["r1"]) == 0
    assert run("model-gen", "--kind", "direct-sum", "--base-dim", 3, "--copies", 2, "--out", f["ds"]) == 0
    assert run("model-gen", "--kind", "block-swap", "--seed", 5, "--out", f["bs"]) == 0
    assert run("model-gen", "--kind", "noncyclic-control", "--out", f["nc"]) == 0
    save_model(f["triv"], PerturbationModel(np.zeros((1, 1)), np.ones((1, 1))))
    return f


def test_model_gen_deterministic(tmp_path, files):
    again = tmp_path / "again.json"
    run("model-gen", "--kind", "random", "--n", 6, "--d", 2, "--seed", 3, "--out", again)
    assert again.read_bytes() == files["rand"].read_bytes()
    doc = json.loads(files["rand"].read_text())
    assert set(doc) == {"n", "d", "A_re", "A_im", "B_re", "B_im", "label"}


def test_model_gen_kinds(files):
    m, ctl, _ = load_model(files["r1"])
    assert m.d == 1 and m.n == 4 and ctl is None
    ds, _, _ = load_model(files["ds"])
    ref = direct_sum_model(3, 2, 0)
    assert np.array_equal(ds.A, ref.A) and np.array_equal(ds.B, ref.B)
    nc, ctl, _ = load_model(files["nc"])
    assert ctl is not None and not nc.cyclic


def test_model_gen_bad_params(tmp_path):
    assert run("model-gen", "--kind", "random", "--n", 2, "--d", 5, "--out", tmp_path / "x.json") == 2
    assert run("model-gen", "--kind", "direct-sum", "--copies", 1, "--out", tmp_path / "x.json") == 2
    with pytest.raises(SystemExit) as exc:
        run("model-gen", "--kind", "nonsense")
    assert exc.value.code == 2


def test_load_rejects_noncyclic(tmp_path):
    bad = PerturbationModel(np.diag([0.0, 1.0]), np.array([1.0, 0.0]), require_cyclic=False)
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(model_to_dict(bad)))
    assert run("verify", path, "--suite", "resolvent") == 2
    assert run("verify", tmp_path / "missing.json", "--suite", "resolvent") == 2
    (tmp_path / "garbage.json").write_text("{not json")
    assert run("verify", tmp_path / "garbage.json", "--suite", "resolvent") == 2


@pytest.mark.parametrize("suite", ["resolvent", "carriers", "orthogonality", "a2"])
def test_verify_passes_on_generated_model(files, tmp_path, suite):
    out = tmp_path / "rep.json"
    assert run("verify", files["rand"], "--suite", suite, "--out", out) == 0
    rep = json.loads(out.read_text())
    assert rep["passed"] and rep["version"] == __version__
    assert rep["model_hash"] == model_hash(json.loads(files["rand"].read_text()))
    assert rep["tolerances"]["atom_merge"] == 1e-8
    for c in rep["checks"]:
        if "threshold" in c:
            assert c["value"] <= c["threshold"] or c["name"].startswith("a2_envelope")


def test_verify_resolvent_records_deviation(files, tmp_path):
    out = tmp_path / "rep.json"
    run("verify", files["rand"], "--suite", "resolvent", "--out", out)
    devs = [c["value"] for c in json.loads(out.read_text())["checks"] if c["name"].startswith("resolvent")]
    assert devs and max(devs) <= 1e-8


def test_verify_ad_rank_one(files):
    assert run("verify", files["r1"], "--suite", "ad-rank-one", "--out", "/dev/null") == 0
    assert run("verify", files["rand"], "--suite", "ad-rank-one", "--out", "/dev/null") == 2


def test_verify_block_swap_orthogonality(files, tmp_path):
    out = tmp_path / "o.json"
    code = run("verify", files["bs"], "--suite", "orthogonality", "--alpha", "[[0.7,0],[0,-0.7]]",
               "--n-alpha", 0, "--out", out)
    assert code == 0
    checks = json.loads(out.read_text())["checks"]
    assert len(checks) == 6 and all(c["value"] <= 1e-7 for c in checks)


def test_verify_negative_control_fails(files, tmp_path):
    out = tmp_path / "o.json"
    assert run("verify", files["nc"], "--suite", "orthogonality", "--out", out) == 1
    assert min(c["value"] for c in json.loads(out.read_text())["checks"]) >= 0.1
    assert run("verify", files["nc"], "--suite", "a2", "--out", out) == 1
    assert run("verify", files["nc"], "--suite", "resolvent", "--out", out) == 2


def test_verify_tolerance_flags(files, tmp_path):
    out = tmp_path / "rep.json"
    run("verify", files["rand"], "--suite", "resolvent", "--tol-atom-merge", 1e-7,
        "--tol-rank", 1e-10, "--out", out)
    tol = json.loads(out.read_text())["tolerances"]
    assert tol["atom_merge"] == 1e-7 and tol["rank_rel"] == 1e-10


def test_sweep_line_rank_one(files, tmp_path):
    out, table = tmp_path / "s.json", tmp_path / "s.csv"
    code = run("sweep", files["triv"], "--mode", "line", "--direction", "[[1]]",
               "--t-range", 0, 10, "--nu", '[{"x": 5, "mass": 1}]', "--csv", table, "--out", out)
    assert code == 0
    summary = json.loads(out.read_text())
    assert summary["exceptional_ts"] == [5.0]
    rows = list(csv.reader(table.open()))
    assert rows[0] == ["t", "exceptional_flag", "nearest_hit_t"]
    assert len(rows) == 65 and all(r[2] == "5" for r in rows[1:])
    assert "runtime_s" not in summary


def test_sweep_line_rejects_indefinite_direction(files):
    assert run("sweep", files["triv"], "--mode", "line", "--direction", "[[-1]]",
               "--t-range", 0, 1, "--out", "/dev/null") == 2


def test_sweep_empty_nu(files, tmp_path):
    table, out = tmp_path / "e.csv", tmp_path / "e.json"
    run("sweep", files["rand"], "--mode", "line", "--direction", "[[1,0],[0,1]]",
        "--t-range", -1, 1, "--csv", table, "--out", out)
    rows = list(csv.reader(table.open()))[1:]
    assert rows and all(r[1] == "0" for r in rows)
    assert json.loads(out.read_text())["exceptional_ts"] == []


def _slice_args(files, nu_path, table, out, extra=()):
    h = 0.01
    lo, hi = 0.5 - 16 * h, 0.5 + 15 * h
    return ["sweep", files["ds"], "--mode", "slice", "--nu", nu_path,
            "--axis", "[[1,0],[0,0]]", "--axis", "[[0,0],[0,1]]",
            "--range", lo, hi, "--range", lo, hi, "--count", 32, "--count", 32,
            "--csv", table, "--out", out, *extra]


def test_sweep_slice_union_and_determinism(files, tmp_path):
    ds, _, _ = load_model(files["ds"])
    A0, b0 = direct_sum_parts(ds, 2)
    nu = trace_measure(spectral_matrix_measure(PerturbationModel(A0, b0), [[0.5]]))
    nu_path = tmp_path / "nu.json"
    nu_path.write_text(json.dumps([{"x": float(x), "mass": float(w[0, 0].real)}
                                   for x, w in zip(nu.locations, nu.weights)]))
    t1, o1 = tmp_path / "a.csv", tmp_path / "a.json"
    t2, o2 = tmp_path / "b.csv", tmp_path / "b.json"
    assert run(*_slice_args(files, nu_path, t1, o1)) == 0
    assert run(*_slice_args(files, nu_path, t2, o2, ["--threads", 2])) == 0
    assert t1.read_bytes() == t2.read_bytes()
    assert o1.read_text().replace("b.csv", "a.csv") == o2.read_text().replace("b.csv", "a.csv")
    rows = list(csv.reader(t1.open()))
    assert rows[0] == ["u0", "u1", "exceptional_flag"]
    flags = np.array([int(r[2]) for r in rows[1:]]).reshape(32, 32)
    expect = np.zeros((32, 32), int)
    expect[16, :] = expect[:, 16] = 1
    assert np.array_equal(flags, expect)
    assert json.loads(o1.read_text())["counts"]["exceptional_nodes"] == 63
    # floats are written in round-trip form
    assert all(float(repr(float(r[0]))) == float(r[0]) for r in rows[1:])


def test_boxdim(tmp_path):
    rng = np.random.default_rng(0)
    t = rng.random(10_000)
    seg, patch, one = tmp_path / "seg.csv", tmp_path / "patch.csv", tmp_path / "one.csv"
    np.savetxt(seg, np.stack([t, t], 1), delimiter=",", header="x,y", comments="", fmt="%.17g")
    np.savetxt(patch, rng.random((10_000, 2)), delimiter=",", header="x,y", comments="", fmt="%.17g")
    one.write_text("x,y\n0.5,0.5\n")
    for path, lo, hi in [(seg, 0.9, 1.1), (patch, 1.85, 2.15), (one, -0.05, 0.05)]:
        out = tmp_path / "d.json"
        assert run("boxdim", path, "--out", out) == 0
        est = json.loads(out.read_text())
        assert lo <= est["slope"] <= hi
        assert len(est["counts"]) == len(est["scales"])
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n1,abc\n")
    assert run("boxdim", bad) == 2
    bad.write_text("x,y\n1\n")
    assert run("boxdim", bad) == 2


def test_console_script_entry_point(files):
    proc = subprocess.run([sys.executable, "-m", "adlab.cli", "verify", str(files["r1"]),
                           "--suite", "ad-rank-one"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["passed"] is True
