import csv
import io
import json
import math

import numpy as np
import pytest

from lazyclock.cli import LAW_IDS, main


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_cdf_poisson_atom(capsys):
    code, out, _ = run(["cdf", "--law", "poisson-lazy", "--lambda", "1", "--t", "2", "--grid", "0:2:201"], capsys)
    assert code == 0
    r = rows(out)
    assert r[0] == ["x", "cdf", "atom"]
    assert len(r) == 202
    assert abs(float(r[1][1]) - math.exp(-2)) < 1e-12
    assert abs(float(r[1][2]) - 0.135335) < 1e-6
    assert float(r[-1][1]) == 1.0
    assert out.endswith("\r\n")


@pytest.mark.parametrize("law", LAW_IDS)
def test_cdf_every_law_monotone(law, capsys):
    lo, hi = {"gamma-diff": (-3, 3), "g0diff": (-1, 1), "skellam": (-6, 6)}.get(law, (0, 1))
    code, out, _ = run(["cdf", "--law", law, "--grid", f"{lo}:{hi}:41"], capsys)
    assert code == 0
    F = np.array([float(x[1]) for x in rows(out)[1:]])
    assert np.all(np.diff(F) >= -1e-12) and np.all((F >= 0) & (F <= 1 + 1e-12))


def test_moments(capsys):
    code, out, _ = run(["moments", "--law", "arcsine", "--t", "2", "--k", "2"], capsys)
    assert code == 0
    r = rows(out)
    assert r[0] == ["k", "moment"]
    assert float(r[1][1]) == pytest.approx(1.0) and float(r[2][1]) == pytest.approx(1.5)


def test_sample_clock_csv_and_json(capsys, tmp_path):
    code, out, _ = run(["sample-clock", "--model", "poisson", "--n-paths", "3", "--points", "11", "--seed", "1"], capsys)
    assert code == 0
    r = rows(out)
    assert r[0] == ["t", "path0", "path1", "path2"] and len(r) == 12
    for row in r[1:]:
        t = float(row[0])
        assert all(float(v) <= t for v in row[1:])
    f = tmp_path / "c.json"
    assert main(["sample-clock", "--model", "brownian", "--horizon", "1", "--steps", "100", "--n-paths", "2",
                 "--format", "json", "--out", str(f), "--seed", "1"]) == 0
    d = json.loads(f.read_text())
    assert d["horizon"] == 1.0 and len(d["sync_times"]) == 2


def test_sample_clock_bessel(capsys):
    code, out, _ = run(["sample-clock", "--model", "bessel-marginal", "--nu", "-0.3", "--horizon", "2",
                        "--n-paths", "5", "--format", "json"], capsys)
    assert code == 0
    s = json.loads(out)["samples"]
    assert len(s) == 5 and all(0 < v < 2 for v in s)


@pytest.mark.parametrize("model", ["phi-lazy", "skellam", "gammadiff", "g0diff", "step", "correlated"])
def test_sample_path_models(model, capsys):
    code, out, _ = run(["sample-path", "--model", model, "--horizon", "1", "--steps", "200", "--n-paths", "2",
                        "--points", "21", "--seed", "4"], capsys)
    assert code == 0
    r = rows(out)
    assert r[0][0] == "t" and len(r) == 22 and len(r[1]) == 3


def test_phi_lazy_range(capsys):
    code, out, _ = run(["sample-path", "--model", "phi-lazy", "--n-paths", "5", "--horizon", "15"], capsys)
    v = np.array([[float(x) for x in row[1:]] for row in rows(out)[1:]])
    assert np.all((v > 0) & (v < 1))


def test_determinism_and_env_seed(capsys, tmp_path, monkeypatch):
    argv = ["sample-path", "--model", "phi-lazy", "--n-paths", "3", "--seed", "9"]
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    assert main(argv + ["--out", str(a)]) == 0
    assert main(argv + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    monkeypatch.setenv("LAZYCLOCK_SEED", "9")
    c = tmp_path / "c.csv"
    assert main(argv[:-2] + ["--out", str(c)]) == 0
    assert c.read_bytes() == a.read_bytes()
    monkeypatch.setenv("LAZYCLOCK_SEED", "x")
    assert main(argv[:-2]) == 2


@pytest.mark.parametrize("which", ["1a", "1b", "2a", "2b", "3a", "3b", "3c", "3d"])
def test_figures(which, capsys):
    code, out, _ = run(["figures", "--which", which, "--n-paths", "2", "--points", "31", "--seed", "0"], capsys)
    assert code == 0
    r = rows(out)
    assert len(r) == 32
    if which.startswith("3"):
        assert r[0] == ["z", "latent_t=0.5", "lazy_t=0.5", "latent_t=5", "lazy_t=5", "latent_t=40", "lazy_t=40"]
    elif which.startswith("2"):
        assert r[0] == ["t", "lazy0", "lazy1", "latent0", "latent1"]
        assert float(r[-1][0]) == 15.0
    else:
        assert float(r[-1][0]) == 5.0


def test_validate_small(capsys):
    code, out, _ = run(["validate", "--suite", "poisson-lazy-clock-law", "--n-paths", "20000", "--seed", "1"], capsys)
    assert code == 0
    reps = [json.loads(line) for line in out.splitlines()]
    assert reps and all(r["passed"] for r in reps)
    assert {"scenario", "statistic", "threshold", "passed", "n", "seed"} <= set(reps[0])


def test_validate_failure_exit(capsys, monkeypatch):
    from lazyclock import harness
    fake = lambda ctx: [harness.ValidationReport("fake", "c", "z", 5.0, 3.0, 1, ctx.seed)]
    monkeypatch.setitem(harness.SCENARIOS, "fake", fake)
    code, out, _ = run(["validate", "--suite", "fake"], capsys)
    assert code == 1 and json.loads(out)["passed"] is False


@pytest.mark.parametrize("argv", [
    [],
    ["nope"],
    ["validate", "--suite", "unknown-suite"],
    ["cdf", "--law", "arcsine", "--grid", "bad"],
    ["cdf", "--law", "arcsine", "--t", "-1", "--grid", "0:1:5"],
    ["sample-clock", "--model", "poisson", "--lambda", "-1"],
    ["sample-clock", "--model", "poisson", "--n-paths", "0"],
])
def test_usage_errors(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == 2 and "error" in err
