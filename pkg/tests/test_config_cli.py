import json
import math
import subprocess
import sys

import numpy as np
import pytest

from anisocone import cli
from anisocone.config import DEFAULTS, ConfigError, build, load
from anisocone.report import VerificationReport, merge
from anisocone.suites import SUITES, Result


# ---- configuration ----------------------------------------------------------

def test_defaults():
    cfg = build()
    assert (cfg.n, cfg.p, cfg.seed, cfg.cone.kind, cfg.norm.family) == (3, 2.0, 0, "full_space", "euclidean")
    assert cfg.tolerances == DEFAULTS["tolerances"]


def test_precedence_flags_over_file_over_defaults(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"n": 4, "seed": 5, "samples": {"norm": 10}}))
    cfg = load(str(path), {"seed": 7, "tol_scale": 2.0, "p": None})
    assert cfg.n == 4 and cfg.seed == 7 and cfg.tolerances["scale"] == 2.0
    assert cfg.samples["norm"] == 10 and cfg.samples["residual"] == DEFAULTS["samples"]["residual"]


@pytest.mark.parametrize("name,kind", [("full", "full_space"), ("half", "half_space"), ("circular", "circular"),
                                       ("orthant", "orthant")])
def test_cone_shortcuts(name, kind):
    cfg = build(overrides={"cone": name, "n": 4, "p": 2.0})
    assert cfg.cone.kind == kind and cfg.cone.n == 4


@pytest.mark.parametrize("data,match", [
    ({"p": 3, "n": 2}, "require 1<p<n"),
    ({"bogus": 1}, "config invalid"),
    ({"norm": {"family": "cubic"}}, "config invalid"),
    ({"grid": {"r_min": 2.0, "r_max": 1.0}}, "r_min < r_max"),
    ({"cone": {"kind": "circular", "half_aperture": 2.0}}, "config invalid"),
    ({"weight": {"kind": "monomial", "exponents": [1.0]}}, "config invalid"),
])
def test_invalid_configs(data, match):
    with pytest.raises(ConfigError, match=match):
        build(data)


def test_unreadable_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load(str(bad))
    with pytest.raises(ConfigError):
        load(str(tmp_path / "missing.json"))


# ---- reports ----------------------------------------------------------------

def test_report_csv_and_verdict(tmp_path):
    rep = VerificationReport("demo")
    assert not rep.passed
    rep.add(point=np.array([1.0, 2.0]), residual=1e-12, tolerance=1e-10, **{"pass": True})
    rep.add(residual=math.inf, extra="x", **{"pass": False})
    text = rep.to_csv(tmp_path / "r.csv")
    assert text.splitlines()[0] == "point,residual,tolerance,pass,check,extra"
    assert (tmp_path / "r.csv").read_text() == text
    assert not rep.passed and rep.max("residual") == math.inf
    assert json.loads(rep.to_json())["pass"] is False
    assert len(merge("both", [rep, rep]).rows) == 4


# ---- command line -------------------------------------------------------------

def test_bad_arguments_exit_two(tmp_path, capsys):
    assert cli.main(["verify-bubble", "--p", "3", "--n", "2", "--out", str(tmp_path)]) == 2
    assert "require 1<p<n" in capsys.readouterr().err


def test_verify_bubble_end_to_end(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["verify-bubble", "--n", "3", "--p", "2", "--cone", "full", "--out", str(out), "-q"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["pass"] and summary["command"] == "verify-bubble"
    assert set(summary["suites"]) == {"verify-bubble"}
    for entry in summary["suites"]["verify-bubble"]["reports"].values():
        assert (out / entry["file"]).exists()


def test_computation_failure_exits_one(tmp_path, monkeypatch):
    def boom(cfg):
        raise RuntimeError("synthetic failure")
    monkeypatch.setitem(SUITES, "verify-norm", boom)
    assert cli.run("verify-norm", None, {"out": str(tmp_path)}, quiet=True) == 1
    csv_text = (tmp_path / "reports" / "verify-norm__exception.csv").read_text()
    assert "synthetic failure" in csv_text
    assert json.loads((tmp_path / "summary.json").read_text())["pass"] is False


def test_failed_check_exits_one(tmp_path, monkeypatch):
    def failing(cfg):
        res = Result()
        rep = VerificationReport("always_fails")
        rep.add(residual=1.0, tolerance=0.0, **{"pass": False})
        res.add("always_fails", rep)
        return res
    monkeypatch.setitem(SUITES, "verify-norm", failing)
    assert cli.run("verify-norm", None, {"out": str(tmp_path)}, quiet=True) == 1


def test_repeated_runs_are_identical(tmp_path):
    for d in ("a", "b"):
        assert cli.main(["verify-norm", "--seed", "3", "--out", str(tmp_path / d), "-q"]) == 0
    a = sorted((tmp_path / "a" / "reports").iterdir())
    b = sorted((tmp_path / "b" / "reports").iterdir())
    assert [p.name for p in a] == [p.name for p in b]
    assert all(x.read_bytes() == y.read_bytes() for x, y in zip(a, b))


def test_seed_changes_samples(tmp_path):
    for s in ("1", "2"):
        cli.main(["verify-identities", "--seed", s, "--out", str(tmp_path / s), "-q"])
    f = "reports/verify-identities__differential_identity.csv"
    assert (tmp_path / "1" / f).read_text() != (tmp_path / "2" / f).read_text()


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "anisocone.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for sub in ("verify-norm", "verify-bubble", "verify-identities", "verify-sobolev", "minimize",
                "transport-check", "all"):
        assert sub in out.stdout
