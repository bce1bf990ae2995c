import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from dnls import pipeline, storage
from dnls.cli import main

SMALL = {"grid": {"L": 30, "M": 512}, "solver": {"t_end": 200, "per_decade": 10},
         "analysis": {"fit_window": [10, 200]}}


def _config(tmp_path, name, nonlinearity="weak_grad", data=None, **extra):
    obj = {"name": name, "nonlinearity": nonlinearity,
           "initial_data": data or [{"type": "gaussian"}], **SMALL}
    obj.update(extra)
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(obj))
    return path


@pytest.fixture
def out_root(tmp_path, monkeypatch):
    root = tmp_path / "runs"
    monkeypatch.setenv("DNLS_OUT_ROOT", str(root))
    return root


def test_simulate_weak_smoke(tmp_path, out_root):
    assert main(["simulate", "--config", str(_config(tmp_path, "weak"))]) == 0
    run = out_root / "weak"
    verdict = storage.read_json(run / "classify.json")
    assert verdict["class"] == "Weak" and verdict["c0"] == 1 and verdict["xi0"] == 0
    assert (run / "norms.csv").exists() and (run / "alpha_0000.bin").exists()
    fit = storage.read_json(run / "fit.json")
    assert fit["fits"][0]["norm"] == "L2" and 0 < fit["fits"][0]["p"] < 1
    manifest = storage.read_json(run / storage.MANIFEST)
    assert manifest["status"] == "complete" and manifest["seed"] == 0
    assert not (run / storage.FAILED).exists()
    assert storage.read_json(run / "analysis.json")["boundary_strip_max"] < 1e-10


def test_zero_mass_is_a_validation_error(tmp_path, out_root, capsys):
    inline = {"n": 1, "masses": [0], "terms": [
        {"component": 1, "factors": [[1, 0], [1, 0], [1, 1]], "coeff": [0, -1]}]}
    path = _config(tmp_path, "massless", nonlinearity=inline)
    out = tmp_path / "massless_run"
    assert main(["simulate", "--config", str(path), "--out", str(out)]) == 2
    err = capsys.readouterr().err
    assert "FAILED" in err and "nonzero" in err
    assert (out / storage.FAILED).exists()


def test_epsilon_sweep_report(tmp_path, out_root):
    data = [{"type": "gaussian", "shift": -1}, {"type": "gaussian", "shift": 1}]
    path = _config(tmp_path, "sweep", "two_component_lnss", data,
                   solver={"t_end": 20, "per_decade": 4},
                   analysis={"fit": False, "epsilon_sweep": [0.2, 0.1]})
    assert main(["simulate", "--config", str(path)]) == 0
    rep = storage.read_json(out_root / "sweep" / "epsilon_sweep.json")
    assert rep["eps"] == [0.2, 0.1] and len(rep["ratio"]) == 1
    assert rep["ratio"][0] > 1


def test_manifest_rerun_is_byte_identical(tmp_path, out_root):
    main(["simulate", "--config", str(_config(tmp_path, "det"))])
    first = out_root / "det"
    again = tmp_path / "again"
    assert main(["simulate", "--config", str(first / storage.MANIFEST), "--out", str(again)]) == 0
    assert (first / "norms.csv").read_bytes() == (again / "norms.csv").read_bytes()


def test_norms_csv_columns(tmp_path, out_root):
    data = [{"type": "gaussian", "shift": -1}, {"type": "gaussian", "shift": 1}]
    main(["simulate", "--config", str(_config(tmp_path, "pair", "two_component_lnss", data))])
    with open(out_root / "pair" / "norms.csv") as fh:
        header = next(csv.reader(fh))
    assert header == ["t", "l2_1", "l2_2", "linf_1", "linf_2", "mass_total", "mass_diff"]
    cols = storage.read_csv(out_root / "pair" / "norms.csv")
    assert np.abs(cols["mass_diff"] - cols["mass_diff"][0]).max() < 1e-10


def test_analyze_recomputes_outputs(tmp_path, out_root, capsys):
    data = [{"type": "gaussian", "shift": -1}, {"type": "gaussian", "shift": 1}]
    main(["simulate", "--config", str(_config(tmp_path, "pair", "two_component_lnss", data))])
    run = out_root / "pair"
    for name in ("m_estimate.csv", "decoupling.csv", "fit.json"):
        (run / name).unlink()
    capsys.readouterr()
    assert main(["analyze", str(run)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert "m_estimate" in summary and "decoupling_final" in summary
    cols = storage.read_csv(run / "m_estimate.csv")
    assert set(cols) == {"xi", "m_hat_largeT", "m_hat_anchored", "prediction"}
    assert (run / "decoupling.csv").exists() and (run / "fit.json").exists()


def test_report_three_runs_ordering(tmp_path, out_root, capsys):
    names = {"a0": "real_grad", "weak": "weak_grad", "aplus": "kita_dissipative"}
    paths = [str(_config(tmp_path, k, v, epsilon=0.6)) for k, v in names.items()]
    assert main(["simulate", *sum((["--config", p] for p in paths), []), "--jobs", "2"]) == 0
    dirs = [str(out_root / k) for k in names]
    capsys.readouterr()
    assert main(["report", *dirs, "--out", str(tmp_path / "rep")]) == 0
    text = capsys.readouterr().out
    assert "final L2 ordering: APlus < Weak < A0" in text
    with open(tmp_path / "rep" / "report.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["class"] for r in rows] == ["A0", "Weak", "APlus"]
    assert (tmp_path / "rep" / "report.txt").read_text() == text


def test_report_single_and_incomplete(tmp_path, out_root, capsys):
    main(["simulate", "--config", str(_config(tmp_path, "one"))])
    capsys.readouterr()
    assert main(["report", str(out_root / "one")]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 3 and "complete" in lines[2]
    empty = tmp_path / "empty"
    empty.mkdir()
    rows = pipeline.report_rows([empty])
    assert rows[0]["status"] == "incomplete"


def test_report_without_arguments_exits_2(capsys):
    assert main(["report"]) == 2
    assert "FAILED" in capsys.readouterr().err


def test_divergence_exit_code(tmp_path, out_root, capsys):
    inline = {"n": 1, "terms": [
        {"component": 1, "factors": [[1, 0], [1, 0], [1, 1]], "coeff": [0, 1]}]}
    path = _config(tmp_path, "boom", nonlinearity=inline, epsilon=3.0,
                   grid={"L": 10, "M": 64}, solver={"t_end": 50, "fixed_dt": 0.01, "per_decade": 1},
                   analysis={"classify": False})
    assert main(["simulate", "--config", str(path)]) == 3
    assert "FAILED" in capsys.readouterr().err
    run = out_root / "boom"
    assert (run / storage.FAILED).exists()
    assert storage.read_json(run / storage.MANIFEST)["status"] == "diverged"


def test_classify_command(tmp_path, capsys):
    assert main(["classify", "two_component_lnss", "--y-samples", "512", "--xi-samples", "16",
                 "--out", str(tmp_path)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["class"] is None and "class_note" in rep
    assert rep["hermitian"]["holds_on_samples"] is True
    assert storage.read_json(tmp_path / "classify.json") == rep

    assert main(["classify", "kita_dissipative", "--level", "b1", "--y-samples", "256"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["class"] == "APlus" and rep["hermitian"]["holds_on_samples"] is True
    assert rep["lifespan"]["infinite"] and rep["lifespan"]["bound"] is None


def test_lifespan_command(capsys):
    assert main(["lifespan", "weak_grad"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["sup"] == 0.0


def test_profile_command(tmp_path, capsys):
    assert main(["profile", "weak_grad", "--out", str(tmp_path), "--tau-end", "5",
                 "--dtau", "1e-3", "--records", "6"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["max_abs_error"] < 1e-8 and summary["S_upper_holds"]
    cols = storage.read_csv(tmp_path / "profile.csv")
    assert set(cols) == {"tau", "xi", "component", "modulus2", "closed_form", "abs_error"}
    assert storage.read_json(tmp_path / "s_bounds.json")["c_star_empirical"] > 0


def test_catalog_command(capsys):
    assert main(["catalog"]) == 0
    out = capsys.readouterr().out
    for name in ("kita_dissipative", "weak_grad", "cubic_conservative", "two_component_lnss"):
        assert name in out
    assert main(["catalog", "weak_grad"]) == 0
    assert json.loads(capsys.readouterr().out)["n"] == 1
    assert main(["catalog", "nope"]) == 2


def test_unknown_nonlinearity_and_usage_errors(capsys):
    assert main(["classify", "not_a_thing"]) == 2
    assert main(["bogus"]) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "dnls", "catalog"], capture_output=True, text=True)
    assert proc.returncode == 0 and "weak_grad" in proc.stdout
