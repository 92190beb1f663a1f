import json
import subprocess
import sys

import numpy as np
import pytest

from stochsurr.errors import StochsurrError
from stochsurr.pipelines import RunConfig, run_pipeline
from stochsurr.store import ResultStore

SMALL_DESIGN = {"design.sites": 8, "design.reps": 6, "design.iters": 100}


def base_cfg(tmp_path, name, **kw):
    values = {"pipeline": name, "seed": 5, "out": str(tmp_path / name)}
    values.update(SMALL_DESIGN)
    values.update(kw)
    return RunConfig.from_dict(values)


def read_csv(path):
    lines = path.read_text().strip().splitlines()
    return lines[0].split(","), [line.split(",") for line in lines[1:]]


def test_missing_fields_are_listed():
    with pytest.raises(ValueError) as err:
        RunConfig.from_dict({"pipeline": "fit"})
    assert "seed" in str(err.value) and "out" in str(err.value)


def test_unknown_pipeline_rejected(tmp_path):
    cfg = base_cfg(tmp_path, "fit")
    cfg.values["pipeline"] = "nope"
    with pytest.raises(ValueError):
        run_pipeline(cfg)


def test_fit_pipeline_outputs_and_manifest(tmp_path):
    cfg = base_cfg(tmp_path, "fit", surrogate="hom", testbed="ocean2d")
    store = run_pipeline(cfg)
    assert store.path("models", "model.json").exists()
    assert store.path("datasets", "runs.csv").exists()
    header, rows = read_csv(store.path("metrics", "predictions.csv"))
    assert header == ["x1", "x2", "mean", "var_mean", "var_y"]
    assert len(rows) > 10
    assert store.verify() == []  # manifest matches content
    # tampering is detected
    with open(store.path("metrics", "predictions.csv"), "a") as fh:
        fh.write("tampered\n")
    assert store.verify() != []


def test_fit_pipeline_failure_marker(tmp_path):
    cfg = base_cfg(tmp_path, "fit", surrogate="bogus")
    with pytest.raises(StochsurrError):
        run_pipeline(cfg)
    assert (cfg.out / "FAILED").exists()
    assert "bogus" in (cfg.out / "FAILED").read_text()


def test_design_pipeline_plans(tmp_path):
    cfg = base_cfg(tmp_path, "design", **{"design.kind": "maximin"})
    store = run_pipeline(cfg)
    header, rows = read_csv(store.path("designs", "plan.csv"))
    assert len(rows) == 8
    cfg2 = base_cfg(tmp_path / "б", "design",
                    **{"design.kind": "sequential", "budget": 4,
                       "design.sites": 5, "surrogate": "het",
                       "refit_every": 0, "candidates": 30})
    store2 = run_pipeline(cfg2)
    _, trace_rows = read_csv(store2.path("designs", "imspe_trace.csv"))
    assert len(trace_rows) == 4
    vals = [float(r[1]) for r in trace_rows]
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


def test_testbed_pipeline_runs_csv(tmp_path):
    cfg = base_cfg(tmp_path, "testbed", testbed="fish",
                   inputs=[500.0], reps=3)
    store = run_pipeline(cfg)
    header, rows = read_csv(store.path("datasets", "runs.csv"))
    assert header == ["x1", "rep", "y"]
    assert len(rows) == 3
    assert all(0 <= float(r[2]) <= 100 for r in rows)


def test_predict_pipeline_round_trip(tmp_path):
    fit_cfg = base_cfg(tmp_path, "fit", surrogate="hom", testbed="ocean2d")
    fit_store = run_pipeline(fit_cfg)
    pred_cfg = base_cfg(tmp_path, "predict",
                        model=str(fit_store.path("models", "model.json")))
    store = run_pipeline(pred_cfg)
    header, rows = read_csv(store.path("metrics", "predictions.csv"))
    assert len(rows) == 8  # defaults to the training sites


def test_abc_pipeline_small(tmp_path):
    cfg = base_cfg(tmp_path, "abc", **{"abc.draws": 40, "abc.tolerance": 30.0,
                                       "testbed": "fish"})
    store = run_pipeline(cfg)
    header, rows = read_csv(store.path("metrics", "abc.csv"))
    assert header == ["n_draws", "accepted", "rate"]
    assert int(rows[0][0]) == 40


def test_hm_pipeline_small(tmp_path):
    cfg = base_cfg(tmp_path, "hm", **{"hm.waves": 2, "hm.candidates": 200,
                                      "hm.sigma_md2": 0.5, "hm.sigma_eps2": 0.5,
                                      "design.sites": 6, "design.reps": 8,
                                      "surrogate": "hom"})
    store = run_pipeline(cfg)
    header, rows = read_csv(store.path("metrics", "hm.csv"))
    assert header[0] == "wave"
    assert 1 <= len(rows) <= 2


def test_compare_pipeline_two_repetitions(tmp_path):
    cfg = base_cfg(tmp_path, "compare",
                   repetitions=2, methods="hom",
                   **{"truth.sites": 30, "truth.reps": 20,
                      "design.sites": 6, "design.reps": 5})
    store = run_pipeline(cfg)
    header, rows = read_csv(store.path("metrics", "comparison.csv"))
    assert len(rows) == 2  # 2 repetitions x 1 method
    _, summary = read_csv(store.path("metrics", "summary.csv"))
    assert len(summary) == 2  # rmse + score rows


def test_compare_identical_seeds_identical_rows(tmp_path):
    rows = []
    for sub in ("a", "b"):
        cfg = base_cfg(tmp_path / sub, "compare",
                       repetitions=2, methods="hom",
                       **{"truth.sites": 20, "truth.reps": 10,
                          "design.sites": 5, "design.reps": 5})
        store = run_pipeline(cfg)
        rows.append((store.path("metrics", "comparison.csv")).read_text())
    assert rows[0] == rows[1]


def test_figure_recipe_validates_name(tmp_path):
    cfg = base_cfg(tmp_path, "figure-recipe", recipe="nope")
    with pytest.raises(StochsurrError):
        run_pipeline(cfg)


def test_cli_end_to_end(tmp_path):
    out = tmp_path / "cli_fit"
    cmd = [sys.executable, "-m", "stochsurr.cli", "fit",
           "--testbed", "ocean2d", "--surrogate", "hom",
           "--seed", "3", "--out", str(out),
           "--opt", "design.sites=6", "--opt", "design.reps=4",
           "--opt", "design.iters=50"]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (out / "manifest.json").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["tool_version"]
    # missing seed is an error with a clear message
    proc2 = subprocess.run([sys.executable, "-m", "stochsurr.cli", "fit",
                            "--out", str(tmp_path / "x")],
                           capture_output=True, text=True)
    assert proc2.returncode == 1
    assert "seed" in proc2.stderr


def test_cli_config_file_with_flag_override(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("pipeline = fit\nseed = 9\nout = " + str(tmp_path / "o1")
                        + "\ntestbed = ocean2d\nsurrogate = hom\n"
                        + "design.sites = 5\ndesign.reps = 4\ndesign.iters = 40\n")
    proc = subprocess.run([sys.executable, "-m", "stochsurr.cli", "fit",
                           "--config", str(cfg_file),
                           "--out", str(tmp_path / "o2")],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "o2" / "manifest.json").exists()
    assert not (tmp_path / "o1").exists()  # the flag override won
