import csv
import json

import numpy as np
import pytest

from opmc import bench
from opmc.adaptation import NumericalTargetError
from opmc.cli import main
from opmc.metrics import squared_errors

SMALL = {
    "experiment": "custom-gaussian-mixture",
    "target": {
        "weights": [0.5, 0.5],
        "means": [[-3.0, 0.0], [3.0, 1.0]],
        "covariances": [[[1.0, 0.2], [0.2, 1.0]], [[0.5, 0.0], [0.0, 2.0]]],
        "init_box": [-6.0, 6.0],
    },
    "sampler": {"N": 6, "K": 3, "T": 4},
    "methods": [
        {"name": "LR-PMC", "algorithm": "DM_PMC", "scheme": "LR", "sigma": 1.0},
        {"name": "O-PMC-GLR", "algorithm": "OPMC", "scheme": "GLR", "period": 2, "sigma": 1.0},
    ],
    "replications": 3,
    "base_seed": 40,
}


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg, indent=2))
    return str(p)


def _rows(path):
    with open(path) as f:
        return list(csv.DictReader(f))


def _with(**changes):
    cfg = json.loads(json.dumps(SMALL))
    cfg.update(changes)
    return cfg


# --- presets ------------------------------------------------------------------


def test_thirteen_presets(capsys):
    assert main(["presets"]) == 0
    names = capsys.readouterr().out.split()
    assert len(names) == 13
    assert names[0] == "gm2d"
    assert [n for n in names if n.startswith("banana")] == [f"banana-d{d}" for d in (2, 5, 10, 15, 20, 30, 40, 50)]
    assert [n for n in names if n.startswith("spectral")] == [f"spectral-S{s}" for s in (2, 3, 4, 5)]


@pytest.mark.parametrize("name", bench.list_presets())
def test_presets_round_trip(name):
    cfg = bench.load_config(name)
    assert cfg.name == name
    assert (cfg.N, cfg.K, cfg.T) == (50, 20, 20)
    assert cfg.replications == 200


def test_presets_json_listing(capsys):
    main(["presets", "--json"])
    lines = capsys.readouterr().out.splitlines()
    assert json.loads(lines[0])["gm2d"]["sampler"]["N"] == 50


# --- validate ------------------------------------------------------------------


def test_validate_gm2d_budget(capsys):
    assert main(["validate", "gm2d"]) == 0
    out = capsys.readouterr().out
    assert "log_pi_weighting=20000" in out


@pytest.mark.parametrize(
    "mutate, field",
    [
        (lambda c: c["methods"][0].update(sigma=-1.0), "methods[0].sigma"),
        (lambda c: c["methods"][1].pop("period"), "methods[1].period"),
        (lambda c: c.update(replications=0), "config.replications"),
        (lambda c: c["sampler"].update(K=0), "sampler.K"),
        (lambda c: c["methods"][0].update(scheme="XR"), "methods[0].scheme"),
        (lambda c: c["methods"][0].update(bogus=1), "methods[0].bogus"),
        (lambda c: c.update(experiment="nope"), "experiment"),
        (lambda c: c["methods"][1].update(algorithm="DM_PMC"), "methods[1]"),
        (lambda c: c["target"].update(weights=[0.3, 0.3]), "target"),
        (lambda c: c["methods"].append(dict(c["methods"][0])), "methods"),
    ],
)
def test_validate_rejects_with_field_name(tmp_path, capsys, mutate, field):
    cfg = _with()
    mutate(cfg)
    assert main(["validate", _write(tmp_path, cfg)]) == 1
    err = capsys.readouterr().err
    assert f"{field}:" in err or f"{field}." in err


def test_json_syntax_error_is_line_anchored(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "experiment": "gm2d",\n  "methods": [,]\n}\n')
    assert main(["validate", str(p)]) == 1
    assert f"{p}:3:" in capsys.readouterr().err


def test_missing_file(capsys):
    assert main(["validate", "/nonexistent/cfg.json"]) == 1
    assert "cannot read" in capsys.readouterr().err


def test_cli_override_validation(capsys):
    assert main(["validate", "gm2d", "--replications", "0"]) == 1
    assert "--replications" in capsys.readouterr().err


# --- run -------------------------------------------------------------------------


def test_run_writes_outputs(tmp_path):
    cfg = _with(outputs={"trace": "trace.csv"})
    out = tmp_path / "out"
    assert main(["run", _write(tmp_path, cfg), "--out-dir", str(out)]) == 0
    summary = _rows(out / "summary.csv")
    assert list(summary[0]) == list(bench.SUMMARY_COLUMNS)
    assert {(r["method"], r["quantity"]) for r in summary} == {
        (m, q) for m in ("LR-PMC", "O-PMC-GLR") for q in ("Z", "MEAN", "SECOND_MOMENT")
    }
    runs = _rows(out / "runs.csv")
    assert [(r["method"], r["run"], r["seed"]) for r in runs] == [
        (m, str(r), str(40 + r)) for m in ("LR-PMC", "O-PMC-GLR") for r in range(3)
    ]
    assert "wall_time" not in runs[0]
    assert len(_rows(out / "timing.csv")) == 6
    trace = _rows(out / "trace.csv")
    assert len(trace) == 6 * 4
    assert len(_rows(out / "trace_median.csv")) == 2 * 4
    js = json.loads((out / "summary.json").read_text())
    assert len(js["rows"]) == len(summary)
    assert js["budget"]["LR-PMC"]["log_pi_weighting"] == 6 * 3 * 4


def test_single_run_summary_equals_squared_error(tmp_path):
    out = tmp_path / "out"
    main(["run", _write(tmp_path, _with(replications=1)), "--out-dir", str(out)])
    cfg = bench.load_config(str(tmp_path / "cfg.json"))
    truth = bench.ground_truth(cfg)["MEAN"]
    run = _rows(out / "runs.csv")[0]
    est = np.array([float(run["mean_0"]), float(run["mean_1"])])
    row = next(r for r in _rows(out / "summary.csv") if r["quantity"] == "MEAN" and r["method"] == run["method"])
    assert float(row["median_se"]) == pytest.approx(squared_errors([est], truth)[0], rel=1e-12)


def test_rerun_and_worker_count_are_byte_identical(tmp_path):
    path = _write(tmp_path, _with())
    main(["run", path, "--out-dir", str(tmp_path / "a")])
    main(["run", path, "--out-dir", str(tmp_path / "b")])
    main(["run", path, "--out-dir", str(tmp_path / "c"), "--workers", "2"])
    a = (tmp_path / "a" / "runs.csv").read_bytes()
    assert a == (tmp_path / "b" / "runs.csv").read_bytes() == (tmp_path / "c" / "runs.csv").read_bytes()
    assert (tmp_path / "a" / "summary.csv").read_bytes() == (tmp_path / "c" / "summary.csv").read_bytes()


def test_seed_override(tmp_path):
    main(["run", _write(tmp_path, _with(replications=2)), "--seed", "7", "--out-dir", str(tmp_path / "o")])
    assert [r["seed"] for r in _rows(tmp_path / "o" / "runs.csv")][:2] == ["7", "8"]


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(bench.OUT_DIR_ENV, str(tmp_path / "env"))
    cfg = _with(replications=1, name="small")
    assert main(["run", _write(tmp_path, cfg)]) == 0
    assert (tmp_path / "env" / "small" / "runs.csv").exists()


def _failing_run_pmc(fail_runs):
    real = bench.run_pmc

    def fake(target, cfg, rng):
        if fail_runs is None or rng.seed in fail_runs:
            raise NumericalTargetError("boom", np.zeros(2))
        return real(target, cfg, rng)

    return fake


def test_failed_runs_are_reported(tmp_path, monkeypatch):
    monkeypatch.setattr(bench, "run_pmc", _failing_run_pmc({41}))
    out = tmp_path / "o"
    assert main(["run", _write(tmp_path, _with()), "--out-dir", str(out)]) == 0
    runs = _rows(out / "runs.csv")
    failed = [r for r in runs if r["status"] == "failed"]
    assert len(failed) == 2 and all("boom" in r["error"] for r in failed)
    assert all(r["runs"] == "2" and r["failed"] == "1" for r in _rows(out / "summary.csv"))


def test_all_failed_exit_code(tmp_path, monkeypatch):
    monkeypatch.setattr(bench, "run_pmc", _failing_run_pmc(None))
    assert main(["run", _write(tmp_path, _with()), "--out-dir", str(tmp_path / "o")]) == 2
    rows = _rows(tmp_path / "o" / "summary.csv")
    assert all(r["runs"] == "0" and r["failed"] == "3" for r in rows)


def test_spectral_experiment_reports_reconstruction(tmp_path):
    cfg = {
        "experiment": "spectral",
        "target": {"S": 2},
        "sampler": {"N": 5, "K": 3, "T": 4},
        "methods": [{"name": "O-PMC-LR", "algorithm": "OPMC", "scheme": "LR", "sigma": 0.01}],
        "replications": 2,
    }
    out = tmp_path / "o"
    assert main(["run", _write(tmp_path, cfg), "--out-dir", str(out)]) == 0
    quantities = [r["quantity"] for r in _rows(out / "summary.csv")]
    assert quantities == ["MEAN", "RECONSTRUCTION"]
    assert "reconstruction_mse" in _rows(out / "runs.csv")[0]


def test_spectral_methods_share_data():
    cfg = bench.config_from_dict(
        {
            "experiment": "spectral",
            "target": {"S": 2},
            "methods": [{"name": "a", "algorithm": "DM_PMC", "scheme": "LR", "sigma": 0.1}],
        }
    )
    from opmc.linalg import SeededRng

    y1 = bench.build_target(cfg, SeededRng(5)).y
    y2 = bench.build_target(cfg, SeededRng(5)).y
    y3 = bench.build_target(cfg, SeededRng(6)).y
    np.testing.assert_array_equal(y1, y2)
    assert not np.array_equal(y1, y3)
