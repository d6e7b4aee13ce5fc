"""Config loading, deterministic emission, exit codes, entry-point plumbing."""

import filecmp
import hashlib
import json

import jsonschema
import numpy as np
import pytest

from obslab import __version__, cli
from obslab.grid import Field, make_grid


def write_config(path, payload):
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


SMALL_UNCERTAINTY = {
    "experiment": "uncertainty",
    "grid": {"dim": 1, "half_extent": 16.0, "points_per_axis": 256},
    "parameters": {
        "radii": [0.5, 1.0],
        "thresholds": [0.5, 1.0],
        "single": {"radius": 1.0, "threshold": 1.0},
        "collapse_tolerance": 0.5,
    },
}


# --- configuration ----------------------------------------------------------

@pytest.mark.parametrize("experiment", cli.EXPERIMENTS)
def test_canned_defaults_validate(experiment):
    cfg = cli.load_config(experiment, None)
    assert cfg["experiment"] == experiment


def test_override_merges_into_defaults(tmp_path):
    path = write_config(tmp_path / "cfg.json", {
        "experiment": "uncertainty",
        "grid": {"dim": 1, "half_extent": 32.0, "points_per_axis": 256},
        "parameters": {"collapse_tolerance": 0.5},
    })
    cfg = cli.load_config("uncertainty", path)
    assert cfg["grid"]["points_per_axis"] == 256
    assert cfg["parameters"]["collapse_tolerance"] == 0.5
    # untouched leaves keep their canned values
    defaults = cli.load_config("uncertainty", None)
    assert cfg["parameters"]["radii"] == defaults["parameters"]["radii"]
    assert cfg["seed"] == defaults["seed"]


def test_schema_rejects_bad_grid(tmp_path):
    path = write_config(tmp_path / "cfg.json", {
        "experiment": "uncertainty",
        "grid": {"dim": 1, "half_extent": 16.0, "points_per_axis": 7},
    })
    with pytest.raises(jsonschema.ValidationError):
        cli.load_config("uncertainty", path)


def test_schema_rejects_unknown_parameter(tmp_path):
    path = write_config(tmp_path / "cfg.json", {
        "experiment": "uncertainty",
        "parameters": {"bogus": 1},
    })
    with pytest.raises(jsonschema.ValidationError):
        cli.load_config("uncertainty", path)


def test_experiment_name_must_match(tmp_path):
    path = write_config(tmp_path / "cfg.json", {"experiment": "control"})
    with pytest.raises(ValueError, match="subcommand"):
        cli.load_config("uncertainty", path)


# --- emission ---------------------------------------------------------------

def test_series_cells_and_endings(tmp_path):
    out = tmp_path / "s.csv"
    cli.emit_series(out, {"k": [1, 2], "flag": [True, False],
                          "x": [0.5, 1.0 / 3.0]})
    raw = out.read_bytes()
    assert raw == (b"k,flag,x\n"
                   b"1,true,0.50000000000\n"
                   b"2,false,0.333333333333\n")


def test_series_header_only_and_mismatch(tmp_path):
    out = tmp_path / "empty.csv"
    cli.emit_series(out, {"a": [], "b": []})
    assert out.read_bytes() == b"a,b\n"
    with pytest.raises(ValueError, match="length"):
        cli.emit_series(tmp_path / "bad.csv", {"a": [1], "b": []})


def test_series_nan_cell(tmp_path):
    out = tmp_path / "n.csv"
    cli.emit_series(out, {"v": [float("nan")]})
    assert out.read_text() == "v\nnan\n"


def test_field_roundtrip(tmp_path):
    g = make_grid(1, 8.0, 16)
    rng = np.random.default_rng(2)
    values = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    cli.emit_field(tmp_path / "f", Field(g, values))
    sidecar = json.loads((tmp_path / "f.json").read_text())
    assert sidecar["dtype"] == "complex64"
    assert sidecar["byte_order"] == "little"
    assert sidecar["shape"] == [16]
    assert sidecar["grid"] == {"dim": 1, "half_extent": 8.0,
                               "points_per_axis": 16}
    back = np.fromfile(tmp_path / "f.bin", dtype="<c8").reshape(16)
    np.testing.assert_allclose(back, values, rtol=1e-6, atol=1e-6)


# --- end-to-end -------------------------------------------------------------

def test_run_writes_deterministic_outputs(tmp_path):
    path = write_config(tmp_path / "cfg.json", SMALL_UNCERTAINTY)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert cli.run("uncertainty", path, str(out1)) == 0
    assert cli.run("uncertainty", path, str(out2)) == 0
    for name in ("report.json", "run_meta.json", "scan.csv"):
        assert (out1 / name).is_file()
    assert filecmp.cmp(out1 / "report.json", out2 / "report.json", shallow=False)
    assert filecmp.cmp(out1 / "scan.csv", out2 / "scan.csv", shallow=False)
    meta = json.loads((out1 / "run_meta.json").read_text())
    digest = hashlib.sha256((out1 / "report.json").read_bytes()).hexdigest()
    assert meta["report_sha256"] == digest
    report = json.loads((out1 / "report.json").read_text())
    assert report["pass"] is True
    assert report["version"] == __version__
    names = [v["name"] for v in report["verdicts"]]
    assert names == ["power_vs_dense", "norm_below_one", "monotone_scan",
                     "scaling_collapse"]
    with open(out1 / "scan.csv", encoding="utf-8") as fh:
        assert fh.readline().rstrip("\n") == "radius,threshold,norm"
        assert len(fh.readlines()) == 4


def test_failed_verdict_still_reports(tmp_path):
    cfg = json.loads(json.dumps(SMALL_UNCERTAINTY))
    # force a genuine invariant coincidence, then demand the impossible
    cfg["parameters"]["thresholds"] = [0.5, 2.0]
    cfg["parameters"]["collapse_tolerance"] = 1e-15
    path = write_config(tmp_path / "cfg.json", cfg)
    out = tmp_path / "out"
    assert cli.run("uncertainty", path, str(out)) == 2
    report = json.loads((out / "report.json").read_text())
    assert report["pass"] is False
    by_name = {v["name"]: v for v in report["verdicts"]}
    assert by_name["scaling_collapse"]["pass"] is False
    assert by_name["power_vs_dense"]["pass"] is True


def test_schema_violation_writes_nothing(tmp_path, capsys):
    cfg = json.loads(json.dumps(SMALL_UNCERTAINTY))
    cfg["grid"]["points_per_axis"] = 7
    path = write_config(tmp_path / "cfg.json", cfg)
    out = tmp_path / "out"
    assert cli.run("uncertainty", path, str(out)) == 1
    assert not out.exists()
    assert "error" in capsys.readouterr().err


def test_runner_failure_writes_nothing(tmp_path, capsys):
    path = write_config(tmp_path / "cfg.json", {
        "experiment": "minimal-velocity",
        "grid": {"dim": 1, "half_extent": 16.0, "points_per_axis": 256},
        "parameters": {
            "state": "band",
            "band": [1.0, 1.2],        # ramp cannot fit: the builder raises
            "band_ramp": 0.3,
            "energy_window": [1.0, 1.44],
            "velocity_fraction": 0.5,
            "times": {"start": 2.0, "stop": 6.0, "count": 3},
        },
    })
    out = tmp_path / "out"
    assert cli.run("minimal-velocity", path, str(out)) == 1
    assert not out.exists()
    assert "run failed" in capsys.readouterr().err


# --- entry point ------------------------------------------------------------

def test_main_version(capsys):
    assert cli.main(["--version"]) == 0
    assert capsys.readouterr().out.strip() == __version__


def test_main_without_subcommand(capsys):
    assert cli.main([]) == 1
    assert "usage" in capsys.readouterr().out


def test_main_rejects_wide_seed(tmp_path, capsys):
    assert cli.main(["uncertainty", "--seed", "-1",
                     "--out", str(tmp_path / "x")]) == 1
    assert "64 bits" in capsys.readouterr().err


def test_main_env_output_override(tmp_path, monkeypatch):
    path = write_config(tmp_path / "cfg.json", SMALL_UNCERTAINTY)
    env_dir = tmp_path / "from_env"
    monkeypatch.setenv("OBSLAB_OUT", str(env_dir))
    code = cli.main(["uncertainty", "--config", path,
                     "--out", str(tmp_path / "ignored")])
    assert code == 0
    assert (env_dir / "report.json").is_file()
    assert not (tmp_path / "ignored").exists()


def test_main_seed_override_lands_in_report(tmp_path):
    path = write_config(tmp_path / "cfg.json", SMALL_UNCERTAINTY)
    out = tmp_path / "seeded"
    code = cli.main(["uncertainty", "--config", path, "--out", str(out),
                     "--seed", "123"])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["seed"] == 123
