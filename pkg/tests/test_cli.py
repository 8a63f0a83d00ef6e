"""CLI harness: exit codes, output files, run metadata."""

import json

import pytest

from fracstep.cli import EXIT_AUDIT, EXIT_CONFIG, EXIT_OK, main


def _write_cfg(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def _meta(outdir):
    with open(outdir / "run_meta.json") as fh:
        return json.load(fh)


def test_missing_config_file(tmp_path, capsys):
    code = main(["rstar", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")])
    assert code == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_invalid_json(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text("{not json")
    code = main(["rstar", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert code == EXIT_CONFIG
    assert "not valid JSON" in capsys.readouterr().err


def test_missing_required_key(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, "cfg.json", {"seed": 1})
    code = main(["rstar", "--config", cfg, "--out", str(tmp_path / "o")])
    assert code == EXIT_CONFIG
    assert "alphas" in capsys.readouterr().err


def test_negative_seed_rejected(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, "cfg.json", {"alphas": [0.5]})
    code = main(["rstar", "--config", cfg, "--out", str(tmp_path / "o"), "--seed", "-3"])
    assert code == EXIT_CONFIG


def test_config_root_must_be_object(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("[1, 2]")
    assert main(["rstar", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_rstar_happy_path(tmp_path):
    cfg = _write_cfg(tmp_path, "cfg.json", {"alphas": [0.1, 0.5, 0.9]})
    out = tmp_path / "out"
    code = main(["rstar", "--config", cfg, "--out", str(out)])
    assert code == EXIT_OK
    assert (out / "rstar.csv").exists()
    meta = _meta(out)
    assert meta["subcommand"] == "rstar"
    assert len(meta["config_sha256"]) == 64
    assert meta["files"] == ["rstar.csv"]
    assert meta["rows"] == 3
    assert meta["worst_residual"] < 1e-11


def test_kernels_happy_path_with_seed_override(tmp_path, capsys):
    cfg = _write_cfg(
        tmp_path, "cfg.json",
        {"alphas": [0.4], "num_meshes": 2, "n_max": 5, "dgs_histories": 3, "seed": 1},
    )
    out = tmp_path / "out"
    code = main(["kernels", "--config", cfg, "--out", str(out), "--seed", "7"])
    assert code == EXIT_OK
    assert "0 violations" in capsys.readouterr().out
    meta = _meta(out)
    assert meta["seed"] == 7          # CLI flag wins over the config value
    assert meta["violations"] == 0
    assert meta["dgs_worst_residual"] < 1e-11
    assert (out / "kernel_audit.csv").exists()


def test_coarsen_strict_tiny(tmp_path):
    # enforce_cap in the config gives the strict hypotheses without the
    # fixed --quick profile (which pins T = 5, M = 64 and is too slow here)
    cfg = _write_cfg(
        tmp_path, "cfg.json",
        {"alpha": 0.7, "T": 0.5, "M": 16, "epsilon": 0.3, "tau_max": 0.05,
         "enforce_cap": True, "snapshot_times": [0.5], "seed": 3},
    )
    out = tmp_path / "out"
    code = main(["coarsen", "--config", cfg, "--out", str(out)])
    assert code == EXIT_OK
    meta = _meta(out)
    assert meta["dissipation_violations"] == 0
    assert meta["all_steps_cap_compliant"] is True
    assert meta["max_sup_norm"] <= 1.0 + 1e-10
    assert (out / "energy.csv").exists() and (out / "mesh.csv").exists()


def test_accuracy_tiny(tmp_path, capsys):
    cfg = _write_cfg(
        tmp_path, "cfg.json",
        {"alpha": 0.5, "sigma": 2.0, "gammas": [1.0], "Ns": [4, 8], "M": 8,
         "T": 0.5, "spatial_check": False, "seed": 0},
    )
    out = tmp_path / "out"
    code = main(["accuracy", "--config", cfg, "--out", str(out)])
    assert code == EXIT_OK
    assert "fitted order" in capsys.readouterr().out
    assert (out / "accuracy.csv").exists()
    meta = _meta(out)
    assert "1" in meta["orders"]
    assert meta["row_failures"] == []


def test_accuracy_quick_drops_finest_level(tmp_path):
    cfg = _write_cfg(
        tmp_path, "cfg.json",
        {"alpha": 0.5, "sigma": 2.0, "gammas": [1.0], "Ns": [4, 8, 16], "M": 8,
         "T": 0.5, "spatial_check": False},
    )
    out = tmp_path / "out"
    code = main(["accuracy", "--config", cfg, "--out", str(out), "--quick"])
    assert code == EXIT_OK
    import csv

    with open(out / "accuracy.csv", newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    assert [int(r[1]) for r in rows] == [4, 8]


def test_unknown_subcommand_rejected(tmp_path):
    with pytest.raises(SystemExit):
        main(["frobnicate", "--config", "x.json", "--out", str(tmp_path)])
