"""Command-line interface: subcommands, flags, and exit codes."""

import json

import numpy as np
import pytest

from subnyq.cli import EXIT_CONFIG, EXIT_ESTIMATION, EXIT_IO, EXIT_OK, main
from subnyq.harness import read_csv
from subnyq.siggen import load_snapshots


def scenario_json(tmp_path, **overrides):
    data = {
        "geometry": {"M": 6, "d": 0.5, "c_prop": 1.0},
        "pattern": {"L": 11, "offsets": [0, 1, 4, 6], "f_N": 1.0},
        "sources": [
            {"theta": 0.5, "f_c": 0.31},
            {"theta": -0.7, "f_c": 0.79},
        ],
        "snr_db": 20.0,
        "n_snapshots": 256,
        "rng_seed": 1,
    }
    data.update(overrides)
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(data))
    return str(path)


def sweep_json(tmp_path, variable="snr_db", values=(10.0, 20.0)):
    data = {
        "base": json.loads((tmp_path / "scenario.json").read_text()),
        "sweep_variable": variable,
        "sweep_values": list(values),
        "n_trials": 2,
        "algorithms": ["JDFSDPJ"],
        "master_seed": 5,
    }
    path = tmp_path / "sweep.json"
    path.write_text(json.dumps(data))
    return str(path)


def test_single_runs_both_algorithms(tmp_path, capsys):
    config = scenario_json(tmp_path)
    assert main(["single", "--config", config]) == EXIT_OK
    out = capsys.readouterr().out
    assert "JDFPI" in out and "JDFSDPJ" in out


def test_single_algorithm_selection(tmp_path, capsys):
    config = scenario_json(tmp_path)
    assert main(["single", "--config", config,
                 "--algorithms", "JDFSDPJ"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "JDFSDPJ" in out and "JDFPI" not in out


def test_single_seed_override_changes_nothing_but_noise(tmp_path, capsys):
    config = scenario_json(tmp_path)
    main(["single", "--config", config, "--seed", "3"])
    first = capsys.readouterr().out
    main(["single", "--config", config, "--seed", "3"])
    assert capsys.readouterr().out == first


def test_unknown_algorithm_is_config_error(tmp_path, capsys):
    config = scenario_json(tmp_path)
    assert main(["single", "--config", config,
                 "--algorithms", "NOPE"]) == EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err


def test_invalid_json_is_config_error(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert main(["single", "--config", str(path)]) == EXIT_CONFIG


def test_missing_config_file_is_io_error(tmp_path, capsys):
    missing = str(tmp_path / "nope.json")
    assert main(["single", "--config", missing]) == EXIT_IO
    assert "I/O error" in capsys.readouterr().err


def test_estimation_failure_exit_code(tmp_path, capsys):
    # a zero-amplitude noiseless source yields all-zero snapshots, on which
    # every pipeline step fails
    config = scenario_json(
        tmp_path, snr_db=None,
        sources=[{"theta": 0.5, "f_c": 0.31, "amplitude": 0.0}],
    )
    assert main(["single", "--config", config,
                 "--algorithms", "JDFPI"]) == EXIT_ESTIMATION
    assert "failed at step" in capsys.readouterr().err


def test_sweep_snr_writes_csv(tmp_path, capsys):
    scenario_json(tmp_path)
    sweep = sweep_json(tmp_path)
    out = tmp_path / "result.csv"
    assert main(["sweep-snr", "--config", sweep, "--out", str(out)]) == EXIT_OK
    rows = read_csv(out)
    assert {r.sweep_value for r in rows} == {10.0, 20.0}
    assert {r.algorithm for r in rows} == {"JDFSDPJ"}


def test_sweep_snr_stdout_when_no_out(tmp_path, capsys):
    scenario_json(tmp_path)
    sweep = sweep_json(tmp_path, values=(20.0,))
    assert main(["sweep-snr", "--config", sweep]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("sweep_var,")
    assert "JDFSDPJ" in out


def test_sweep_trials_and_algorithms_overrides(tmp_path):
    scenario_json(tmp_path)
    sweep = sweep_json(tmp_path, values=(20.0,))
    out = tmp_path / "r.csv"
    assert main(["sweep-snr", "--config", sweep, "--out", str(out),
                 "--trials", "1", "--algorithms", "JDFPI,JDFSDPJ"]) == EXIT_OK
    rows = read_csv(out)
    assert {r.algorithm for r in rows} == {"JDFPI", "JDFSDPJ"}
    assert all(r.n_trials == 1 for r in rows)


def test_sweep_k_checks_variable(tmp_path, capsys):
    scenario_json(tmp_path)
    sweep = sweep_json(tmp_path, variable="snr_db")
    assert main(["sweep-k", "--config", sweep]) == EXIT_CONFIG


def test_sweep_k_runs(tmp_path):
    scenario_json(tmp_path)
    sweep = sweep_json(tmp_path, variable="n_sources", values=(1, 2))
    out = tmp_path / "k.csv"
    assert main(["sweep-k", "--config", sweep, "--out", str(out)]) == EXIT_OK
    rows = read_csv(out)
    assert {r.sweep_value for r in rows} == {1.0, 2.0}


def test_crb_subcommand(tmp_path, capsys):
    config = scenario_json(tmp_path)
    assert main(["crb", "--config", config]) == EXIT_OK
    out = capsys.readouterr().out
    assert "phase_std(sim)" in out
    # noiseless scenarios have no bound
    noiseless = scenario_json(tmp_path, snr_db=None)
    assert main(["crb", "--config", noiseless]) == EXIT_CONFIG


def test_dump_snapshots_round_trip(tmp_path, capsys):
    config = scenario_json(tmp_path)
    out = tmp_path / "w.snyq"
    assert main(["dump-snapshots", "--config", config, "--out", str(out),
                 "--seed", "42"]) == EXIT_OK
    W, seed = load_snapshots(out)
    assert seed == 42
    assert W.shape == (6 + 4 - 1, 256)
    assert np.all(np.isfinite(W))


def test_dump_snapshots_unwritable_path_is_io_error(tmp_path, capsys):
    config = scenario_json(tmp_path)
    bad = str(tmp_path / "no_such_dir" / "w.snyq")
    assert main(["dump-snapshots", "--config", config, "--out", bad]) == EXIT_IO


def test_default_scenario_used_without_config(capsys):
    assert main(["crb"]) == EXIT_OK
    assert "freq_std" in capsys.readouterr().out
