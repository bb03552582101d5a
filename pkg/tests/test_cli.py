"""CLI tests: exit codes, config merging, determinism, and help snapshots."""

import os
import subprocess
import sys

import numpy as np
import pytest

from declinecast.arps import county_baseline_fit, save_params
from declinecast.cli import (
    RunConfig,
    UsageError,
    build_parser,
    load_run_config,
    load_synth_config,
    main,
)
from declinecast.dataset import county_subset, load_csv
from declinecast.neuralnet import load_model

TOP_HELP = """\
usage: declinecast [-h] command ...

Forecast shale-gas well production with transfer-trained neural networks
benchmarked against Arps decline refits.

positional arguments:
  command
    ingest      validate a production CSV and print its county histogram
    synth       generate a synthetic dataset from a config file
    forecast    forecast wells with a saved model
    benchmark   run the repeated-trial comparison and write its report
    train-source
                train and save a source model excluding one county
    transfer    train a county head on a saved source model

options:
  -h, --help    show this help message and exit
"""

BENCHMARK_HELP = """\
usage: declinecast benchmark [-h] [--data DATA] [--counties COUNTIES]
                             [--n-input N_INPUT] [--trials TRIALS]
                             [--seed SEED]
                             [--scarce-threshold SCARCE_THRESHOLD] [--out OUT]
                             [--jobs JOBS] [--cache CACHE]
                             [--learning-rate LEARNING_RATE]
                             [--batch-size BATCH_SIZE]
                             [--max-epochs MAX_EPOCHS] [--patience PATIENCE]
                             [config]

positional arguments:
  config                INI file with [run] and [train] sections (optional
                        when flags specify everything)

options:
  -h, --help            show this help message and exit
  --data DATA           production CSV path(s), comma-separated (default: from
                        config)
  --counties COUNTIES   counties to evaluate, comma-separated (default: all)
  --n-input N_INPUT     window lengths, comma-separated (default: 4,6,8,10)
  --trials TRIALS       trials per window length (default: 100)
  --seed SEED           master seed for trial derivation (default: 0)
  --scarce-threshold SCARCE_THRESHOLD
                        wells below which a county uses the source model as-
                        is; 0 disables (default: 40)
  --out OUT             report directory (default: report)
  --jobs JOBS           parallel trial workers; 0 means all processors
                        (default: 0)
  --cache CACHE         source-model cache directory; caching skips retraining
                        but diverges from uncached runs (default: disabled)
  --learning-rate LEARNING_RATE
                        Adam learning rate (default: 0.001)
  --batch-size BATCH_SIZE
                        minibatch size (default: 32)
  --max-epochs MAX_EPOCHS
                        training epoch cap (default: 200)
  --patience PATIENCE   early-stopping patience in epochs, or 'none' to
                        disable (default: 10)
"""

SYNTH_INI = """\
[synth]
months = 16
wells_per_county = 10
noise_sd = 0.05
seed = 11

[county Alpha]
qi = 500, 2000
b = 0.7, 0.9
di = 0.05, 0.15

[county Beta]
qi = 500, 2000
b = 0.7, 0.9
di = 0.05, 0.15

[county Target]
qi = 500, 2000
b = 1.3, 1.5
di = 0.05, 0.15
"""

RUN_INI = """\
[run]
data = {data}
counties = Target
n_input = 6
trials = 2
seed = 3
scarce_threshold = 4
out_dir = {out}
jobs = 1

[train]
max_epochs = 2
patience = none
batch_size = 16
"""


@pytest.fixture(scope="module")
def data_csv(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_data")
    ini = root / "synth.ini"
    ini.write_text(SYNTH_INI)
    csv = root / "data.csv"
    assert main(["synth", str(ini), str(csv)]) == 0
    return csv


# -------------------------------------------------------------------- help


def test_top_level_help_snapshot(monkeypatch, capsys):
    monkeypatch.setenv("COLUMNS", "80")
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    assert capsys.readouterr().out == TOP_HELP


def test_benchmark_help_snapshot(monkeypatch, capsys):
    monkeypatch.setenv("COLUMNS", "80")
    with pytest.raises(SystemExit) as exc:
        main(["benchmark", "--help"])
    assert exc.value.code == 0
    assert capsys.readouterr().out == BENCHMARK_HELP


def test_help_through_module_entry_point():
    env = dict(os.environ, COLUMNS="80")
    proc = subprocess.run(
        [sys.executable, "-m", "declinecast.cli", "--help"],
        capture_output=True, text=True, env=env,
    )
    assert proc.returncode == 0
    assert proc.stdout == TOP_HELP


def test_every_flag_help_mentions_its_default(monkeypatch):
    monkeypatch.setenv("COLUMNS", "200")
    parser = build_parser()
    subs = parser._subparsers._group_actions[0].choices
    for name, sub in subs.items():
        for action in sub._actions:
            if not action.option_strings or action.option_strings == ["-h", "--help"]:
                continue
            if action.required:
                continue  # required flags have no default to state
            assert "default:" in (action.help or ""), (name, action.option_strings)


# ------------------------------------------------------------------ ingest


def test_ingest_prints_counts_and_histogram(data_csv, capsys):
    assert main(["ingest", str(data_csv)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "30 wells, 16 months, 3 counties"
    assert out[1:] == ["  Alpha: 10", "  Beta: 10", "  Target: 10"]


def test_ingest_malformed_row_exits_2_with_line_number(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text(
        "Well-API,County,State,Month-1,Month-2,Month-3,Month-4,Month-5\n"
        "A1,Hill,TX,10,9,8,7,6\n"
        "A2,Hill,TX,10,9,oops,7,6\n"
    )
    assert main(["ingest", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "line 3" in err and "Month-3" in err


def test_ingest_missing_file_exits_2(tmp_path, capsys):
    assert main(["ingest", str(tmp_path / "nope.csv")]) == 2
    assert "error:" in capsys.readouterr().err


def test_unknown_subcommand_exits_1(capsys):
    assert main(["bogus"]) == 1
    assert "error:" in capsys.readouterr().err


# ------------------------------------------------------------------- synth


def test_synth_is_deterministic_per_seed(tmp_path):
    ini = tmp_path / "synth.ini"
    ini.write_text(SYNTH_INI)
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    assert main(["synth", str(ini), str(a)]) == 0
    assert main(["synth", str(ini), str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a.truth.csv").read_bytes() == (
        tmp_path / "b.truth.csv"
    ).read_bytes()
    assert main(["synth", str(ini), str(c), "--seed", "99"]) == 0
    assert a.read_bytes() != c.read_bytes()


def test_synth_zero_wells_writes_header_only(tmp_path):
    ini = tmp_path / "synth.ini"
    ini.write_text(SYNTH_INI.replace("wells_per_county = 10",
                                     "wells_per_county = 0"))
    out = tmp_path / "empty.csv"
    assert main(["synth", str(ini), str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 1
    assert lines[0].startswith("Well-API,County,State,Month-1,")
    assert (tmp_path / "empty.truth.csv").read_text().splitlines() == [
        "Well-API,Qi,b,Di"
    ]


def test_synth_rejects_unknown_config_keys(tmp_path, capsys):
    ini = tmp_path / "synth.ini"
    ini.write_text(SYNTH_INI + "\n[synth]\n", )
    ini.write_text(SYNTH_INI.replace("noise_sd = 0.05",
                                     "noise_sd = 0.05\nturbo = yes"))
    assert main(["synth", str(ini), str(tmp_path / "x.csv")]) == 1
    assert "turbo" in capsys.readouterr().err


def test_synth_requires_county_sections(tmp_path, capsys):
    ini = tmp_path / "synth.ini"
    ini.write_text("[synth]\nmonths = 16\nwells_per_county = 4\nnoise_sd = 0.05\n")
    assert main(["synth", str(ini), str(tmp_path / "x.csv")]) == 1
    assert "county" in capsys.readouterr().err


# ------------------------------------------------------------ config files


def test_load_run_config_parses_all_sections(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text(RUN_INI.format(data="d.csv", out="rep"))
    cfg = load_run_config(ini)
    assert cfg.data == ("d.csv",)
    assert cfg.counties == ("Target",)
    assert cfg.n_input == (6,)
    assert cfg.trials == 2 and cfg.seed == 3
    assert cfg.scarce_threshold == 4 and cfg.out_dir == "rep" and cfg.jobs == 1
    assert cfg.train.max_epochs == 2
    assert cfg.train.patience is None
    assert cfg.train.batch_size == 16


def test_load_run_config_rejects_unknown_keys(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[run]\nspeed = fast\n")
    with pytest.raises(UsageError, match="speed"):
        load_run_config(ini)


def test_load_run_config_missing_file(tmp_path):
    with pytest.raises(UsageError, match="not found"):
        load_run_config(tmp_path / "absent.ini")


def test_load_synth_config_wells_override(tmp_path):
    ini = tmp_path / "s.ini"
    ini.write_text(SYNTH_INI.replace("b = 1.3, 1.5", "b = 1.3, 1.5\nwells = 3"))
    cfg, seed = load_synth_config(ini)
    assert seed == 11
    assert cfg.counties["Target"].wells == 3
    assert cfg.counties["Alpha"].wells is None


def test_run_config_validates_values():
    with pytest.raises(ValueError):
        RunConfig(trials=0)
    with pytest.raises(ValueError):
        RunConfig(n_input=())
    with pytest.raises(ValueError):
        RunConfig(n_input=(0,))
    with pytest.raises(ValueError):
        RunConfig(jobs=-1)


# --------------------------------------------------------------- benchmark


def test_benchmark_writes_report_and_is_byte_identical(data_csv, tmp_path, capsys):
    ini = tmp_path / "run.ini"
    out_a, out_b = tmp_path / "rep_a", tmp_path / "rep_b"
    ini.write_text(RUN_INI.format(data=data_csv, out=out_a))
    assert main(["benchmark", str(ini)]) == 0
    captured = capsys.readouterr()
    assert "overall error reduction" in captured.out
    assert "trials done" in captured.err
    assert main(["benchmark", str(ini), "--out", str(out_b)]) == 0
    assert (out_a / "summary.csv").read_bytes() == (out_b / "summary.csv").read_bytes()
    assert (out_a / "trials.csv").read_bytes() == (out_b / "trials.csv").read_bytes()
    assert (out_a / "forecast_Target_n6.svg").exists()
    assert (out_a / "reductions_n6.svg").exists()


def test_benchmark_parallel_matches_serial_bytes(data_csv, tmp_path):
    ini = tmp_path / "run.ini"
    out_s, out_p = tmp_path / "serial", tmp_path / "parallel"
    ini.write_text(RUN_INI.format(data=data_csv, out=out_s))
    assert main(["benchmark", str(ini)]) == 0
    assert main(["benchmark", str(ini), "--out", str(out_p), "--jobs", "2"]) == 0
    assert (out_s / "summary.csv").read_bytes() == (out_p / "summary.csv").read_bytes()
    assert (out_s / "trials.csv").read_bytes() == (out_p / "trials.csv").read_bytes()


def test_benchmark_flags_override_config(data_csv, tmp_path):
    ini = tmp_path / "run.ini"
    out = tmp_path / "rep"
    ini.write_text(RUN_INI.format(data=data_csv, out=out))
    assert main(["benchmark", str(ini), "--trials", "1"]) == 0
    with open(out / "trials.csv") as fh:
        rows = fh.read().splitlines()[1:]
    assert len(rows) == 1  # one trial, one county


def test_benchmark_absent_county_fails_before_training(data_csv, tmp_path, capsys):
    out = tmp_path / "never"
    rc = main(["benchmark", "--data", str(data_csv), "--counties", "Nowhere",
               "--n-input", "6", "--trials", "1", "--out", str(out)])
    assert rc == 2
    assert "Nowhere" in capsys.readouterr().err
    assert not out.exists()


def test_benchmark_rejects_oversized_n_input(data_csv, capsys):
    rc = main(["benchmark", "--data", str(data_csv), "--n-input", "16",
               "--trials", "1"])
    assert rc == 2
    assert "16" in capsys.readouterr().err


def test_benchmark_without_data_is_usage_error(capsys):
    assert main(["benchmark"]) == 1
    assert "--data" in capsys.readouterr().err


def test_benchmark_rejects_bad_trials_flag(data_csv, capsys):
    rc = main(["benchmark", "--data", str(data_csv), "--trials", "0"])
    assert rc == 1
    assert "trials" in capsys.readouterr().err


def test_patience_flag_rejects_garbage(capsys):
    rc = main(["benchmark", "--patience", "soon"])
    assert rc == 1
    assert "patience" in capsys.readouterr().err.lower()


# ------------------------------------------- train-source / transfer / forecast


@pytest.fixture(scope="module")
def trained_models(data_csv, tmp_path_factory):
    root = tmp_path_factory.mktemp("models")
    source = root / "source.model"
    target = root / "target.model"
    rc = main(["train-source", "--data", str(data_csv), "--exclude", "Target",
               "--n-input", "6", "--out", str(source),
               "--max-epochs", "2", "--patience", "none", "--batch-size", "16"])
    assert rc == 0
    rc = main(["transfer", "--data", str(data_csv), "--county", "Target",
               "--source", str(source), "--out", str(target),
               "--max-epochs", "2", "--patience", "none", "--batch-size", "16",
               "--scarce-threshold", "4"])
    assert rc == 0
    return source, target


def test_train_source_model_loads_and_has_right_shape(trained_models, data_csv):
    source, _ = trained_models
    model = load_model(source)
    assert model.n_input == 6
    assert model.n_output == 10  # 16 months - 6 input
    assert all(layer.trainable for layer in model.layers)


def test_transfer_model_keeps_source_body(trained_models):
    source, target = trained_models
    src, tgt = load_model(source), load_model(target)
    for a, b in zip(src.layers[:-1], tgt.layers[:-1], strict=True):
        assert a.weights.tobytes() == b.weights.tobytes()
        assert a.biases.tobytes() == b.biases.tobytes()
        assert not b.trainable
    assert tgt.layers[-1].trainable


def test_train_source_absent_county_exits_2(data_csv, tmp_path, capsys):
    rc = main(["train-source", "--data", str(data_csv), "--exclude", "Nowhere",
               "--n-input", "6", "--out", str(tmp_path / "m.model")])
    assert rc == 2
    assert "Nowhere" in capsys.readouterr().err


def test_transfer_scarce_county_exits_2(trained_models, data_csv, tmp_path, capsys):
    source, _ = trained_models
    rc = main(["transfer", "--data", str(data_csv), "--county", "Target",
               "--source", str(source), "--out", str(tmp_path / "t.model"),
               "--scarce-threshold", "40"])
    assert rc == 2
    assert "scarce" in capsys.readouterr().err.lower()


def test_forecast_writes_rows_and_plot(trained_models, data_csv, tmp_path, capsys):
    _, target = trained_models
    out = tmp_path / "fc"
    rc = main(["forecast", "--model", str(target), "--data", str(data_csv),
               "--n-input", "6", "--out", str(out)])
    assert rc == 0
    lines = (out / "forecast.csv").read_text().splitlines()
    assert lines[0] == "Well-API," + ",".join(f"Month-{i}" for i in range(7, 17))
    assert len(lines) == 31  # header + 30 wells
    assert len(lines[1].split(",")) == 11
    assert (out / "forecast.svg").exists()
    assert "arps" not in (out / "forecast.svg").read_text()


def test_forecast_with_baseline_adds_comparison_columns(
    trained_models, data_csv, tmp_path
):
    _, target = trained_models
    ds = load_csv(data_csv)
    params_path = tmp_path / "baseline.params"
    save_params(county_baseline_fit(county_subset(ds, "Target")), params_path)
    out = tmp_path / "fc_cmp"
    rc = main(["forecast", "--model", str(target), "--data", str(data_csv),
               "--n-input", "6", "--baseline", str(params_path),
               "--out", str(out)])
    assert rc == 0
    lines = (out / "forecast.csv").read_text().splitlines()
    assert lines[0].endswith(",dnn_mae,arps_mae,reduction")
    assert len(lines[1].split(",")) == 14
    assert "Arps refit" in (out / "forecast.svg").read_text()


def test_forecast_wrong_n_input_exits_1(trained_models, data_csv, tmp_path, capsys):
    _, target = trained_models
    rc = main(["forecast", "--model", str(target), "--data", str(data_csv),
               "--n-input", "8", "--out", str(tmp_path / "x")])
    assert rc == 1
    assert "8" in capsys.readouterr().err


def test_forecast_month_count_mismatch_exits_2(trained_models, tmp_path, capsys):
    _, target = trained_models
    short = tmp_path / "short.csv"
    header = ["Well-API", "County", "State"] + [f"Month-{i}" for i in range(1, 13)]
    short.write_text(",".join(header) + "\n" +
                     "W1,Hill,TX," + ",".join(["5.0"] * 12) + "\n")
    rc = main(["forecast", "--model", str(target), "--data", str(short),
               "--n-input", "6", "--out", str(tmp_path / "x")])
    assert rc == 2
    assert "12" in capsys.readouterr().err


def test_forecast_corrupt_model_exits_2(data_csv, tmp_path, capsys):
    broken = tmp_path / "broken.model"
    broken.write_text("not a model\n")
    rc = main(["forecast", "--model", str(broken), "--data", str(data_csv),
               "--n-input", "6", "--out", str(tmp_path / "x")])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


# ------------------------------------------------------------------- cache


def test_cache_env_var_overrides_and_populates(data_csv, tmp_path, monkeypatch):
    cache = tmp_path / "model_cache"
    monkeypatch.setenv("DECLINECAST_CACHE", str(cache))
    out = tmp_path / "env.model"
    rc = main(["train-source", "--data", str(data_csv), "--exclude", "Target",
               "--n-input", "6", "--out", str(out),
               "--max-epochs", "2", "--patience", "none"])
    assert rc == 0
    cached = [p for p in cache.rglob("*.model")]
    assert len(cached) == 1
    assert load_model(cached[0]).n_input == 6
