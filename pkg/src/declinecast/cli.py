"""Command-line entry point for dataset work, model training, and benchmarks.

Subcommands: ingest, synth, forecast, benchmark, train-source, transfer.
Runs are driven by an INI-style configuration file whose values individual
flags override. Progress and status go to stderr; stdout carries only the
headline numbers, and machine-readable results go to files.

Exit codes: 0 success, 1 usage error, 2 data validation error, 3 numerical
failure (an Arps fit that stays unusable past the retry policy).
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from dataclasses import dataclass, field, replace

import numpy as np

from declinecast.arps import FitError, arps_forecast, load_params
from declinecast.dataset import (
    CountyRanges,
    DataError,
    Dataset,
    SynthConfig,
    county_counts,
    county_subset,
    load_csv,
    make_dataset,
    synth_generate,
    write_csv,
    write_truth_csv,
)
from declinecast.evaluate import emit_report, fit_test_well, run_trials, well_mae
from declinecast.neuralnet import (
    ModelFormatError,
    TrainConfig,
    load_model,
    parameter_count,
    predict,
    save_model,
)
from declinecast.plots import forecast_svg
from declinecast.transfer import (
    default_cache_key,
    derive_target,
    train_source,
    train_target,
)


class UsageError(Exception):
    """Bad flags or configuration values; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@dataclass(frozen=True)
class RunConfig:
    """Benchmark settings merged from the config file and flag overrides."""

    data: tuple[str, ...] = ()
    counties: tuple[str, ...] = ()  # empty means every county in the data
    n_input: tuple[int, ...] = (4, 6, 8, 10)
    trials: int = 100
    seed: int = 0
    scarce_threshold: int = 40
    out_dir: str = "report"
    jobs: int = 0  # 0 means all available processors
    cache_dir: str | None = None
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.n_input or any(n < 1 for n in self.n_input):
            raise ValueError("n_input needs at least one window length >= 1")
        if self.jobs < 0:
            raise ValueError("jobs must be >= 0")


def _split_list(text):
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _as_int(section, key, text):
    try:
        return int(text)
    except ValueError:
        raise UsageError(f"[{section}] {key}: expected an integer, got {text!r}")


def _as_float(section, key, text):
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"[{section}] {key}: expected a number, got {text!r}")


def _as_pair(section, key, text):
    parts = _split_list(text)
    if len(parts) != 2:
        raise UsageError(f"[{section}] {key}: expected 'low, high', got {text!r}")
    return tuple(_as_float(section, key, p) for p in parts)


def _as_patience(section, key, text):
    if text.strip().lower() in ("none", "off"):
        return None
    return _as_int(section, key, text)


def _read_ini(path):
    parser = configparser.ConfigParser()
    try:
        loaded = parser.read(path)
    except configparser.Error as exc:
        raise UsageError(f"{path}: {exc}")
    if not loaded:
        raise UsageError(f"config file not found: {path}")
    return parser


def _check_keys(section_name, section, allowed):
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise UsageError(
            f"[{section_name}] has unknown keys: {', '.join(unknown)} "
            f"(allowed: {', '.join(sorted(allowed))})"
        )


_RUN_KEYS = ("data", "counties", "n_input", "trials", "seed",
             "scarce_threshold", "out_dir", "jobs", "cache")
_TRAIN_KEYS = ("learning_rate", "batch_size", "max_epochs", "patience")
_SYNTH_KEYS = ("months", "wells_per_county", "noise_sd", "seed", "state")
_COUNTY_KEYS = ("qi", "b", "di", "wells")


def _train_from_ini(parser):
    if not parser.has_section("train"):
        return TrainConfig()
    section = parser["train"]
    _check_keys("train", section, _TRAIN_KEYS)
    kwargs = {}
    if "learning_rate" in section:
        kwargs["learning_rate"] = _as_float("train", "learning_rate",
                                            section["learning_rate"])
    if "batch_size" in section:
        kwargs["batch_size"] = _as_int("train", "batch_size", section["batch_size"])
    if "max_epochs" in section:
        kwargs["max_epochs"] = _as_int("train", "max_epochs", section["max_epochs"])
    if "patience" in section:
        kwargs["patience"] = _as_patience("train", "patience", section["patience"])
    try:
        return TrainConfig(**kwargs)
    except ValueError as exc:
        raise UsageError(f"[train]: {exc}")


def load_run_config(path) -> RunConfig:
    """Parse the [run] and [train] sections of an INI file into a RunConfig."""
    parser = _read_ini(path)
    kwargs = {}
    if parser.has_section("run"):
        section = parser["run"]
        _check_keys("run", section, _RUN_KEYS)
        if "data" in section:
            kwargs["data"] = _split_list(section["data"])
        if "counties" in section:
            kwargs["counties"] = _split_list(section["counties"])
        if "n_input" in section:
            kwargs["n_input"] = tuple(
                _as_int("run", "n_input", p) for p in _split_list(section["n_input"])
            )
        if "trials" in section:
            kwargs["trials"] = _as_int("run", "trials", section["trials"])
        if "seed" in section:
            kwargs["seed"] = _as_int("run", "seed", section["seed"])
        if "scarce_threshold" in section:
            kwargs["scarce_threshold"] = _as_int("run", "scarce_threshold",
                                                 section["scarce_threshold"])
        if "out_dir" in section:
            kwargs["out_dir"] = section["out_dir"].strip()
        if "jobs" in section:
            kwargs["jobs"] = _as_int("run", "jobs", section["jobs"])
        if "cache" in section:
            kwargs["cache_dir"] = section["cache"].strip() or None
    try:
        return RunConfig(train=_train_from_ini(parser), **kwargs)
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}")


def load_synth_config(path) -> tuple[SynthConfig, int]:
    """Parse [synth] plus one [county <name>] section per county; returns seed too."""
    parser = _read_ini(path)
    if not parser.has_section("synth"):
        raise UsageError(f"{path}: missing [synth] section")
    section = parser["synth"]
    _check_keys("synth", section, _SYNTH_KEYS)
    missing = [k for k in ("months", "wells_per_county", "noise_sd")
               if k not in section]
    if missing:
        raise UsageError(f"[synth] is missing required keys: {', '.join(missing)}")

    counties = {}
    for name in parser.sections():
        if not name.startswith("county "):
            continue
        county = name[len("county "):].strip()
        if not county:
            raise UsageError(f"{path}: county section with an empty name")
        csec = parser[name]
        _check_keys(name, csec, _COUNTY_KEYS)
        for key in ("qi", "b", "di"):
            if key not in csec:
                raise UsageError(f"[{name}] is missing required key: {key}")
        counties[county] = CountyRanges(
            qi=_as_pair(name, "qi", csec["qi"]),
            b=_as_pair(name, "b", csec["b"]),
            di=_as_pair(name, "di", csec["di"]),
            wells=_as_int(name, "wells", csec["wells"]) if "wells" in csec else None,
        )
    if not counties:
        raise UsageError(f"{path}: needs at least one [county <name>] section")

    kwargs = dict(
        counties=counties,
        months=_as_int("synth", "months", section["months"]),
        wells_per_county=_as_int("synth", "wells_per_county",
                                 section["wells_per_county"]),
        noise_sd=_as_float("synth", "noise_sd", section["noise_sd"]),
    )
    if "state" in section:
        kwargs["state"] = section["state"].strip()
    try:
        cfg = SynthConfig(**kwargs)
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}")
    seed = _as_int("synth", "seed", section["seed"]) if "seed" in section else 0
    return cfg, seed


def _load_data(paths) -> Dataset:
    """Load one or more CSVs and merge them into a single dataset."""
    paths = list(paths)
    if not paths:
        raise UsageError("no dataset given: set [run] data or pass --data")
    first = load_csv(paths[0])
    wells = list(first.wells)
    for path in paths[1:]:
        extra = load_csv(path)
        if extra.months != first.months:
            raise DataError(
                f"{path}: has {extra.months} monthly columns, but {paths[0]} "
                f"has {first.months}; merged files must align"
            )
        wells.extend(extra.wells)
    if len(paths) == 1:
        return first
    return make_dataset(wells, expected_months=first.months)


def _merge_flags(cfg: RunConfig, args) -> RunConfig:
    over = {}
    if args.data is not None:
        over["data"] = _split_list(args.data)
    if args.counties is not None:
        over["counties"] = _split_list(args.counties)
    if args.n_input is not None:
        over["n_input"] = tuple(
            _as_int("flags", "--n-input", p) for p in _split_list(args.n_input)
        )
    if args.trials is not None:
        over["trials"] = args.trials
    if args.seed is not None:
        over["seed"] = args.seed
    if args.scarce_threshold is not None:
        over["scarce_threshold"] = args.scarce_threshold
    if args.out is not None:
        over["out_dir"] = args.out
    if args.jobs is not None:
        over["jobs"] = args.jobs
    if args.cache is not None:
        over["cache_dir"] = args.cache or None
    train_over = _train_overrides(args)
    try:
        if train_over:
            over["train"] = replace(cfg.train, **train_over)
        return replace(cfg, **over)
    except ValueError as exc:
        raise UsageError(str(exc))


def _train_overrides(args):
    over = {}
    if getattr(args, "learning_rate", None) is not None:
        over["learning_rate"] = args.learning_rate
    if getattr(args, "batch_size", None) is not None:
        over["batch_size"] = args.batch_size
    if getattr(args, "max_epochs", None) is not None:
        over["max_epochs"] = args.max_epochs
    # patience rides through argparse as a string so an explicit 'none'
    # stays distinguishable from the flag being absent
    raw = getattr(args, "patience", None)
    if raw is not None:
        over["patience"] = None if raw == "none" else int(raw)
    return over


def _train_config_from_flags(args) -> TrainConfig:
    try:
        return TrainConfig(**_train_overrides(args))
    except ValueError as exc:
        raise UsageError(str(exc))


def _patience_flag(text):
    if text.strip().lower() in ("none", "off"):
        return "none"
    try:
        int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected an integer or 'none', got {text!r}"
        )
    return text


def _cache_dir(flag_value):
    env = os.environ.get("DECLINECAST_CACHE")
    if env:
        return env
    return flag_value


def _status(message):
    print(message, file=sys.stderr)


def _progress(n_input, k):
    stride = max(1, k // 10)

    def report(done, total):
        if done == total or done % stride == 0:
            _status(f"n_input {n_input}: {done}/{total} trials done")

    return report


# ------------------------------------------------------------------ commands


def cmd_ingest(args) -> int:
    ds = load_csv(args.csv)
    counts = county_counts(ds)
    print(f"{len(ds)} wells, {ds.months} months, {len(counts)} counties")
    for county, n in counts.items():
        print(f"  {county}: {n}")
    return 0


def cmd_synth(args) -> int:
    cfg, seed = load_synth_config(args.config)
    if args.seed is not None:
        seed = args.seed
    ds, truth = synth_generate(cfg, np.random.default_rng(seed))
    write_csv(ds, args.out)
    truth_path = args.truth or os.path.splitext(args.out)[0] + ".truth.csv"
    write_truth_csv(truth, truth_path)
    _status(f"wrote {len(ds)} wells x {ds.months} months to {args.out} "
            f"(seed {seed}); true parameters in {truth_path}")
    return 0


def cmd_forecast(args) -> int:
    model = load_model(args.model)
    if model.n_input != args.n_input:
        raise UsageError(
            f"this model takes {model.n_input} input months, not {args.n_input}; "
            "each input-window length has its own trained model, so pick the "
            "matching model file or retrain for this window"
        )
    ds = _load_data([args.data])
    if ds.months != model.n_input + model.n_output:
        raise DataError(
            f"the model forecasts {model.n_output} months from "
            f"{model.n_input}, so wells need {model.n_input + model.n_output} "
            f"monthly columns, got {ds.months}"
        )
    if len(ds) == 0:
        raise DataError(f"{args.data}: no wells to forecast")
    baseline = load_params(args.baseline) if args.baseline else None

    os.makedirs(args.out, exist_ok=True)
    n_input = model.n_input
    month_cols = [f"Month-{i}" for i in range(n_input + 1, ds.months + 1)]
    extra = ["dnn_mae", "arps_mae", "reduction"] if baseline is not None else []
    first_curve = None
    csv_path = os.path.join(args.out, "forecast.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(["Well-API"] + month_cols + extra) + "\n")
        for w in ds.wells:
            window = w.production[:n_input]
            label = w.production[n_input:]
            dnn_fc = predict(model, window)
            cells = [w.api_id] + [repr(float(v)) for v in dnn_fc]
            arps_fc = None
            if baseline is not None:
                params, _ = fit_test_well(baseline, window)
                arps_fc = arps_forecast(params, n_input, ds.months - 1)
                dnn_mae = well_mae(dnn_fc, label)
                arps_mae = well_mae(arps_fc, label)
                reduction = 1.0 - dnn_mae / arps_mae if arps_mae > 0 else 0.0
                cells += [f"{dnn_mae:.6g}", f"{arps_mae:.6g}", f"{reduction:.6g}"]
            fh.write(",".join(cells) + "\n")
            if first_curve is None:
                first_curve = (w.api_id, w.production.copy(), dnn_fc, arps_fc)

    api_id, actual, dnn_fc, arps_fc = first_curve
    svg = forecast_svg(f"{api_id} ({n_input} input months)",
                       actual, dnn_fc, arps_fc, n_input)
    svg_path = os.path.join(args.out, "forecast.svg")
    with open(svg_path, "w", encoding="utf-8") as fh:
        fh.write(svg)
    _status(f"wrote {len(ds)} forecasts to {csv_path} and a sample plot "
            f"to {svg_path}")
    return 0


def cmd_benchmark(args) -> int:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    cfg = _merge_flags(cfg, args)
    ds = _load_data(cfg.data)
    counts = county_counts(ds)
    counties = list(cfg.counties) if cfg.counties else list(counts)
    missing = [c for c in counties if c not in counts]
    if missing:
        raise DataError(f"counties not present in the data: {', '.join(missing)}")
    too_long = [n for n in cfg.n_input if n >= ds.months]
    if too_long:
        raise DataError(
            f"n_input values {too_long} do not leave any months to forecast "
            f"(wells have {ds.months} months)"
        )

    jobs = cfg.jobs or (os.cpu_count() or 1)
    cache_dir = _cache_dir(cfg.cache_dir)
    _status(f"benchmarking {len(counties)} counties, n_input {list(cfg.n_input)}, "
            f"{cfg.trials} trials, {jobs} jobs")
    aggs = []
    for n in cfg.n_input:
        agg = run_trials(
            ds, counties, n, cfg.trials, cfg.seed,
            jobs=jobs, scarce_threshold=cfg.scarce_threshold,
            source_cfg=cfg.train, head_cfg=cfg.train,
            cache_dir=cache_dir,
            cache_key=None if cache_dir is None else default_cache_key(cfg.train),
            progress=_progress(n, cfg.trials),
        )
        aggs.append(agg)
        print(f"n_input {n}: overall error reduction {agg.overall:+.2%} "
              f"({cfg.trials} trials)")
    emit_report(aggs, cfg.out_dir)
    _status(f"report written to {cfg.out_dir}")
    return 0


def cmd_train_source(args) -> int:
    ds = _load_data([args.data])
    if args.exclude not in county_counts(ds):
        raise DataError(f"county {args.exclude!r} not present in the data")
    cfg = _train_config_from_flags(args)
    rng = np.random.default_rng(args.seed)
    cache_dir = _cache_dir(args.cache)
    model = train_source(
        ds, args.exclude, args.n_input, cfg, rng,
        cache_dir=cache_dir,
        cache_key=None if cache_dir is None else default_cache_key(cfg),
    )
    save_model(model, args.out)
    _status(f"source model ({parameter_count(model)} parameters, "
            f"{args.n_input}->{model.n_output} months) written to {args.out}")
    return 0


def cmd_transfer(args) -> int:
    ds = _load_data([args.data])
    if args.county not in county_counts(ds):
        raise DataError(f"county {args.county!r} not present in the data")
    source = load_model(args.source)
    n_input = args.n_input if args.n_input is not None else source.n_input
    if n_input != source.n_input:
        raise UsageError(
            f"the source model takes {source.n_input} input months, not "
            f"{n_input}; each input-window length has its own trained model"
        )
    if ds.months <= n_input:
        raise DataError(f"wells have {ds.months} months, nothing left to "
                        f"forecast after {n_input} input months")
    cfg = _train_config_from_flags(args)
    rng = np.random.default_rng(args.seed)
    target = derive_target(source, ds.months - n_input, rng)
    try:
        model, history, test = train_target(
            target, county_subset(ds, args.county), n_input, cfg, rng,
            scarce_threshold=args.scarce_threshold,
        )
    except ValueError as exc:
        raise DataError(str(exc))
    save_model(model, args.out)
    _status(f"target model for {args.county} written to {args.out} "
            f"(best epoch {history.best_epoch}, {len(test)} held-out wells)")
    return 0


# ------------------------------------------------------------------- parser


def _add_train_flags(parser):
    parser.add_argument("--learning-rate", type=float, default=None,
                        help="Adam learning rate (default: 0.001)")
    parser.add_argument("--batch-size", type=int, default=None,
                        help="minibatch size (default: 32)")
    parser.add_argument("--max-epochs", type=int, default=None,
                        help="training epoch cap (default: 200)")
    parser.add_argument("--patience", type=_patience_flag, default=None,
                        help="early-stopping patience in epochs, or 'none' "
                             "to disable (default: 10)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="declinecast",
        description="Forecast shale-gas well production with transfer-trained "
                    "neural networks benchmarked against Arps decline refits.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("ingest", help="validate a production CSV and print "
                                      "its county histogram")
    p.add_argument("csv", help="production CSV to validate")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic dataset from a "
                                     "config file")
    p.add_argument("config", help="INI file with [synth] and [county <name>] "
                                  "sections")
    p.add_argument("out", help="path for the generated production CSV")
    p.add_argument("--truth", default=None,
                   help="path for the true-parameter CSV (default: <out>"
                        ".truth.csv)")
    p.add_argument("--seed", type=int, default=None,
                   help="generator seed, overriding [synth] seed (default: 0)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("forecast", help="forecast wells with a saved model")
    p.add_argument("--model", required=True, help="saved model file")
    p.add_argument("--data", required=True, help="production CSV of wells to "
                                                 "forecast")
    p.add_argument("--n-input", type=int, required=True,
                   help="input window length the model must match")
    p.add_argument("--baseline", default=None,
                   help="Arps parameter file enabling the refit comparison "
                        "columns (default: none)")
    p.add_argument("--out", default="forecast",
                   help="output directory (default: forecast)")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("benchmark", help="run the repeated-trial comparison "
                                         "and write its report")
    p.add_argument("config", nargs="?", default=None,
                   help="INI file with [run] and [train] sections (optional "
                        "when flags specify everything)")
    p.add_argument("--data", default=None,
                   help="production CSV path(s), comma-separated (default: "
                        "from config)")
    p.add_argument("--counties", default=None,
                   help="counties to evaluate, comma-separated (default: all)")
    p.add_argument("--n-input", default=None,
                   help="window lengths, comma-separated (default: 4,6,8,10)")
    p.add_argument("--trials", type=int, default=None,
                   help="trials per window length (default: 100)")
    p.add_argument("--seed", type=int, default=None,
                   help="master seed for trial derivation (default: 0)")
    p.add_argument("--scarce-threshold", type=int, default=None,
                   help="wells below which a county uses the source model "
                        "as-is; 0 disables (default: 40)")
    p.add_argument("--out", default=None,
                   help="report directory (default: report)")
    p.add_argument("--jobs", type=int, default=None,
                   help="parallel trial workers; 0 means all processors "
                        "(default: 0)")
    p.add_argument("--cache", default=None,
                   help="source-model cache directory; caching skips "
                        "retraining but diverges from uncached runs "
                        "(default: disabled)")
    _add_train_flags(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("train-source", help="train and save a source model "
                                            "excluding one county")
    p.add_argument("--data", required=True, help="production CSV")
    p.add_argument("--exclude", required=True,
                   help="county withheld from source training")
    p.add_argument("--n-input", type=int, required=True,
                   help="input window length")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--seed", type=int, default=0,
                   help="training seed (default: 0)")
    p.add_argument("--cache", default=None,
                   help="source-model cache directory (default: disabled)")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train_source)

    p = sub.add_parser("transfer", help="train a county head on a saved "
                                        "source model")
    p.add_argument("--data", required=True, help="production CSV")
    p.add_argument("--county", required=True, help="target county")
    p.add_argument("--source", required=True, help="saved source model file")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--n-input", type=int, default=None,
                   help="input window length (default: the source model's)")
    p.add_argument("--seed", type=int, default=0,
                   help="training seed (default: 0)")
    p.add_argument("--scarce-threshold", type=int, default=40,
                   help="minimum county size for head training; 0 disables "
                        "(default: 40)")
    _add_train_flags(p)
    p.set_defaults(func=cmd_transfer)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, ModelFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FitError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
