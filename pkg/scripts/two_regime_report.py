"""Run the two-regime synthetic benchmark end to end and print the headline.

Generates the dataset from an INI config (default configs/two_regime.ini),
runs the trial harness for every configured n_input, prints the per-county
error-reduction table plus the well-count-weighted overall number, and writes
the usual report files (summary.csv, trials.csv, SVG plots) to --out.

Typical use:

    python3 scripts/two_regime_report.py
    python3 scripts/two_regime_report.py --config configs/two_regime_scarce.ini \
        --out report_scarce --trials 20
"""

import argparse
import sys
import time

import numpy as np

from declinecast.cli import load_run_config, load_synth_config
from declinecast.dataset import county_counts, synth_generate
from declinecast.evaluate import emit_report, run_trials


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/two_regime.ini",
                    help="INI file with [synth], [county ...], [run], [train] (default: %(default)s)")
    ap.add_argument("--out", default="report", help="report directory (default: %(default)s)")
    ap.add_argument("--trials", type=int, default=None,
                    help="override [run] trials (default: value from config)")
    ap.add_argument("--jobs", type=int, default=None,
                    help="override [run] jobs (default: value from config)")
    args = ap.parse_args(argv)

    synth_cfg, synth_seed = load_synth_config(args.config)
    run_cfg = load_run_config(args.config)
    trials = args.trials if args.trials is not None else run_cfg.trials
    jobs = args.jobs if args.jobs is not None else run_cfg.jobs
    if jobs < 1:
        jobs = 1

    dataset, _ = synth_generate(synth_cfg, np.random.default_rng(synth_seed))
    counties = list(run_cfg.counties) or sorted(county_counts(dataset))
    print(f"dataset: {len(dataset)} wells, {dataset.months} months, "
          f"{len(county_counts(dataset))} counties; scoring {', '.join(counties)}")

    aggs = []
    for n_input in run_cfg.n_input:
        t0 = time.time()
        agg = run_trials(
            dataset, counties, n_input, trials, run_cfg.seed,
            jobs=jobs, scarce_threshold=run_cfg.scarce_threshold,
            source_cfg=run_cfg.train, head_cfg=run_cfg.train,
            progress=lambda done, k: print(f"  trial {done}/{k}", end="\r",
                                           file=sys.stderr),
        )
        dt = time.time() - t0
        print(f"\nn_input={n_input} ({trials} trials, {dt:.0f}s)")
        for county in counties:
            print(f"  {county}: dnn {agg.county_dnn_mae[county]:.1f} Mscf, "
                  f"arps {agg.county_arps_mae[county]:.1f} Mscf, "
                  f"reduction {agg.county_reductions[county]:+.2%} "
                  f"({agg.county_test_wells[county]} test wells)")
        positive = sum(
            1 for rep in agg.trial_reports
            if sum(c.reduction * c.test_wells for c in rep.counties.values())
            / sum(c.test_wells for c in rep.counties.values()) > 0
        )
        print(f"  overall reduction {agg.overall:+.2%}; "
              f"positive in {positive}/{trials} trials")
        aggs.append(agg)

    paths = emit_report(aggs, args.out)
    print(f"wrote {len(paths)} report files to {args.out}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
