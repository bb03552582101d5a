"""Repeated-trial comparison of county DNN models against the Arps refit.

One trial builds, per county, the transfer model and an Arps benchmark on
the same training wells, scores both on the identical held-out test wells,
and reduces per-well MAEs to county statistics. Trials derive independent
seeds from (master_seed, trial index), so results never depend on execution
order and parallel runs reproduce serial ones byte for byte.

All cross-well and cross-trial sums go through math.fsum, which is exactly
rounded and therefore permutation-invariant.
"""

from __future__ import annotations

import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from declinecast.arps import (
    FitError,
    arps_forecast,
    county_baseline_fit,
    default_init,
    lm_fit,
    refit_from_window,
)
from declinecast.dataset import Dataset, county_subset
from declinecast.neuralnet import TrainConfig, predict
from declinecast.plots import forecast_svg, reduction_bar_svg
from declinecast.transfer import (
    CountyModelKind,
    TransferPlan,
    county_model,
    default_cache_key,
)


@dataclass(frozen=True)
class WellResult:
    api_id: str
    county: str
    dnn_mae: float
    arps_mae: float


@dataclass(frozen=True)
class SampleCurve:
    """One test well's curves kept for plotting: full actual + both forecasts."""

    api_id: str
    county: str
    n_input: int
    actual: np.ndarray
    dnn: np.ndarray
    arps: np.ndarray


@dataclass(frozen=True)
class CountyTrialStats:
    county: str
    kind: str
    test_wells: int
    dnn_mae: float
    arps_mae: float
    dnn_mae_std: float
    arps_mae_std: float
    reduction: float
    lm_fallbacks: int


@dataclass(frozen=True)
class TrialReport:
    index: int
    seed: str
    n_input: int
    counties: dict[str, CountyTrialStats]
    wells: tuple[WellResult, ...]
    samples: dict[str, SampleCurve]


@dataclass(frozen=True)
class AggregateReport:
    """Trial-averaged county statistics plus the count-weighted overall value."""

    n_input: int
    trials: int
    county_reductions: dict[str, float]
    county_dnn_mae: dict[str, float]
    county_arps_mae: dict[str, float]
    county_test_wells: dict[str, int]
    overall: float
    trial_reports: tuple[TrialReport, ...]


def well_mae(forecast, actual) -> float:
    """Positional mean absolute error in Mscf."""
    forecast = np.asarray(forecast, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if forecast.shape != actual.shape:
        raise ValueError(f"length mismatch: {forecast.shape} vs {actual.shape}")
    return float(np.abs(forecast - actual).mean())


def _fmean(values):
    return math.fsum(values) / len(values)


def fit_test_well(baseline, input_window, cfg=None):
    """Arps params for one test well: refit, retry from default, else baseline.

    Returns (params, fallback_flag). Failed wells keep the county baseline
    rather than being dropped, which would bias the comparison.
    """
    try:
        return refit_from_window(baseline, input_window, cfg), False
    except FitError:
        pass
    try:
        params, _ = lm_fit(input_window, default_init(input_window, cfg), cfg)
        return params, False
    except FitError:
        return baseline, True


def run_trial(full: Dataset, counties, n_input: int, seed, *,
              scarce_threshold: int = 40,
              source_cfg: TrainConfig | None = None,
              head_cfg: TrainConfig | None = None,
              cache_dir=None, cache_key=None) -> TrialReport:
    """One full comparison pass over the given counties.

    seed may be an int or an (ints) sequence; it feeds a SeedSequence, so
    run_trials can derive per-trial seeds that are stable under adding
    trials. Within the trial a single stream is threaded through the
    counties in list order.

    With cache_dir set, source models are shared across trials under
    cache_key (derived from the source config when not given). Only the
    first trial to reach a county trains its source net; later trials load
    it and skip those rng draws, so cached runs diverge from uncached ones.
    """
    counties = list(counties)
    if not counties:
        raise ValueError("counties list is empty")
    entropy = list(seed) if isinstance(seed, (list, tuple)) else [seed]
    rng = np.random.default_rng(np.random.SeedSequence(entropy))
    seed_label = ":".join(str(int(s)) for s in entropy)
    source_cfg = source_cfg or TrainConfig()
    head_cfg = head_cfg or TrainConfig()
    if cache_dir is not None and cache_key is None:
        cache_key = default_cache_key(source_cfg)

    county_stats: dict[str, CountyTrialStats] = {}
    wells: list[WellResult] = []
    samples: dict[str, SampleCurve] = {}
    for county_name in counties:
        plan = TransferPlan(target_county=county_name, n_input=n_input,
                            scarce_threshold=scarce_threshold,
                            source_cfg=source_cfg, head_cfg=head_cfg)
        model, kind, test = county_model(full, plan, rng,
                                         cache_dir=cache_dir, cache_key=cache_key)

        county = county_subset(full, county_name)
        test_ids = test.api_ids()
        if kind is CountyModelKind.TRANSFER_TRAINED:
            arps_train = Dataset(
                tuple(w for w in county.wells if w.api_id not in test_ids),
                county.months,
            )
            # leakage check: the transfer path must keep test wells out of
            # the county training pool entirely
            assert not (test_ids & arps_train.api_ids())
        else:
            # scarce county: the DNN saw none of its wells, and the Arps
            # baseline deliberately keeps the full county
            arps_train = county
        source_pool_ids = {w.api_id for w in full.wells if w.county != county_name}
        assert not (test_ids & source_pool_ids)
        assert len(test) > 0

        baseline = county_baseline_fit(arps_train)
        fallbacks = 0
        dnn_maes: list[float] = []
        arps_maes: list[float] = []
        for w in test.wells:
            input_window = w.production[:n_input]
            label = w.production[n_input:]
            dnn_fc = predict(model, input_window)
            params, fell_back = fit_test_well(baseline, input_window)
            fallbacks += fell_back
            arps_fc = arps_forecast(params, n_input, county.months - 1)
            dnn_maes.append(well_mae(dnn_fc, label))
            arps_maes.append(well_mae(arps_fc, label))
            wells.append(WellResult(w.api_id, county_name, dnn_maes[-1], arps_maes[-1]))
            if county_name not in samples:
                samples[county_name] = SampleCurve(
                    api_id=w.api_id, county=county_name, n_input=n_input,
                    actual=w.production.copy(), dnn=dnn_fc, arps=arps_fc,
                )

        mean_dnn = _fmean(dnn_maes)
        mean_arps = _fmean(arps_maes)
        if mean_arps <= 0:
            raise ValueError(f"county {county_name}: mean Arps MAE is zero, "
                             "reduction undefined")
        county_stats[county_name] = CountyTrialStats(
            county=county_name,
            kind=kind.value,
            test_wells=len(test),
            dnn_mae=mean_dnn,
            arps_mae=mean_arps,
            dnn_mae_std=float(np.std(dnn_maes)),
            arps_mae_std=float(np.std(arps_maes)),
            reduction=1.0 - mean_dnn / mean_arps,
            lm_fallbacks=fallbacks,
        )
    return TrialReport(index=0, seed=seed_label, n_input=n_input,
                       counties=county_stats, wells=tuple(wells), samples=samples)


def _trial_worker(args):
    full, counties, n_input, master_seed, index, kwargs = args
    report = run_trial(full, counties, n_input, [master_seed, index], **kwargs)
    return index, report


def overall_reduction(reductions, counts) -> float:
    """Test-well-count-weighted mean of per-county reductions.

    Both arguments are mappings keyed by county (or parallel sequences).
    Computed in exact rational arithmetic and rounded once, so the result
    is independent of county order and always lies within the closed span
    of the inputs (single rounding cannot cross a representable bound).
    """
    if hasattr(reductions, "keys"):
        if set(reductions) != set(counts):
            raise ValueError("reductions and counts cover different counties")
        pairs = [(reductions[c], counts[c]) for c in reductions]
    else:
        pairs = list(zip(list(reductions), list(counts), strict=True))
    if not pairs:
        raise ValueError("no counties to aggregate")
    if any(n <= 0 for _, n in pairs):
        raise ValueError("every county needs a positive test-well count")
    total = sum(int(n) for _, n in pairs)
    weighted = sum(Fraction(float(r)) * int(n) for r, n in pairs)
    return float(weighted / total)


def run_trials(full: Dataset, counties, n_input: int, k: int = 100,
               master_seed: int = 0, *, jobs: int = 1,
               scarce_threshold: int = 40,
               source_cfg: TrainConfig | None = None,
               head_cfg: TrainConfig | None = None,
               cache_dir=None, cache_key=None, progress=None) -> AggregateReport:
    """Run k independent trials and average them.

    Trial i is seeded from (master_seed, i); with jobs > 1 the trials run in
    a process pool, and reports are re-ordered by index before aggregation,
    so the aggregate is identical to a serial run.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    counties = list(counties)
    kwargs = dict(scarce_threshold=scarce_threshold, source_cfg=source_cfg,
                  head_cfg=head_cfg, cache_dir=cache_dir, cache_key=cache_key)
    jobs = max(1, int(jobs))

    reports: list[TrialReport | None] = [None] * k
    if jobs == 1:
        for i in range(k):
            _, report = _trial_worker((full, counties, n_input, master_seed, i, kwargs))
            reports[i] = report
            if progress is not None:
                progress(i + 1, k)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = 0
            work = ((full, counties, n_input, master_seed, i, kwargs) for i in range(k))
            for index, report in pool.map(_trial_worker, work):
                reports[index] = report
                done += 1
                if progress is not None:
                    progress(done, k)
    reports = [
        TrialReport(index=i, seed=r.seed, n_input=r.n_input, counties=r.counties,
                    wells=r.wells, samples=r.samples)
        for i, r in enumerate(reports)
    ]

    counts = {c: reports[0].counties[c].test_wells for c in counties}
    for r in reports:
        assert {c: r.counties[c].test_wells for c in counties} == counts, \
            "test split sizes must not vary across trials"
    county_reductions = {
        c: _fmean([r.counties[c].reduction for r in reports]) for c in counties
    }
    county_dnn = {c: _fmean([r.counties[c].dnn_mae for r in reports]) for c in counties}
    county_arps = {c: _fmean([r.counties[c].arps_mae for r in reports]) for c in counties}
    return AggregateReport(
        n_input=n_input,
        trials=k,
        county_reductions=county_reductions,
        county_dnn_mae=county_dnn,
        county_arps_mae=county_arps,
        county_test_wells=counts,
        overall=overall_reduction(county_reductions, counts),
        trial_reports=tuple(reports),
    )


def _g6(v) -> str:
    return f"{v:.6g}"


def _safe_name(name):
    return re.sub(r"[^A-Za-z0-9_.-]", "_", name)


def emit_report(aggs, out_dir) -> list[str]:
    """Write the full report set for one or more aggregates (one per n_input).

    Files: summary.csv (per-county rows plus an OVERALL row per n_input;
    MAEs at 6 significant digits, reductions at full precision so the
    OVERALL value recomputes exactly from its rows), trials.csv (per-trial
    per-county statistics), one forecast SVG per county sampled from each
    aggregate's first trial, and one reduction bar chart per n_input.
    Returns the written paths.
    """
    if isinstance(aggs, AggregateReport):
        aggs = [aggs]
    aggs = list(aggs)
    os.makedirs(out_dir, exist_ok=True)
    written = []

    path = os.path.join(out_dir, "summary.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("county,n_input,mean_dnn_mae,mean_arps_mae,reduction,test_wells\n")
        for agg in aggs:
            for c in agg.county_reductions:
                fh.write(
                    f"{c},{agg.n_input},{_g6(agg.county_dnn_mae[c])},"
                    f"{_g6(agg.county_arps_mae[c])},{agg.county_reductions[c]!r},"
                    f"{agg.county_test_wells[c]}\n"
                )
            total = sum(agg.county_test_wells.values())
            fh.write(f"OVERALL,{agg.n_input},,,{agg.overall!r},{total}\n")
    written.append(path)

    path = os.path.join(out_dir, "trials.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(
            "trial,seed,county,n_input,model_kind,test_wells,"
            "dnn_mae,dnn_mae_std,arps_mae,arps_mae_std,reduction,lm_fallbacks\n"
        )
        for agg in aggs:
            for r in agg.trial_reports:
                for c, s in r.counties.items():
                    fh.write(
                        f"{r.index},{r.seed},{c},{r.n_input},{s.kind},{s.test_wells},"
                        f"{_g6(s.dnn_mae)},{_g6(s.dnn_mae_std)},{_g6(s.arps_mae)},"
                        f"{_g6(s.arps_mae_std)},{_g6(s.reduction)},{s.lm_fallbacks}\n"
                    )
    written.append(path)

    for agg in aggs:
        for c, sample in agg.trial_reports[0].samples.items():
            path = os.path.join(
                out_dir, f"forecast_{_safe_name(c)}_n{agg.n_input}.svg"
            )
            svg = forecast_svg(
                f"{c}: well {sample.api_id} ({agg.n_input} input months)",
                sample.actual, sample.dnn, sample.arps, sample.n_input,
            )
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(svg)
            written.append(path)
        path = os.path.join(out_dir, f"reductions_n{agg.n_input}.svg")
        labels = list(agg.county_reductions)
        svg = reduction_bar_svg(
            f"Error reduction vs Arps ({agg.n_input} input months, "
            f"{agg.trials} trials)",
            labels,
            [agg.county_reductions[c] for c in labels],
        )
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(svg)
        written.append(path)
    return written
