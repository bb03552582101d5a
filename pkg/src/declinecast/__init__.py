"""Decline-curve forecasting toolkit: Arps benchmark, dense nets, county transfer.

The package is organized as a pipeline:

    dataset    well CSVs in, validated Dataset out; synthetic generation
    arps       hyperbolic decline curves and the damped least-squares fitter
    neuralnet  from-scratch dense networks: forward, backprop, Adam, training
    transfer   freeze-the-body head retraining per county, with a scarce path
    evaluate   repeated-trial benchmark harness and report files
    cli        the declinecast command line

The names re-exported here are the stable surface used by the scripts and
tests; everything else is reachable through the submodules.
"""

from declinecast.arps import (
    ArpsParams,
    FitError,
    LmConfig,
    arps_forecast,
    arps_rate,
    county_baseline_fit,
    default_init,
    lm_fit,
    load_params,
    refit_from_window,
    save_params,
)
from declinecast.dataset import (
    CountyRanges,
    DataError,
    Dataset,
    Scaler,
    SynthConfig,
    WellRecord,
    WindowPair,
    county_counts,
    county_subset,
    dataset_hash,
    exclude_county,
    fit_scaler,
    load_csv,
    make_dataset,
    shuffle_split,
    synth_generate,
    validation_split,
    window,
    write_csv,
)
from declinecast.evaluate import (
    AggregateReport,
    CountyTrialStats,
    SampleCurve,
    TrialReport,
    WellResult,
    emit_report,
    fit_test_well,
    overall_reduction,
    run_trial,
    run_trials,
    well_mae,
)
from declinecast.neuralnet import (
    AdamState,
    DenseLayer,
    ModelFormatError,
    NetworkModel,
    TrainConfig,
    TrainHistory,
    build_network,
    clone_network,
    forward,
    load_model,
    loss_gradients,
    mae_loss,
    parameter_count,
    predict,
    save_model,
    train,
    train_arrays,
    windowed_arrays,
)
from declinecast.transfer import (
    CountyModelKind,
    TransferPlan,
    county_model,
    default_cache_key,
    derive_target,
    train_source,
    train_target,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "AggregateReport",
    "ArpsParams",
    "CountyModelKind",
    "CountyRanges",
    "CountyTrialStats",
    "DataError",
    "Dataset",
    "DenseLayer",
    "FitError",
    "LmConfig",
    "ModelFormatError",
    "NetworkModel",
    "SampleCurve",
    "Scaler",
    "SynthConfig",
    "TrainConfig",
    "TrainHistory",
    "TransferPlan",
    "TrialReport",
    "WellRecord",
    "WellResult",
    "WindowPair",
    "arps_forecast",
    "arps_rate",
    "build_network",
    "clone_network",
    "county_baseline_fit",
    "county_counts",
    "county_model",
    "county_subset",
    "dataset_hash",
    "default_cache_key",
    "default_init",
    "derive_target",
    "emit_report",
    "exclude_county",
    "fit_scaler",
    "fit_test_well",
    "forward",
    "lm_fit",
    "load_csv",
    "load_model",
    "load_params",
    "loss_gradients",
    "mae_loss",
    "make_dataset",
    "overall_reduction",
    "parameter_count",
    "predict",
    "refit_from_window",
    "run_trial",
    "run_trials",
    "save_model",
    "save_params",
    "shuffle_split",
    "synth_generate",
    "train",
    "train_arrays",
    "train_source",
    "train_target",
    "validation_split",
    "well_mae",
    "window",
    "windowed_arrays",
    "write_csv",
]
