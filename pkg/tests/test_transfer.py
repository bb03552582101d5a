"""Transfer workflow tests: source exclusion, freezing, scarce fallback, cache."""

import numpy as np
import pytest

from declinecast.arps import ArpsParams, arps_rate
from declinecast.dataset import CountyRanges, SynthConfig, county_subset, synth_generate
from declinecast.neuralnet import TrainConfig, forward, parameter_count, predict
from declinecast.transfer import (
    CountyModelKind,
    TransferPlan,
    county_model,
    derive_target,
    train_source,
    train_target,
)

FAST = TrainConfig(max_epochs=3, patience=None)


def _dataset(target_wells=12, months=16, wells=8):
    counties = {
        name: CountyRanges(qi=(500.0, 2000.0), b=(0.7, 0.9), di=(0.05, 0.15))
        for name in ("Ash", "Birch", "Cedar")
    }
    counties["Target"] = CountyRanges(
        qi=(500.0, 2000.0), b=(1.3, 1.5), di=(0.05, 0.15), wells=target_wells
    )
    cfg = SynthConfig(counties=counties, wells_per_county=wells, months=months,
                      noise_sd=0.05)
    ds, _ = synth_generate(cfg, np.random.default_rng(1234))
    return ds


def _plan(**over):
    base = dict(target_county="Target", n_input=6, scarce_threshold=8,
                source_cfg=FAST, head_cfg=FAST)
    base.update(over)
    return TransferPlan(**base)


def test_plan_validation():
    with pytest.raises(ValueError):
        _plan(target_county="")
    with pytest.raises(ValueError):
        _plan(scarce_threshold=3)
    with pytest.raises(ValueError):
        _plan(n_input=0)
    _plan(scarce_threshold=0)  # disabled is allowed
    _plan(scarce_threshold=4)


def test_train_source_excludes_target_county():
    ds = _dataset()
    model = train_source(ds, "Target", 6, FAST, np.random.default_rng(0))
    # scaler peak must come from a non-target well: recompute over the pool
    pool_peak = max(float(w.production.max()) for w in ds.wells if w.county != "Target")
    assert model.scaler.scale == pool_peak
    assert model.n_input == 6
    assert model.n_output == ds.months - 6


def test_train_source_determinism():
    ds = _dataset()
    a = train_source(ds, "Target", 6, FAST, np.random.default_rng(5))
    b = train_source(ds, "Target", 6, FAST, np.random.default_rng(5))
    for la, lb in zip(a.layers, b.layers):
        assert np.array_equal(la.weights, lb.weights)


def test_train_source_absent_county_trains_on_everything():
    ds = _dataset()
    model = train_source(ds, "NoSuchCounty", 6, FAST, np.random.default_rng(2))
    assert model.scaler.scale == max(float(w.production.max()) for w in ds.wells)


def test_train_source_rejects_empty_pool():
    cfg = SynthConfig(
        counties={"Only": CountyRanges(qi=(500.0, 900.0), b=(0.8, 0.9), di=(0.05, 0.1))},
        wells_per_county=6, months=12)
    ds, _ = synth_generate(cfg, np.random.default_rng(3))
    with pytest.raises(ValueError):
        train_source(ds, "Only", 6, FAST, np.random.default_rng(4))


def test_derive_target_freezes_and_reinitializes():
    ds = _dataset()
    source = train_source(ds, "Target", 6, FAST, np.random.default_rng(7))
    target = derive_target(source, ds.months - 6, np.random.default_rng(8))
    assert [l.trainable for l in target.layers] == [False, False, False, True]
    for ls, lt in zip(source.layers[:-1], target.layers[:-1]):
        assert np.array_equal(ls.weights, lt.weights)
    assert not np.array_equal(source.layers[-1].weights, target.layers[-1].weights)
    assert target.scaler is source.scaler
    # head holds 50*m + m parameters, the only trainable ones
    m = ds.months - 6
    head = target.layers[-1]
    assert head.weights.size + head.biases.size == 50 * m + m


def test_train_target_freeze_and_splits():
    ds = _dataset(target_wells=12)
    county = county_subset(ds, "Target")
    source = train_source(ds, "Target", 6, FAST, np.random.default_rng(9))
    target = derive_target(source, ds.months - 6, np.random.default_rng(10))
    frozen_bytes = [l.weights.tobytes() for l in target.layers[:-1]]
    model, history, test = train_target(target, county, 6, FAST,
                                        np.random.default_rng(11), scarce_threshold=8)
    assert [l.weights.tobytes() for l in model.layers[:-1]] == frozen_bytes
    assert len(test) == 12 - 9  # ceil(0.75*12)=9 train, 3 test
    assert history.stopped_epoch >= 1
    assert test.api_ids() <= county.api_ids()


def test_train_target_rejects_scarce_county():
    ds = _dataset(target_wells=6)
    county = county_subset(ds, "Target")
    source = train_source(ds, "Target", 6, FAST, np.random.default_rng(12))
    target = derive_target(source, ds.months - 6, np.random.default_rng(13))
    with pytest.raises(ValueError):
        train_target(target, county, 6, FAST, np.random.default_rng(14),
                     scarce_threshold=8)


def test_train_target_requires_single_trainable_layer():
    ds = _dataset()
    county = county_subset(ds, "Target")
    source = train_source(ds, "Target", 6, FAST, np.random.default_rng(15))
    with pytest.raises(ValueError):
        train_target(source, county, 6, FAST, np.random.default_rng(16),
                     scarce_threshold=8)


def test_county_model_transfer_path():
    ds = _dataset(target_wells=12)
    model, kind, test = county_model(ds, _plan(), np.random.default_rng(17))
    assert kind is CountyModelKind.TRANSFER_TRAINED
    assert len(test) == 3
    assert [l.trainable for l in model.layers] == [False, False, False, True]


def test_county_model_scarce_path_is_untouched_source():
    ds = _dataset(target_wells=6)
    plan = _plan(scarce_threshold=8)
    model, kind, test = county_model(ds, plan, np.random.default_rng(18))
    assert kind is CountyModelKind.SOURCE_AS_IS
    assert len(test) == 6
    assert test.api_ids() == county_subset(ds, "Target").api_ids()
    # identical rng -> identical source; the scarce path must not perturb it
    source = train_source(ds, "Target", 6, FAST, np.random.default_rng(18))
    for la, lb in zip(model.layers, source.layers):
        assert la.weights.tobytes() == lb.weights.tobytes()
        assert la.biases.tobytes() == lb.biases.tobytes()
    assert all(l.trainable for l in model.layers)


def test_county_model_threshold_zero_always_trains():
    ds = _dataset(target_wells=6)
    model, kind, test = county_model(ds, _plan(scarce_threshold=0),
                                     np.random.default_rng(19))
    assert kind is CountyModelKind.TRANSFER_TRAINED
    assert len(test) == 1  # ceil(0.75*6)=5 train, 1 test


def test_county_model_absent_county():
    ds = _dataset()
    with pytest.raises(ValueError):
        county_model(ds, _plan(target_county="Nowhere"), np.random.default_rng(20))


def test_no_target_leakage_into_source_pool():
    # the source scaler peak ignores a target well that dominates the range
    months = 16
    t = np.arange(float(months))
    from declinecast.dataset import Dataset, WellRecord, make_dataset

    wells = []
    for i in range(8):
        wells.append(WellRecord(f"src-{i}", "Src", "S",
                                arps_rate(ArpsParams(1000.0, 0.8, 0.1), t)))
    wells.append(WellRecord("big", "Tgt", "S",
                            arps_rate(ArpsParams(90000.0, 0.8, 0.1), t)))
    ds = make_dataset(wells)
    model = train_source(ds, "Tgt", 6, FAST, np.random.default_rng(21))
    assert model.scaler.scale == 1000.0


def test_source_cache_round_trip(tmp_path):
    ds = _dataset()
    cache = str(tmp_path / "cache")
    a = train_source(ds, "Target", 6, FAST, np.random.default_rng(22),
                     cache_dir=cache, cache_key=777)
    files = list((tmp_path / "cache").rglob("*.model"))
    assert len(files) == 1
    # second call hits the cache: identical weights, no retraining drift
    b = train_source(ds, "Target", 6, FAST, np.random.default_rng(99),
                     cache_dir=cache, cache_key=777)
    for la, lb in zip(a.layers, b.layers):
        assert la.weights.tobytes() == lb.weights.tobytes()
    # different key retrains and writes a second entry
    train_source(ds, "Target", 6, FAST, np.random.default_rng(23),
                 cache_dir=cache, cache_key=778)
    assert len(list((tmp_path / "cache").rglob("*.model"))) == 2


def test_transfer_model_predicts_positive_mscf():
    ds = _dataset(target_wells=12)
    model, _, test = county_model(ds, _plan(), np.random.default_rng(24))
    w = test.wells[0]
    out = predict(model, w.production[:6])
    assert out.shape == (ds.months - 6,)
    assert np.all(out >= 0)
