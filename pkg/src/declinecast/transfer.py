"""County transfer learning: source training, frozen-layer head retraining.

The workflow trains one source network on every well outside a target
county, copies its hidden stack with the weights frozen, and trains a fresh
output head on the county's own wells. Counties with too few wells to split
skip head training entirely and reuse the source model untouched, with the
whole county held out as test data.

All randomness flows through one caller-supplied Generator in a fixed order
(source validation split, source init, source epochs, head init, target
splits, head epochs), so a seed pins the whole construction.
"""

from __future__ import annotations

import enum
import math
import os
import uuid
from dataclasses import dataclass, field

import numpy as np

from declinecast.dataset import (
    Dataset,
    county_subset,
    dataset_hash,
    exclude_county,
    fit_scaler,
    shuffle_split,
    validation_split,
)
from declinecast.neuralnet import (
    DenseLayer,
    NetworkModel,
    TrainConfig,
    TrainHistory,
    build_network,
    load_model,
    save_model,
    train,
)

TRAIN_FRACTION = 0.75
VAL_FRACTION = 0.10


class CountyModelKind(enum.Enum):
    TRANSFER_TRAINED = "transfer_trained"
    SOURCE_AS_IS = "source_as_is"


@dataclass(frozen=True)
class TransferPlan:
    """Everything needed to build one county's model from a full dataset.

    scarce_threshold is the minimum well count for head training; 0 disables
    the scarce path entirely. Values in between 1 and 3 cannot leave a well
    in each of fit/val/test and are rejected.
    """

    target_county: str
    n_input: int
    scarce_threshold: int = 40
    source_cfg: TrainConfig = field(default_factory=TrainConfig)
    head_cfg: TrainConfig = field(default_factory=TrainConfig)
    hidden: tuple[int, ...] = (30, 35, 50)
    dropout: float = 0.1

    def __post_init__(self):
        if not self.target_county:
            raise ValueError("target_county must be non-empty")
        if self.n_input < 1:
            raise ValueError("n_input must be >= 1")
        if self.scarce_threshold != 0 and self.scarce_threshold < 4:
            raise ValueError(
                "scarce_threshold must be 0 (disabled) or >= 4 "
                "(a trainable county needs a well in each of fit/val/test)"
            )


def _cache_path(cache_dir, full_hash, county, n_input, cache_key):
    return os.path.join(cache_dir, full_hash, county, str(n_input), f"{cache_key}.model")


def default_cache_key(cfg: TrainConfig) -> str:
    """Cache key tying a stored source model to the settings that trained it."""
    return (f"lr{cfg.learning_rate!r}-b{cfg.batch_size}-e{cfg.max_epochs}"
            f"-p{cfg.patience}")


def train_source(full: Dataset, excluded_county: str, n_input: int,
                 cfg: TrainConfig | None = None, rng=None, *,
                 hidden=(30, 35, 50), dropout=0.1,
                 cache_dir=None, cache_key=None) -> NetworkModel:
    """Train the source model on every well outside excluded_county.

    The scaler is fit on that source pool and travels with the model. With
    cache_dir and cache_key set, a previously saved model for the same
    (dataset, county, n_input, key) is loaded instead of retraining; note a
    cache hit consumes no rng draws, so cached and uncached runs diverge
    downstream of this call.
    """
    source_pool = exclude_county(full, excluded_county)
    if len(source_pool) == 0:
        raise ValueError(f"excluding {excluded_county!r} leaves no training wells")
    if not 1 <= n_input < full.months:
        raise ValueError(f"n_input must lie in [1, {full.months - 1}], got {n_input}")

    cache_file = None
    if cache_dir is not None and cache_key is not None:
        cache_file = _cache_path(cache_dir, dataset_hash(full), excluded_county,
                                 n_input, cache_key)
        if os.path.exists(cache_file):
            return load_model(cache_file)

    fit, val = validation_split(source_pool, VAL_FRACTION, rng)
    model = build_network(n_input, full.months - n_input, rng, hidden=hidden,
                          dropout=dropout, scaler=fit_scaler(source_pool))
    train(model, fit, val, n_input, cfg, rng)

    if cache_file is not None:
        os.makedirs(os.path.dirname(cache_file), exist_ok=True)
        tmp = f"{cache_file}.{os.getpid()}.{uuid.uuid4().hex}.tmp"
        save_model(model, tmp)
        os.replace(tmp, cache_file)  # atomic: readers never see a partial file
    return model


def derive_target(source: NetworkModel, m_output: int, rng) -> NetworkModel:
    """Copy the source's hidden stack frozen and attach a fresh output head.

    The head is He-uniform initialized from rng; the source scaler is
    carried over so the frozen layers keep seeing their trained input scale.
    """
    if m_output < 1:
        raise ValueError("m_output must be >= 1")
    frozen = [
        DenseLayer(weights=l.weights.copy(), biases=l.biases.copy(),
                   activation=l.activation, dropout=l.dropout, trainable=False)
        for l in source.layers[:-1]
    ]
    fan_in = frozen[-1].weights.shape[1]
    limit = math.sqrt(6.0 / fan_in)
    head = DenseLayer(weights=rng.uniform(-limit, limit, (fan_in, m_output)),
                      biases=np.zeros(m_output),
                      activation="linear", dropout=0.0, trainable=True)
    return NetworkModel(layers=frozen + [head], scaler=source.scaler)


def train_target(target: NetworkModel, county: Dataset, n_input: int,
                 cfg: TrainConfig | None = None, rng=None, *,
                 scarce_threshold: int = 40) -> tuple[NetworkModel, TrainHistory, Dataset]:
    """Train the head on the county's wells; returns the held-out test split.

    Splits are 75/25 train/test by whole wells, then 10% of the training
    side becomes validation. The frozen layers are checked bit-identical
    after training.
    """
    if scarce_threshold and len(county) < scarce_threshold:
        raise ValueError(
            f"county has {len(county)} wells, below threshold {scarce_threshold}; "
            "use the scarce path"
        )
    trainable = [l for l in target.layers if l.trainable]
    if len(trainable) != 1:
        raise ValueError(f"target must have exactly 1 trainable layer, has {len(trainable)}")

    train_wells, test = shuffle_split(county, TRAIN_FRACTION, rng)
    fit, val = validation_split(train_wells, VAL_FRACTION, rng)
    frozen_before = [
        (l.weights.tobytes(), l.biases.tobytes()) for l in target.layers if not l.trainable
    ]
    history = train(target, fit, val, n_input, cfg, rng)
    frozen_after = [
        (l.weights.tobytes(), l.biases.tobytes()) for l in target.layers if not l.trainable
    ]
    assert frozen_before == frozen_after, "frozen layers changed during head training"
    return target, history, test


def county_model(full: Dataset, plan: TransferPlan, rng, *,
                 cache_dir=None, cache_key=None) -> tuple[NetworkModel, CountyModelKind, Dataset]:
    """Build the model for one county: transfer-trained or source-as-is.

    A county at or above plan.scarce_threshold gets the full pipeline and
    its held-out 25% back as test data; a scarcer county gets the source
    model verbatim with every one of its wells as test data.
    """
    county = county_subset(full, plan.target_county)
    if len(county) == 0:
        raise ValueError(f"county {plan.target_county!r} not present in the dataset")
    source = train_source(full, plan.target_county, plan.n_input, plan.source_cfg, rng,
                          hidden=plan.hidden, dropout=plan.dropout,
                          cache_dir=cache_dir, cache_key=cache_key)
    if len(county) < plan.scarce_threshold:
        return source, CountyModelKind.SOURCE_AS_IS, county
    target = derive_target(source, full.months - plan.n_input, rng)
    model, _, test = train_target(target, county, plan.n_input, plan.head_cfg, rng,
                                  scarce_threshold=plan.scarce_threshold)
    return model, CountyModelKind.TRANSFER_TRAINED, test
