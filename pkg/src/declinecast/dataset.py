"""Well-production datasets: CSV ingestion, splits, scaling, synthesis.

A dataset is a fixed-length collection of wells, each carrying one monthly
production series in Mscf. All series in a dataset have the same length and
every well id is unique. Objects are treated as immutable once built; random
streams are always supplied by the caller.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from declinecast.arps import ArpsParams, arps_rate

CSV_FIXED_COLUMNS = ("Well-API", "County", "State")


class DataError(ValueError):
    """A data file or dataset failed validation."""


@dataclass(frozen=True)
class WellRecord:
    """One well: identity plus its monthly production series in Mscf."""

    api_id: str
    county: str
    state: str
    production: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.production, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "production", arr)


@dataclass(frozen=True)
class Dataset:
    wells: tuple[WellRecord, ...]
    months: int

    def __len__(self):
        return len(self.wells)

    def api_ids(self):
        return {w.api_id for w in self.wells}


@dataclass(frozen=True)
class WindowPair:
    """First n months as model input, the remaining months as the label."""

    input: np.ndarray
    label: np.ndarray


@dataclass(frozen=True)
class Scaler:
    """Per-dataset divisor taking raw Mscf values into model units."""

    scale: float

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")

    def apply(self, values):
        return np.asarray(values, dtype=float) / self.scale

    def invert(self, values):
        return np.asarray(values, dtype=float) * self.scale


def make_dataset(wells, expected_months=None) -> Dataset:
    """Validate a collection of wells and wrap it as a Dataset.

    Enforces uniform series length, unique well ids, non-empty county names,
    and finite non-negative production values.
    """
    wells = tuple(wells)
    if not wells:
        return Dataset(wells=(), months=int(expected_months or 0))
    months = wells[0].production.size
    if expected_months is not None and months != expected_months:
        raise DataError(f"expected {expected_months} monthly columns, found {months}")
    seen = set()
    for w in wells:
        if w.production.size != months:
            raise DataError(
                f"well {w.api_id}: series length {w.production.size} != {months}"
            )
        if not w.county:
            raise DataError(f"well {w.api_id}: empty county name")
        if w.api_id in seen:
            raise DataError(f"duplicate well id {w.api_id}")
        seen.add(w.api_id)
        if not np.all(np.isfinite(w.production)) or np.any(w.production < 0):
            raise DataError(f"well {w.api_id}: production values must be finite and >= 0")
    return Dataset(wells=wells, months=months)


def load_csv(path, expected_months=None) -> Dataset:
    """Load a production export: Well-API,County,State,Month-1..Month-N.

    Rows are kept in file order. Any malformed header, ragged row, duplicate
    well id, or non-numeric/negative production cell raises DataError naming
    the offending line (and column, for cell errors).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        _check_header(path, header)
        n_months = len(header) - len(CSV_FIXED_COLUMNS)

        wells = []
        seen = set()
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue  # trailing blank line
            if len(row) != len(header):
                raise DataError(
                    f"{path} line {lineno}: expected {len(header)} fields, got {len(row)}"
                )
            api_id, county, state = (row[0].strip(), row[1].strip(), row[2].strip())
            if not api_id:
                raise DataError(f"{path} line {lineno}: empty Well-API")
            if api_id in seen:
                raise DataError(f"{path} line {lineno}: duplicate Well-API {api_id}")
            seen.add(api_id)
            if not county:
                raise DataError(f"{path} line {lineno}: empty County")
            values = np.empty(n_months)
            for j, cell in enumerate(row[3:]):
                col = header[3 + j]
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path} line {lineno} column {col}: non-numeric value {cell!r}"
                    ) from None
                if not math.isfinite(v) or v < 0:
                    raise DataError(
                        f"{path} line {lineno} column {col}: production must be finite and >= 0, got {cell}"
                    )
                values[j] = v
            wells.append(WellRecord(api_id=api_id, county=county, state=state, production=values))

    ds = make_dataset(wells, expected_months)
    if not ds.wells:
        ds = Dataset(wells=(), months=n_months)
        if expected_months is not None and n_months != expected_months:
            raise DataError(f"expected {expected_months} monthly columns, found {n_months}")
    return ds


def _check_header(path, header):
    if len(header) != len(set(header)):
        dupes = sorted({h for h in header if header.count(h) > 1})
        raise DataError(f"{path}: duplicate header columns {dupes}")
    expected_fixed = list(CSV_FIXED_COLUMNS)
    if header[: len(expected_fixed)] != expected_fixed:
        raise DataError(
            f"{path}: header must start with {','.join(expected_fixed)}, got {header[:3]}"
        )
    month_cols = header[len(expected_fixed) :]
    if len(month_cols) < 5:
        raise DataError(f"{path}: need at least 5 monthly columns, found {len(month_cols)}")
    for i, name in enumerate(month_cols, start=1):
        if name != f"Month-{i}":
            raise DataError(f"{path}: expected column Month-{i}, found {name!r}")


def write_csv(ds: Dataset, path):
    """Write a dataset back to the ingestion format, values at full precision."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(CSV_FIXED_COLUMNS) + [f"Month-{i}" for i in range(1, ds.months + 1)])
        for w in ds.wells:
            writer.writerow([w.api_id, w.county, w.state] + [repr(float(v)) for v in w.production])


def county_counts(ds: Dataset):
    """Well count per county, in order of first appearance."""
    counts: dict[str, int] = {}
    for w in ds.wells:
        counts[w.county] = counts.get(w.county, 0) + 1
    return counts


def county_subset(ds: Dataset, county: str) -> Dataset:
    wells = tuple(w for w in ds.wells if w.county == county)
    return Dataset(wells=wells, months=ds.months)


def exclude_county(ds: Dataset, county: str) -> Dataset:
    wells = tuple(w for w in ds.wells if w.county != county)
    return Dataset(wells=wells, months=ds.months)


def shuffle_split(ds: Dataset, train_frac: float, rng) -> tuple[Dataset, Dataset]:
    """Random split by whole wells; train gets ceil(train_frac * n) of them."""
    if not 0 < train_frac < 1:
        raise ValueError(f"train_frac must lie in (0,1), got {train_frac}")
    if len(ds) == 0:
        raise ValueError("cannot split an empty dataset")
    order = rng.permutation(len(ds))
    n_train = math.ceil(train_frac * len(ds) - 1e-9)
    train = tuple(ds.wells[i] for i in order[:n_train])
    test = tuple(ds.wells[i] for i in order[n_train:])
    return Dataset(train, ds.months), Dataset(test, ds.months)


def validation_split(train: Dataset, val_frac: float, rng) -> tuple[Dataset, Dataset]:
    """Reserve max(1, round(val_frac * n)) wells of a training set for validation."""
    if not 0 < val_frac < 1:
        raise ValueError(f"val_frac must lie in (0,1), got {val_frac}")
    if len(train) < 2:
        raise ValueError("need at least 2 wells to reserve a validation set")
    order = rng.permutation(len(train))
    n_val = max(1, math.floor(val_frac * len(train) + 0.5 + 1e-9))
    n_val = min(n_val, len(train) - 1)  # never empty the fitting side
    val = tuple(train.wells[i] for i in order[:n_val])
    fit = tuple(train.wells[i] for i in order[n_val:])
    return Dataset(fit, train.months), Dataset(val, train.months)


def window(well: WellRecord, n_input: int) -> WindowPair:
    """Split one series into its first n_input months and the remainder."""
    n = well.production.size
    if not 1 <= n_input < n:
        raise ValueError(f"n_input must lie in [1, {n - 1}], got {n_input}")
    return WindowPair(input=well.production[:n_input], label=well.production[n_input:])


def fit_scaler(train: Dataset) -> Scaler:
    """Scaler dividing by the maximum production value seen in the training set."""
    if len(train) == 0:
        raise ValueError("cannot fit a scaler to an empty dataset")
    peak = max(float(w.production.max()) for w in train.wells)
    if peak <= 0:
        raise ValueError("cannot fit a scaler to all-zero training data")
    return Scaler(scale=peak)


# --- synthetic data -----------------------------------------------------------

@dataclass(frozen=True)
class CountyRanges:
    """Uniform sampling ranges for one synthetic county's decline parameters.

    `wells`, when set, overrides the config-wide wells_per_county (lets a
    single county be made data-scarce).
    """

    qi: tuple[float, float]
    b: tuple[float, float]
    di: tuple[float, float]
    wells: int | None = None

    def __post_init__(self):
        for name, (lo, hi) in (("qi", self.qi), ("b", self.b), ("di", self.di)):
            if not (0 < lo <= hi):
                raise ValueError(f"{name} range must satisfy 0 < lo <= hi, got ({lo}, {hi})")
        if self.b[1] > 2:
            raise ValueError("b range must stay within (0, 2]")
        if self.wells is not None and self.wells < 0:
            raise ValueError("wells override must be >= 0")


@dataclass(frozen=True)
class SynthConfig:
    """Recipe for a synthetic multi-county dataset with hyperbolic backbones."""

    counties: dict[str, CountyRanges]
    wells_per_county: int
    months: int
    noise_sd: float = 0.0
    state: str = "Synthetic"

    def __post_init__(self):
        if self.wells_per_county < 0:
            raise ValueError("wells_per_county must be >= 0")
        if self.months < 1:
            raise ValueError("months must be >= 1")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        if not all(self.counties):
            raise ValueError("county names must be non-empty")


def synth_generate(cfg: SynthConfig, rng):
    """Draw a synthetic dataset plus the true parameters behind each well.

    Each well's noiseless backbone is the hyperbolic rate at months 0..N-1
    with parameters drawn uniformly from its county's ranges; observed values
    multiply the backbone by max(0, 1 + eps), eps ~ Normal(0, noise_sd).
    Draw order (county by county in config order, then well by well: qi, b,
    di, then the noise vector) is fixed, so one seed always yields one
    dataset. Returns (Dataset, {api_id: ArpsParams}).
    """
    t = np.arange(cfg.months, dtype=float)
    wells = []
    truth: dict[str, ArpsParams] = {}
    for county, ranges in cfg.counties.items():
        n_wells = cfg.wells_per_county if ranges.wells is None else ranges.wells
        for i in range(n_wells):
            params = ArpsParams(
                qi=float(rng.uniform(*ranges.qi)),
                b=float(rng.uniform(*ranges.b)),
                di=float(rng.uniform(*ranges.di)),
            )
            backbone = arps_rate(params, t)
            factor = np.maximum(0.0, 1.0 + rng.normal(0.0, cfg.noise_sd, cfg.months))
            api_id = f"{county}-{i:04d}"
            wells.append(
                WellRecord(api_id=api_id, county=county, state=cfg.state, production=backbone * factor)
            )
            truth[api_id] = params
    ds = make_dataset(wells) if wells else Dataset(wells=(), months=cfg.months)
    return ds, truth


def write_truth_csv(truth, path):
    """Side-channel file recording each synthetic well's generating parameters."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["Well-API", "Qi", "b", "Di"])
        for api_id, p in truth.items():
            writer.writerow([api_id, repr(p.qi), repr(p.b), repr(p.di)])


def load_truth_csv(path):
    """Read a side-channel file written by write_truth_csv."""
    truth: dict[str, ArpsParams] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["Well-API", "Qi", "b", "Di"]:
            raise DataError(f"{path}: not a truth file (header {header})")
        for row in reader:
            if not row:
                continue
            truth[row[0]] = ArpsParams(qi=float(row[1]), b=float(row[2]), di=float(row[3]))
    return truth


def dataset_hash(ds: Dataset) -> str:
    """Content hash used to key cached models to the exact dataset."""
    h = hashlib.sha256()
    h.update(str(ds.months).encode())
    for w in ds.wells:
        h.update(w.api_id.encode())
        h.update(w.county.encode())
        h.update(w.state.encode())
        h.update(np.ascontiguousarray(w.production).tobytes())
    return h.hexdigest()[:16]
