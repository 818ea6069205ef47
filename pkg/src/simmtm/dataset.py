"""
CSV ingestion, standardization, splitting and windowing.

Forecasting data is split chronologically, standardized with train-split
statistics only and windowed inside each split, so no window crosses a
split boundary. Classification data arrives as fixed-length row groups,
one integer label per group.

Standard deviations use the population convention (ddof=0). A constant
variate gets a standard deviation of 1 and is listed in the ingestion
report.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import field
from dataclasses import replace
from pathlib import Path

import numpy as np
import numpy.typing as npt
import pandas as pd

from simmtm.exceptions import ConfigError
from simmtm.exceptions import DimensionError
from simmtm.exceptions import EmptyInputError
from simmtm.exceptions import IngestionError
from simmtm.exceptions import InsufficientDataError
from simmtm.tensor import Array
from simmtm.tensor import Tensor

IntArray = npt.NDArray[np.int_]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CsvSchema:
    """
    How to read a CSV.

    Args:
        columns: Variate columns to keep, in order. None keeps every
            numeric column that is not the label or ignored.
        label_column: Name of the optional integer label column.
        ignore_columns: Columns dropped before parsing (timestamps).
    """

    columns: tuple[str, ...] | None = None
    label_column: str = "label"
    ignore_columns: tuple[str, ...] = ("date",)


@dataclass(frozen=True)
class RawDataset:
    """T rows of C variates, optionally labeled per row."""

    name: str
    columns: tuple[str, ...]
    rows: Array
    labels: IntArray | None = None

    def __post_init__(self) -> None:
        if self.rows.ndim != 2 or self.rows.shape[1] != len(self.columns):
            raise IngestionError(f"rows shape {self.rows.shape} does not match {len(self.columns)} columns")
        if self.labels is not None and self.labels.shape != (self.rows.shape[0],):
            raise IngestionError("one label per row is required")

    @property
    def length(self) -> int:
        return int(self.rows.shape[0])

    @property
    def channels(self) -> int:
        return int(self.rows.shape[1])

    @property
    def classes(self) -> tuple[int, ...]:
        return () if self.labels is None else tuple(int(k) for k in np.unique(self.labels))

    def slice_rows(self, start: int, stop: int) -> RawDataset:
        labels = None if self.labels is None else self.labels[start:stop]
        return replace(self, rows=self.rows[start:stop], labels=labels)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    val_fraction: float = 0.1
    test_fraction: float = 0.2
    chronological: bool = True

    def __post_init__(self) -> None:
        fractions = (self.train_fraction, self.val_fraction, self.test_fraction)
        if not all(0.0 < value < 1.0 for value in fractions):
            raise ConfigError(f"split fractions must lie in (0, 1), got {fractions}")
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {sum(fractions)}")

    def boundaries(self, total: int) -> tuple[int, int]:
        """End of train and end of validation, as row counts."""
        train_end = int(total * self.train_fraction)
        val_end = train_end + int(total * self.val_fraction)
        return train_end, val_end


@dataclass(frozen=True)
class Normalization:
    """Per-variate mean and standard deviation taken from the train split."""

    mean: Array
    std: Array

    @classmethod
    def fit(cls, rows: Array) -> Normalization:
        mean = rows.mean(axis=0)
        std = rows.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        return cls(mean=mean, std=std)

    def apply(self, rows: Array) -> Array:
        return (rows - self.mean) / self.std

    def invert(self, rows: Array) -> Array:
        return rows * self.std + self.mean


@dataclass(frozen=True)
class IngestionReport:
    name: str
    rows: int
    columns: tuple[str, ...]
    classes: tuple[int, ...] = ()
    constant_variates: tuple[str, ...] = ()

    def render(self) -> str:
        lines = [
            f"dataset: {self.name}",
            f"rows: {self.rows}",
            f"variates: {len(self.columns)} ({', '.join(self.columns)})",
        ]
        if self.classes:
            lines.append(f"classes: {len(self.classes)} ({', '.join(str(k) for k in self.classes)})")
        if self.constant_variates:
            lines.append(f"constant variates (stdev set to 1): {', '.join(self.constant_variates)}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SeriesBatch:
    """
    Windows [N, L, C] with their start rows and the normalization applied.

    `channels` is the original channel count when the batch was produced by
    `flatten_channels`, else None.
    """

    values: Tensor
    origin: IntArray
    normalization: Normalization | None = None
    channels: int | None = field(default=None)

    @property
    def size(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]

    def take(self, indices: Sequence[int] | IntArray) -> SeriesBatch:
        index = np.asarray(indices, dtype=int)
        return replace(self, values=Tensor(self.values.values[index]), origin=self.origin[index])


@dataclass(frozen=True)
class ForecastData:
    train: tuple[SeriesBatch, Tensor]
    val: tuple[SeriesBatch, Tensor]
    test: tuple[SeriesBatch, Tensor]
    normalization: Normalization
    report: IngestionReport


@dataclass(frozen=True)
class ClassifyData:
    train: tuple[SeriesBatch, IntArray]
    val: tuple[SeriesBatch, IntArray]
    test: tuple[SeriesBatch, IntArray]
    classes: int
    report: IngestionReport


def load_csv(path: str | Path, schema: CsvSchema | None = None) -> RawDataset:
    """
    Parse a header-first, comma-separated UTF-8 CSV of reals.

    Raises:
        simmtm.exceptions.EmptyInputError: No data rows.
        simmtm.exceptions.IngestionError: A cell is missing or not a number;
            `row` is the 1-based data row (header excluded), `column` the
            1-based column in the file.
    """
    schema = schema or CsvSchema()
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError as err:
        raise EmptyInputError(f"'{path}' is empty") from err
    if frame.empty:
        raise EmptyInputError(f"'{path}' has a header but no data rows")

    header = [str(name).strip() for name in frame.columns]
    frame.columns = header
    label_name = schema.label_column if schema.label_column in header else None
    if schema.columns is not None:
        missing = [name for name in schema.columns if name not in header]
        if missing:
            raise IngestionError(f"'{path}' lacks columns {missing}")
        variates = list(schema.columns)
    else:
        variates = [
            name for name in header if name != label_name and name not in schema.ignore_columns
        ]
    if not variates:
        raise IngestionError(f"'{path}' has no variate columns")

    parsed = {name: _parse_column(frame[name], header.index(name) + 1) for name in variates}
    rows = np.column_stack([parsed[name] for name in variates])

    labels = None
    if label_name is not None:
        label_values = _parse_column(frame[label_name], header.index(label_name) + 1)
        if not np.all(label_values == np.round(label_values)):
            raise IngestionError(f"'{path}' label column holds non-integer values")
        labels = label_values.astype(int)

    dataset = RawDataset(name=path.stem, columns=tuple(variates), rows=rows, labels=labels)
    logger.info("ingested '%s': %d rows, %d variates", path, dataset.length, dataset.channels)
    return dataset


def _parse_column(column: pd.Series, position: int) -> Array:  # type: ignore[type-arg]
    text = column.astype(str).str.strip()
    numbers = pd.to_numeric(text, errors="coerce")
    bad = numbers.isna() | ~np.isfinite(numbers.to_numpy(dtype=np.float64, na_value=np.nan))
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        cell = text.iloc[row]
        what = "missing value" if cell == "" else f"cannot parse '{cell}'"
        raise IngestionError(f"{what} at row {row + 1}, column {position}", row=row + 1, column=position)
    return numbers.to_numpy(dtype=np.float64)


def ingestion_report(d: RawDataset) -> IngestionReport:
    """Summary of d; constant variates are judged on d itself."""
    flat = np.flatnonzero(d.rows.std(axis=0) == 0)
    constant = tuple(d.columns[k] for k in flat)
    return IngestionReport(
        name=d.name,
        rows=d.length,
        columns=d.columns,
        classes=d.classes,
        constant_variates=constant,
    )


def standardize(d: RawDataset, stats_from: RawDataset) -> tuple[RawDataset, Normalization]:
    """
    Scale every variate of d by the mean and population stdev of stats_from.

    Raises:
        simmtm.exceptions.EmptyInputError: stats_from has no rows.
    """
    if stats_from.length == 0:
        raise EmptyInputError("standardization needs a non-empty train split")
    normalization = Normalization.fit(stats_from.rows)
    flat = [d.columns[k] for k in np.flatnonzero(stats_from.rows.std(axis=0) == 0)]
    if flat:
        logger.warning("constant variates %s: stdev substituted by 1", flat)
    return replace(d, rows=normalization.apply(d.rows)), normalization


def destandardize(d: RawDataset, normalization: Normalization) -> RawDataset:
    return replace(d, rows=normalization.invert(d.rows))


def split_chronological(d: RawDataset, spec: SplitSpec) -> tuple[RawDataset, RawDataset, RawDataset]:
    train_end, val_end = spec.boundaries(d.length)
    return d.slice_rows(0, train_end), d.slice_rows(train_end, val_end), d.slice_rows(val_end, d.length)


def window_count(total: int, input_length: int, horizon: int, stride: int) -> int:
    return (total - input_length - horizon) // stride + 1


def make_windows(
    d: RawDataset,
    input_length: int,
    horizon: int,
    stride: int = 1,
    normalization: Normalization | None = None,
) -> tuple[SeriesBatch, Tensor]:
    """
    Slide [L inputs | O targets] windows over d with the given stride.

    Raises:
        simmtm.exceptions.InsufficientDataError: T < L + O.
    """
    if stride < 1:
        raise ConfigError(f"stride must be positive, got {stride}")
    if d.length < input_length + horizon:
        raise InsufficientDataError(
            f"'{d.name}' has {d.length} rows, windows need {input_length} + {horizon}"
        )

    starts = np.arange(window_count(d.length, input_length, horizon, stride)) * stride
    inputs = np.stack([d.rows[s : s + input_length] for s in starts])
    targets = np.stack([d.rows[s + input_length : s + input_length + horizon] for s in starts])
    batch = SeriesBatch(values=Tensor(inputs), origin=starts, normalization=normalization)
    return batch, Tensor(targets)


def flatten_channel_values(x: Tensor) -> Tensor:
    """[N, L, C] -> [N * C, L, 1]; row n * C + c holds variate c of sample n."""
    n, length, channels = x.shape
    return x.transpose(0, 2, 1).reshape(n * channels, length, 1)


def unflatten_channel_values(x: Tensor, channels: int) -> Tensor:
    """[N * C, T, 1] or [N * C, T] -> [N, T, C]; inverse of flatten_channel_values."""
    rows, length = x.shape[0], x.shape[1]
    if rows % channels:
        raise DimensionError(f"{rows} rows do not split into {channels} channels")
    return x.reshape(rows // channels, channels, length).transpose(0, 2, 1)


def flatten_channels(b: SeriesBatch) -> SeriesBatch:
    """[N, L, C] -> [N * C, L, 1]; row n * C + c is variate c of window n."""
    channels = b.values.shape[2]
    return replace(
        b,
        values=flatten_channel_values(b.values),
        origin=np.repeat(b.origin, channels),
        channels=channels,
    )


def unflatten_channels(b: SeriesBatch) -> SeriesBatch:
    if b.channels is None:
        return b
    return replace(
        b,
        values=unflatten_channel_values(b.values, b.channels),
        origin=b.origin[:: b.channels],
        channels=None,
    )


def prepare_forecast(
    raw: RawDataset,
    input_length: int,
    horizon: int,
    split: SplitSpec | None = None,
    stride: int = 1,
    eval_stride: int = 1,
) -> ForecastData:
    """Chronological split, train-only standardization, per-split windows."""
    split = split or SplitSpec()
    train, val, test = split_chronological(raw, split)
    if train.length == 0:
        raise InsufficientDataError(f"'{raw.name}' leaves no rows for the train split")
    _, normalization = standardize(train, train)

    def windows(part: RawDataset, step: int) -> tuple[SeriesBatch, Tensor]:
        scaled = replace(part, rows=normalization.apply(part.rows))
        return make_windows(scaled, input_length, horizon, step, normalization)

    return ForecastData(
        train=windows(train, stride),
        val=windows(val, eval_stride),
        test=windows(test, eval_stride),
        normalization=normalization,
        report=replace(ingestion_report(raw), constant_variates=ingestion_report(train).constant_variates),
    )


def segment_samples(d: RawDataset, sample_length: int) -> tuple[Array, IntArray]:
    """
    Cut d into consecutive fixed-length samples [n, L, C], one label each.

    Raises:
        simmtm.exceptions.IngestionError: Unlabeled data, a ragged tail, or a
            label that changes inside a sample.
    """
    if d.labels is None:
        raise IngestionError(f"'{d.name}' has no label column")
    if d.length % sample_length:
        raise IngestionError(f"'{d.name}' has {d.length} rows, not a multiple of {sample_length}")
    count = d.length // sample_length
    samples = d.rows.reshape(count, sample_length, d.channels)
    grouped = d.labels.reshape(count, sample_length)
    changed = np.flatnonzero((grouped != grouped[:, :1]).any(axis=1))
    if changed.size:
        raise IngestionError(f"label changes inside sample {int(changed[0])} of '{d.name}'")
    return samples, grouped[:, 0].copy()


def split_samples(
    samples: Array,
    labels: IntArray,
    spec: SplitSpec,
    seed: int,
) -> tuple[tuple[Array, IntArray], tuple[Array, IntArray], tuple[Array, IntArray]]:
    """Seeded shuffle, then fraction split (chronological=True keeps order)."""
    order = np.arange(len(labels))
    if not spec.chronological:
        order = np.random.default_rng(seed).permutation(len(labels))
    train_end, val_end = spec.boundaries(len(labels))
    parts = (order[:train_end], order[train_end:val_end], order[val_end:])
    return tuple((samples[part], labels[part]) for part in parts)  # type: ignore[return-value]


def prepare_classify(
    train: tuple[Array, IntArray],
    val: tuple[Array, IntArray],
    test: tuple[Array, IntArray],
    name: str = "classify",
    columns: tuple[str, ...] = (),
) -> ClassifyData:
    """
    Standardize all splits with train statistics and check label coverage.

    Labels are re-indexed to 0..K-1 in sorted order of the train classes;
    `report.classes` keeps the original values.

    Raises:
        simmtm.exceptions.ConfigError: A class of val/test is absent from train.
        simmtm.exceptions.InsufficientDataError: An empty split.
    """
    for label, (samples, _) in zip(("train", "val", "test"), (train, val, test)):
        if len(samples) == 0:
            raise InsufficientDataError(f"the {label} split of '{name}' holds no samples")

    train_classes = set(int(k) for k in np.unique(train[1]))
    for label, (_, labels) in (("val", val), ("test", test)):
        absent = sorted(set(int(k) for k in np.unique(labels)) - train_classes)
        if absent:
            raise ConfigError(f"classes {absent} of the {label} split are absent from the train split")
    if len(train_classes) < 2:
        raise ConfigError("classification needs at least 2 classes in the train split")
    known = np.array(sorted(train_classes))
    classes = len(known)

    channels = train[0].shape[2]
    normalization = Normalization.fit(train[0].reshape(-1, channels))

    def batch(part: tuple[Array, IntArray]) -> tuple[SeriesBatch, IntArray]:
        values = normalization.apply(part[0].reshape(-1, channels)).reshape(part[0].shape)
        origin = np.arange(len(part[1]))
        indices = np.searchsorted(known, part[1]).astype(np.int64)
        return SeriesBatch(values=Tensor(values), origin=origin, normalization=normalization), indices

    columns = columns or tuple(f"v{k}" for k in range(channels))
    report = IngestionReport(
        name=name,
        rows=int(sum(len(p[1]) for p in (train, val, test)) * train[0].shape[1]),
        columns=columns,
        classes=tuple(sorted(train_classes)),
    )
    return ClassifyData(train=batch(train), val=batch(val), test=batch(test), classes=classes, report=report)

