"""Price ingestion and RDP feature construction.

Inputs per trading day ``i`` (raw closes ``P``):

    x1 = P(i) - EMA100(i)
    x2..x5 = RDP-5, RDP-10, RDP-15, RDP-20 = (P(i) - P(i-d)) / P(i-d) * 100

Target, computed on the 3-day EMA of the close ``Q``:

    y = RDP+5 = (Q(i+5) - Q(i)) / Q(i) * 100
"""
from __future__ import annotations

import csv
import datetime as dt
import hashlib
import io
import math
from dataclasses import dataclass, field, replace
from typing import BinaryIO, Iterable, Optional, Union

import numpy as np

from .errors import DataError, FormatError, ParameterError

FEATURE_NAMES = ("x1", "x2", "x3", "x4", "x5")
LOOKBACKS = (5, 10, 15, 20)
EMA_LONG = 100
EMA_TARGET = 3
HORIZON = 5
# first usable day (0-based) is the 101st; last needs HORIZON days ahead
MIN_SERIES_LENGTH = EMA_LONG + HORIZON + 1


@dataclass(frozen=True)
class PriceSeries:
    dates: tuple
    closes: np.ndarray

    def __post_init__(self):
        closes = np.asarray(self.closes, dtype=float)
        object.__setattr__(self, "closes", closes)
        object.__setattr__(self, "dates", tuple(self.dates))
        if len(self.dates) != len(closes):
            raise ParameterError("dates and closes differ in length")
        for a, b in zip(self.dates, self.dates[1:]):
            if not a < b:
                raise DataError(f"dates not strictly increasing at {b}")
        bad = np.flatnonzero(~(closes > 0) | ~np.isfinite(closes))
        if bad.size:
            raise DataError(f"non-positive close on {self.dates[bad[0]]}")

    def __len__(self):
        return len(self.closes)

    @property
    def entries(self):
        return list(zip(self.dates, self.closes.tolist()))

    @classmethod
    def from_closes(cls, closes, start=dt.date(2000, 1, 3)):
        """Attach consecutive business-day dates to a bare price array."""
        closes = np.asarray(closes, dtype=float)
        dates = np.busday_offset(np.datetime64(start, "D"), np.arange(len(closes)), roll="forward")
        return cls(tuple(d.item() for d in dates), closes)


@dataclass(frozen=True)
class FeatureRecord:
    date: dt.date
    x1: float
    x2: float
    x3: float
    x4: float
    x5: float
    y: float

    @property
    def inputs(self):
        return np.array([self.x1, self.x2, self.x3, self.x4, self.x5])


@dataclass(frozen=True)
class Scaling:
    """Per-input z-score parameters."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        std = np.asarray(self.std, dtype=float)
        if mean.shape != std.shape or mean.ndim != 1:
            raise ParameterError("mean and std must be 1-D arrays of equal length")
        if np.any(~(std > 0)):
            raise ParameterError("every stddev must be > 0")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def dim(self):
        return self.mean.size

    def transform(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.dim:
            raise ParameterError(f"expected {self.dim} inputs, got {X.shape[-1]}")
        return (X - self.mean) / self.std

    def inverse(self, Z):
        return np.asarray(Z, dtype=float) * self.std + self.mean


@dataclass(frozen=True)
class FeatureDataset:
    dates: tuple
    X: np.ndarray
    y: np.ndarray
    scaling: Optional[Scaling] = field(default=None)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        X = X.reshape(0, len(FEATURE_NAMES)) if X.size == 0 else np.atleast_2d(X)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.shape[0] != y.shape[0] or len(self.dates) != y.shape[0]:
            raise ParameterError("dates, X and y must have the same length")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataError("feature records must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "dates", tuple(self.dates))

    def __len__(self):
        return self.y.shape[0]

    @property
    def dim(self):
        return self.X.shape[1]

    @property
    def records(self):
        return [
            FeatureRecord(d, *map(float, row), y=float(t))
            for d, row, t in zip(self.dates, self.X, self.y)
        ]

    def subset(self, index):
        index = np.asarray(index, dtype=int)
        return FeatureDataset(
            tuple(self.dates[i] for i in index), self.X[index], self.y[index], self.scaling
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("date",) + FEATURE_NAMES + ("y",))
        for d, row, t in zip(self.dates, self.X, self.y):
            w.writerow([d.isoformat(), *(repr(float(v)) for v in row), repr(float(t))])
        return buf.getvalue()

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_csv().encode("utf-8")).hexdigest()


def _text(source) -> str:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source).decode("utf-8-sig")
    if isinstance(source, str):
        return source
    data = source.read()
    return data.decode("utf-8-sig") if isinstance(data, bytes) else data


def parse_price_csv(source: Union[BinaryIO, bytes, str]) -> PriceSeries:
    """Read a Yahoo-style daily CSV; only ``Date`` and ``Close`` are used."""
    reader = csv.reader(io.StringIO(_text(source)))
    header = next(reader, None)
    if header is None:
        raise FormatError("empty input: no header row")
    header = [h.strip() for h in header]
    if "Date" not in header or "Close" not in header:
        raise FormatError(f"header must contain Date and Close columns, got {header}")
    i_date, i_close = header.index("Date"), header.index("Close")

    rows = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) <= max(i_date, i_close):
            raise FormatError(f"line {lineno}: too few columns")
        raw_date, raw_close = row[i_date].strip(), row[i_close].strip()
        try:
            day = dt.date.fromisoformat(raw_date)
        except ValueError:
            raise DataError(f"line {lineno}: unparseable date {raw_date!r}") from None
        try:
            close = float(raw_close)
        except ValueError:
            raise DataError(f"{day}: unparseable close {raw_close!r}") from None
        if not (close > 0) or not math.isfinite(close):
            raise DataError(f"{day}: close must be positive, got {raw_close}")
        if day in rows:
            raise DataError(f"duplicate date {day}")
        rows[day] = close
    if not rows:
        raise DataError("no price rows after header")
    days = sorted(rows)
    return PriceSeries(tuple(days), np.array([rows[d] for d in days]))


def read_price_csv(path) -> PriceSeries:
    with open(path, "rb") as fh:
        return parse_price_csv(fh)


def ema(series: Iterable[float], m: int) -> np.ndarray:
    """Exponential moving average, alpha = 2/(m+1), seeded with the first value."""
    if int(m) != m or m < 1:
        raise ParameterError(f"EMA window must be a positive integer, got {m}")
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        raise ParameterError("EMA of an empty series")
    alpha = 2.0 / (m + 1)
    out = np.empty_like(x)
    acc = x[0]
    out[0] = acc
    for t in range(1, x.size):
        acc = alpha * x[t] + (1.0 - alpha) * acc
        out[t] = acc
    return out


def build_features(series: PriceSeries) -> FeatureDataset:
    n = len(series)
    if n < MIN_SERIES_LENGTH:
        raise DataError(
            f"series has {n} prices; at least {MIN_SERIES_LENGTH} are needed"
        )
    P = series.closes
    idx = np.arange(EMA_LONG, n - HORIZON)
    long_ema = ema(P, EMA_LONG)
    smooth = ema(P, EMA_TARGET)

    cols = [P[idx] - long_ema[idx]]
    for d in LOOKBACKS:
        cols.append((P[idx] - P[idx - d]) / P[idx - d] * 100.0)
    X = np.column_stack(cols)
    y = (smooth[idx + HORIZON] - smooth[idx]) / smooth[idx] * 100.0
    return FeatureDataset(tuple(series.dates[i] for i in idx), X, y)


def fit_scaling(dataset: FeatureDataset, unit_if_constant: bool = False) -> Scaling:
    """Sample mean and (n-1) standard deviation of every input.

    A constant input raises :class:`DataError` unless ``unit_if_constant``,
    in which case its stddev is taken as 1 (the input is only centred).
    """
    if len(dataset) < 2:
        raise DataError("need at least two records to fit scaling")
    mean = dataset.X.mean(axis=0)
    std = dataset.X.std(axis=0, ddof=1)
    for k, s in enumerate(std):
        if not s > 0:
            if unit_if_constant:
                std[k] = 1.0
                continue
            name = FEATURE_NAMES[k] if k < len(FEATURE_NAMES) else f"dim {k}"
            raise DataError(f"input {name} has zero variance")
    return Scaling(mean, std)


def apply_scaling(dataset: FeatureDataset, scaling: Scaling) -> FeatureDataset:
    if scaling.dim != dataset.dim:
        raise ParameterError(
            f"scaling has {scaling.dim} dimensions, dataset has {dataset.dim}"
        )
    return replace(dataset, X=scaling.transform(dataset.X), scaling=scaling)


def split_train_test(dataset: FeatureDataset, n_test: int):
    """Chronological hold-out: the last ``n_test`` records form the test set."""
    n = len(dataset)
    if not 0 < n_test < n:
        raise ParameterError(f"n_test must be in (0, {n}), got {n_test}")
    cut = n - n_test
    return dataset.subset(np.arange(cut)), dataset.subset(np.arange(cut, n))


def parse_feature_csv(source) -> FeatureDataset:
    """Inverse of :meth:`FeatureDataset.to_csv`; ``y`` may be absent (set to 0)."""
    reader = csv.reader(io.StringIO(_text(source)))
    header = next(reader, None)
    if header is None:
        raise FormatError("empty input: no header row")
    header = [h.strip() for h in header]
    missing = [c for c in FEATURE_NAMES if c not in header]
    if missing:
        raise FormatError(f"feature CSV lacks columns {missing}")
    cols = [header.index(c) for c in FEATURE_NAMES]
    i_y = header.index("y") if "y" in header else None
    i_date = header.index("date") if "date" in header else None
    dates, X, y = [], [], []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            X.append([float(row[c]) for c in cols])
            y.append(float(row[i_y]) if i_y is not None else 0.0)
            if i_date is not None:
                dates.append(dt.date.fromisoformat(row[i_date].strip()))
            else:
                dates.append(dt.date.fromordinal(lineno))
        except (ValueError, IndexError) as exc:
            raise DataError(f"line {lineno}: {exc}") from None
    if not y:
        raise DataError("no feature rows after header")
    return FeatureDataset(tuple(dates), np.array(X), np.array(y))


def read_feature_csv(path) -> FeatureDataset:
    with open(path, "rb") as fh:
        return parse_feature_csv(fh)
