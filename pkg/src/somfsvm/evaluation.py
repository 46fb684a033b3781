"""NMSE, MAE and directional symmetry over actual/predicted sequences."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParameterError

CSV_HEADER = "stock,model,nmse,mae,ds,n"


def _pair(actual, predicted, min_len):
    a = np.asarray(actual, dtype=float).reshape(-1)
    p = np.asarray(predicted, dtype=float).reshape(-1)
    if a.size != p.size:
        raise ParameterError(f"length mismatch: {a.size} actual vs {p.size} predicted")
    if a.size < min_len:
        raise ParameterError(f"need at least {min_len} samples, got {a.size}")
    return a, p


def nmse(actual, predicted) -> float:
    """Squared error normalized by the sample variance (n-1) of ``actual``."""
    a, p = _pair(actual, predicted, 2)
    n = a.size
    spread = np.sum((a - a.mean()) ** 2)
    if not spread > 0:
        raise DataError("actual values have zero variance")
    # ratio first so a mean predictor gives (n-1)/n bit-for-bit
    return float(np.sum((a - p) ** 2) / spread * (n - 1) / n)


def mae(actual, predicted) -> float:
    a, p = _pair(actual, predicted, 1)
    return float(np.mean(np.abs(a - p)))


def ds(actual, predicted) -> float:
    """Percentage of steps whose actual and predicted changes do not disagree
    in sign. Averaged over the n-1 steps that have a predecessor."""
    a, p = _pair(actual, predicted, 2)
    hits = np.diff(a) * np.diff(p) >= 0
    return float(100.0 * hits.mean())


@dataclass(frozen=True)
class MetricReport:
    nmse: float
    mae: float
    ds: float
    n: int

    def __post_init__(self):
        if self.nmse < 0 or self.mae < 0 or not 0 <= self.ds <= 100:
            raise ParameterError("metric values out of range")

    def csv_row(self, stock: str, model: str = "SOM+f-SVM") -> str:
        return f"{stock},{model},{self.nmse:.6f},{self.mae:.6f},{self.ds:.4f},{self.n}"


def report(actual, predicted) -> MetricReport:
    return MetricReport(nmse(actual, predicted), mae(actual, predicted), ds(actual, predicted), len(actual))
