"""Return-series primitives: log returns, summary statistics, correlation.

Everything here is a pure function of its inputs. Correlation matrices are
built pairwise and mirrored so the result is exactly symmetric with an exact
unit diagonal (BLAS matrix products do not guarantee bitwise symmetry).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import DataError

ArrayLike = Union[np.ndarray, Sequence[float], "ReturnSeries"]


@dataclass
class ReturnSeries:
    """A labelled one-dimensional series of decimal returns."""

    label: str
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise DataError(f"series {self.label!r} must be one-dimensional")
        if self.values.size < 2:
            raise DataError(f"series {self.label!r} needs at least 2 observations")
        if not np.all(np.isfinite(self.values)):
            raise DataError(f"series {self.label!r} contains non-finite values")

    @property
    def n(self) -> int:
        return int(self.values.size)


@dataclass
class SummaryStats:
    """Sample mean and standard deviation (n - 1 divisor)."""

    mean: float
    sd: float


@dataclass
class CorrelationMatrix:
    """Pearson correlations for a labelled set of series."""

    labels: list[str]
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        k = len(self.labels)
        if self.values.shape != (k, k):
            raise DataError("correlation matrix shape does not match labels")

    def entry(self, a: str, b: str) -> float:
        return float(self.values[self.labels.index(a), self.labels.index(b)])


def _values(series: ArrayLike) -> np.ndarray:
    if isinstance(series, ReturnSeries):
        return series.values
    arr = np.asarray(series, dtype=float)
    if arr.ndim != 1:
        raise DataError("expected a one-dimensional series")
    return arr


def log_returns(prices: ArrayLike, label: str = "returns") -> ReturnSeries:
    """Continuously compounded returns ln(p_t / p_{t-1}).

    Output is one element shorter than the input. Prices must be strictly
    positive and there must be at least three of them so the result is a
    usable series.
    """
    p = _values(prices)
    if p.size < 3:
        raise DataError("log_returns needs at least 3 prices")
    if not np.all(np.isfinite(p)) or np.any(p <= 0.0):
        raise DataError("prices must be finite and strictly positive")
    return ReturnSeries(label, np.diff(np.log(p)))


def summary_stats(series: ArrayLike) -> SummaryStats:
    """Sample mean and sample standard deviation (n - 1 divisor)."""
    x = _values(series)
    if x.size < 2:
        raise DataError("summary_stats needs at least 2 observations")
    if not np.all(np.isfinite(x)):
        raise DataError("summary_stats input contains non-finite values")
    return SummaryStats(mean=float(np.mean(x)), sd=float(np.std(x, ddof=1)))


def correlation_matrix(series_list: Sequence[ReturnSeries]) -> CorrelationMatrix:
    """Pairwise Pearson correlations of equally long labelled series.

    A zero-variance series makes the coefficient undefined; the offending
    label is named in the error.
    """
    if len(series_list) < 2:
        raise DataError("correlation_matrix needs at least 2 series")
    labels = [s.label for s in series_list]
    if len(set(labels)) != len(labels):
        raise DataError("correlation_matrix labels must be unique")
    n = series_list[0].n
    for s in series_list:
        if s.n != n:
            raise DataError(f"series {s.label!r} length {s.n} != {n}")
    centered = []
    for s in series_list:
        c = s.values - np.mean(s.values)
        ss = float(np.dot(c, c))
        if ss == 0.0:
            raise DataError(f"series {s.label!r} has zero variance")
        centered.append((c, np.sqrt(ss)))
    k = len(series_list)
    out = np.eye(k)
    for i in range(k):
        ci, ni = centered[i]
        for j in range(i + 1, k):
            cj, nj = centered[j]
            r = float(np.dot(ci, cj) / (ni * nj))
            # rounding can push |r| a hair past 1 for collinear inputs
            r = min(1.0, max(-1.0, r))
            out[i, j] = r
            out[j, i] = r
    return CorrelationMatrix(labels=labels, values=out)
