"""Cross-correlograms, inter-arrival summaries and paired bootstrap comparisons."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..linksim import InterArrivalSummary, interarrival_stats

UNDEFINED = float("nan")


@dataclass(frozen=True)
class Correlogram:
    lags: np.ndarray
    values: np.ndarray  # NaN where an overlap has zero variance

    def argmax(self) -> int:
        """Lag with the largest correlation; ties go to the smallest |lag|."""
        vals = np.where(np.isnan(self.values), -np.inf, self.values)
        best = np.flatnonzero(vals == vals.max())
        return int(self.lags[best[np.argmin(np.abs(self.lags[best]))]])

    def at(self, lag: int) -> float:
        return float(self.values[int(lag) + len(self.lags) // 2])


def cross_correlation(x: Sequence[float], y: Sequence[float], max_lag: int) -> Correlogram:
    """Pearson correlation of ``(x[t], y[t + k])`` for ``k`` in ``[-max_lag, max_lag]``.

    Means and variances are taken over each lag's overlap only.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("series must be 1-D and of equal length")
    if max_lag < 0 or len(x) <= max_lag:
        raise ValueError("series must be longer than max_lag")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("series must be finite")
    n = len(x)
    lags = np.arange(-max_lag, max_lag + 1)
    values = np.empty(len(lags))
    for j, k in enumerate(lags):
        if k >= 0:
            a, b = x[:n - k], y[k:]
        else:
            a, b = x[-k:], y[:n + k]
        da = a - a.mean()
        db = b - b.mean()
        saa = da @ da
        sbb = db @ db
        if saa <= 0.0 or sbb <= 0.0:
            values[j] = UNDEFINED
        else:
            values[j] = float(np.clip((da @ db) / np.sqrt(saa * sbb), -1.0, 1.0))
    return Correlogram(lags, values)


def interarrival_summary(arrivals: Sequence[int]) -> InterArrivalSummary:
    return interarrival_stats(arrivals)


def paired_bootstrap(a: Sequence[float], b: Sequence[float], resamples: int = 10_000,
                     seed: int = 0) -> float:
    """One-sided p-value for ``mean(a - b) > 0`` by resampling paired differences.

    The p-value is the fraction of resampled mean differences that are
    ``<= 0``.
    """
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if d.ndim != 1 or d.size == 0:
        raise ValueError("need paired, non-empty samples")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, d.size, size=(resamples, d.size))
    means = d[idx].mean(axis=1)
    return float(np.mean(means <= 0.0))


def final_quarter_mean(values: Sequence[float]) -> float:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("empty learning curve")
    q = max(1, v.size // 4)
    return float(v[-q:].mean())
