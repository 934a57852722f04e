"""Streaming mean / variance accumulation and standard errors."""
from __future__ import annotations

import math

import numpy as np


class RunningStats:
    """Single-pass mean and variance over chunks of scalars.

    Chunks are merged with Chan's pairwise update on values shifted by the
    first observation, so a constant stream yields its value exactly and a
    variance of exactly zero, and long streams do not suffer cancellation.
    """

    def __init__(self):
        self.count = 0
        self._shift = 0.0
        self._mean = 0.0  # mean of shifted values
        self._m2 = 0.0

    def push(self, values) -> None:
        x = np.asarray(values, dtype=float).ravel()
        if x.size == 0:
            return
        if self.count == 0:
            self._shift = float(x[0])
        dev = x - self._shift
        n_b = x.size
        mean_b = float(np.mean(dev))
        m2_b = float(np.sum((dev - mean_b) ** 2))
        n_a = self.count
        n = n_a + n_b
        delta = mean_b - self._mean
        self._mean += delta * n_b / n
        self._m2 += m2_b + delta * delta * n_a * n_b / n
        self.count = n

    @property
    def mean(self) -> float:
        return self._shift + self._mean if self.count else math.nan

    @property
    def variance(self) -> float:
        """Unbiased sample variance (``nan`` below two observations)."""
        return self._m2 / (self.count - 1) if self.count > 1 else math.nan

    @property
    def std_error(self) -> float:
        if self.count < 2:
            return math.nan
        return math.sqrt(max(self._m2, 0.0) / (self.count - 1) / self.count)


def batch_means_se(values, n_batches: int = 50) -> float:
    """Standard error of the mean from contiguous batch means.

    Accounts for serial correlation in Markov-chain output as long as each
    batch is much longer than the autocorrelation time.
    """
    x = np.asarray(values, dtype=float).ravel()
    n_batches = min(n_batches, x.size)
    if n_batches < 2:
        return math.nan
    size = x.size // n_batches
    means = x[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(np.std(means, ddof=1) / math.sqrt(n_batches))
