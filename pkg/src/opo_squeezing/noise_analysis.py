"""Stability analysis of sampled power readings.

Readings are normalized to fractional deviations from their mean and then
characterized by the overlapped Allan deviation and a Welch power spectral
density. Samples are treated as frequency-like data: the Allan estimator
works on the normalized readings directly, without integrating them to phase.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import signal

from .physics import DomainError


@dataclass
class TimeSeries:
    sample_rate: float
    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        if self.samples.ndim != 1 or self.samples.size < 2:
            raise ValueError("a time series needs at least two samples")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("time series contains non-finite samples")

    def __len__(self):
        return self.samples.size

    @property
    def base_interval(self) -> float:
        return 1.0 / self.sample_rate


class AllanPoint(NamedTuple):
    tau: float
    oadev: float
    num_terms: int


class PsdPoint(NamedTuple):
    frequency: float
    density: float


def normalize_fractional(series: TimeSeries) -> TimeSeries:
    """Return ``x/mean(x) - 1``."""
    mean = float(np.mean(series.samples))
    if mean == 0.0:
        raise DomainError("cannot normalize a zero-mean series")
    y = series.samples / mean - 1.0
    # remove the rounding residue so the output mean is zero to machine precision
    y -= np.mean(y)
    return TimeSeries(series.sample_rate, y)


def default_taus(n_samples: int) -> list[int]:
    """Averaging factors 1, 2, 5, 10, 20, 50, ... up to ``n_samples // 3``."""
    out = []
    decade = 1
    limit = n_samples // 3
    while decade <= limit:
        for k in (1, 2, 5):
            m = k * decade
            if m <= limit:
                out.append(m)
        decade *= 10
    return out


def oadev(series: TimeSeries, taus: Sequence[int] | None = None) -> list[AllanPoint]:
    """Overlapped Allan deviation of fractional (frequency-like) data.

    ``taus`` are integer multiples ``m`` of the sampling interval. For each,

        sigma^2 = sum_j (sum_{i=j}^{j+m-1} (y[i+m] - y[i]))^2 / (2 m^2 (N - 2m + 1))

    with ``j = 0 .. N-2m``. Factors needing more than ``N`` samples
    (``N < 2m + 1``) are skipped with a warning.
    """
    y = series.samples
    n = y.size
    if taus is None:
        taus = default_taus(n)
    out = []
    skipped = []
    for m in taus:
        m = int(m)
        if m < 1:
            raise ValueError("averaging factors must be positive integers")
        if n < 2 * m + 1:
            skipped.append(m)
            continue
        d = y[m:] - y[:-m]
        c = np.concatenate(([0.0], np.cumsum(d)))
        inner = c[m:] - c[:-m]
        terms = n - 2 * m + 1
        var = float(inner @ inner) / (2.0 * m * m * terms)
        out.append(AllanPoint(m / series.sample_rate, math.sqrt(var), terms))
    if skipped:
        warnings.warn(f"series of {n} samples too short for averaging factors {skipped}; omitted", stacklevel=2)
    return out


def default_segment_length(n_samples: int) -> int:
    if n_samples < 64:
        return n_samples
    return 2 ** int(math.floor(math.log2(n_samples / 8)))


_WINDOWS = {"hann": "hann", "rectangular": "boxcar"}


def welch_psd(
    series: TimeSeries,
    segment_length: int | None = None,
    overlap_fraction: float = 0.5,
    window: str = "hann",
) -> list[PsdPoint]:
    """One-sided Welch power spectral density in (input units)^2/Hz.

    Each segment has its mean removed. The window power is normalized so
    that white noise of variance s^2 reads ``2*s^2/fs`` away from DC and
    Nyquist, and the density integrates to the series variance.
    """
    n = len(series)
    nseg = default_segment_length(n) if segment_length is None else int(segment_length)
    if nseg < 2:
        raise ValueError("segment_length must be at least 2")
    if nseg > n:
        raise ValueError(f"segment_length {nseg} longer than the series ({n} samples)")
    if not 0.0 <= overlap_fraction <= 0.9:
        raise ValueError("overlap_fraction must lie in [0, 0.9]")
    if window not in _WINDOWS:
        raise ValueError(f"window must be one of {sorted(_WINDOWS)}")
    f, pxx = signal.welch(
        series.samples,
        fs=series.sample_rate,
        window=_WINDOWS[window],
        nperseg=nseg,
        noverlap=int(round(overlap_fraction * nseg)),
        detrend="constant",
        scaling="density",
        return_onesided=True,
    )
    return [PsdPoint(float(a), float(b)) for a, b in zip(f, pxx)]
