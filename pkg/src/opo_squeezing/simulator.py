"""Seeded synthetic measurements used as ground truth for the estimators.

Random numbers come from the Philox4x64-10 counter-based generator keyed
directly with the 64-bit seed (counter starting at zero). Uniforms take the
top 53 bits of each raw 64-bit word, ``u = (w >> 11 + 0.5) * 2**-53``, and
Gaussians are produced pairwise by Box-Muller, ``r*cos`` first then
``r*sin``. The same seed and configuration therefore give bit-identical
output wherever numpy's Philox bit stream is available.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .estimation import GainMeasurement, add_electronic_noise
from .noise_analysis import TimeSeries
from .opo_model import OpoModelParams, Quadrature, SpectrumTrace, parametric_gain, quadrature_variance
from .physics import DomainError, ratio_from_db

MAX_VBW_SMOOTHING = 250.0
_TWO_POW_53 = float(2**53)


class SeededStream:
    """Deterministic uniform and Gaussian variates from a 64-bit seed."""

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = seed
        self._bits = np.random.Philox(key=np.array([seed, 0], dtype=np.uint64))

    def raw(self, n: int) -> np.ndarray:
        return self._bits.random_raw(n)

    def uniform(self, n: int) -> np.ndarray:
        """Uniform variates on the open interval (0, 1)."""
        w = self.raw(n)
        return ((w >> np.uint64(11)).astype(np.float64) + 0.5) / _TWO_POW_53

    def normal(self, n: int) -> np.ndarray:
        if n <= 0:
            return np.empty(0)
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs)
        radius = np.sqrt(-2.0 * np.log(u[0::2]))
        angle = 2.0 * np.pi * u[1::2]
        out = np.empty(2 * pairs)
        out[0::2] = radius * np.cos(angle)
        out[1::2] = radius * np.sin(angle)
        return out[:n]


@dataclass(frozen=True)
class Spur:
    frequency: float
    height_db: float
    width: float = 1e6  # Gaussian standard deviation in Hz


@dataclass(frozen=True)
class SpectrumAnalyzerConfig:
    rbw: float = 300e3
    vbw: float = 300.0
    trace_averages: float = 100
    electronic_noise_rel_shot: float = 0.0
    spurs: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not self.rbw > 0 or not self.vbw > 0:
            raise ValueError("rbw and vbw must be positive")
        if not self.trace_averages >= 1:
            raise ValueError("trace_averages must be at least 1 (math.inf disables noise)")
        if not 0.0 <= self.electronic_noise_rel_shot < 1.0:
            raise ValueError("electronic noise must lie in [0, 1)")
        object.__setattr__(self, "spurs", tuple(self.spurs))

    @property
    def smoothing_factor(self) -> float:
        return min(max(1.0, self.rbw / (2.0 * self.vbw)), MAX_VBW_SMOOTHING)

    @property
    def relative_noise(self) -> float:
        """Relative standard deviation of one averaged trace point."""
        if math.isinf(self.trace_averages):
            return 0.0
        return 1.0 / math.sqrt(self.trace_averages * self.smoothing_factor)


NOISELESS_ANALYZER = SpectrumAnalyzerConfig(trace_averages=math.inf)

# 300 kHz RBW / 300 Hz VBW, 100 averages, electronics 22 dB below shot noise.
# Spurs: 40 MHz pilot tone, 80 and 100 MHz modulation pick-up; a tone seen
# through the RBW filter is about one RBW wide.
REFERENCE_ANALYZER = SpectrumAnalyzerConfig(
    rbw=300e3,
    vbw=300.0,
    trace_averages=100,
    electronic_noise_rel_shot=ratio_from_db(-22.0),
    spurs=(
        Spur(40e6, 10.0, 300e3),
        Spur(80e6, 6.0, 300e3),
        Spur(100e6, 6.0, 300e3),
    ),
)


def gen_gain_data(
    threshold: float,
    powers: Sequence[float],
    power_fractional_error: float,
    seed: int,
) -> list[GainMeasurement]:
    """Gains at jittered pump powers, recorded at the nominal powers.

    The true power of point ``i`` is ``P_i * (1 + err * z)``. A draw that
    would put a point at or above threshold (or below zero) is replaced by the
    next variate of the stream.
    """
    powers = np.asarray(powers, dtype=float)
    if np.any(powers >= threshold):
        raise DomainError("all nominal powers must be below threshold")
    if np.any(powers < 0):
        raise DomainError("powers must be non-negative")
    stream = SeededStream(seed)
    true_p = powers.copy()
    if power_fractional_error > 0:
        z = stream.normal(powers.size)
        for i, p in enumerate(powers):
            while True:
                trial = p * (1.0 + power_fractional_error * z[i])
                if 0.0 <= trial < threshold:
                    break
                z[i] = stream.normal(1)[0]
            true_p[i] = trial
    gains = np.atleast_1d(parametric_gain(true_p, threshold))
    return [
        GainMeasurement(float(p), float(g), float(power_fractional_error))
        for p, g in zip(powers, gains)
    ]


def _measure(true_variance, frequencies, sa: SpectrumAnalyzerConfig, stream: SeededStream):
    v = add_electronic_noise(np.asarray(true_variance, dtype=float), sa.electronic_noise_rel_shot)
    bump_db = np.zeros_like(v)
    for spur in sa.spurs:
        bump_db += spur.height_db * np.exp(-0.5 * ((frequencies - spur.frequency) / spur.width) ** 2)
    v = v * ratio_from_db(bump_db)
    sigma = sa.relative_noise
    if sigma > 0:
        # log-normal keeps every point positive; relative std ~ sigma
        v = v * np.exp(sigma * stream.normal(v.size))
    return v


def gen_spectrum_trace(
    params: OpoModelParams,
    pump_power: float,
    grid: Sequence[float],
    quadrature,
    sa: SpectrumAnalyzerConfig = REFERENCE_ANALYZER,
    seed: int = 0,
) -> SpectrumTrace:
    """One averaged spectrum-analyzer trace, normalized to shot noise.

    The returned variances still contain the electronic noise floor; remove
    it with :func:`opo_squeezing.estimation.correct_trace`.
    """
    quadrature = Quadrature.parse(quadrature)
    f = np.asarray(grid, dtype=float)
    true_v = np.atleast_1d(quadrature_variance(params, pump_power, f, quadrature))
    v = _measure(true_v, f, sa, SeededStream(seed))
    meta = {
        "rbw_hz": sa.rbw,
        "vbw_hz": sa.vbw,
        "averages": sa.trace_averages,
        "electronic_noise_rel_shot": sa.electronic_noise_rel_shot,
    }
    return SpectrumTrace(pump_power=pump_power, quadrature=quadrature, frequencies=f, variances=v, metadata=meta)


def gen_power_sweep(
    params: OpoModelParams,
    powers: Sequence[float],
    sideband_frequency: float,
    sa: SpectrumAnalyzerConfig = REFERENCE_ANALYZER,
    seed: int = 0,
    power_fractional_error: float = 0.0,
):
    """Zero-span readings of both quadratures versus pump power.

    Returns ``(squeezed, antisqueezed)`` lists of ``(nominal_power, variance)``,
    variances including the electronic floor. Draw order per power: optional
    power jitter, squeezed reading, anti-squeezed reading.
    """
    stream = SeededStream(seed)
    f = np.array([float(sideband_frequency)])
    sq, asq = [], []
    for p in powers:
        p = float(p)
        p_true = p
        if power_fractional_error > 0:
            while True:
                p_true = p * (1.0 + power_fractional_error * stream.normal(1)[0])
                if 0.0 <= p_true < params.threshold_power:
                    break
        for quad, out in ((Quadrature.SQUEEZED, sq), (Quadrature.ANTISQUEEZED, asq)):
            v = quadrature_variance(params, p_true, f, quad)
            out.append((p, float(_measure(v, f, sa, stream)[0])))
    return sq, asq


def gen_polarization_noise(
    duration: float,
    sample_rate: float,
    white_std: float,
    random_walk_step: float,
    seed: int,
) -> TimeSeries:
    """Power readings ``1 + white + random walk`` sampled at ``sample_rate``.

    A phenomenological stand-in for polarization drift after fibre
    components: all white variates are drawn first, then the walk steps.
    """
    n = int(round(duration * sample_rate))
    if n < 10:
        raise ValueError("duration * sample_rate must give at least 10 samples")
    stream = SeededStream(seed)
    white = stream.normal(n) * white_std
    walk = np.cumsum(stream.normal(n) * random_walk_step)
    return TimeSeries(sample_rate, 1.0 + white + walk)
