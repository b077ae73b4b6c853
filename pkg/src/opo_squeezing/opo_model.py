"""Below-threshold OPO: classical parametric gain and detected quadrature variance.

Variances are linear and normalized to shot noise (vacuum = 1). The cavity
linewidth is stored as an ordinary-frequency FWHM; only the ratio
``sideband_frequency / fwhm`` enters the model, so the 2*pi factors cancel.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .physics import DomainError, db_from_ratio

PHASE_NOISE_VALIDITY_LIMIT = 0.1  # rad


class PhaseNoiseValidityWarning(UserWarning):
    """The small-phase-noise approximation is being used outside its range."""


class Quadrature(str, enum.Enum):
    SQUEEZED = "squeezed_minus"
    ANTISQUEEZED = "antisqueezed_plus"

    @classmethod
    def parse(cls, value) -> "Quadrature":
        if isinstance(value, cls):
            return value
        v = str(value).strip().lower()
        aliases = {
            "-": cls.SQUEEZED, "minus": cls.SQUEEZED, "squeezed": cls.SQUEEZED, "sqz": cls.SQUEEZED,
            "+": cls.ANTISQUEEZED, "plus": cls.ANTISQUEEZED, "antisqueezed": cls.ANTISQUEEZED,
            "anti-squeezed": cls.ANTISQUEEZED, "asqz": cls.ANTISQUEEZED,
        }
        if v in aliases:
            return aliases[v]
        return cls(v)


@dataclass(frozen=True)
class OpoModelParams:
    threshold_power: float
    fwhm_bandwidth: float
    total_efficiency: float
    phase_noise_rms: float = 0.0

    def __post_init__(self):
        if not self.threshold_power > 0:
            raise DomainError("threshold_power must be positive")
        if not self.fwhm_bandwidth > 0:
            raise DomainError("fwhm_bandwidth must be positive")
        if not 0.0 < self.total_efficiency <= 1.0:
            raise DomainError("total_efficiency must lie in (0, 1]")
        if not 0.0 <= self.phase_noise_rms < math.pi / 2:
            raise DomainError("phase_noise_rms must lie in [0, pi/2)")


# Reference operating parameters of the compact 1550 nm source.
REFERENCE_PARAMS = OpoModelParams(
    threshold_power=5.12e-3,
    fwhm_bandwidth=66e6,
    total_efficiency=0.92,
    phase_noise_rms=0.019,
)


@dataclass
class SpectrumTrace:
    pump_power: float
    quadrature: Quadrature
    frequencies: np.ndarray
    variances: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.quadrature = Quadrature.parse(self.quadrature)
        self.frequencies = np.asarray(self.frequencies, dtype=float)
        self.variances = np.asarray(self.variances, dtype=float)
        if self.frequencies.ndim != 1 or self.frequencies.shape != self.variances.shape:
            raise ValueError("frequencies and variances must be 1-D arrays of equal length")
        if self.frequencies.size == 0:
            raise ValueError("empty trace")
        if np.any(np.diff(self.frequencies) <= 0):
            raise ValueError("trace frequencies must be strictly increasing")
        if np.any(~(self.variances > 0)):
            raise ValueError("trace variances must be positive")

    @property
    def variances_db(self) -> np.ndarray:
        return db_from_ratio(self.variances)

    def __len__(self):
        return self.frequencies.size


def _pump_ratio(pump_power, threshold_power):
    p = np.asarray(pump_power, dtype=float)
    if not threshold_power > 0:
        raise DomainError("threshold power must be positive")
    if np.any(p < 0):
        raise DomainError("pump power must be non-negative")
    if np.any(p >= threshold_power):
        raise DomainError("pump power at or above threshold; below-threshold model diverges")
    return np.sqrt(p / threshold_power)


def parametric_gain(pump_power, threshold_power):
    """Classical parametric gain ``1/(1 - sqrt(P/P_thr))**2``."""
    x = _pump_ratio(pump_power, threshold_power)
    g = 1.0 / (1.0 - x) ** 2
    return float(g) if g.ndim == 0 else g


def variance_from_ratios(x, omega_ratio, eta, sin2_phi, quadrature):
    """Evaluate the detected variance from dimensionless inputs.

    ``x`` is sqrt(P/P_thr), ``omega_ratio`` the sideband frequency over the
    FWHM and ``sin2_phi`` is sin(phi)**2. No domain checks; this is the inner
    loop of the fitters.
    """
    cos2 = 1.0 - sin2_phi
    four_x = 4.0 * x
    lorentz = 4.0 * omega_ratio**2
    deamp = four_x / ((1.0 + x) ** 2 + lorentz)
    amp = four_x / ((1.0 - x) ** 2 + lorentz)
    if quadrature is Quadrature.SQUEEZED:
        return 1.0 + eta * (-cos2 * deamp + sin2_phi * amp)
    return 1.0 + eta * (cos2 * amp - sin2_phi * deamp)


def quadrature_variance(params: OpoModelParams, pump_power, sideband_frequency, quadrature):
    """Shot-noise-normalized variance of the squeezed or anti-squeezed quadrature.

    ``pump_power`` and ``sideband_frequency`` broadcast against each other.
    Issues :class:`PhaseNoiseValidityWarning` when the RMS phase noise exceeds
    0.1 rad, where the small-angle model stops being trustworthy.
    """
    quadrature = Quadrature.parse(quadrature)
    x = _pump_ratio(pump_power, params.threshold_power)
    f = np.asarray(sideband_frequency, dtype=float)
    if np.any(f < 0):
        raise DomainError("sideband frequency must be non-negative")
    if params.phase_noise_rms > PHASE_NOISE_VALIDITY_LIMIT:
        warnings.warn(
            f"phase noise {params.phase_noise_rms:.3g} rad exceeds {PHASE_NOISE_VALIDITY_LIMIT} rad; "
            "model only valid for small phase noise",
            PhaseNoiseValidityWarning,
            stacklevel=2,
        )
    v = variance_from_ratios(
        x,
        f / params.fwhm_bandwidth,
        params.total_efficiency,
        math.sin(params.phase_noise_rms) ** 2,
        quadrature,
    )
    return float(v) if np.ndim(v) == 0 else v


def spectrum(params: OpoModelParams, pump_power: float, frequency_grid, quadrature) -> SpectrumTrace:
    grid = np.asarray(frequency_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("frequency grid must be a non-empty 1-D sequence")
    if np.any(grid <= 0):
        raise DomainError("frequency grid must be positive")
    v = np.atleast_1d(quadrature_variance(params, pump_power, grid, quadrature))
    return SpectrumTrace(pump_power=pump_power, quadrature=quadrature, frequencies=grid, variances=v)


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_minimize(fun, lo: float, hi: float, rtol: float = 1e-6, max_iter: int = 200):
    """Minimize a unimodal scalar function on ``[lo, hi]``; returns ``(x, f(x))``.

    Endpoints are included as candidates so a minimum sitting on the bound is
    returned exactly.
    """
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if abs(b - a) <= rtol * max(abs(a), abs(b)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = fun(d)
    candidates = [(fc, c), (fd, d), (fun(lo), lo), (fun(hi), hi)]
    fbest, xbest = min(candidates)
    return xbest, fbest


def max_detected_squeezing(params: OpoModelParams, sideband_frequency: float):
    """Pump power giving the lowest squeezed variance, and that variance in dB.

    Searches ``[1e-6, 1 - 1e-6] * P_thr``. Without phase noise the optimum is
    the upper end of that interval.
    """
    pthr = params.threshold_power
    lo, hi = 1e-6 * pthr, (1.0 - 1e-6) * pthr

    def v_minus(p):
        return quadrature_variance(params, p, sideband_frequency, Quadrature.SQUEEZED)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PhaseNoiseValidityWarning)
        p_opt, v_opt = golden_section_minimize(v_minus, lo, hi, rtol=1e-6)
    return p_opt, db_from_ratio(v_opt)
