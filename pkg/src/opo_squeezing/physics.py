"""Units, decibel conversions and the cavity calculator.

Everything here works in SI base units (meters, hertz, watts, radians).
Variances relative to shot noise are power-like, so decibels are always
``10*log10``.
"""
from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 299792458.0  # m/s, exact


class DomainError(ValueError):
    """Input outside the domain where a model or formula is defined."""


class WavelengthBand(str, enum.Enum):
    FUNDAMENTAL_1550 = "fundamental_1550"
    PUMP_775 = "pump_775"


def db_from_ratio(ratio):
    """Convert a power-like ratio to decibels. Works on scalars and arrays."""
    r = np.asarray(ratio, dtype=float)
    if np.any(~(r > 0)):
        raise DomainError("decibel conversion needs a strictly positive ratio")
    out = 10.0 * np.log10(r)
    return float(out) if out.ndim == 0 else out


def ratio_from_db(db):
    d = np.asarray(db, dtype=float)
    out = 10.0 ** (d / 10.0)
    return float(out) if out.ndim == 0 else out


_SI_PREFIX = {
    "p": 1e-12,
    "n": 1e-9,
    "u": 1e-6,
    "µ": 1e-6,
    "m": 1e-3,
    "k": 1e3,
    "M": 1e6,
    "G": 1e9,
    "T": 1e12,
}
_NUMBER = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


def parse_si(text: str, unit: str = "") -> float:
    """Parse a quantity such as ``'5.12mW'``, ``'66MHz'`` or ``'19mrad'``.

    The unit suffix is optional; a bare number is taken to be in base units.
    Raises ``ValueError`` for anything that does not parse.
    """
    s = str(text).strip().replace(" ", "")
    if unit and s.endswith(unit):
        s = s[: -len(unit)]
    if _NUMBER.match(s):
        return float(s)
    if s and s[-1] in _SI_PREFIX and _NUMBER.match(s[:-1]):
        return float(s[:-1]) * _SI_PREFIX[s[-1]]
    raise ValueError(f"cannot parse {text!r} as a quantity in {unit or 'base units'}")


@dataclass(frozen=True)
class CavityGeometry:
    """Coating and length specification of a two-mirror cavity for one band.

    ``per_pass_intracavity_power_loss`` is crossed twice per round trip
    (hemilithic crystal: AR facet plus bulk losses on the way in and out).
    """

    round_trip_length: float
    output_coupler_power_reflectivity: float
    back_mirror_power_reflectivity: float
    per_pass_intracavity_power_loss: float = 0.0
    wavelength_band: WavelengthBand = WavelengthBand.FUNDAMENTAL_1550

    def __post_init__(self):
        if not self.round_trip_length > 0:
            raise DomainError("round_trip_length must be positive")
        for name in (
            "output_coupler_power_reflectivity",
            "back_mirror_power_reflectivity",
            "per_pass_intracavity_power_loss",
        ):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise DomainError(f"{name} must lie in [0, 1), got {v}")
        object.__setattr__(self, "wavelength_band", WavelengthBand(self.wavelength_band))

    @property
    def output_coupler_transmission(self) -> float:
        return 1.0 - self.output_coupler_power_reflectivity

    @property
    def round_trip_loss(self) -> float:
        """Round-trip loss other than the output coupler transmission."""
        return (1.0 - self.back_mirror_power_reflectivity) + 2.0 * self.per_pass_intracavity_power_loss


@dataclass(frozen=True)
class CavityCharacter:
    fsr: float
    finesse: float
    fwhm: float
    escape_efficiency: float


@dataclass(frozen=True)
class LossBudget:
    escape_efficiency: float
    optical_path_efficiency: float
    visibility: float
    quantum_efficiency: float

    def __post_init__(self):
        for name in ("escape_efficiency", "optical_path_efficiency", "visibility", "quantum_efficiency"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise DomainError(f"{name} must lie in (0, 1], got {v}")

    def total(self) -> float:
        return total_efficiency(self)


def free_spectral_range(round_trip_length: float) -> float:
    if not round_trip_length > 0:
        raise DomainError("round-trip length must be positive")
    return SPEED_OF_LIGHT / round_trip_length


def round_trip_amplitude_factor(geometry: CavityGeometry) -> float:
    g = geometry
    return math.sqrt(
        g.output_coupler_power_reflectivity * g.back_mirror_power_reflectivity
    ) * (1.0 - g.per_pass_intracavity_power_loss)


def finesse(geometry: CavityGeometry) -> float:
    """High-finesse closed form ``pi*sqrt(rho)/(1 - rho)``."""
    rho = round_trip_amplitude_factor(geometry)
    if rho >= 1.0:
        raise DomainError("lossless closed cavity has unbounded finesse")
    return math.pi * math.sqrt(rho) / (1.0 - rho)


def escape_efficiency(output_coupler_transmission: float, total_intracavity_round_trip_loss: float) -> float:
    """Fraction of intracavity photons leaving through the output coupler, T/(T+L)."""
    t, loss = output_coupler_transmission, total_intracavity_round_trip_loss
    if t + loss == 0:
        raise DomainError("escape efficiency undefined for T + L = 0")
    if not t > 0 or loss < 0:
        raise DomainError("need transmission > 0 and loss >= 0")
    return t / (t + loss)


def total_efficiency(budget: LossBudget) -> float:
    # visibility enters squared (mode overlap on both quadratures)
    return (
        budget.escape_efficiency
        * budget.optical_path_efficiency
        * budget.visibility**2
        * budget.quantum_efficiency
    )


def characterize(geometry: CavityGeometry) -> CavityCharacter:
    fsr = free_spectral_range(geometry.round_trip_length)
    f = finesse(geometry)
    return CavityCharacter(
        fsr=fsr,
        finesse=f,
        fwhm=fsr / f,
        escape_efficiency=escape_efficiency(geometry.output_coupler_transmission, geometry.round_trip_loss),
    )


# Coating figures of the hemilithic PPKTP cavity (77 mm round trip). The
# 1550 nm AR reflectance (< 0.1 %) is taken as the per-pass loss.
REFERENCE_GEOMETRY_1550 = CavityGeometry(
    round_trip_length=0.077,
    output_coupler_power_reflectivity=0.90,
    back_mirror_power_reflectivity=0.9995,
    per_pass_intracavity_power_loss=0.001,
    wavelength_band=WavelengthBand.FUNDAMENTAL_1550,
)
REFERENCE_GEOMETRY_775 = CavityGeometry(
    round_trip_length=0.077,
    output_coupler_power_reflectivity=0.975,
    back_mirror_power_reflectivity=0.995,
    per_pass_intracavity_power_loss=0.0,
    wavelength_band=WavelengthBand.PUMP_775,
)
