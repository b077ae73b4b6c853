"""Nonlinear least-squares estimation of the OPO parameters.

The core is a small bounded Levenberg-Marquardt solver with a numerically
differenced Jacobian. On top of it sit the three fitters used on gain data,
pump-power sweeps at a fixed sideband frequency, and full noise spectra.

Variance fits compare model and data in dB. Internally the phase noise is
fitted as ``sin(phi)**2``, in which the model is linear; this keeps the
Jacobian well conditioned when the phase noise is close to zero. Results are
reported in terms of ``phi`` with the covariance propagated to first order.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .opo_model import Quadrature, SpectrumTrace, variance_from_ratios, PHASE_NOISE_VALIDITY_LIMIT
from .physics import CavityGeometry, DomainError, characterize

logger = logging.getLogger(__name__)

DEFAULT_POWER_FRACTIONAL_UNCERTAINTY = 0.05
MAX_PHASE_NOISE = PHASE_NOISE_VALIDITY_LIMIT
_MAX_SIN2 = math.sin(MAX_PHASE_NOISE) ** 2


class FitError(RuntimeError):
    """Raised when a fit cannot be set up or the residuals become invalid."""


@dataclass
class FitResult:
    parameter_names: list
    values: np.ndarray
    standard_errors: np.ndarray
    covariance: np.ndarray
    residual_sum_of_squares: float
    degrees_of_freedom: int
    converged: bool
    iterations: int
    gradient_norm: float = 0.0
    condition_number: float = 1.0
    message: str = ""
    warnings: list = field(default_factory=list)
    at_bound: list = field(default_factory=list)

    def __getitem__(self, name):
        return float(self.values[self.parameter_names.index(name)])

    def stderr(self, name) -> float:
        return float(self.standard_errors[self.parameter_names.index(name)])

    def as_dict(self) -> dict:
        return {
            "params": {n: float(v) for n, v in zip(self.parameter_names, self.values)},
            "std_errors": {n: float(v) for n, v in zip(self.parameter_names, self.standard_errors)},
            "covariance": [[float(c) for c in row] for row in self.covariance],
            "rss": float(self.residual_sum_of_squares),
            "dof": int(self.degrees_of_freedom),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class GainMeasurement:
    pump_power: float
    gain: float
    power_fractional_uncertainty: float = DEFAULT_POWER_FRACTIONAL_UNCERTAINTY

    def __post_init__(self):
        if self.pump_power < 0:
            raise ValueError("pump power must be non-negative")
        if self.power_fractional_uncertainty < 0:
            raise ValueError("power uncertainty must be non-negative")
        # small scatter below unity gain is tolerated
        if not self.gain > 0.5:
            raise ValueError(f"implausible gain value {self.gain}")


@dataclass(frozen=True)
class ExclusionBand:
    low: float
    high: float

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError("exclusion band needs low < high")

    def contains(self, f):
        f = np.asarray(f, dtype=float)
        return (f >= self.low) & (f <= self.high)

    @classmethod
    def around(cls, center: float, half_width: float = 2e6) -> "ExclusionBand":
        return cls(center - half_width, center + half_width)

    @classmethod
    def parse(cls, text: str) -> "ExclusionBand":
        lo, sep, hi = text.partition(":")
        if not sep:
            raise ValueError(f"exclusion band must look like LOW:HIGH, got {text!r}")
        return cls(float(lo), float(hi))


# pilot tone and modulation pick-up
DEFAULT_EXCLUSION_BANDS = (
    ExclusionBand.around(40e6),
    ExclusionBand.around(80e6),
    ExclusionBand.around(100e6),
)


# --------------------------------------------------------------------------
# Levenberg-Marquardt


def _step_sizes(theta):
    return np.maximum(1e-8, 1e-8 * np.abs(theta))


def numeric_jacobian(fun: Callable, theta, method: str = "central", f0=None, bounds=None, steps=None):
    """Finite-difference Jacobian of ``fun`` at ``theta``.

    ``method`` is ``"central"`` (default) or ``"forward"``. When a central
    stencil would leave ``bounds`` a second-order one-sided stencil is used.
    """
    theta = np.asarray(theta, dtype=float)
    if f0 is None:
        f0 = np.asarray(fun(theta), dtype=float)
    h = _step_sizes(theta) if steps is None else np.broadcast_to(np.asarray(steps, float), theta.shape)
    lo, hi = _bounds_arrays(bounds, theta.size)
    jac = np.empty((f0.size, theta.size))
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h[i]
        if method == "forward":
            if theta[i] + h[i] > hi[i]:
                e = -e
            jac[:, i] = (np.asarray(fun(theta + e)) - f0) / e[i]
        elif method == "central":
            if theta[i] - h[i] < lo[i]:
                f1, f2 = np.asarray(fun(theta + e)), np.asarray(fun(theta + 2 * e))
                jac[:, i] = (-3 * f0 + 4 * f1 - f2) / (2 * h[i])
            elif theta[i] + h[i] > hi[i]:
                f1, f2 = np.asarray(fun(theta - e)), np.asarray(fun(theta - 2 * e))
                jac[:, i] = (3 * f0 - 4 * f1 + f2) / (2 * h[i])
            else:
                jac[:, i] = (np.asarray(fun(theta + e)) - np.asarray(fun(theta - e))) / (2 * h[i])
        else:
            raise ValueError(f"unknown difference method {method!r}")
    return jac


def _bounds_arrays(bounds, n):
    if bounds is None:
        return np.full(n, -np.inf), np.full(n, np.inf)
    lo = np.array([(-np.inf if b[0] is None else b[0]) for b in bounds], dtype=float)
    hi = np.array([(np.inf if b[1] is None else b[1]) for b in bounds], dtype=float)
    if lo.size != n:
        raise ValueError("one (low, high) pair of bounds per parameter is required")
    if np.any(lo > hi):
        raise ValueError("lower bound above upper bound")
    return lo, hi


def _evaluate(fun, theta):
    r = np.asarray(fun(theta), dtype=float).ravel()
    return r


def least_squares(
    residual_function: Callable,
    initial_guess: Sequence[float],
    bounds=None,
    parameter_names=None,
    *,
    max_iter: int = 500,
    ftol: float = 1e-12,
    gtol: float = 1e-10,
) -> FitResult:
    """Minimize ``sum(residual_function(theta)**2)`` by Levenberg-Marquardt.

    Parameters
    ----------
    residual_function : callable
        Maps a parameter vector to a residual vector. Must be pure.
    initial_guess : sequence of float
        Starting point; must lie inside ``bounds``.
    bounds : sequence of (low, high), optional
        Per-parameter box; ``None`` means unbounded on that side. Trial
        points are projected onto the box.

    Returns
    -------
    FitResult
        The covariance is ``RSS/dof * inv(J^T J)`` over the parameters that
        are not held at a bound; pinned parameters get zero variance.
    """
    theta = np.array(initial_guess, dtype=float)
    n = theta.size
    names = list(parameter_names) if parameter_names is not None else [f"p{i}" for i in range(n)]
    lo, hi = _bounds_arrays(bounds, n)
    if np.any(theta < lo) or np.any(theta > hi):
        raise FitError(f"initial guess {theta} outside bounds")

    r = _evaluate(residual_function, theta)
    if not np.all(np.isfinite(r)):
        raise FitError(f"residuals not finite at the initial guess {theta}")
    m = r.size
    rss = float(r @ r)

    lam = 1e-3
    converged = False
    message = "maximum iterations reached"
    notes: list[str] = []
    iterations = 0
    jac = numeric_jacobian(residual_function, theta, f0=r, bounds=bounds)
    grad_norm = np.inf

    while iterations < max_iter:
        iterations += 1
        grad = jac.T @ r
        # freeze parameters held at a bound by the descent direction
        pinned = ((theta <= lo) & (grad > 0)) | ((theta >= hi) & (grad < 0))
        free = ~pinned
        grad_norm = float(np.max(np.abs(grad[free]))) if free.any() else 0.0
        if grad_norm < gtol or rss == 0.0:
            converged, message = True, "gradient below tolerance"
            break
        jf = jac[:, free]
        a = jf.T @ jf
        d = np.diag(a).copy()
        d[d <= 0] = max(np.max(d), 1.0) * 1e-12 if d.size else 1.0
        improved = False
        while lam < 1e20:
            try:
                delta = np.linalg.solve(a + lam * np.diag(d), -grad[free])
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = theta.copy()
            trial[free] += delta
            np.clip(trial, lo, hi, out=trial)
            r_trial = _evaluate(residual_function, trial)
            if not np.all(np.isfinite(r_trial)):
                bad = int(np.flatnonzero(~np.isfinite(r_trial))[0])
                logger.debug("non-finite residual %d at %s; increasing damping", bad, trial)
                lam *= 10.0
                continue
            rss_trial = float(r_trial @ r_trial)
            if rss_trial < rss:
                rel = (rss - rss_trial) / rss
                theta, r, rss = trial, r_trial, rss_trial
                lam = max(lam / 10.0, 1e-12)
                improved = True
                break
            lam *= 10.0
        if not improved:
            converged, message = True, "no further decrease possible at machine precision"
            break
        jac = numeric_jacobian(residual_function, theta, f0=r, bounds=bounds)
        if rel < ftol:
            converged, message = True, "relative cost decrease below tolerance"
            break

    if not np.all(np.isfinite(r)):
        raise FitError("non-finite residuals at the final point")

    # one undamped Gauss-Newton step removes the geometric tail left by damping
    if converged and rss > 0.0:
        grad = jac.T @ r
        free = ~(((theta <= lo) & (grad > 0)) | ((theta >= hi) & (grad < 0)))
        if free.any():
            jf = jac[:, free]
            delta, *_ = np.linalg.lstsq(jf, -r, rcond=None)
            trial = theta.copy()
            trial[free] += delta
            np.clip(trial, lo, hi, out=trial)
            r_trial = _evaluate(residual_function, trial)
            if np.all(np.isfinite(r_trial)) and float(r_trial @ r_trial) < rss:
                theta, r, rss = trial, r_trial, float(r_trial @ r_trial)
                jac = numeric_jacobian(residual_function, theta, f0=r, bounds=bounds)

    grad = jac.T @ r
    at_lo = (theta <= lo) & (grad >= 0)
    at_hi = (theta >= hi) & (grad <= 0)
    pinned = at_lo | at_hi
    free = ~pinned
    n_free = int(free.sum())
    dof = m - n_free
    cov = np.zeros((n, n))
    cond = 1.0
    if n_free:
        jf = jac[:, free]
        a = jf.T @ jf
        # condition of the column-scaled (correlation-like) normal matrix
        scale_cols = np.sqrt(np.diag(a))
        if np.all(np.isfinite(a)) and np.all(scale_cols > 0):
            a_scaled = a / np.outer(scale_cols, scale_cols)
            cond = float(np.linalg.cond(a_scaled))
        else:
            cond = np.inf
        if not np.isfinite(cond) or cond > 1e15:
            converged = False
            message = "singular normal matrix: parameters not identifiable"
            notes.append(f"J^T J is singular (condition number {cond:.3g}); covariance unavailable")
        else:
            if dof > 0:
                scale = rss / dof
            else:
                scale = 0.0
                notes.append("no residual degrees of freedom; covariance set to zero")
            cinv = np.linalg.inv(a_scaled) / np.outer(scale_cols, scale_cols) * scale
            cinv = 0.5 * (cinv + cinv.T)
            idx = np.flatnonzero(free)
            cov[np.ix_(idx, idx)] = cinv
            if cond > 1e10:
                notes.append(f"ill-conditioned fit (condition number {cond:.3g}); flat direction present")
    for i in np.flatnonzero(pinned):
        notes.append(f"{names[i]} held at {'lower' if at_lo[i] else 'upper'} bound {theta[i]:.6g}")
    stderr = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return FitResult(
        parameter_names=names,
        values=theta,
        standard_errors=stderr,
        covariance=cov,
        residual_sum_of_squares=rss,
        degrees_of_freedom=dof,
        converged=converged,
        iterations=iterations,
        gradient_norm=grad_norm,
        condition_number=cond,
        message=message,
        warnings=notes,
        at_bound=[names[i] for i in np.flatnonzero(pinned)],
    )


# --------------------------------------------------------------------------
# Gain


def fit_gain(data: Sequence[GainMeasurement], initial_threshold: float | None = None) -> FitResult:
    """Fit the parametric-gain curve to measured gains; returns ``threshold_power``.

    The scatter sits in the pump power, so each gain is mapped back to the
    power fraction it implies, ``r = (1 - g**-0.5)**2 = P_true / P_thr``, and
    the residual is formed in power: ``(P_thr * r / P - 1) / u`` with ``u``
    the fractional power uncertainty. This is the effective-variance idea
    taken without the first-order expansion, which fails for points whose
    jittered power lands close to threshold. Gains below one map to negative
    ``r`` so that their scatter still counts.

    Points at zero pump power carry no information and are dropped. Points
    with zero stated uncertainty get the smallest nonzero one of the set
    (unit weight if none is given).
    """
    pts = [d for d in data if d.pump_power > 0]
    if not pts:
        raise FitError("no measurement with pump power > 0; threshold is unidentifiable")
    p = np.array([d.pump_power for d in pts])
    g = np.array([d.gain for d in pts])
    u = np.array([d.power_fractional_uncertainty for d in pts])
    notes = []
    if len(pts) < 3:
        notes.append(f"only {len(pts)} point(s) with nonzero pump power")
    if len(pts) < len(data):
        notes.append(f"dropped {len(data) - len(pts)} point(s) at zero pump power")
    if np.any(u <= 0):
        u = np.where(u > 0, u, u[u > 0].min() if np.any(u > 0) else 1.0)

    x = 1.0 - 1.0 / np.sqrt(g)
    r = np.sign(x) * x * x

    def residuals(theta):
        return (theta[0] * r / p - 1.0) / u

    pmax = float(p.max())
    lower = 1.0001 * pmax
    guess = 1.2 * pmax if initial_threshold is None else max(float(initial_threshold), lower)
    res = least_squares(residuals, [guess], bounds=[(lower, None)], parameter_names=["threshold_power"])
    res.warnings = notes + res.warnings
    return res


# --------------------------------------------------------------------------
# Electronic noise


def correct_electronic_noise(measured_variance_rel_shot, electronic_noise_rel_shot):
    """Remove the detector's electronic noise from a shot-noise-normalized variance.

    Both the trace and its shot-noise reference contain the electronic noise,
    hence ``(V_meas - V_el) / (1 - V_el)``.
    """
    v = np.asarray(measured_variance_rel_shot, dtype=float)
    el = float(electronic_noise_rel_shot)
    if not 0.0 <= el < 1.0:
        raise DomainError("electronic noise must lie in [0, 1) relative to shot noise")
    if np.any(v <= el):
        raise DomainError("measured variance at or below the electronic noise floor")
    out = (v - el) / (1.0 - el)
    return float(out) if out.ndim == 0 else out


def add_electronic_noise(variance_rel_shot, electronic_noise_rel_shot):
    """Inverse of :func:`correct_electronic_noise`."""
    v = np.asarray(variance_rel_shot, dtype=float)
    el = float(electronic_noise_rel_shot)
    if not 0.0 <= el < 1.0:
        raise DomainError("electronic noise must lie in [0, 1) relative to shot noise")
    out = v * (1.0 - el) + el
    return float(out) if out.ndim == 0 else out


def correct_trace(trace: SpectrumTrace, electronic_noise_rel_shot: float) -> SpectrumTrace:
    meta = dict(trace.metadata)
    meta["electronic_noise_corrected"] = float(electronic_noise_rel_shot)
    return SpectrumTrace(
        pump_power=trace.pump_power,
        quadrature=trace.quadrature,
        frequencies=trace.frequencies.copy(),
        variances=correct_electronic_noise(trace.variances, electronic_noise_rel_shot),
        metadata=meta,
    )


# --------------------------------------------------------------------------
# Variance fits


def _db(v):
    return 10.0 * np.log10(v)


def _phase_to_internal(phi):
    return math.sin(phi) ** 2


def _report_phase(res: FitResult, sin2_indices, names):
    """Convert the internal sin^2(phi) parameters to phi in place."""
    values = res.values.copy()
    jac = np.eye(values.size)
    for i in sin2_indices:
        s = min(max(values[i], 0.0), 1.0)
        phi = math.asin(math.sqrt(s))
        values[i] = phi
        jac[i, i] = 1.0 / math.sin(2 * phi) if phi > 0 else 0.0
    cov = jac @ res.covariance @ jac.T
    res.values = values
    res.covariance = 0.5 * (cov + cov.T)
    res.standard_errors = np.sqrt(np.clip(np.diag(res.covariance), 0.0, None))
    res.parameter_names = list(names)
    return res


def _initial_efficiency(squeezed_variances):
    if len(squeezed_variances) == 0:
        return 0.8
    return float(np.clip(1.0 - np.min(squeezed_variances), 0.05, 1.0))


def fit_power_sweep(
    squeezed_points,
    antisqueezed_points,
    sideband_frequency: float,
    bandwidth: float,
    threshold: float | None = None,
    fit_threshold: bool | None = None,
) -> FitResult:
    """Joint fit of squeezed and anti-squeezed variances versus pump power.

    ``*_points`` are sequences of ``(pump_power_W, linear_variance)``. The
    threshold is held at ``threshold`` unless ``fit_threshold`` is set (the
    default when no threshold is given). Returned parameters are
    ``total_efficiency``, ``phase_noise_rms`` and optionally
    ``threshold_power``.
    """
    sq = np.asarray(list(squeezed_points), dtype=float).reshape(-1, 2)
    asq = np.asarray(list(antisqueezed_points), dtype=float).reshape(-1, 2)
    if sq.size == 0 and asq.size == 0:
        raise FitError("no data points")
    if fit_threshold is None:
        fit_threshold = threshold is None
    notes = []
    if sq.size == 0 or asq.size == 0:
        notes.append("only one quadrature supplied; efficiency and phase noise are weakly identifiable")
    for arr in (sq, asq):
        if arr.size and (np.any(arr[:, 1] <= 0) or np.any(arr[:, 0] < 0)):
            raise FitError("variances must be positive and powers non-negative")

    powers = np.concatenate([sq[:, 0], asq[:, 0]])
    data_db = _db(np.concatenate([sq[:, 1], asq[:, 1]]))
    is_sq = np.concatenate([np.ones(len(sq), bool), np.zeros(len(asq), bool)])
    omega_ratio = sideband_frequency / bandwidth
    pmax = float(powers.max())
    if not fit_threshold and pmax >= threshold:
        raise FitError("pump powers must stay below the threshold")

    eta0 = _initial_efficiency(sq[:, 1])
    theta0 = [eta0, _phase_to_internal(0.01)]
    bounds = [(1e-6, 1.0), (0.0, _MAX_SIN2)]
    names = ["total_efficiency", "phase_noise_rms"]
    if fit_threshold:
        lower = 1.0001 * pmax
        t0 = 1.2 * pmax if threshold is None else max(threshold, lower)
        theta0.append(t0)
        bounds.append((lower, None))
        names.append("threshold_power")

    def residuals(theta):
        pthr = theta[2] if fit_threshold else threshold
        x = np.sqrt(powers / pthr)
        model = np.where(
            is_sq,
            variance_from_ratios(x, omega_ratio, theta[0], theta[1], Quadrature.SQUEEZED),
            variance_from_ratios(x, omega_ratio, theta[0], theta[1], Quadrature.ANTISQUEEZED),
        )
        return _db(model) - data_db

    res = least_squares(residuals, theta0, bounds=bounds, parameter_names=names)
    res = _report_phase(res, [1], names)
    res.warnings = notes + res.warnings
    return res


def _guess_fwhm(trace: SpectrumTrace, pthr: float):
    """Rough linewidth from the half-deviation point of a trace, or None."""
    dev = np.abs(trace.variances - 1.0)
    if dev[0] <= 0:
        return None
    below = np.flatnonzero(dev < 0.5 * dev[0])
    if below.size == 0:
        return None
    f_half = trace.frequencies[below[0]]
    x = math.sqrt(min(trace.pump_power / pthr, 0.99))
    scale = (1.0 + x) if trace.quadrature is Quadrature.SQUEEZED else max(1.0 - x, 0.05)
    return 2.0 * f_half / scale


def fit_spectra(
    traces: Sequence[SpectrumTrace],
    exclusion_bands: Sequence[ExclusionBand] = DEFAULT_EXCLUSION_BANDS,
    threshold: float = 5.12e-3,
    fit_threshold: bool = False,
    per_trace_phase: bool = False,
    initial_fwhm: float | None = None,
    geometry: CavityGeometry | None = None,
) -> FitResult:
    """Joint fit of several noise spectra sharing efficiency and linewidth.

    Grid points inside any exclusion band are masked before the residuals are
    built. Parameters: ``total_efficiency``, ``phase_noise_rms`` (or one
    ``phase_noise_rms_<k>`` per trace with ``per_trace_phase``),
    ``fwhm_bandwidth`` and optionally ``threshold_power``.
    """
    traces = list(traces)
    if not traces:
        raise FitError("at least one trace is required")
    bands = list(exclusion_bands or ())
    blocks = []
    for k, tr in enumerate(traces):
        keep = np.ones(len(tr), bool)
        for b in bands:
            keep &= ~b.contains(tr.frequencies)
        if keep.any():
            blocks.append((k, tr, keep))
    if not blocks:
        raise FitError("every grid point falls inside an exclusion band")

    freqs = np.concatenate([tr.frequencies[keep] for _, tr, keep in blocks])
    data_db = _db(np.concatenate([tr.variances[keep] for _, tr, keep in blocks]))
    powers = np.concatenate([np.full(keep.sum(), tr.pump_power) for _, tr, keep in blocks])
    is_sq = np.concatenate([np.full(keep.sum(), tr.quadrature is Quadrature.SQUEEZED) for _, tr, keep in blocks])
    trace_idx = np.concatenate([np.full(keep.sum(), k) for k, _, keep in blocks])
    pmax = float(powers.max())
    if not fit_threshold and pmax >= threshold:
        raise FitError("pump powers must stay below the threshold")

    notes = []
    n_phase = len(traces) if per_trace_phase else 1
    eta0 = _initial_efficiency(np.concatenate([tr.variances for tr in traces if tr.quadrature is Quadrature.SQUEEZED]))
    if initial_fwhm is not None:
        fwhm0 = float(initial_fwhm)
    elif geometry is not None:
        fwhm0 = characterize(geometry).fwhm
    else:
        guesses = [_guess_fwhm(tr, threshold) for tr in traces]
        guesses = [gs for gs in guesses if gs]
        fwhm0 = float(np.median(guesses)) if guesses else 2.0 * float(freqs.max())

    names = ["total_efficiency"]
    names += [f"phase_noise_rms_{k}" for k in range(n_phase)] if per_trace_phase else ["phase_noise_rms"]
    names.append("fwhm_bandwidth")
    theta0 = [eta0] + [_phase_to_internal(0.01)] * n_phase + [fwhm0]
    bounds = [(1e-6, 1.0)] + [(0.0, _MAX_SIN2)] * n_phase + [(1e3, None)]
    if fit_threshold:
        lower = 1.0001 * pmax
        theta0.append(max(threshold, lower))
        bounds.append((lower, None))
        names.append("threshold_power")
    i_fwhm = 1 + n_phase

    phase_of_point = trace_idx if per_trace_phase else np.zeros_like(trace_idx)

    def residuals(theta):
        pthr = theta[i_fwhm + 1] if fit_threshold else threshold
        x = np.sqrt(powers / pthr)
        om = freqs / theta[i_fwhm]
        s2 = np.asarray(theta[1 : 1 + n_phase])[phase_of_point]
        model = np.where(
            is_sq,
            variance_from_ratios(x, om, theta[0], s2, Quadrature.SQUEEZED),
            variance_from_ratios(x, om, theta[0], s2, Quadrature.ANTISQUEEZED),
        )
        return _db(model) - data_db

    res = least_squares(residuals, theta0, bounds=bounds, parameter_names=names)
    res = _report_phase(res, list(range(1, 1 + n_phase)), names)
    fwhm = res["fwhm_bandwidth"]
    if freqs.max() < 0.2 * fwhm:
        notes.append(
            f"highest fitted frequency {freqs.max():.3g} Hz is far below the linewidth; "
            "fwhm_bandwidth is poorly identifiable"
        )
    n_masked = sum(len(tr) for tr in traces) - freqs.size
    if n_masked:
        notes.append(f"{n_masked} grid point(s) excluded by frequency bands")
    res.warnings = notes + res.warnings
    return res
