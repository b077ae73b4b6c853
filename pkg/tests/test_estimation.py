import dataclasses

import numpy as np
import pytest
import scipy.optimize
from hypothesis import given, settings
from hypothesis import strategies as st

from opo_squeezing.estimation import (
    DEFAULT_EXCLUSION_BANDS,
    ExclusionBand,
    FitError,
    GainMeasurement,
    add_electronic_noise,
    correct_electronic_noise,
    correct_trace,
    fit_gain,
    fit_power_sweep,
    fit_spectra,
    least_squares,
    numeric_jacobian,
)
from opo_squeezing.opo_model import REFERENCE_PARAMS, OpoModelParams, Quadrature, quadrature_variance, spectrum
from opo_squeezing.physics import REFERENCE_GEOMETRY_1550, DomainError, db_from_ratio, ratio_from_db
from opo_squeezing.simulator import gen_gain_data

SQ, ASQ = Quadrature.SQUEEZED, Quadrature.ANTISQUEEZED
GAIN_POWERS = np.arange(0.5, 4.5 + 1e-9, 0.25) * 1e-3


def rosenbrock(t):
    return np.array([10 * (t[1] - t[0] ** 2), 1 - t[0]])


class TestLeastSquares:
    def test_linear_one_step(self):
        res = least_squares(lambda t: t - 3.0, [0.0])
        assert res.values[0] == pytest.approx(3.0, abs=1e-12)
        assert res.residual_sum_of_squares == pytest.approx(0.0, abs=1e-20)
        assert res.converged

    def test_rosenbrock(self):
        res = least_squares(rosenbrock, [-1.2, 1.0])
        np.testing.assert_allclose(res.values, [1.0, 1.0], atol=1e-6)
        assert res.converged

    def test_agrees_with_scipy(self):
        # exponential decay with offset, noisy; scipy's trust-region solver is the oracle
        rng = np.random.default_rng(1)
        t = np.linspace(0, 5, 60)
        y = 2.0 * np.exp(-1.3 * t) + 0.4 + 0.01 * rng.standard_normal(t.size)

        def resid(p):
            return p[0] * np.exp(-p[1] * t) + p[2] - y

        ours = least_squares(resid, [1.0, 1.0, 0.0])
        ref = scipy.optimize.least_squares(resid, [1.0, 1.0, 0.0], xtol=1e-15, ftol=1e-15, gtol=1e-15)
        np.testing.assert_allclose(ours.values, ref.x, rtol=1e-7)
        jac = ref.jac
        cov_ref = np.linalg.inv(jac.T @ jac) * (ref.fun @ ref.fun) / (t.size - 3)
        np.testing.assert_allclose(ours.covariance, cov_ref, rtol=1e-4)
        np.testing.assert_allclose(ours.standard_errors, np.sqrt(np.diag(ours.covariance)))

    def test_bounds_projection(self):
        # unconstrained optimum at 3 lies outside [0, 2]
        res = least_squares(lambda t: np.array([t[0] - 3.0, 0.1 * (t[1] - 1)]), [1.0, 0.0], bounds=[(0, 2), (None, None)])
        assert res.values[0] == 2.0
        # the pinned residual dominates the cost, which limits resolution on p1
        assert res.values[1] == pytest.approx(1.0, abs=1e-6)
        assert "p0" in res.at_bound
        assert res.covariance[0, 0] == 0.0

    def test_initial_guess_outside_bounds(self):
        with pytest.raises(FitError):
            least_squares(lambda t: t, [5.0], bounds=[(0, 1)])

    def test_nan_at_start_aborts(self):
        with pytest.raises(FitError, match="not finite"):
            least_squares(lambda t: np.array([np.nan]), [1.0])

    def test_singular_reports_not_converged(self):
        # residual depends only on the sum of the parameters
        res = least_squares(lambda t: np.array([t[0] + t[1] - 1.0, 2 * (t[0] + t[1]) - 2.0]), [0.0, 0.0])
        assert not res.converged
        assert any("singular" in w for w in res.warnings)

    def test_covariance_psd_and_symmetric(self):
        res = least_squares(rosenbrock, [-1.2, 1.0])
        np.testing.assert_allclose(res.covariance, res.covariance.T)
        assert np.all(np.linalg.eigvalsh(res.covariance) >= -1e-15)

    def test_result_dict(self):
        d = least_squares(lambda t: t - 3.0, [0.0], parameter_names=["a"]).as_dict()
        assert set(d) == {"params", "std_errors", "covariance", "rss", "dof", "converged", "iterations", "warnings"}
        assert d["params"]["a"] == pytest.approx(3.0)


def _sweep_residuals(powers, freqs):
    def fun(theta):
        pr = OpoModelParams(theta[2], theta[3], theta[0], theta[1])
        return np.concatenate(
            [db_from_ratio(quadrature_variance(pr, powers, freqs, q)) for q in (SQ, ASQ)]
        )

    return fun


@settings(max_examples=40, deadline=None)
@given(
    st.floats(0.3, 0.99),
    st.floats(0.001, 0.09),
    st.floats(4e-3, 8e-3),
    st.floats(20e6, 200e6),
)
def test_jacobian_central_matches_forward(eta, phi, pthr, fwhm):
    powers = np.linspace(0.2e-3, 3.5e-3, 8)
    freqs = np.linspace(1e6, 100e6, 8)
    fun = _sweep_residuals(powers, freqs)
    theta = np.array([eta, phi, pthr, fwhm])
    central = numeric_jacobian(fun, theta, "central")
    # independent second-order forward stencil with a much larger step
    f0 = fun(theta)
    forward = np.empty_like(central)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = 2e-4 * theta[i]
        forward[:, i] = (-3 * f0 + 4 * fun(theta + e) - fun(theta + 2 * e)) / (2 * e[i])
    scale = np.max(np.abs(central), axis=0)
    assert np.max(np.abs(central - forward) / scale) <= 1e-5


def test_jacobian_against_analytic():
    t = np.linspace(0, 1, 7)

    def fun(p):
        return p[0] * np.sin(p[1] * t)

    p = np.array([1.7, 2.3])
    exact = np.column_stack([np.sin(p[1] * t), p[0] * t * np.cos(p[1] * t)])
    np.testing.assert_allclose(numeric_jacobian(fun, p), exact, rtol=1e-7, atol=1e-9)


def test_jacobian_one_sided_at_bound():
    fun = lambda p: np.array([p[0] ** 2 + p[0]])  # noqa: E731
    jac = numeric_jacobian(fun, [0.0], bounds=[(0.0, 1.0)])
    assert jac[0, 0] == pytest.approx(1.0, abs=1e-10)


class TestFitGain:
    def test_two_exact_points(self):
        pthr = 5.12e-3
        data = [GainMeasurement(pthr / 4, 4.0), GainMeasurement(pthr / 9, 2.25)]
        res = fit_gain(data)
        assert res["threshold_power"] == pytest.approx(pthr, rel=1e-9)
        assert any("2 point" in w for w in res.warnings)

    def test_noiseless_round_trip(self):
        data = gen_gain_data(5.12e-3, GAIN_POWERS, 0.0, seed=0)
        res = fit_gain([dataclasses.replace(d, power_fractional_uncertainty=0.05) for d in data])
        assert res["threshold_power"] == pytest.approx(5.12e-3, rel=1e-6)
        assert res.converged

    def test_zero_power_only_is_unidentifiable(self):
        with pytest.raises(FitError):
            fit_gain([GainMeasurement(0.0, 1.0), GainMeasurement(0.0, 1.01)])

    def test_zero_power_points_dropped(self):
        data = gen_gain_data(5.12e-3, np.concatenate([[0.0], GAIN_POWERS]), 0.05, seed=4)
        res = fit_gain(data)
        assert any("zero pump power" in w for w in res.warnings)
        assert res.degrees_of_freedom == GAIN_POWERS.size - 1

    def test_invariant_to_order_and_units(self):
        data = gen_gain_data(5.12e-3, GAIN_POWERS, 0.05, seed=11)
        ref = fit_gain(data)
        shuffled = [data[i] for i in np.random.default_rng(0).permutation(len(data))]
        assert fit_gain(shuffled)["threshold_power"] == pytest.approx(ref["threshold_power"], rel=1e-9)
        in_mw = [dataclasses.replace(d, pump_power=d.pump_power * 1e3) for d in data]
        res_mw = fit_gain(in_mw)
        assert res_mw["threshold_power"] * 1e-3 == pytest.approx(ref["threshold_power"], rel=1e-9)
        assert res_mw.stderr("threshold_power") * 1e-3 == pytest.approx(ref.stderr("threshold_power"), rel=1e-6)

    @pytest.mark.slow
    def test_reported_error_matches_scatter(self):
        fits = [fit_gain(gen_gain_data(5.12e-3, GAIN_POWERS, 0.05, seed=s)) for s in range(100)]
        values = np.array([f["threshold_power"] for f in fits])
        errors = np.array([f.stderr("threshold_power") for f in fits])
        assert abs(values.std(ddof=1) / errors.mean() - 1) < 0.3

    @pytest.mark.slow
    def test_one_sigma_coverage(self):
        hits = 0
        n = 200
        for s in range(1000, 1000 + n):
            f = fit_gain(gen_gain_data(5.12e-3, GAIN_POWERS, 0.05, seed=s))
            hits += abs(f["threshold_power"] - 5.12e-3) <= f.stderr("threshold_power")
        assert 0.55 <= hits / n <= 0.80


class TestElectronicNoise:
    def test_examples(self):
        floor = ratio_from_db(-22.0)
        v = correct_electronic_noise(ratio_from_db(-9.0), floor)
        assert v == pytest.approx(0.12034, abs=1e-5)
        assert db_from_ratio(v) == pytest.approx(-9.196, abs=1e-3)
        assert correct_electronic_noise(0.3, 0.0) == 0.3
        assert correct_electronic_noise(1.0, floor) == pytest.approx(1.0, rel=1e-15)

    def test_below_floor(self):
        with pytest.raises(DomainError):
            correct_electronic_noise(0.005, 0.0063)
        with pytest.raises(DomainError):
            correct_electronic_noise(0.5, 1.0)

    @given(st.floats(1e-3, 100.0), st.floats(0.0, 0.5))
    def test_round_trip(self, v, el):
        assert correct_electronic_noise(add_electronic_noise(v, el), el) == pytest.approx(v, rel=1e-12)

    @given(st.floats(0.02, 50.0), st.floats(0.02, 50.0), st.floats(0.0, 0.01))
    def test_monotone(self, a, b, el):
        lo, hi = sorted((a, b))
        assert correct_electronic_noise(hi, el) >= correct_electronic_noise(lo, el)


def _sweep(pr, powers, freq=5e6):
    sq = [(p, quadrature_variance(pr, p, freq, SQ)) for p in powers]
    asq = [(p, quadrature_variance(pr, p, freq, ASQ)) for p in powers]
    return sq, asq


class TestFitPowerSweep:
    truth = OpoModelParams(5e-3, 66e6, 0.85, 0.03)
    powers = np.linspace(0.0, 4e-3, 17)

    def test_noiseless_fixed_threshold(self):
        sq, asq = _sweep(self.truth, self.powers)
        res = fit_power_sweep(sq, asq, 5e6, 66e6, threshold=5e-3)
        assert res["total_efficiency"] == pytest.approx(0.85, rel=1e-6)
        assert res["phase_noise_rms"] == pytest.approx(0.03, rel=1e-6)

    def test_noiseless_free_threshold(self):
        sq, asq = _sweep(self.truth, self.powers)
        res = fit_power_sweep(sq, asq, 5e6, 66e6)
        assert res.parameter_names == ["total_efficiency", "phase_noise_rms", "threshold_power"]
        assert res["total_efficiency"] == pytest.approx(0.85, rel=1e-6)
        assert res["phase_noise_rms"] == pytest.approx(0.03, rel=1e-6)
        assert res["threshold_power"] == pytest.approx(5e-3, rel=1e-6)

    def test_zero_phase_noise_pinned(self):
        pr = dataclasses.replace(self.truth, phase_noise_rms=0.0)
        sq, asq = _sweep(pr, self.powers)
        res = fit_power_sweep(sq, asq, 5e6, 66e6, threshold=5e-3)
        assert res["phase_noise_rms"] == 0.0
        assert res["total_efficiency"] == pytest.approx(0.85, rel=1e-6)
        assert "phase_noise_rms" in res.at_bound

    def test_single_quadrature_flagged(self):
        sq, _ = _sweep(self.truth, self.powers)
        res = fit_power_sweep(sq, [], 5e6, 66e6, threshold=5e-3)
        assert any("one quadrature" in w for w in res.warnings)
        assert res.condition_number > 1.0

    def test_order_and_unit_invariance(self):
        pr = OpoModelParams(5e-3, 66e6, 0.9, 0.02)
        rng = np.random.default_rng(3)
        sq, asq = _sweep(pr, self.powers[1:])
        sq = [(p, v * (1 + 0.01 * rng.standard_normal())) for p, v in sq]
        asq = [(p, v * (1 + 0.01 * rng.standard_normal())) for p, v in asq]
        ref = fit_power_sweep(sq, asq, 5e6, 66e6)
        rev = fit_power_sweep(sq[::-1], asq[::-1], 5e6, 66e6)
        np.testing.assert_allclose(rev.values, ref.values, rtol=1e-9)
        mw = fit_power_sweep([(p * 1e3, v) for p, v in sq], [(p * 1e3, v) for p, v in asq], 5e6, 66e6)
        np.testing.assert_allclose(mw.values * [1, 1, 1e-3], ref.values, rtol=1e-9)

    def test_rejects_bad_input(self):
        with pytest.raises(FitError):
            fit_power_sweep([], [], 5e6, 66e6, threshold=5e-3)
        with pytest.raises(FitError):
            fit_power_sweep([(6e-3, 0.5)], [(6e-3, 20.0)], 5e6, 66e6, threshold=5e-3)


class TestFitSpectra:
    grid = np.arange(1e6, 120e6 + 1, 0.5e6)

    def test_single_noiseless_trace_linewidth(self):
        tr = spectrum(REFERENCE_PARAMS, 2.5e-3, self.grid, SQ)
        res = fit_spectra([tr], threshold=5.12e-3)
        assert res["fwhm_bandwidth"] == pytest.approx(66e6, rel=1e-4)
        assert res["total_efficiency"] == pytest.approx(0.92, rel=1e-6)

    def test_masking_is_noop_on_clean_data(self):
        traces = [spectrum(REFERENCE_PARAMS, p, self.grid, q) for p in (1e-3, 3e-3) for q in (SQ, ASQ)]
        with_bands = fit_spectra(traces, DEFAULT_EXCLUSION_BANDS)
        without = fit_spectra(traces, [])
        np.testing.assert_allclose(with_bands.values, without.values, rtol=1e-9)
        assert with_bands.degrees_of_freedom < without.degrees_of_freedom

    def test_geometry_supplies_initial_linewidth(self):
        traces = [spectrum(REFERENCE_PARAMS, 2e-3, self.grid, q) for q in (SQ, ASQ)]
        res = fit_spectra(traces, geometry=REFERENCE_GEOMETRY_1550)
        assert res["fwhm_bandwidth"] == pytest.approx(66e6, rel=1e-6)

    def test_per_trace_phase(self):
        pa = dataclasses.replace(REFERENCE_PARAMS, phase_noise_rms=0.019)
        pb = dataclasses.replace(REFERENCE_PARAMS, phase_noise_rms=0.012)
        traces = [spectrum(pa, 2.5e-3, self.grid, q) for q in (SQ, ASQ)] + [
            spectrum(pb, 3.5e-3, self.grid, q) for q in (SQ, ASQ)
        ]
        res = fit_spectra(traces, [], per_trace_phase=True)
        phis = [res[f"phase_noise_rms_{k}"] for k in range(4)]
        np.testing.assert_allclose(phis, [0.019, 0.019, 0.012, 0.012], rtol=1e-5)

    def test_free_threshold(self):
        traces = [spectrum(REFERENCE_PARAMS, p, self.grid, q) for p in (1e-3, 2.5e-3, 3.5e-3) for q in (SQ, ASQ)]
        res = fit_spectra(traces, [], threshold=4.5e-3, fit_threshold=True)
        assert res["threshold_power"] == pytest.approx(5.12e-3, rel=1e-5)

    def test_all_points_excluded(self):
        tr = spectrum(REFERENCE_PARAMS, 2e-3, np.linspace(39e6, 41e6, 5), SQ)
        with pytest.raises(FitError):
            fit_spectra([tr], DEFAULT_EXCLUSION_BANDS)

    def test_low_frequency_only_flags_linewidth(self):
        tr = spectrum(REFERENCE_PARAMS, 2.5e-3, np.linspace(1e5, 2e6, 40), SQ)
        res = fit_spectra([tr], [], initial_fwhm=50e6)
        assert any("poorly identifiable" in w for w in res.warnings)

    def test_correct_trace(self):
        floor = ratio_from_db(-22)
        tr = spectrum(REFERENCE_PARAMS, 2e-3, self.grid, SQ)
        noisy = dataclasses.replace(tr, variances=add_electronic_noise(tr.variances, floor))
        np.testing.assert_allclose(correct_trace(noisy, floor).variances, tr.variances, rtol=1e-12)


def test_exclusion_band_parsing():
    b = ExclusionBand.parse("38e6:42e6")
    assert (b.low, b.high) == (38e6, 42e6)
    assert b.contains(40e6) and not b.contains(43e6)
    with pytest.raises(ValueError):
        ExclusionBand.parse("40e6")
    with pytest.raises(ValueError):
        ExclusionBand(2.0, 1.0)
