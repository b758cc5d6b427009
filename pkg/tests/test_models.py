import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from multipulse.errors import DomainError
from multipulse.models import (
    CaldeiraLeggettDensity,
    ExponentialCorrelation,
    GaussianCouplingDensity,
    LinearBosonModel,
    QuadraticBosonModel,
    SpectrumGrid,
    ThermalConfig,
    bose_occupation,
    emission_weight,
    gaussian_density,
    linear_spectrum,
    quadratic_correlation,
    quadratic_spectrum,
)

THERMAL = ThermalConfig(1.0)
COUPLING = GaussianCouplingDensity.from_sq(1 / 40, 0.4)


class TestThermal:
    def test_occupation_value(self):
        np.testing.assert_allclose(bose_occupation(1.0, THERMAL), 1 / (np.e - 1), rtol=1e-15)

    @given(st.floats(0.01, 30.0), st.floats(0.1, 10.0))
    def test_reflection(self, w, beta):
        th = ThermalConfig(beta)
        np.testing.assert_allclose(
            bose_occupation(-w, th), -(bose_occupation(w, th) + 1), rtol=1e-12, atol=1e-300
        )

    def test_pole_at_zero(self):
        with pytest.raises(DomainError):
            bose_occupation(np.array([1.0, 0.0]), THERMAL)

    def test_emission_weight_limit(self):
        assert emission_weight(0.0, 2.5) == pytest.approx(0.4)
        np.testing.assert_allclose(emission_weight(1e-9, 2.5), 0.4, rtol=1e-8)

    @given(st.floats(0.01, 20.0))
    def test_emission_weight_matches_occupation(self, x):
        np.testing.assert_allclose(emission_weight(x, 1.0), x * (bose_occupation(x, THERMAL) + 1), rtol=1e-12)
        np.testing.assert_allclose(emission_weight(-x, 1.0), x * bose_occupation(x, THERMAL), rtol=1e-12)

    def test_emission_weight_no_overflow_warning(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            out = emission_weight(np.array([-1000.0, 1000.0]), 1.0)
        np.testing.assert_allclose(out, [0.0, 1000.0])

    def test_rejects_bad_beta(self):
        with pytest.raises(ValueError):
            ThermalConfig(0.0)
        with pytest.raises(ValueError):
            ThermalConfig(1.0, units="kelvin")


class TestExponential:
    def test_t2_normalization(self):
        m = ExponentialCorrelation.from_t2(0.02)
        assert m.t2 == pytest.approx(1.0)
        assert m.delta == pytest.approx(np.sqrt(50.0))

    def test_spectrum_zero(self):
        m = ExponentialCorrelation(2.0, 0.5)
        assert m.spectrum(0.0) == pytest.approx(2 * 4.0 * 0.5)

    @pytest.mark.parametrize("w", [0.0, 0.7, 3.0])
    def test_spectrum_is_fourier_transform(self, w):
        m = ExponentialCorrelation(1.3, 0.8)
        ft = 2 * integrate.quad(lambda t: m.correlation(t) * np.cos(w * t), 0, 60, limit=200)[0]
        np.testing.assert_allclose(m.spectrum(w), ft, rtol=1e-9)

    @pytest.mark.parametrize("kwargs", [{"delta": -1, "tau_c": 1}, {"delta": 1, "tau_c": 0}])
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            ExponentialCorrelation(**kwargs)


class TestQuadraticSpectrum:
    def test_frozen_values(self):
        w = np.array([-2.0, -1.0, 0.0, 0.5, 1.0, 2.0])
        np.testing.assert_allclose(
            quadratic_spectrum(w, COUPLING, THERMAL),
            [0.052894414615, 0.011493454143, 0.287716042503, 0.168427436038, 0.031242447543, 0.390839796908],
            rtol=1e-9,
        )

    def test_zero_frequency_against_scipy(self):
        def integrand(e):
            h = gaussian_density(e, COUPLING)
            return h * h * 2 * emission_weight(e, 1.0) * emission_weight(-e, 1.0)

        ref = 2 * np.pi * integrate.quad(integrand, 0, 1 + 8 * 0.4, epsabs=1e-14, epsrel=1e-12)[0]
        np.testing.assert_allclose(quadratic_spectrum(0.0, COUPLING, THERMAL), ref, rtol=1e-10)

    @given(st.floats(0.05, 3.0), st.sampled_from([0.5, 1.0, 2.0]))
    def test_detailed_balance(self, w, beta):
        th = ThermalConfig(beta)
        ratio = quadratic_spectrum(-w, COUPLING, th) / quadratic_spectrum(w, COUPLING, th)
        np.testing.assert_allclose(ratio, np.exp(-beta * w), rtol=1e-8)

    def test_nonnegative(self):
        vals = quadratic_spectrum(np.linspace(-6, 6, 121), COUPLING, THERMAL)
        assert np.all(vals >= 0)

    def test_scales_with_coupling_squared(self):
        double = GaussianCouplingDensity.from_sq(4 / 40, 0.4)
        np.testing.assert_allclose(
            quadratic_spectrum(0.5, double, THERMAL), 4 * quadratic_spectrum(0.5, COUPLING, THERMAL), rtol=1e-12
        )

    def test_correlation_at_zero_is_spectral_weight(self):
        total = integrate.quad(
            lambda w: quadratic_spectrum(w, COUPLING, THERMAL), -8.4, 8.4, points=[-2, 0, 2], limit=400
        )[0] / (2 * np.pi)
        c0 = quadratic_correlation(0.0, COUPLING, THERMAL)
        np.testing.assert_allclose(c0.real, total, rtol=1e-9)
        assert abs(c0.imag) < 1e-14

    def test_correlation_frozen(self):
        np.testing.assert_allclose(
            quadratic_correlation(np.array([0.5, 1.0, 3.0]), COUPLING, THERMAL),
            [0.082241097568 - 0.047984123809j, 0.012627406617 - 0.04708904104j, 0.05650810005 - 0.005065334408j],
            rtol=1e-9,
        )

    def test_model_bundle(self):
        m = QuadraticBosonModel(COUPLING, THERMAL)
        assert m.freq_support == pytest.approx(2 * (1 + 8 * 0.4))
        assert m.spectrum(0.0) == pytest.approx(0.287716042503, rel=1e-10)


class TestLinearSpectrum:
    def test_ohmic_zero_frequency(self):
        d = CaldeiraLeggettDensity(0.3, 1, 2.0)
        assert linear_spectrum(0.0, d, ThermalConfig(2.0)) == pytest.approx(2 * np.pi * 0.3 / 2.0)

    def test_superohmic_vanishes_at_zero(self):
        assert linear_spectrum(0.0, CaldeiraLeggettDensity(1.0, 2), THERMAL) == 0.0

    @given(st.floats(0.05, 5.0), st.integers(1, 3))
    def test_detailed_balance(self, w, n):
        d = CaldeiraLeggettDensity(1.0, n)
        ratio = linear_spectrum(-w, d, THERMAL) / linear_spectrum(w, d, THERMAL)
        np.testing.assert_allclose(ratio, np.exp(-w), rtol=1e-12)

    def test_positive_frequency_is_density_times_emission(self):
        d = CaldeiraLeggettDensity(0.7, 1, 1.5)
        w = 0.9
        expected = 2 * np.pi * d(w) * (bose_occupation(w, THERMAL) + 1)
        np.testing.assert_allclose(linear_spectrum(w, d, THERMAL), expected, rtol=1e-13)

    @pytest.mark.parametrize("kwargs", [{"alpha": -1}, {"alpha": 1, "n": 0}, {"alpha": 1, "n": 1.5}])
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            CaldeiraLeggettDensity(**kwargs)

    def test_model_bundle(self):
        m = LinearBosonModel(CaldeiraLeggettDensity(1.0), THERMAL)
        assert m.spectrum(0.0) == pytest.approx(2 * np.pi)


class TestSpectrumGrid:
    def test_accepts_noise_level_negatives(self):
        SpectrumGrid([0.0, 1.0, 2.0], [1.0, -1e-13, 0.5])

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            SpectrumGrid([0.0, 1.0], [1.0, -0.1])

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            SpectrumGrid([1.0, 0.0], [1.0, 1.0])
