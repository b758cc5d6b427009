import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from multipulse.analysis import (
    SweepResult,
    SweepRow,
    effective_t2_formula,
    find_peaks,
    fit_decay,
    fit_decay_time,
    sweep_tau_s,
    verify_asymptote,
)
from multipulse.cumulant import CumulantEngine
from multipulse.errors import DomainError, FitError
from multipulse.models import (
    CaldeiraLeggettDensity,
    ExponentialCorrelation,
    LinearBosonModel,
    SpectrumGrid,
    ThermalConfig,
)
from multipulse.pulsecontrol import DecayCurve

FAST_BATH = ExponentialCorrelation.from_t2(0.02)
FAST_ENGINE = CumulantEngine.for_model(FAST_BATH)


class TestFit:
    @given(st.floats(0.01, 100.0), st.floats(-3.0, 0.0))
    def test_recovers_decay_time(self, tau, offset):
        t = np.linspace(0.0, 3 * tau, 20)
        fit = fit_decay(DecayCurve(t, offset - t / tau))
        np.testing.assert_allclose(fit.tau, tau, rtol=1e-9)
        np.testing.assert_allclose(fit.intercept, offset, atol=1e-9)
        assert fit.residual < 1e-9

    def test_window(self):
        t = np.linspace(0, 10, 101)
        y = np.where(t < 5, -t, -5 - 2 * (t - 5))
        assert fit_decay_time(DecayCurve(t, y), (6.0, 10.0)) == pytest.approx(0.5)

    def test_flat_curve(self):
        with pytest.raises(FitError):
            fit_decay(DecayCurve([0.0, 1.0, 2.0], [-0.1, -0.1, -0.1]))

    def test_noise_level_slope(self):
        t = np.linspace(0, 10, 11)
        with pytest.raises(FitError):
            fit_decay(DecayCurve(t, -0.01 - 1e-13 * t))

    def test_growth(self):
        with pytest.raises(FitError):
            fit_decay(DecayCurve([0.0, 1.0], [0.0, 0.5]))

    def test_too_few_samples(self):
        with pytest.raises(FitError):
            fit_decay(DecayCurve([0.0, 1.0, 2.0], [0.0, -1.0, -2.0]), (0.5, 1.5))


class TestEffectiveT2:
    def test_value(self):
        assert effective_t2_formula(10, 0.5, FAST_BATH) == pytest.approx(1 / (1 + (0.1 - 2) * 0.04))

    def test_infinite_train(self):
        assert effective_t2_formula(math.inf, 0.5, FAST_BATH) == pytest.approx(1 / (1 - 0.08))

    def test_invalid_regime(self):
        with pytest.raises(DomainError):
            effective_t2_formula(math.inf, 0.02, FAST_BATH)


class TestSweep:
    GRID = [0.005, 0.01, 0.05, 0.1, 0.25, 0.5]

    def test_frozen_exponential(self):
        result = sweep_tau_s(self.GRID, FAST_ENGINE, (8.0, 10.0), model=FAST_BATH)
        np.testing.assert_allclose(
            result.tau_i,
            [96.59995287, 24.59982196, 1.55582411, 0.82596261, 0.59523725, 0.54347826],
            rtol=1e-7,
        )
        assert np.all(result.ok)
        assert np.all(np.diff(result.tau_i) < 0)
        assert math.isnan(result.at(0.005).t2e_formula)
        assert result.at(0.5).n_pulses == 20

    def test_threads_match_serial(self):
        serial = sweep_tau_s(self.GRID, FAST_ENGINE, (8.0, 10.0))
        threaded = sweep_tau_s(self.GRID, FAST_ENGINE, (8.0, 10.0), workers=4)
        np.testing.assert_array_equal(serial.tau_i, threaded.tau_i)

    def test_no_coupling_means_no_decay(self):
        engine = CumulantEngine.for_model(ExponentialCorrelation(0.0, 0.02))
        result = sweep_tau_s([0.1, 0.5], engine, (1.0, 2.0))
        assert np.all(np.isinf(result.tau_i))
        assert all("FitError" in r.error for r in result.rows)

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            sweep_tau_s([0.5, 0.1], FAST_ENGINE, (1.0, 2.0))

    def test_serialization(self):
        rows = [SweepRow(0.1, 2.0, math.nan, 0.0, 10), SweepRow(0.2, math.inf, 1.0, math.nan, 5, "FitError: x")]
        result = SweepResult(rows, (1.0, 2.0))
        csv_lines = result.to_csv().splitlines()
        assert csv_lines[0] == "tau_s,tau_I,t2e_formula,residual,n_pulses,error"
        assert csv_lines[2] == "0.2,inf,1,nan,5,FitError: x"
        doc = json.loads(result.to_json())
        assert doc["rows"][1]["tau_i"] is None
        assert doc["rows"][0]["t2e_formula"] is None


class TestPeaks:
    def test_parabola_vertex_is_exact(self):
        w = np.linspace(-1, 1, 21)
        grid = SpectrumGrid(w, 5 - (w - 0.037) ** 2)
        np.testing.assert_allclose(find_peaks(grid), [0.037], atol=1e-12)

    def test_two_gaussians(self):
        w = np.linspace(-4, 4, 401)
        v = np.exp(-((w + 2) ** 2)) + 0.5 * np.exp(-((w - 1.5) ** 2) / 0.1)
        np.testing.assert_allclose(find_peaks(SpectrumGrid(w, v)), [-2.0, 1.5], atol=1e-3)

    def test_monotone_has_none(self):
        w = np.linspace(0, 1, 5)
        assert find_peaks(SpectrumGrid(w, w)) == []


class TestAsymptote:
    def test_ohmic(self):
        engine = CumulantEngine.for_model(LinearBosonModel(CaldeiraLeggettDensity(1.0), ThermalConfig(1.0)))
        report = verify_asymptote(engine, [10.0, 100.0, 1000.0])
        assert report.rate == pytest.approx(np.pi)
        assert report.passed
        assert report.rel_deviation[-1] < 5e-3

    def test_exponential(self):
        report = verify_asymptote(FAST_ENGINE, [0.1, 1.0, 10.0])
        assert report.rate == pytest.approx(1.0)
        assert report.passed
        # S(t)/t = 1 - tau_c/t (1 - exp(-t/tau_c))
        np.testing.assert_allclose(report.rel_deviation[-1], 0.002, rtol=1e-6)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            verify_asymptote(FAST_ENGINE, [0.0, 1.0])
