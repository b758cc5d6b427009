import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from multipulse.cumulant import CumulantEngine
from multipulse.errors import DomainError
from multipulse.models import ExponentialCorrelation
from multipulse.pulsecontrol import (
    FIXED,
    OBSERVATION,
    RELATIVE,
    DecayCurve,
    IrregularTrain,
    PulseTrain,
    TimeArg,
    coefficients,
    diagram_coefficients,
    filter_oracle,
    intensity_curve,
    log_intensity,
    log_intensity_closed_exp,
    oracle_curve,
    stroboscopic_curve,
)

UNIT = ExponentialCorrelation(1.0, 1.0)
UNIT_ENGINE = CumulantEngine.for_model(UNIT)
FAST_BATH = ExponentialCorrelation.from_t2(0.02)
FAST_ENGINE = CumulantEngine.for_model(FAST_BATH)


def memoryless(x):
    return np.asarray(x, dtype=float)


def constant_correlation(x):
    return 0.5 * np.asarray(x, dtype=float) ** 2


def toggling_area(t, tau_s, n):
    """Integral of the toggling sign over [0, t]."""
    edges = np.concatenate([[0.0], tau_s * np.arange(1, n + 1), [t]])
    signs = (-1.0) ** np.arange(edges.size - 1)
    return float(np.sum(signs * np.diff(edges)))


class TestTrains:
    def test_pulse_times(self):
        train = PulseTrain(3, 0.5)
        np.testing.assert_allclose(train.pulse_times, [0.5, 1.0, 1.5])
        assert train.end == 1.5

    def test_applied_before(self):
        train = PulseTrain(4, 0.1)
        assert train.applied_before(0.05) == 0
        assert train.applied_before(0.3) == 3
        assert train.applied_before(7.0) == 4

    @pytest.mark.parametrize("args", [(-1, 0.1), (2, 0.0), (1.5, 0.1)])
    def test_rejects(self, args):
        with pytest.raises(ValueError):
            PulseTrain(*args)

    def test_irregular_validation(self):
        with pytest.raises(ValueError):
            IrregularTrain((0.2, 0.1))
        with pytest.raises(ValueError):
            IrregularTrain((0.0, 0.1))
        assert IrregularTrain.from_regular(PulseTrain(2, 0.5)).pulse_times == (0.5, 1.0)


class TestCoefficients:
    def test_free_decay(self):
        assert coefficients(0).as_dict() == {TimeArg(OBSERVATION): 1}

    def test_one_pulse(self):
        assert coefficients(1).as_dict() == {
            TimeArg(FIXED, 1): 2,
            TimeArg(RELATIVE, 1): 2,
            TimeArg(OBSERVATION): -1,
        }

    def test_two_pulses(self):
        assert coefficients(2).as_dict() == {
            TimeArg(FIXED, 1): 6,
            TimeArg(FIXED, 2): -2,
            TimeArg(RELATIVE, 1): -2,
            TimeArg(RELATIVE, 2): 2,
            TimeArg(OBSERVATION): 1,
        }

    def test_str(self):
        assert str(coefficients(1)) == "+2S(tau_s) +2S(t-tau_s) -1S(t)"

    @given(st.integers(0, 30))
    def test_matches_segment_pair_construction(self, n):
        assert coefficients(n) == diagram_coefficients(n)

    @given(st.integers(0, 40), st.floats(0.01, 2.0), st.floats(0.0, 5.0))
    def test_memoryless_exponent_is_elapsed_time(self, n, tau_s, extra):
        t = n * tau_s + extra
        np.testing.assert_allclose(coefficients(n).evaluate(memoryless, t, tau_s), t, rtol=1e-11, atol=1e-12)

    @given(st.integers(0, 20), st.floats(0.01, 2.0), st.floats(0.0, 5.0))
    def test_constant_correlation_gives_toggling_area(self, n, tau_s, extra):
        t = n * tau_s + extra
        area = toggling_area(t, tau_s, n)
        np.testing.assert_allclose(
            coefficients(n).evaluate(constant_correlation, t, tau_s), area**2 / 2, rtol=1e-9, atol=1e-9 * t * t + 1e-24
        )

    def test_negative(self):
        with pytest.raises(ValueError):
            coefficients(-1)


class TestLogIntensity:
    def test_frozen(self):
        np.testing.assert_allclose(log_intensity(2.0, PulseTrain(3, 0.4), UNIT_ENGINE), -0.3486847132804096, rtol=1e-13)

    def test_free_decay(self):
        np.testing.assert_allclose(log_intensity(1.0, PulseTrain(0), UNIT_ENGINE), -2 * np.exp(-1.0), rtol=1e-14)

    def test_before_last_pulse(self):
        with pytest.raises(DomainError):
            log_intensity(0.5, PulseTrain(3, 0.4), UNIT_ENGINE)

    @given(st.integers(0, 6), st.floats(0.05, 1.5), st.floats(0.01, 2.0))
    def test_agrees_with_filter_oracle(self, n, tau_s, extra):
        t = n * tau_s + extra
        direct = log_intensity(t, PulseTrain(n, tau_s), UNIT_ENGINE)
        oracle = filter_oracle(t, PulseTrain(n, tau_s), UNIT.correlation)
        np.testing.assert_allclose(direct, oracle, rtol=1e-8, atol=1e-12)

    @given(st.integers(0, 10), st.floats(0.01, 1.0), st.floats(0.0, 1.0))
    def test_nonpositive(self, n, tau_s, extra):
        t = n * tau_s + extra
        assert log_intensity(t, PulseTrain(n, tau_s), FAST_ENGINE) <= 0


class TestClosedForm:
    @pytest.mark.parametrize("n", [2, 4, 10, 40])
    @pytest.mark.parametrize("tau_s", [0.1, 0.5])
    def test_matches_series(self, n, tau_s):
        train = PulseTrain(n, tau_s)
        closed = log_intensity_closed_exp(train.end, train, FAST_BATH)
        np.testing.assert_allclose(closed, log_intensity(train.end, train, FAST_ENGINE), rtol=1e-9)

    def test_frozen(self):
        np.testing.assert_allclose(
            log_intensity_closed_exp(1.0, PulseTrain(10, 0.1), FAST_BATH), -1.2496448724115297, rtol=1e-12
        )

    def test_odd_rejected(self):
        with pytest.raises(DomainError):
            log_intensity_closed_exp(0.3, PulseTrain(3, 0.1), FAST_BATH)


class TestCurves:
    def test_intensity_curve_between_pulses(self):
        train = PulseTrain(5, 0.3)
        t = np.array([0.0, 0.1, 0.45, 0.9, 1.2, 2.0])
        curve = intensity_curve(train, UNIT_ENGINE, t)
        expected = [
            log_intensity(ti, PulseTrain(train.applied_before(ti), 0.3), UNIT_ENGINE) for ti in t
        ]
        np.testing.assert_allclose(curve.log_intensity, expected, rtol=1e-13, atol=1e-15)
        assert curve.log_intensity[0] == 0.0

    def test_intensity_curve_matches_oracle_curve(self):
        train = PulseTrain(4, 0.35)
        t = np.linspace(0.0, 2.0, 9)
        a = intensity_curve(train, UNIT_ENGINE, t)
        b = oracle_curve(train, UNIT.correlation, t)
        np.testing.assert_allclose(a.log_intensity, b.log_intensity, rtol=1e-8, atol=1e-12)

    def test_stroboscopic(self):
        train = PulseTrain(12, 0.3)
        curve = stroboscopic_curve(train, FAST_ENGINE, first=2)
        expected = [log_intensity(k * 0.3, PulseTrain(k, 0.3), FAST_ENGINE) for k in range(2, 13)]
        np.testing.assert_allclose(curve.times, 0.3 * np.arange(2, 13))
        np.testing.assert_allclose(curve.log_intensity, expected, rtol=1e-12)

    def test_stroboscopic_needs_pulses(self):
        with pytest.raises(ValueError):
            stroboscopic_curve(PulseTrain(0), FAST_ENGINE)

    def test_irregular_oracle_reduces_to_regular(self):
        regular = filter_oracle(1.7, PulseTrain(3, 0.5), UNIT.correlation)
        irregular = filter_oracle(1.7, IrregularTrain((0.5, 1.0, 1.5)), UNIT.correlation)
        assert regular == pytest.approx(irregular, rel=1e-14)

    def test_oracle_requires_pulses_before_t(self):
        with pytest.raises(DomainError):
            filter_oracle(1.0, [0.5, 1.2], UNIT.correlation)

    def test_csv(self):
        curve = DecayCurve([0.0, 1.0], [0.0, -0.5])
        text = curve.to_csv(comments=["model=test"])
        lines = text.splitlines()
        assert lines[0] == "# model=test"
        assert lines[1] == "t,ln_I,I"
        assert lines[3] == "1,-0.5,0.606530659713"

    def test_window(self):
        curve = DecayCurve(np.arange(5.0), -np.arange(5.0))
        np.testing.assert_allclose(curve.window(1.0, 3.0).times, [1.0, 2.0, 3.0])
