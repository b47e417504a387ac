import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from itofeat.series import SyntheticSpec, TimeSeries, simulate
from itofeat.weighting import (
    UNIFORM,
    WeightScheme,
    calibrate,
    exponential_closed_form,
    fit_power_law,
    mean_squared_increments,
    parse_scheme,
    weights,
)

SCHEMES = st.one_of(
    st.just(UNIFORM),
    st.just(WeightScheme("linear")),
    st.floats(0.0, 0.999).map(lambda p: WeightScheme("exponential", p)),
    st.floats(-3.0, 3.0).map(lambda a: WeightScheme("calibrated", a)),
)


class TestWeights:
    def test_linear_example(self):
        np.testing.assert_allclose(weights(WeightScheme("linear"), 3), [1 / 6, 1 / 3, 1 / 2], rtol=1e-15)

    def test_exponential_zero_is_uniform(self):
        assert list(weights(WeightScheme("exponential", 0.0), 4)) == [0.25] * 4

    def test_calibrated_example(self):
        w = weights(WeightScheme("calibrated", 1.0), 3)
        np.testing.assert_allclose(w, [6 / 11 / 3, 6 / 11 / 2, 6 / 11], rtol=1e-15)
        np.testing.assert_allclose(w, [0.1818, 0.2727, 0.5455], atol=1e-4)

    def test_linear_formula(self):
        n = 17
        j = np.arange(1, n + 1)
        np.testing.assert_allclose(weights(WeightScheme("linear"), n), 2 * j / (n * (n + 1)), rtol=1e-14)

    @pytest.mark.parametrize("p", [0.1, 0.5, 0.9])
    @pytest.mark.parametrize("n", [1, 5, 40])
    def test_exponential_closed_form(self, p, n):
        np.testing.assert_allclose(weights(WeightScheme("exponential", p), n), exponential_closed_form(p, n),
                                   rtol=1e-12)

    def test_unnormalized(self):
        np.testing.assert_array_equal(weights(WeightScheme("linear", normalize=False), 3), [1, 2, 3])
        np.testing.assert_array_equal(weights(WeightScheme(normalize=False), 3), [1, 1, 1])

    def test_invalid(self):
        with pytest.raises(ValueError):
            weights(UNIFORM, 0)
        with pytest.raises(ValueError):
            WeightScheme("exponential", 1.0)
        with pytest.raises(ValueError):
            WeightScheme("triangular")

    @given(SCHEMES, st.integers(1, 2000))
    def test_normalized_nondecreasing(self, scheme, n):
        w = weights(scheme, n)
        assert w.size == n
        assert abs(w.sum() - 1.0) <= 1e-12
        assert np.all(w >= 0)
        if scheme.kind != "calibrated" or scheme.param >= 0:
            assert np.all(np.diff(w) >= -1e-18)

    @given(st.floats(1e-3, 0.999), st.integers(2, 500))
    def test_exponential_strictly_increasing(self, p, n):
        # beyond p**n < eps the increments 1 - p**j are no longer representable
        assume(p ** n > 1e-12)
        w = weights(WeightScheme("exponential", p), n)
        assert np.all(np.diff(w) > 0)
        # closed-form identity sums to one
        assert abs(exponential_closed_form(p, n).sum() - 1.0) <= 1e-9


class TestCalibration:
    def test_exact_power_law(self):
        res = fit_power_law(np.arange(1, 51, dtype=float))
        assert res.alpha_hat == pytest.approx(1.0, abs=1e-12)
        assert res.c_hat == pytest.approx(1.0, abs=1e-12)

    def test_constant(self):
        res = fit_power_law(np.full(10, 4.0))
        assert res.alpha_hat == pytest.approx(0.0, abs=1e-12)
        assert res.c_hat == pytest.approx(4.0, rel=1e-12)

    def test_brownian(self):
        x = simulate(SyntheticSpec("brownian", 100_000, 0, {"sigma": 1.0}))
        res = calibrate(x, 50)
        assert 0.9 <= res.alpha_hat <= 1.1
        assert res.s_squared.size == 50

    def test_mean_squared_increments_oracle(self, rng):
        x = rng.standard_normal(30)
        s2 = mean_squared_increments(x, 4)
        for i in range(1, 5):
            manual = sum((x[k + i] - x[k]) ** 2 for k in range(30 - i)) / (30 - i)
            assert s2[i - 1] == pytest.approx(manual, rel=1e-13)

    def test_errors(self):
        with pytest.raises(ValueError):
            fit_power_law([1.0, 0.0, 2.0])
        with pytest.raises(ValueError):
            calibrate(TimeSeries(np.arange(10.0)), 6)
        with pytest.raises(ValueError):
            calibrate(TimeSeries(np.arange(10.0)), 1)
        with pytest.raises(ValueError):
            calibrate(TimeSeries(np.ones(10)), 3)

    @given(st.floats(0.01, 100.0))
    def test_scale_equivariance(self, lam):
        x = simulate(SyntheticSpec("brownian", 400, 3)).values
        base = calibrate(TimeSeries(x), 20)
        scaled = calibrate(TimeSeries(lam * x), 20)
        assert scaled.alpha_hat == pytest.approx(base.alpha_hat, abs=1e-9)
        assert scaled.c_hat == pytest.approx(lam ** 2 * base.c_hat, rel=1e-9)

    def test_calibrated_scheme_favours_recent(self):
        res = fit_power_law(np.arange(1, 11, dtype=float))
        w = weights(res.scheme(), 5)
        assert np.all(np.diff(w) > 0)
        assert w[-1] / w[-2] == pytest.approx(2.0, rel=1e-10)


def test_parse_scheme():
    assert parse_scheme("uniform").is_uniform
    assert parse_scheme("exp:0.5") == WeightScheme("exponential", 0.5)
    assert parse_scheme("linear").kind == "linear"
    s = simulate(SyntheticSpec("brownian", 1000, 1))
    cal = parse_scheme("calibrated:20", s)
    assert cal.kind == "calibrated" and math.isfinite(cal.param)
    with pytest.raises(ValueError):
        parse_scheme("calibrated:20")
    with pytest.raises(ValueError):
        parse_scheme("cubic")
