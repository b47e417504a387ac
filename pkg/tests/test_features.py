import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from itofeat.features import (
    DECILES,
    cdf_grid_features,
    decile_ranks,
    default_grid,
    order_stat_features,
    quantile_features,
)
from itofeat.kernels import MixtureModel, mixture_cdf
from itofeat.separation import SeparationConfig, WindowEstimate, msm_run
from oracles import grid_inverse, mixture_cdf_oracle, normal_cdf, normal_pdf


def est(model, index=1):
    return WindowEstimate(index, model, 0.0, 0.0, 0, True)


STD = MixtureModel("normal", [1.0], [0.0], [1.0])
PAIR = MixtureModel("normal", [0.4, 0.6], [-1.0, 2.0], [0.5, 1.5])


class TestCdfGrid:
    def test_standard_normal(self):
        fm = cdf_grid_features([est(STD)], [-1.0, 0.0, 1.0])
        np.testing.assert_allclose(fm.rows[0], [normal_cdf(-1), 0.5, normal_cdf(1)], atol=1e-15)
        assert fm.header() == ["i", "f_1", "f_2", "f_3"]

    def test_identical_models_identical_rows(self):
        fm = cdf_grid_features([est(PAIR, 1), est(PAIR, 2)], np.linspace(-3, 5, 10))
        np.testing.assert_array_equal(fm.rows[0], fm.rows[1])

    def test_matches_oracle(self):
        grid = np.linspace(-4, 7, 25)
        fm = cdf_grid_features([est(PAIR)], grid)
        oracle = [mixture_cdf_oracle(PAIR.weights, PAIR.locs, PAIR.scales, x) for x in grid]
        np.testing.assert_allclose(fm.rows[0], oracle, atol=1e-10)

    def test_errors(self):
        with pytest.raises(ValueError):
            cdf_grid_features([est(STD)], [])
        with pytest.raises(ValueError):
            cdf_grid_features([est(STD)], [1.0, 0.0])

    def test_default_grid(self):
        d = np.random.default_rng(0).standard_normal(1001)
        g = default_grid(d, 10)
        assert g[0] == d.min() and g[-1] == d.max()
        assert g.size == 10 and np.all(np.diff(g) > 0)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-5, 5), st.floats(0.1, 4), st.lists(st.floats(-20, 20), min_size=2, max_size=30, unique=True))
    def test_rows_monotone_in_unit_interval(self, a, b, grid):
        grid = np.sort(grid)
        row = cdf_grid_features([est(MixtureModel("normal", [1.0], [a], [b]))], grid).rows[0]
        assert np.all(np.diff(row) >= 0)
        assert np.all((row >= 0) & (row <= 1))


class TestQuantiles:
    def test_symmetry(self):
        row = quantile_features([est(STD)], DECILES).rows[0]
        np.testing.assert_allclose(row, -row[::-1], atol=1e-9)

    def test_location_shift(self):
        shifted = MixtureModel("normal", PAIR.weights, PAIR.locs + 2.5, PAIR.scales)
        base = quantile_features([est(PAIR)]).rows[0]
        moved = quantile_features([est(shifted)]).rows[0]
        np.testing.assert_allclose(moved - base, 2.5, atol=1e-9)

    def test_against_grid_inversion(self):
        row = quantile_features([est(PAIR)], [0.25, 0.9]).rows[0]
        for q, value in zip([0.25, 0.9], row):
            oracle = grid_inverse(lambda x: mixture_cdf_oracle(PAIR.weights, PAIR.locs, PAIR.scales, x), q, -4, 7)
            assert value == pytest.approx(oracle, abs=1e-8)

    def test_errors(self):
        for levels in ([0.0, 0.5], [0.5, 1.0], [], [0.6, 0.4]):
            with pytest.raises(ValueError):
                quantile_features([est(STD)], levels)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(0.001, 0.999), min_size=1, max_size=12, unique=True))
    def test_round_trip(self, levels):
        levels = np.sort(levels)
        if np.any(np.diff(levels) <= 0):
            return
        row = quantile_features([est(PAIR)], levels).rows[0]
        np.testing.assert_allclose(mixture_cdf(PAIR, row), levels, atol=1e-8)
        assert np.all(np.diff(row) >= 0)


class TestOrderStats:
    def test_examples(self):
        fm = order_stat_features(np.array([5.0, 1.0, 3.0]), 3, [1, 2, 3])
        np.testing.assert_array_equal(fm.rows[0], [1, 3, 5])
        x = np.random.default_rng(1).standard_normal(30)
        fm = order_stat_features(x, 10, [1, 10], stride=5)
        for i, row in zip(fm.indices, fm.rows):
            w = x[i - 10:i]
            assert list(row) == [w.min(), w.max()]

    def test_errors(self):
        with pytest.raises(ValueError):
            order_stat_features(np.arange(10.0), 5, [0, 2])
        with pytest.raises(ValueError):
            order_stat_features(np.arange(10.0), 5, [1, 6])
        with pytest.raises(ValueError):
            order_stat_features(np.arange(10.0), 5, [1, 2, 4])

    def test_decile_ranks(self):
        np.testing.assert_array_equal(decile_ranks(100), np.arange(10, 100, 10))
        assert decile_ranks(1000).size == 9

    @given(st.lists(st.floats(-100, 100), min_size=8, max_size=8), st.randoms())
    def test_permutation_invariant(self, values, rnd):
        shuffled = list(values)
        rnd.shuffle(shuffled)
        a = order_stat_features(np.array(values), 8, [2, 4, 6, 8]).rows
        b = order_stat_features(np.array(shuffled), 8, [2, 4, 6, 8]).rows
        np.testing.assert_array_equal(a, b)

    def test_close_to_model_quantiles(self):
        n = 20_000
        x = np.random.default_rng(7).standard_normal(n)
        ranks = decile_ranks(n)
        row = order_stat_features(x, n, ranks).rows[0]
        levels = ranks / n
        model = quantile_features([est(STD)], levels).rows[0]
        # asymptotic standard error of a sample quantile: sqrt(q(1-q)/n) / f(x_q)
        se = np.sqrt(levels * (1 - levels) / n) / np.array([normal_pdf(v) for v in model])
        assert np.max(np.abs(row - model) / se) <= 3.0


def test_features_from_msm_run():
    x = np.random.default_rng(3).standard_normal(400)
    ests = msm_run(x, 200, 100, SeparationConfig(K=2))
    fm = cdf_grid_features(ests, default_grid(x))
    assert fm.rows.shape == (3, 10)
    assert list(fm.indices) == [200, 300, 400]
    row = fm.csv_rows()[0]
    assert row[0] == "200" and math.isclose(float(row[1]), fm.rows[0, 0])
