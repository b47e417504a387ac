import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from itofeat.kernels import MixtureModel
from itofeat.reconstruction import (
    BinLayout,
    ReconstructionError,
    bin_layout,
    coefficient_rows,
    histogram_mode,
    mixture_mode,
    nonuniform_reconstruct,
    nonuniform_rows,
    nonuniform_series,
    second_level,
    uniform_point,
    uniform_reconstruct,
)
from itofeat.separation import SeparationConfig, WindowEstimate
from itofeat.series import SyntheticSpec, WindowView, simulate
from oracles import pearson


def estimate(p, a, b, index=10):
    return WindowEstimate(index, MixtureModel("normal", p, a, b), 0.0, 0.0, 1, True)


class TestUniform:
    @pytest.mark.parametrize("estimator", ["mean", "median", "mode"])
    def test_single_component(self, estimator):
        assert uniform_point(MixtureModel("normal", [1.0], [0.7], [2.0]), estimator) == (0.7, 2.0)

    def test_examples(self):
        m = MixtureModel("normal", [0.5, 0.5], [-1, 1], [1, 1])
        assert uniform_point(m, "mean")[0] == 0.0
        m = MixtureModel("normal", [0.2, 0.3, 0.5], [1, 2, 3], [1, 1, 1])
        assert uniform_point(m, "median")[0] == 2.0
        assert uniform_point(m, "mode")[0] == 3.0

    def test_mode_tie_takes_first(self):
        m = MixtureModel("normal", [0.4, 0.4, 0.2], [5.0, -1.0, 0.0], [1.0, 2.0, 3.0])
        assert uniform_point(m, "mode") == (5.0, 1.0)

    def test_median_marginal(self):
        m = MixtureModel("normal", [0.6, 0.4], [3.0, 1.0], [0.1, 5.0])
        assert uniform_point(m, "median") == (3.0, 0.1)

    def test_series_and_rows(self):
        ests = [estimate([1.0], [0.5], [1.0], 5), estimate([0.5, 0.5], [-1, 3], [1, 2], 6)]
        cs = uniform_reconstruct(ests, "mean")
        np.testing.assert_array_equal(cs.indices, [5, 6])
        np.testing.assert_allclose(cs.a_bar, [0.5, 1.0])
        np.testing.assert_allclose(cs.b_bar, [1.0, 1.5])
        assert coefficient_rows(cs)[1] == ["6", "1.0", "1.5"]
        with pytest.raises(ReconstructionError):
            uniform_reconstruct([])
        with pytest.raises(ValueError):
            uniform_point(ests[0].model, "trimmed")

    @given(st.lists(st.tuples(st.floats(0.01, 1), st.floats(-5, 5), st.floats(0.1, 3)), min_size=1, max_size=5),
           st.randoms())
    def test_mean_permutation_invariant(self, comps, rnd):
        w = np.array([c[0] for c in comps])
        m = MixtureModel("normal", w / w.sum(), [c[1] for c in comps], [c[2] for c in comps])
        order = list(range(len(comps)))
        rnd.shuffle(order)
        a0, b0 = uniform_point(m, "mean")
        a1, b1 = uniform_point(m.permuted(order), "mean")
        assert a1 == pytest.approx(a0, abs=1e-12) and b1 == pytest.approx(b0, abs=1e-12)

    @given(st.lists(st.floats(0.01, 1), min_size=2, max_size=6), st.floats(1.01, 5.0))
    def test_mode_invariant_under_monotone_weight_transform(self, raw, power):
        raw = np.array(raw)
        assume_unique = np.sum(raw == raw.max()) == 1
        if not assume_unique:
            return
        K = raw.size
        a = np.arange(K, dtype=float)
        base = MixtureModel("normal", raw / raw.sum(), a, np.ones(K))
        t = raw ** power
        moved = MixtureModel("normal", t / t.sum(), a, np.ones(K))
        assert uniform_point(base, "mode") == uniform_point(moved, "mode")


class TestLayout:
    def test_uniform_example(self):
        lay = bin_layout(np.array([1, 2, 1, 2, 1.0]), "U", 2)
        np.testing.assert_array_equal(lay.boundaries, [1, 1.5, 2])

    def test_quantile_example(self):
        lay = bin_layout(np.array([5, 1, 4, 2, 3.0]), "Q", 2)
        np.testing.assert_array_equal(lay.boundaries, [1, 3, 5])

    def test_membership_half_open_last_closed(self):
        lay = BinLayout("U", 2, np.array([0.0, 1.0, 2.0]))
        np.testing.assert_array_equal(lay.assign([0.0, 0.999, 1.0, 2.0]), [0, 0, 1, 1])

    def test_errors(self):
        with pytest.raises(ReconstructionError):
            bin_layout(np.ones(5), "U", 2)
        with pytest.raises(ReconstructionError):
            bin_layout(np.array([1, 2, 1, 2, 1.0]), "Q", 3)
        lay = bin_layout(np.array([1, 2, 1, 2, 1.0]), "Q", 2)
        np.testing.assert_array_equal(lay.boundaries, [1, 1.5, 2])
        with pytest.raises(ReconstructionError):
            bin_layout(np.arange(5.0), "X", 2)
        with pytest.raises(ReconstructionError):
            bin_layout(np.arange(5.0), "U", 1)

    def test_tie_fallback(self):
        x = np.array([0.0] * 10 + [1.0, 2.0, 3.0, 4.0])
        lay = bin_layout(x, "Q", 3)
        assert np.all(np.diff(lay.boundaries) > 0)
        assert lay.boundaries[0] == 0.0 and lay.boundaries[-1] == 4.0

    @given(st.integers(2, 12), st.integers(0, 10_000), st.sampled_from(["U", "Q"]))
    def test_boundaries_strict_and_span(self, J, seed, mode):
        x = np.random.default_rng(seed).standard_normal(60)
        lay = bin_layout(x, mode, J)
        assert lay.boundaries.size == J + 1
        assert np.all(np.diff(lay.boundaries) > 0)
        assert lay.boundaries[0] == x.min() and lay.boundaries[-1] == x.max()

    @given(st.integers(2, 10), st.integers(20, 300), st.integers(0, 10_000))
    def test_quantile_counts_balanced(self, J, n, seed):
        x = np.random.default_rng(seed).permutation(n).astype(float)
        counts = np.bincount(bin_layout(x, "Q", J).assign(x), minlength=J)
        assert counts.max() - counts.min() <= 1


class TestNonUniform:
    def test_hand_example(self):
        w = np.array([1, 2, 1, 2, 1.0])
        est = nonuniform_reconstruct(w, bin_layout(w, "U", 2), "avg")
        np.testing.assert_array_equal(est.alpha, [1.0, -1.0])
        np.testing.assert_array_equal(est.counts, [2, 2])
        assert est.selected_bin == 0 and est.selected_drift == 1.0

    @pytest.mark.parametrize("estimator", ["avg", "med", "mode"])
    def test_constant_increments(self, estimator):
        x = 0.3 * np.arange(40) + 2.0
        est = nonuniform_reconstruct(x, bin_layout(x, "Q", 5), estimator)
        np.testing.assert_allclose(est.alpha, 0.3, atol=1e-12)
        np.testing.assert_allclose(est.beta2, 0.0, atol=1e-20)

    def test_lower_median(self):
        x = np.array([0.0, 1.0, 0.0, 3.0, 0.0, 5.0, 0.0, 7.0, 10.0])
        lay = BinLayout("U", 2, np.array([0.0, 0.5, 10.0]))
        est = nonuniform_reconstruct(x, lay, "med")
        # members at 0 have differences 1, 3, 5, 7: lower middle is 3
        assert est.alpha[0] == 3.0

    def test_empty_bin_flagged(self):
        x = np.array([0.0, 0.1, 0.0, 0.1, 10.0])
        est = nonuniform_reconstruct(x, bin_layout(x, "U", 3), "avg")
        assert est.empty[1] and est.alpha[1] == 0.0
        assert est.nu_min == 0

    def test_fit_estimators(self, rng):
        x = np.cumsum(rng.normal(0.1, 1.0, 400))
        cfg = SeparationConfig(K=1)
        lay = bin_layout(x, "Q", 3)
        avg = nonuniform_reconstruct(x, lay, "avg", cfg)
        plain = nonuniform_reconstruct(x, lay, "avg")
        np.testing.assert_allclose(avg.alpha, plain.alpha, rtol=1e-10, atol=1e-12)
        med = nonuniform_reconstruct(x, lay, "med", cfg)
        mode = nonuniform_reconstruct(x, lay, "mode", cfg)
        np.testing.assert_allclose(med.alpha, plain.alpha, atol=1e-8)
        np.testing.assert_allclose(mode.alpha, plain.alpha, atol=1e-6)

    def test_modes(self):
        m = MixtureModel("normal", [0.3, 0.7], [-2.0, 1.5], [0.5, 0.5])
        assert mixture_mode(m) == pytest.approx(1.5, abs=1e-6)
        d = np.concatenate([np.full(50, 2.0), np.linspace(-5, 5, 20)])
        assert abs(histogram_mode(d) - 2.0) < 1.0

    def test_errors(self):
        x = np.array([1.0, 2.0])
        with pytest.raises(ReconstructionError):
            nonuniform_reconstruct(x, BinLayout("U", 2, np.array([1.0, 1.5, 2.0])))
        with pytest.raises(ValueError):
            nonuniform_reconstruct(np.arange(5.0), bin_layout(np.arange(5.0), "U", 2), "mean")

    @given(st.integers(0, 10_000), st.integers(2, 10), st.sampled_from(["U", "Q"]))
    def test_mass_conservation(self, seed, J, mode):
        x = np.cumsum(np.random.default_rng(seed).standard_normal(80))
        est = nonuniform_reconstruct(x, bin_layout(x, mode, J), "avg")
        d = np.diff(x)
        assert est.counts.sum() == x.size - 1
        assert abs(est.counts @ est.alpha - d.sum()) <= 1e-12 * max(1.0, np.abs(d).sum())
        assert est.selected_drift == est.alpha[est.selected_bin]

    def test_ou_drift_correlation(self):
        theta, dt = 0.5, 0.01
        x = simulate(SyntheticSpec("ou", 20_000, 0, {"theta": theta, "sigma": 1.0, "dt": dt})).values
        lay = bin_layout(x, "Q", 10)
        est = nonuniform_reconstruct(WindowView(x.size, x.size, x), lay, "avg")
        mids = 0.5 * (lay.boundaries[:-1] + lay.boundaries[1:])
        assert pearson(est.alpha, -theta * dt * mids) >= 0.9


class TestSeries:
    def test_flat_windows(self):
        x = np.concatenate([np.zeros(10), np.arange(10.0)])
        ests = nonuniform_series(x, 5, "Q", 2)
        assert ests[0].selected_drift == 0.0
        assert [e.index for e in ests] == list(range(5, 21))

    def test_rows(self):
        x = np.cumsum(np.random.default_rng(1).standard_normal(50))
        ests = nonuniform_series(x, 20, "U", 3, stride=10)
        rows = nonuniform_rows(ests)
        assert [r[0] for r in rows] == ["20", "30", "40", "50"]
        assert all(1 <= int(r[1]) <= 3 for r in rows)

    def test_second_level_constant(self):
        x = np.cumsum(np.random.default_rng(2).standard_normal(60))
        first = nonuniform_series(x, 10, "U", 2)
        flat = [type(e)(e.index, e.counts, e.alpha, e.beta2, e.empty, e.selected_bin, 0.7, e.estimator)
                for e in first]
        second = second_level(x, flat, 10, "U", 2)
        assert all(e.selected_drift == 0.0 for e in second)
        assert second[0].index == first[0].index + 9

    def test_second_level_linear_trend(self):
        x = np.cumsum(np.random.default_rng(3).standard_normal(80))
        first = nonuniform_series(x, 10, "Q", 3)
        kappa = 0.25
        trend = [type(e)(e.index, e.counts, e.alpha, e.beta2, e.empty, e.selected_bin, kappa * e.index,
                         e.estimator) for e in first]
        for e in second_level(x, trend, 10, "Q", 3):
            np.testing.assert_allclose(e.alpha, kappa, rtol=1e-12)

    def test_second_level_ou_bounded(self):
        x = simulate(SyntheticSpec("ou", 3000, 4, {"theta": 0.5, "dt": 0.01})).values
        first = nonuniform_series(x, 200, "Q", 5)
        second = second_level(x, first, 200, "Q", 5)
        bound = 3 * np.std(np.diff([e.selected_drift for e in first]))
        vals = np.array([e.selected_drift for e in second])
        assert np.all(np.isfinite(vals))
        assert np.all(np.abs(vals) <= bound)

    def test_second_level_too_short(self):
        x = np.cumsum(np.random.default_rng(5).standard_normal(25))
        first = nonuniform_series(x, 15, "U", 2)
        with pytest.raises(ReconstructionError):
            second_level(x, first, 15, "U", 2)
        with pytest.raises(ReconstructionError):
            second_level(x, [], 15, "U", 2)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 1000))
def test_nonuniform_causal(seed):
    # estimates for a window depend only on that window's values
    x = np.cumsum(np.random.default_rng(seed).standard_normal(60))
    y = x.copy()
    y[-1] += 100.0
    a = nonuniform_series(x, 20, "Q", 4)
    b = nonuniform_series(y, 20, "Q", 4)
    for ea, eb in zip(a[:-1], b[:-1]):
        assert ea.selected_drift == eb.selected_drift
