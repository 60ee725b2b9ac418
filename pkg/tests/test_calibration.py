import numpy as np
import pytest
from scipy.special import expit

from calibrec.calibration import (
    CalibrationSample,
    Calibrator,
    apply,
    collect_calibration_samples,
    ece,
    estimate_propensity,
    fit,
    gamma_shift,
    load_calibrator,
    nll,
    read_reliability_csv,
    reliability_table,
    save_calibrator,
    write_reliability_csv,
)
from calibrec.ranker import init_params, score

from conftest import make_dataset


def make_samples(s, y, theta=None):
    theta = np.ones(len(s)) if theta is None else theta
    return [CalibrationSample(float(a), int(b), float(t)) for a, b, t in zip(s, y, theta)]


def bernoulli_samples(true_fn, n, rng, low=-3.0, high=3.0):
    s = rng.uniform(low, high, n)
    y = (rng.random(n) < true_fn(s)).astype(int)
    return s, y, make_samples(s, y)


class TestApply:
    def test_platt_at_zero(self):
        assert apply(Calibrator("platt", a=1.0, b=0.0), 0.0) == pytest.approx(0.5)

    def test_gaussian_reduces_to_platt(self):
        gauss = Calibrator("gaussian", a=0.0, b=1.0, c=0.0)
        platt = Calibrator("platt", a=1.0, b=0.0)
        grid = np.linspace(-5, 5, 101)
        np.testing.assert_allclose(apply(gauss, grid), apply(platt, grid), atol=1e-15)

    def test_gamma_value(self):
        cal = Calibrator("gamma", a=0.0, b=1.0, c=0.0)
        assert apply(cal, 2.0) == pytest.approx(0.880797, abs=1e-6)

    def test_gamma_rejects_nonpositive(self):
        cal = Calibrator("gamma", a=1.0, b=0.0, c=0.0)
        with pytest.raises(ValueError):
            apply(cal, -1.0)

    def test_gamma_score_shift(self):
        cal = Calibrator("gamma", a=0.0, b=1.0, c=0.0, score_shift=3.0)
        assert apply(cal, -1.0) == pytest.approx(expit(2.0))

    def test_gamma_with_shift_saturates_below_fitted_range(self):
        # serving scores below the fit-time minimum clamp to the shift
        # epsilon rather than failing
        cal = Calibrator("gamma", a=1.0, b=0.0, c=0.0, score_shift=2.0)
        low = apply(cal, -50.0)
        assert low == apply(cal, -2.0)
        assert 0.0 <= low <= 0.01

    def test_nan_score(self):
        with pytest.raises(ValueError):
            apply(Calibrator("platt", a=1.0), float("nan"))

    def test_histogram_lookup_and_clamping(self):
        cal = Calibrator("histogram", bins=[(0.0, 0.2), (1.0, 0.8)])
        assert apply(cal, -5.0) == 0.2
        assert apply(cal, 0.5) == 0.8
        assert apply(cal, 99.0) == 0.8

    def test_output_in_unit_interval(self):
        rng = np.random.default_rng(0)
        for cal in (
            Calibrator("platt", a=3.0, b=-2.0),
            Calibrator("gaussian", a=0.5, b=-1.0, c=2.0),
        ):
            vals = apply(cal, rng.uniform(-50, 50, 1000))
            assert np.all((vals >= 0) & (vals <= 1))


class TestFit:
    def test_platt_recovery(self):
        rng = np.random.default_rng(21)
        _, _, samples = bernoulli_samples(lambda s: expit(2 * s - 1), 30_000, rng)
        cal = fit("platt", samples)
        assert cal.a == pytest.approx(2.0, abs=0.15)
        assert cal.b == pytest.approx(-1.0, abs=0.15)

    def test_unbiased_with_unit_theta_identical(self):
        rng = np.random.default_rng(3)
        _, _, samples = bernoulli_samples(lambda s: expit(s), 5000, rng)
        biased, tb = fit("platt", samples, unbiased=False, full_output=True)
        unbiased, tu = fit("platt", samples, unbiased=True, full_output=True)
        assert (biased.a, biased.b, biased.c) == (unbiased.a, unbiased.b, unbiased.c)
        np.testing.assert_array_equal(tb, tu)

    def test_gaussian_matches_bayes_posterior(self):
        # scores from two unit-variance gaussians at +-1: posterior sigmoid(2s)
        rng = np.random.default_rng(5)
        n = 20_000
        s = np.concatenate([rng.normal(1, 1, n), rng.normal(-1, 1, n)])
        y = np.concatenate([np.ones(n), np.zeros(n)])
        samples = make_samples(s, y)
        cal = fit("gaussian", samples)
        fitted = nll(cal, samples)
        bayes = nll(Calibrator("platt", a=2.0, b=0.0), samples)
        assert fitted <= bayes * 1.01

    def test_monotone_loss_trace(self):
        rng = np.random.default_rng(8)
        _, _, samples = bernoulli_samples(lambda s: expit(0.5 * s + 1), 2000, rng)
        for kind in ("platt", "gaussian"):
            _, trace = fit(kind, samples, full_output=True)
            assert np.all(np.diff(trace) <= 0)

    def test_gamma_fit_runs_on_shifted_scores(self):
        rng = np.random.default_rng(13)
        s = rng.uniform(-2, 2, 4000)
        y = (rng.random(4000) < expit(1.5 * s)).astype(int)
        shift = gamma_shift(s)
        cal, trace = fit("gamma", make_samples(s, y), score_shift=shift, full_output=True)
        assert cal.score_shift == shift
        assert np.all(np.diff(trace) <= 0)
        probs = apply(cal, s)
        assert np.all((probs >= 0) & (probs <= 1))

    def test_gamma_requires_positive_scores(self):
        samples = make_samples([-1.0, 1.0], [0, 1])
        with pytest.raises(ValueError):
            fit("gamma", samples)

    def test_one_class_rejected(self):
        samples = make_samples([0.1, 0.2], [1, 1])
        with pytest.raises(ValueError):
            fit("platt", samples)

    def test_platt_slope_never_negative(self):
        # anti-correlated labels would pull a below zero; projection holds it at 0
        rng = np.random.default_rng(2)
        s = rng.uniform(-2, 2, 3000)
        y = (rng.random(3000) < expit(-2 * s)).astype(int)
        cal = fit("platt", make_samples(s, y))
        assert cal.a >= 0.0

    def test_non_finite_loss_reported(self):
        samples = make_samples([np.inf, 1.0], [0, 1])
        with pytest.raises(ValueError, match="iteration"):
            fit("platt", samples)

    def test_histogram_values_are_bin_positive_fractions(self):
        s = np.arange(30, dtype=float)
        y = np.array([1] * 10 + [0] * 20)
        cal = fit("histogram", make_samples(s, y), num_bins=3)
        assert [v for _, v in cal.bins] == [1.0, 0.0, 0.0]
        assert apply(cal, 3.0) == 1.0
        assert apply(cal, 29.0) == 0.0

    def test_unbiased_mode_weights_by_inverse_propensity(self):
        # two samples at the same score, one positive with theta=0.5: the
        # weighted positive fraction in one histogram bin is 1/0.5 / 2 = 1.0
        samples = [CalibrationSample(0.0, 1, 0.5), CalibrationSample(0.0, 0, 1.0)]
        cal = fit("histogram", samples, unbiased=True, num_bins=1)
        assert cal.bins[0][1] == pytest.approx(1.0)


class TestMonotonePreservesRanking:
    def test_platt_and_gamma(self):
        rng = np.random.default_rng(4)
        s = np.sort(rng.uniform(0.1, 5.0, 200))
        for cal in (
            Calibrator("platt", a=1.3, b=-0.4),
            Calibrator("gamma", a=0.7, b=0.2, c=-1.0),
        ):
            p = apply(cal, s)
            assert np.all(np.diff(p) >= 0)
            assert np.array_equal(np.argsort(s, kind="stable"), np.argsort(p, kind="stable"))


class TestPropensity:
    def test_most_popular_is_one(self):
        model = estimate_propensity([1, 5, 10])
        assert model.theta[2] == 1.0

    def test_zero_popularity_clipped(self):
        model = estimate_propensity([0, 10], theta_min=0.01)
        assert model.theta[0] == 0.01

    def test_power_law_value(self):
        model = estimate_propensity([1, 4], tau=0.5)
        assert model.theta[0] == pytest.approx(0.5)

    def test_all_zero_rejected(self):
        with pytest.raises(ValueError):
            estimate_propensity([0, 0, 0])


class TestEce:
    def test_perfect_confidence(self):
        pairs = [(1.0, 1), (0.0, 0), (1.0, 1)]
        assert ece(pairs) == 0.0

    def test_single_bin_consistent(self):
        pairs = [(0.7, 1)] * 7 + [(0.7, 0)] * 3
        assert ece(pairs) == pytest.approx(0.0, abs=1e-12)

    def test_single_bin_off_by_two_tenths(self):
        pairs = [(0.7, 1)] * 5 + [(0.7, 0)] * 5
        assert ece(pairs) == pytest.approx(0.2, abs=1e-12)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(17)
        p = rng.random(500)
        y = (rng.random(500) < p).astype(int)
        pairs = list(zip(p, y))
        shuffled = [pairs[i] for i in rng.permutation(500)]
        assert ece(pairs) == pytest.approx(ece(shuffled), abs=1e-15)
        assert 0.0 <= ece(pairs) <= 1.0

    def test_errors(self):
        with pytest.raises(ValueError):
            ece([])
        with pytest.raises(ValueError):
            ece([(1.5, 1)])

    def test_oracle_calibrated_predictions_small(self):
        rng = np.random.default_rng(30)
        p = rng.random(10_000)
        y = (rng.random(10_000) < p).astype(int)
        assert ece(list(zip(p, y)), num_bins=15) <= 0.02


class TestReliabilityTable:
    def test_two_bin_rows(self):
        rows = reliability_table([(0.25, 0), (0.75, 1)], num_bins=2)
        assert rows[0][2:] == (1, 0.25, 0.0)
        assert rows[1][2:] == (1, 0.75, 1.0)

    def test_ece_recomputable_from_table(self):
        rng = np.random.default_rng(23)
        p = rng.random(300)
        y = (rng.random(300) < 0.4).astype(int)
        pairs = list(zip(p, y))
        for scheme in ("equal_width", "equal_mass"):
            rows = reliability_table(pairs, num_bins=7, scheme=scheme)
            n = sum(r[2] for r in rows)
            recomputed = sum(r[2] / n * abs(r[4] - r[3]) for r in rows)
            assert recomputed == pytest.approx(ece(pairs, 7, scheme), abs=1e-12)

    def test_equal_mass_remainder_rule(self):
        rng = np.random.default_rng(2)
        pairs = [(float(v), 0) for v in rng.random(10)]
        rows = reliability_table(pairs, num_bins=3, scheme="equal_mass")
        assert [r[2] for r in rows] == [4, 3, 3]

    def test_empty_bins_present_with_zero_count(self):
        rows = reliability_table([(0.05, 0)], num_bins=4)
        assert len(rows) == 4
        assert [r[2] for r in rows] == [1, 0, 0, 0]

    def test_csv_round_trip(self, tmp_path):
        rows = reliability_table([(0.2, 0), (0.9, 1), (0.95, 1)], num_bins=4)
        path = tmp_path / "rel.csv"
        write_reliability_csv(rows, path)
        assert read_reliability_csv(path) == rows


class TestCollectSamples:
    def make_setup(self):
        ds = make_dataset(
            {u: {0, 1} for u in range(5)},
            validation={u: {2, 3} for u in range(5)},
            num_items=30,
        )
        params = init_params(5, 30, 4, seed=0)
        return ds, params

    def test_counts(self):
        ds, params = self.make_setup()
        samples = collect_calibration_samples(
            params, ds, np.random.default_rng(0), negatives_per_positive=4
        )
        assert len(samples) == 10 * 5  # 10 positives, each with 4 negatives
        assert sum(s.y for s in samples) == 10

    def test_default_theta_is_one(self):
        ds, params = self.make_setup()
        samples = collect_calibration_samples(params, ds, np.random.default_rng(0))
        assert all(s.theta == 1.0 for s in samples)

    def test_theta_comes_from_model(self):
        ds, params = self.make_setup()
        model = estimate_propensity(np.arange(1, 31))
        rng = np.random.default_rng(1)
        samples = collect_calibration_samples(params, ds, rng, propensity=model)
        # positives are items 2 and 3 for every user; spot-check the mapping
        for smp in samples:
            matches = [i for i in range(30) if model.theta[i] == pytest.approx(smp.theta)]
            assert matches

    def test_scores_match_params(self):
        ds, params = self.make_setup()
        samples = collect_calibration_samples(params, ds, np.random.default_rng(2))
        positive_scores = sorted(s.s for s in samples if s.y == 1)
        expected = sorted(score(params, u, i) for u in range(5) for i in (2, 3))
        np.testing.assert_allclose(positive_scores, expected)

    def test_negatives_avoid_all_observed(self):
        ds = make_dataset(
            {0: {0, 1}}, validation={0: {2}}, test={0: {3}}, num_items=5
        )
        params = init_params(1, 5, 2, seed=3)
        rng = np.random.default_rng(4)
        samples = collect_calibration_samples(params, ds, rng, negatives_per_positive=6)
        neg_scores = {round(s.s, 12) for s in samples if s.y == 0}
        assert neg_scores == {round(score(params, 0, 4), 12)}

    def test_empty_split(self):
        ds = make_dataset({0: {0}}, num_items=3)
        with pytest.raises(ValueError):
            collect_calibration_samples(init_params(1, 3, 2, 0), ds, np.random.default_rng(0))


class TestUnbiasedRiskReduction:
    def test_nll_reduction_at_unit_theta(self):
        rng = np.random.default_rng(44)
        s = rng.uniform(-2, 2, 400)
        y = (rng.random(400) < expit(s)).astype(int)
        samples = make_samples(s, y)
        cal = Calibrator("platt", a=1.0, b=0.0)
        assert nll(cal, samples, unbiased=True) == nll(cal, samples, unbiased=False)

    def test_unbiased_nll_expectation_small(self):
        # exposure thins positives by theta; reweighting recovers the
        # fully-observed loss in expectation
        rng = np.random.default_rng(55)
        n = 20_000
        s = rng.uniform(-2, 2, n)
        p_true = expit(1.5 * s - 0.5)
        y_full = (rng.random(n) < p_true).astype(int)
        theta = rng.uniform(0.2, 1.0, n)
        exposed = rng.random(n) < theta
        y_obs = y_full * exposed

        cal = Calibrator("platt", a=1.5, b=-0.5)
        full = nll(cal, make_samples(s, y_full))
        unbiased = nll(cal, make_samples(s, y_obs, theta), unbiased=True)

        log_ratio = np.log1p(-p_true) - np.log(p_true)
        var = np.sum(y_full * log_ratio**2 * (1 - theta) / theta) / n**2
        assert abs(unbiased - full) <= 3 * np.sqrt(var)


class TestSerialization:
    def test_parametric_round_trip(self, tmp_path):
        cal = Calibrator("gamma", a=0.3, b=-1.2, c=0.8, score_shift=2.5)
        path = tmp_path / "cal.json"
        save_calibrator(cal, path)
        loaded = load_calibrator(path)
        assert loaded == cal

    def test_histogram_round_trip(self, tmp_path):
        cal = Calibrator("histogram", bins=[(0.1, 0.25), (0.9, 0.75)])
        path = tmp_path / "cal.json"
        save_calibrator(cal, path)
        loaded = load_calibrator(path)
        assert loaded == cal
        assert apply(loaded, 0.05) == 0.25
