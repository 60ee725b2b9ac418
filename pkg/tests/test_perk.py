import numpy as np
import pytest

from calibrec.calibration import Calibrator
from calibrec.perk import (
    PerkConfig,
    expected_f1,
    expected_ndcg,
    expected_precision,
    expected_recall,
    pb_pmf,
    perk_recommend,
    select_k,
    utility_curve,
)
from calibrec.ranker import init_params, rank_items

from conftest import make_dataset
from oracles import brute_force_pb, mc_f1, mc_ndcg, mc_precision, mc_recall


class TestPbPmf:
    def test_empty(self):
        np.testing.assert_array_equal(pb_pmf([]), [1.0])

    def test_fair_coins(self):
        np.testing.assert_allclose(pb_pmf([0.5, 0.5]), [0.25, 0.5, 0.25], atol=1e-15)

    def test_two_item_enumeration(self):
        np.testing.assert_allclose(pb_pmf([0.3, 0.7]), [0.21, 0.58, 0.21], atol=1e-15)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(19)
        for _ in range(40):
            n = int(rng.integers(1, 11))
            probs = rng.random(n)
            np.testing.assert_allclose(pb_pmf(probs), brute_force_pb(probs), atol=1e-12)

    def test_sums_to_one(self):
        rng = np.random.default_rng(20)
        for _ in range(20):
            pmf = pb_pmf(rng.random(int(rng.integers(0, 40))))
            assert abs(pmf.sum() - 1.0) < 1e-9
            assert np.all(pmf >= 0)

    def test_invalid_probabilities(self):
        with pytest.raises(ValueError):
            pb_pmf([0.5, 1.2])
        with pytest.raises(ValueError):
            pb_pmf([np.nan])


class TestExpectedPrecision:
    def test_certain(self):
        assert expected_precision([1.0, 1.0]) == 1.0

    def test_linearity(self):
        assert expected_precision([0.5, 0.5, 0.5]) == pytest.approx(0.5)

    def test_mean(self):
        assert expected_precision([0.9, 0.4, 0.2]) == pytest.approx(0.5)

    def test_empty(self):
        with pytest.raises(ValueError):
            expected_precision([])


class TestExpectedRecall:
    def test_single_certain(self):
        assert expected_recall([1.0], []) == pytest.approx(1.0)

    def test_nothing_recommended(self):
        assert expected_recall([], [0.7]) == 0.0

    def test_half_half(self):
        # outcomes: (1,0) -> 1, (1,1) -> 0.5, rest -> 0
        assert expected_recall([0.5], [0.5]) == pytest.approx(0.375)


class TestExpectedF1:
    def test_perfect_singleton(self):
        assert expected_f1([1.0], []) == pytest.approx(1.0)

    def test_no_true_positives(self):
        assert expected_f1([0.0], [0.8, 0.2]) == 0.0

    def test_empty_topk(self):
        with pytest.raises(ValueError):
            expected_f1([], [0.5])


class TestExpectedNdcg:
    def test_perfect_singleton(self):
        assert expected_ndcg([1.0], []) == pytest.approx(1.0)

    def test_nothing_relevant_recommended(self):
        assert expected_ndcg([0.0, 0.0], [0.9]) == 0.0

    def test_certain_topk_is_one(self):
        assert expected_ndcg([1.0, 1.0, 1.0], [0.3, 0.6]) == pytest.approx(1.0)


class TestMonteCarloAgreement:
    def test_f1_half_half_instance(self):
        exact = expected_f1([0.5, 0.5], [0.5])
        mean, se = mc_f1([0.5, 0.5], [0.5], 200_000, np.random.default_rng(301))
        assert abs(exact - mean) <= 3 * se

    def test_ndcg_mixed_instance(self):
        exact = expected_ndcg([0.8, 0.3], [0.5, 0.5])
        mean, se = mc_ndcg([0.8, 0.3], [0.5, 0.5], 200_000, np.random.default_rng(302))
        assert abs(exact - mean) <= 3 * se

    def test_all_utilities_within_three_se(self):
        rng = np.random.default_rng(31)
        checks = {
            "precision": (expected_precision, mc_precision),
            "recall": (expected_recall, mc_recall),
            "f1": (expected_f1, mc_f1),
            "ndcg": (expected_ndcg, mc_ndcg),
        }
        for trial in range(8):
            k = int(rng.integers(1, 8))
            r = int(rng.integers(0, 12))
            topk = rng.random(k)
            rest = rng.random(r)
            for name, (exact_fn, mc_fn) in checks.items():
                exact = (
                    exact_fn(topk) if name == "precision" else exact_fn(topk, rest)
                )
                mean, se = mc_fn(topk, rest, 60_000, np.random.default_rng([31, trial]))
                assert abs(exact - mean) <= 3 * max(se, 1e-9), (name, trial)

    def test_utilities_in_unit_interval(self):
        rng = np.random.default_rng(32)
        for _ in range(20):
            topk = rng.random(int(rng.integers(1, 10)))
            rest = rng.random(int(rng.integers(0, 15)))
            for v in (
                expected_precision(topk),
                expected_recall(topk, rest),
                expected_f1(topk, rest),
                expected_ndcg(topk, rest),
            ):
                assert 0.0 <= v <= 1.0


class TestMonotoneCoherence:
    def test_appending_zero_probability_item(self):
        rng = np.random.default_rng(33)
        for _ in range(20):
            topk = list(rng.random(int(rng.integers(1, 8))))
            rest = list(rng.random(int(rng.integers(0, 8))))
            extended = topk + [0.0]
            assert expected_precision(extended) <= expected_precision(topk) + 1e-12
            assert expected_f1(extended, rest) <= expected_f1(topk, rest) + 1e-12


class TestUtilityCurve:
    def test_precision_curve_nonincreasing_for_sorted_probs(self):
        probs = np.sort(np.random.default_rng(34).random(12))[::-1]
        curve = utility_curve(probs, [], "precision")
        assert np.all(np.diff(curve) <= 1e-12)

    def test_hand_computed_f1_curve(self):
        np.testing.assert_allclose(
            utility_curve([1.0, 0.0], [], "f1"), [1.0, 2.0 / 3.0], atol=1e-12
        )

    def test_matches_standalone_operations(self):
        rng = np.random.default_rng(35)
        ranked = rng.random(7)
        rest = rng.random(5)
        standalone = {
            "precision": [expected_precision(ranked[:k]) for k in range(1, 8)],
            "recall": [
                expected_recall(ranked[:k], np.concatenate([ranked[k:], rest]))
                for k in range(1, 8)
            ],
            "f1": [
                expected_f1(ranked[:k], np.concatenate([ranked[k:], rest]))
                for k in range(1, 8)
            ],
            "ndcg": [
                expected_ndcg(ranked[:k], np.concatenate([ranked[k:], rest]))
                for k in range(1, 8)
            ],
        }
        for kind, expected in standalone.items():
            np.testing.assert_allclose(
                utility_curve(ranked, rest, kind), expected, atol=1e-9
            )

    def test_bad_kind(self):
        with pytest.raises(ValueError):
            utility_curve([0.5], [], "hits")


class TestSelectK:
    def test_tie_breaks_small(self):
        assert select_k([0.2, 0.5, 0.5]) == 2

    def test_increasing_curve(self):
        assert select_k(np.linspace(0, 1, 17)) == 17

    def test_matches_exhaustive_scan(self):
        rng = np.random.default_rng(36)
        for _ in range(1000):
            curve = rng.random(int(rng.integers(1, 30)))
            best = 1 + min(range(len(curve)), key=lambda i: (-curve[i], i))
            assert select_k(curve) == best

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(37)
        for _ in range(50):
            curve = rng.random(12)
            assert select_k(curve) == select_k(np.exp(3.0 * curve) + 7.0)

    def test_empty(self):
        with pytest.raises(ValueError):
            select_k([])


class TestPerkRecommend:
    def make_setup(self, num_items=30):
        dataset = make_dataset(
            {0: {0, 1}}, validation={0: {2}}, test={0: {3}}, num_items=num_items
        )
        params = init_params(1, num_items, 4, seed=40)
        params.item_bias[:] = np.linspace(1.0, -1.0, num_items)
        return dataset, params

    def test_constant_one_calibrator_cuts_at_one(self):
        dataset, params = self.make_setup()
        # a calibrator mapping every score to ~1 makes precision flat at 1
        cal = Calibrator("platt", a=0.0, b=500.0)
        cfg = PerkConfig(k_max=6, utility="precision", rest_pool=5)
        cut = perk_recommend(params, cal, dataset, 0, cfg)
        np.testing.assert_allclose(cut.curve, 1.0)
        assert cut.k_star == 1
        assert len(cut.items) == 1

    def test_pool_smaller_than_k_max(self):
        dataset, params = self.make_setup(num_items=6)
        cal = Calibrator("platt", a=1.0, b=0.0)
        cfg = PerkConfig(k_max=10, utility="f1", rest_pool=0)
        cut = perk_recommend(params, cal, dataset, 0, cfg)
        assert cut.k_max_effective == 4  # 6 items minus 2 train
        assert len(cut.curve) == 4

    def test_items_are_rank_prefix(self):
        dataset, params = self.make_setup()
        cal = Calibrator("platt", a=1.5, b=-0.5)
        cfg = PerkConfig(k_max=8, utility="f1", rest_pool=10)
        cut = perk_recommend(params, cal, dataset, 0, cfg)
        ranked = rank_items(params, 0, exclude=dataset.train_items(0))
        assert cut.items == ranked[: cut.k_star]
        assert cut.k_star == select_k(cut.curve)

    def test_no_candidates(self):
        dataset = make_dataset({0: {0, 1}}, num_items=2)
        params = init_params(1, 2, 2, seed=1)
        cal = Calibrator("platt", a=1.0, b=0.0)
        with pytest.raises(ValueError):
            perk_recommend(params, cal, dataset, 0, PerkConfig(k_max=3))

    def test_gamma_without_shift_fails_on_negative_scores(self):
        dataset, params = self.make_setup()
        cal = Calibrator("gamma", a=1.0, b=0.0, c=0.0, score_shift=0.0)
        # pool deep enough to reach the negative-score region
        with pytest.raises(ValueError):
            perk_recommend(params, cal, dataset, 0, PerkConfig(k_max=5, rest_pool=25))
