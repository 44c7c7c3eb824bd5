from itertools import combinations

import numpy as np
from django.test import SimpleTestCase
from scipy.stats import gamma as gamma_dist
from scipy.stats import invgamma

from tpnn.basis import BasisTerm
from tpnn.data import Dataset
from tpnn.exceptions import ConfigError
from tpnn.likelihood import ModelState
from tpnn.prior import (
    log_prior_K,
    log_prior_eta,
    log_prior_gamma,
    log_prior_knots,
    log_prior_state,
    log_prior_subset,
    move_probabilities,
    ols_residual_variance,
    resolve_lambda,
    sample_K,
    sample_eta,
    sample_subset,
    sample_term,
    subset_weights,
)
from tpnn.schemas import PriorConfig


class CountPriorTests(SimpleTestCase):
    def test_normalized(self):
        cfg = PriorConfig(K_max=7, C0=0.5)
        total = sum(np.exp(log_prior_K(k, cfg, 50)) for k in range(8))
        self.assertAlmostEqual(total, 1.0, places=12)

    def test_geometric_in_n(self):
        cfg = PriorConfig(K_max=5, C0=1.0)
        self.assertAlmostEqual(log_prior_K(1, cfg, 20) - log_prior_K(0, cfg, 20), -np.log(20), places=12)

    def test_out_of_range(self):
        with self.assertRaises(ValueError):
            log_prior_K(6, PriorConfig(K_max=5), 10)

    def test_samples_follow_density(self):
        cfg = PriorConfig(K_max=3, C0=0.3)
        rng = np.random.default_rng(0)
        draws = np.array([sample_K(cfg, 10, rng) for _ in range(20000)])
        for k in range(4):
            self.assertAlmostEqual(np.mean(draws == k), np.exp(log_prior_K(k, cfg, 10)), delta=0.015)


class SubsetPriorTests(SimpleTestCase):
    def setUp(self) -> None:
        self.cfg = PriorConfig()

    def test_size_weights_by_hand(self):
        w = subset_weights(self.cfg, 2)
        stop_one = 1 - 0.95 / 4
        stop_two = (0.95 / 4) * (1 - 0.95 / 9)
        np.testing.assert_allclose(w, np.array([stop_one, stop_two]) / (stop_one + stop_two))

    def test_sums_to_one_over_all_subsets(self):
        for p in range(1, 7):
            total = sum(
                np.exp(log_prior_subset(S, self.cfg, p))
                for d in range(1, p + 1) for S in combinations(range(p), d)
            )
            self.assertAlmostEqual(total, 1.0, places=10)

    def test_invalid_sets(self):
        with self.assertRaises(ValueError):
            log_prior_subset([], self.cfg, 3)
        with self.assertRaises(ValueError):
            log_prior_subset([0, 1, 2, 3], self.cfg, 3)

    def test_sampled_sizes_match_weights(self):
        rng = np.random.default_rng(1)
        sizes = np.array([len(sample_subset(self.cfg, 5, rng)) for _ in range(20000)])
        weights = subset_weights(self.cfg, 5)
        for d in range(1, 6):
            self.assertAlmostEqual(np.mean(sizes == d), weights[d - 1], delta=0.01)

    def test_sampled_sets_are_sorted_and_distinct(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            S = sample_subset(self.cfg, 6, rng)
            self.assertTrue(np.all(np.diff(S) > 0))


class NumericPriorTests(SimpleTestCase):
    def setUp(self) -> None:
        self.cfg = PriorConfig(a_gamma=2.0, b_gamma=0.05, v=3.0, **{"lambda": 0.4})

    def test_bandwidth_density_uses_scale(self):
        for g in (0.01, 0.1, 0.7):
            self.assertAlmostEqual(log_prior_gamma(g, self.cfg), gamma_dist.logpdf(g, 2.0, scale=0.05), places=10)
        self.assertEqual(log_prior_gamma(0.0, self.cfg), -np.inf)

    def test_knots_live_in_unit_interval(self):
        self.assertEqual(log_prior_knots([0.0, 1.0, 0.5]), 0.0)
        self.assertEqual(log_prior_knots([0.2, 1.01]), -np.inf)

    def test_eta_density(self):
        for s in (0.05, 0.4, 3.0):
            self.assertAlmostEqual(log_prior_eta(s, self.cfg), invgamma.logpdf(s, 1.5, scale=0.6), places=10)

    def test_eta_needs_lambda(self):
        with self.assertRaises(ConfigError):
            log_prior_eta(1.0, PriorConfig())

    def test_eta_sampler_mean(self):
        cfg = PriorConfig(v=10.0, **{"lambda": 1.0})
        rng = np.random.default_rng(3)
        draws = [sample_eta(cfg, rng) for _ in range(20000)]
        self.assertAlmostEqual(np.mean(draws), 5.0 / 4.0, delta=0.03)

    def test_term_draws_are_in_support(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            term = sample_term([0, 3], self.cfg, rng)
            self.assertTrue(np.all((term.b >= 0) & (term.b <= 1)))
            self.assertTrue(np.all(term.gamma > 0))

    def test_state_density_adds_up(self):
        term = BasisTerm([1], [0.5], [0.1], 0.05)
        state = ModelState([term], eta=0.8)
        expected = (
            log_prior_K(1, self.cfg, 20)
            + log_prior_subset([1], self.cfg, 3)
            + log_prior_gamma(0.1, self.cfg)
            - 0.5 * np.log(2 * np.pi * 0.01) - 0.05 ** 2 / 0.02
            + log_prior_eta(0.8, self.cfg)
        )
        self.assertAlmostEqual(log_prior_state(state, self.cfg, 3, 20), expected, places=10)


class LambdaTests(SimpleTestCase):
    def setUp(self) -> None:
        rng = np.random.default_rng(5)
        x = rng.normal(size=(60, 2))
        y = 1.0 + x @ np.array([0.5, -1.0]) + rng.normal(scale=0.3, size=60)
        self.ds = Dataset.from_arrays(x, y, "gaussian")

    def test_explicit_lambda_wins(self):
        self.assertEqual(resolve_lambda(PriorConfig(**{"lambda": 2.5})), 2.5)

    def test_calibrated_quantile(self):
        cfg = PriorConfig(q_lambda=0.75, v=3.0)
        lam = resolve_lambda(cfg, self.ds)
        sigma2 = ols_residual_variance(self.ds.x, self.ds.y)
        self.assertAlmostEqual(invgamma.cdf(sigma2, 1.5, scale=1.5 * lam), 0.75, places=8)

    def test_default_quantile(self):
        with self.assertLogs("tpnn.prior", "WARNING") as logs:
            lam = resolve_lambda(PriorConfig(), self.ds)
        sigma2 = ols_residual_variance(self.ds.x, self.ds.y)
        self.assertAlmostEqual(invgamma.cdf(sigma2, 1.5, scale=1.5 * lam), 0.9, places=8)
        self.assertIn("neither lambda nor q_lambda", logs.output[0])

    def test_explicit_quantile_is_not_reported(self):
        with self.assertNoLogs("tpnn.prior", "WARNING"):
            resolve_lambda(PriorConfig(q_lambda=0.9), self.ds)

    def test_calibration_needs_data(self):
        with self.assertRaises(ConfigError):
            resolve_lambda(PriorConfig())


class MoveProbabilityTests(SimpleTestCase):
    def setUp(self) -> None:
        self.cfg = PriorConfig()

    def test_interior(self):
        probs = move_probabilities(self.cfg, 2, 5)
        for move, expected in {"adding": 0.28, "deleting": 0.28, "changing": 0.44}.items():
            self.assertAlmostEqual(probs[move], expected, places=12)

    def test_singleton_cannot_delete(self):
        probs = move_probabilities(self.cfg, 1, 5)
        self.assertEqual(probs["deleting"], 0.0)
        self.assertAlmostEqual(probs["adding"], 0.28 / 0.72)
        self.assertAlmostEqual(probs["changing"], 0.44 / 0.72)

    def test_full_set_can_only_delete(self):
        self.assertEqual(move_probabilities(self.cfg, 4, 4), {"adding": 0.0, "deleting": 1.0, "changing": 0.0})

    def test_single_column_has_no_moves(self):
        self.assertEqual(set(move_probabilities(self.cfg, 1, 1).values()), {0.0})
