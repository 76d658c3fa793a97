import math
from unittest import TestCase, skipUnless

import numpy as np
from scipy.stats import norm

from cpds_dad._utils import PreconditionError
from cpds_dad.capture import (
    DEFAULT_COEFFS,
    CaptureModel,
    CaptureProblem,
    PolyCoefficients,
    SignalDistribution,
    capture_prob,
    capture_prob_exact,
    capture_prob_mc,
    capture_prob_poly,
    capture_problem_for,
    mean_strength,
    measure_fit_errors,
    poly_error_bound,
    three_sigma_shortcut,
    truncation_mass,
    z_cdf,
    z_pdf,
)
from cpds_dad.network import RadioParams, load_network

from . import SLOW_REASON, SLOW_TESTS


def problem_with_offsets(offsets, sigma: float = 1.0) -> CaptureProblem:
    # offset a_k = (mu_fbs - mu_k) / sigma with mu_fbs = 0.
    fbs = SignalDistribution(0.0, sigma)
    return CaptureProblem(fbs, [SignalDistribution(-a * sigma, sigma) for a in offsets])


class TestPolynomialFits(TestCase):
    def test_z_pdf_fits_gaussian_density(self):
        errors = measure_fit_errors()
        self.assertLessEqual(errors.pdf_max, 1e-3)

    def test_z_cdf_fits_normal_cdf_over_full_support(self):
        errors = measure_fit_errors()
        self.assertLessEqual(errors.cdf_max, 2e-3)
        xs = np.linspace(-6, 6, 100_001)
        self.assertLessEqual(np.max(np.abs(z_cdf(xs) - norm.cdf(xs))), 2e-3)

    def test_z_pdf_is_zero_outside_support(self):
        for x in (-3.5, -3.0, 3.0, 4.0):
            with self.subTest(x=x):
                self.assertEqual(z_pdf(x), 0.0)

    def test_z_cdf_is_clamped_outside_fit_range(self):
        cases = {-10.0: 0.0, -6.0: 0.0, -3.2: 0.0, 3.2: 1.0, 4.5: 1.0, 6.0: 1.0}
        for x, expected in cases.items():
            with self.subTest(x=x):
                self.assertEqual(z_cdf(x), expected)
        self.assertLess(z_cdf(3.1), 1.0)
        self.assertGreater(z_cdf(-3.1), 0.0)

    def test_z_cdf_is_one_half_at_zero(self):
        self.assertEqual(z_cdf(0.0), 0.5)

    def test_z_cdf_matches_known_value(self):
        self.assertAlmostEqual(z_cdf(1.96), 0.975, delta=2e-3)

    def test_z_cdf_is_monotone(self):
        xs = np.linspace(-6, 6, 12_001)
        self.assertTrue(np.all(np.diff(z_cdf(xs)) >= -1e-6))

    def test_fits_accept_arrays(self):
        xs = np.array([-1.0, 0.5, 2.0])
        self.assertEqual(np.shape(z_pdf(xs)), (3,))
        self.assertEqual(np.shape(z_cdf(xs)), (3,))
        self.assertIsInstance(z_pdf(0.5), float)

    def test_poly_error_bound_matches_closed_form(self):
        self.assertAlmostEqual(poly_error_bound(1), 2.003e-3, places=6)
        self.assertAlmostEqual(
            poly_error_bound(7), 6 * (2.678e-4 + 7 * 5.69e-4) / math.sqrt(2 * math.pi)
        )

    def test_truncation_mass_is_gaussian_tail(self):
        self.assertAlmostEqual(truncation_mass(), 2.6998e-3, places=6)


class TestPolyCoefficients(TestCase):
    def test_from_overrides_without_overrides_returns_defaults(self):
        self.assertIs(PolyCoefficients.from_overrides(None), DEFAULT_COEFFS)
        self.assertIs(PolyCoefficients.from_overrides({}), DEFAULT_COEFFS)

    def test_from_overrides_replaces_named_fields(self):
        coeffs = PolyCoefficients.from_overrides({"zeta": 1e-3, "h0_pos": 0.5})
        self.assertEqual(coeffs.zeta, 1e-3)
        self.assertEqual(coeffs.h0_pos, 0.5)
        self.assertEqual(coeffs.cdf_coeffs, DEFAULT_COEFFS.cdf_coeffs)

    def test_from_overrides_rejects_unknown_keys(self):
        with self.assertRaisesRegex(PreconditionError, "unknown poly keys"):
            PolyCoefficients.from_overrides({"theta": 1.0})

    def test_coefficient_counts_are_checked(self):
        with self.assertRaises(PreconditionError):
            PolyCoefficients(pdf_coeffs=(1.0, 2.0))


class TestSignalModel(TestCase):
    def test_mean_strength_follows_log_distance_path_loss(self):
        radio = RadioParams(s_ref=100.0, d0=10.0, path_loss_exp=3.0)
        self.assertAlmostEqual(mean_strength(radio, (0, 0), (10, 0)), 100.0)
        self.assertAlmostEqual(mean_strength(radio, (0, 0), (100, 0)), 70.0)
        self.assertAlmostEqual(mean_strength(radio, (0, 0), (0, 1000)), 40.0)

    def test_mean_strength_clamps_short_distances(self):
        radio = RadioParams(s_ref=100.0, d0=10.0, path_loss_exp=3.0, d_min=1.0)
        self.assertAlmostEqual(mean_strength(radio, (5, 5), (5, 5)), 130.0)

    def test_mean_strength_uses_station_reference(self):
        radio = RadioParams(s_ref=100.0)
        self.assertAlmostEqual(
            mean_strength(radio, (0, 0), (10, 0), s_ref=112.0), 112.0
        )

    def test_capture_problem_for_builds_one_signal_per_station(self):
        net = load_network("toy6")
        problem = capture_problem_for(net, (250.0, 100.0), (0.0, 0.0))
        self.assertEqual(problem.n_legit, 2)
        self.assertTrue(problem.equal_sigmas)
        louder = capture_problem_for(net, (250.0, 100.0), (0.0, 0.0), s_ref_fbs=104.0)
        self.assertAlmostEqual(louder.fbs.mu - problem.fbs.mu, 4.0)
        self.assertEqual(louder.legit, problem.legit)

    def test_signal_distribution_rejects_bad_sigma(self):
        with self.assertRaises(PreconditionError):
            SignalDistribution(0.0, 0.0)
        with self.assertRaises(PreconditionError):
            SignalDistribution(math.nan, 1.0)


class TestCaptureProbability(TestCase):
    def test_single_station_matches_closed_form(self):
        bound = poly_error_bound(1)
        for a in (-3.0, -1.5, 0.0, 1.5, 3.0):
            problem = problem_with_offsets([a])
            expected = norm.cdf(a / math.sqrt(2))
            with self.subTest(a=a):
                self.assertAlmostEqual(
                    capture_prob_exact(problem), expected, delta=1e-6
                )
                self.assertLessEqual(abs(capture_prob_poly(problem) - expected), bound)

    def test_poly_error_stays_within_bound(self):
        rng = np.random.default_rng(1234)
        for trial in range(600):
            n = int(rng.integers(1, 8))
            offsets = rng.uniform(-3.0, 3.0, size=n)
            problem = problem_with_offsets(offsets)
            err = abs(capture_prob_poly(problem) - capture_prob_exact(problem))
            with self.subTest(trial=trial, n=n):
                self.assertLessEqual(err, poly_error_bound(n))

    def test_poly_error_stays_within_bound_at_offset_extremes(self):
        for n in range(1, 8):
            for a in (-3.0, 3.0):
                problem = problem_with_offsets([a] * n)
                err = abs(capture_prob_poly(problem) - capture_prob_exact(problem))
                with self.subTest(n=n, a=a):
                    self.assertLessEqual(err, poly_error_bound(n))

    @skipUnless(SLOW_TESTS, SLOW_REASON)
    def test_poly_error_over_many_problems(self):
        rng = np.random.default_rng(4321)
        for trial in range(5000):
            n = int(rng.integers(1, 8))
            offsets = rng.uniform(-3.0, 3.0, size=n)
            problem = problem_with_offsets(offsets)
            err = abs(capture_prob_poly(problem) - capture_prob_exact(problem))
            with self.subTest(trial=trial, n=n):
                self.assertLessEqual(err, poly_error_bound(n))

    def test_poly_accounts_for_density_tails(self):
        # With a=3 about Phi(-3) of the capture probability sits above tau=3.
        problem = problem_with_offsets([3.0])
        expected = norm.cdf(3 / math.sqrt(2))
        self.assertLess(abs(capture_prob_poly(problem) - expected), truncation_mass())

    def test_probabilities_are_translation_invariant(self):
        base = CaptureProblem(
            SignalDistribution(80.5, 4.0),
            [SignalDistribution(78.25, 4.0), SignalDistribution(81.0, 4.0)],
        )
        shifted = CaptureProblem(
            SignalDistribution(96.5, 4.0),
            [SignalDistribution(94.25, 4.0), SignalDistribution(97.0, 4.0)],
        )
        self.assertEqual(capture_prob_poly(base), capture_prob_poly(shifted))
        self.assertEqual(capture_prob_exact(base), capture_prob_exact(shifted))

    def test_more_stations_never_raise_capture(self):
        one = problem_with_offsets([0.5])
        two = problem_with_offsets([0.5, 1.0])
        three = problem_with_offsets([0.5, 1.0, -0.5])
        p1, p2, p3 = map(capture_prob_exact, (one, two, three))
        self.assertGreaterEqual(p1, p2)
        self.assertGreaterEqual(p2, p3)

    def test_no_legitimate_station_means_certain_capture(self):
        problem = CaptureProblem(SignalDistribution(0.0, 1.0), [])
        self.assertEqual(capture_prob_exact(problem), 1.0)
        self.assertEqual(capture_prob_poly(problem), 1.0)
        self.assertEqual(capture_prob(problem), 1.0)

    def test_exact_handles_unequal_sigmas(self):
        problem = CaptureProblem(
            SignalDistribution(1.0, 2.0), [SignalDistribution(0.0, 1.0)]
        )
        # F - L ~ N(1, 5).
        expected = norm.cdf(1.0 / math.sqrt(5.0))
        self.assertAlmostEqual(capture_prob_exact(problem), expected, delta=1e-6)

    def test_poly_rejects_unequal_sigmas(self):
        problem = CaptureProblem(
            SignalDistribution(0.0, 2.0), [SignalDistribution(0.0, 1.0)]
        )
        with self.assertRaisesRegex(PreconditionError, "equal sigmas"):
            capture_prob_poly(problem)

    def test_capture_prob_falls_back_to_exact_for_unequal_sigmas(self):
        problem = CaptureProblem(
            SignalDistribution(0.0, 2.0), [SignalDistribution(0.5, 1.0)]
        )
        self.assertEqual(capture_prob(problem), capture_prob_exact(problem))

    def test_capture_prob_rejects_unknown_method(self):
        problem = problem_with_offsets([0.5])
        with self.assertRaisesRegex(PreconditionError, "unknown capture method"):
            capture_prob(problem, method="magic")

    def test_capture_model_dispatches_on_method(self):
        problem = problem_with_offsets([0.5, -0.25])
        self.assertEqual(CaptureModel("exact")(problem), capture_prob_exact(problem))
        self.assertEqual(CaptureModel("poly")(problem), capture_prob_poly(problem))


class TestThreeSigmaShortcut(TestCase):
    def test_shortcut_decides_far_apart_means(self):
        fbs = SignalDistribution(0.0, 2.0)
        cases = [(-6.0, 1), (-7.0, 1), (6.0, 0), (10.0, 0), (5.9, None), (-5.9, None)]
        for mu, expected in cases:
            problem = CaptureProblem(fbs, [SignalDistribution(mu, 2.0)])
            with self.subTest(mu=mu):
                self.assertEqual(three_sigma_shortcut(problem), expected)

    def test_shortcut_compares_against_strongest_station(self):
        fbs = SignalDistribution(0.0, 1.0)
        problem = CaptureProblem(
            fbs, [SignalDistribution(-10.0, 1.0), SignalDistribution(1.0, 1.0)]
        )
        self.assertIsNone(three_sigma_shortcut(problem))

    def test_capture_prob_applies_shortcut_first(self):
        problem = CaptureProblem(
            SignalDistribution(0.0, 2.0), [SignalDistribution(20.0, 2.0)]
        )
        self.assertEqual(capture_prob(problem), 0.0)


class TestMonteCarlo(TestCase):
    def test_monte_carlo_agrees_with_exact(self):
        problem = problem_with_offsets([1.0, -0.5])
        exact = capture_prob_exact(problem)
        mc = capture_prob_mc(problem, samples=200_000, seed=7)
        self.assertLessEqual(abs(mc.estimate - exact), 5 * mc.std_error + 1e-4)

    def test_monte_carlo_is_seeded(self):
        problem = problem_with_offsets([0.3])
        first = capture_prob_mc(problem, 5000, seed=3)
        self.assertEqual(first, capture_prob_mc(problem, 5000, seed=3))

    def test_monte_carlo_needs_enough_samples(self):
        with self.assertRaises(PreconditionError):
            capture_prob_mc(problem_with_offsets([0.0]), samples=10, seed=0)
