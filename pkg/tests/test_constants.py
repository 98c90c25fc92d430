import unittest
import logging
import math

import numpy as np

from src.constants import (ProblemParams, critical_mu, critical_sobolev_exponent, domain_geometry, gamma_star,
                           gamma_supremum, lambda_omega, unit_ball_volume, validate)
from src.errors import DimensionError, ParameterRangeError

# Suppress most logging output during tests
logging.disable(logging.CRITICAL)

Z0 = 2.404825557695773


class TestConstants(unittest.TestCase):

    def test_critical_mu_values(self):
        self.assertEqual(critical_mu(3), 0.25)
        self.assertEqual(critical_mu(4), 1.0)
        self.assertEqual(critical_mu(10), 16.0)

    def test_critical_mu_increasing_in_dimension(self):
        values = [critical_mu(n) for n in range(3, 12)]
        self.assertTrue(all(b > a for a, b in zip(values, values[1:])))

    def test_critical_mu_rejects_low_dimension(self):
        with self.assertRaises(DimensionError):
            critical_mu(2)

    def test_gamma_star_values(self):
        self.assertAlmostEqual(gamma_star(3, 1.8), 1.25, places=12)
        self.assertAlmostEqual(gamma_star(4, 1.6), 1.0 / 3.0, places=12)
        self.assertAlmostEqual(gamma_star(3, 2.0 - 1e-6), 2.0, places=5)

    def test_gamma_star_three_dimensional_form(self):
        """The general formula reduces to (5q - 6) / (2(3 - q)) for N = 3."""
        rng = np.random.default_rng(7)
        for q in rng.uniform(1.5, 2.0, size=100):
            if q <= 1.5:
                continue
            self.assertAlmostEqual(gamma_star(3, q), (5 * q - 6) / (2 * (3 - q)), delta=1e-12)

    def test_gamma_star_range_errors(self):
        with self.assertRaises(ParameterRangeError):
            gamma_star(3, 1.2)
        with self.assertRaises(ParameterRangeError):
            gamma_star(3, 2.0)

    def test_gamma_supremum_matches_limit(self):
        self.assertEqual(gamma_supremum(3), 2.0)
        self.assertEqual(gamma_supremum(4), 1.0)
        grid = np.linspace(4.0 / 3.0 + 1e-6, 2.0 - 1e-9, 2000)
        self.assertLess(max(gamma_star(4, q) for q in grid), gamma_supremum(4))

    def test_critical_sobolev_exponent(self):
        self.assertAlmostEqual(critical_sobolev_exponent(3, 1.5), 3.0)
        self.assertAlmostEqual(critical_sobolev_exponent(4, 1.0), 4.0 / 3.0)
        self.assertAlmostEqual(critical_sobolev_exponent(3, 1.8), 4.5)
        with self.assertRaises(ParameterRangeError):
            critical_sobolev_exponent(3, 2.0)

    def test_unit_ball_volume(self):
        self.assertAlmostEqual(unit_ball_volume(3), 4.0 * math.pi / 3.0, places=12)
        self.assertAlmostEqual(unit_ball_volume(4), math.pi ** 2 / 2.0, places=12)

    def test_domain_geometry_annulus(self):
        geometry = domain_geometry(3, 1.0, 0.5)
        self.assertAlmostEqual(geometry.volume, unit_ball_volume(3) * (1.0 - 0.125), places=12)
        self.assertAlmostEqual(geometry.angular_factor, 4.0 * math.pi, places=12)

    def test_lambda_omega_unit_ball(self):
        for N in (3, 4, 5):
            self.assertAlmostEqual(lambda_omega(N, unit_ball_volume(N)), Z0 ** 2, places=9)

    def test_lambda_omega_scaling(self):
        self.assertAlmostEqual(lambda_omega(3, 2.0 * unit_ball_volume(3)), Z0 ** 2 * 2.0 ** (-2.0 / 3.0), places=9)
        self.assertAlmostEqual(lambda_omega(3, 2.0 * unit_ball_volume(3)), 3.6432, places=3)
        volume, s = 1.7, 1.3
        self.assertAlmostEqual(lambda_omega(3, s ** 3 * volume), lambda_omega(3, volume) / s ** 2, places=10)

    def test_lambda_omega_decreasing_and_positive_volume(self):
        values = [lambda_omega(3, v) for v in (0.5, 1.0, 10.0, 1000.0)]
        self.assertTrue(all(b < a for a, b in zip(values, values[1:])))
        with self.assertRaises(ParameterRangeError):
            lambda_omega(3, 0.0)

    def test_validate_admissible_critical_case(self):
        report = validate(ProblemParams(N=3, mu=0.25, gamma=1.0, r_in=0.0))
        self.assertTrue(report.is_valid)
        self.assertEqual(str(report), "valid")

    def test_validate_mu_above_critical(self):
        report = validate(ProblemParams(N=3, mu=0.30))
        self.assertFalse(report.is_valid)
        self.assertIn("mu exceeds mu_star=0.25", str(report))

    def test_validate_gamma_supremum(self):
        report = validate(ProblemParams(N=4, mu=0.25, gamma=1.5))
        self.assertIn("gamma ≥ 2/(N−2)=1", report.violations)

    def test_validate_annulus_admits_large_mu(self):
        self.assertTrue(validate(ProblemParams(N=3, mu=2.0, r_in=0.1)).is_valid)

    def test_validate_zero_mu_needs_validation_mode(self):
        self.assertFalse(validate(ProblemParams(mu=0.0)).is_valid)
        self.assertTrue(validate(ProblemParams(mu=0.0, validation_mode=True)).is_valid)

    def test_validate_dimension_is_reported_not_raised(self):
        report = validate(ProblemParams(N=2))
        self.assertFalse(report.is_valid)
        self.assertIn("dimension", str(report))

    def test_params_derived_values(self):
        params = ProblemParams(N=5)
        self.assertEqual(params.mu_star, 2.25)
        self.assertTrue(params.is_ball)
        self.assertFalse(params.with_updates(r_in=0.2).is_ball)


if __name__ == '__main__':
    unittest.main()
