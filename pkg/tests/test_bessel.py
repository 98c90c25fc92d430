import unittest
import logging
import math

from src.bessel import bessel_j_series, bessel_zeros, first_zero_j0, radial_ball_eigenvalues
from src.errors import ParameterRangeError

logging.disable(logging.CRITICAL)


class TestBessel(unittest.TestCase):

    def test_first_zero_j0(self):
        self.assertAlmostEqual(first_zero_j0(), 2.404825557695773, places=10)

    def test_half_order_closed_form(self):
        """J_{1/2}(x) = sqrt(2 / (pi x)) sin x."""
        for x in (0.3, 1.0, 4.5, 9.0):
            self.assertAlmostEqual(bessel_j_series(0.5, x), math.sqrt(2.0 / (math.pi * x)) * math.sin(x), places=10)

    def test_value_at_origin(self):
        self.assertEqual(bessel_j_series(0.0, 0.0), 1.0)
        self.assertEqual(bessel_j_series(0.25, 0.0), 0.0)

    def test_half_order_zeros(self):
        zeros = bessel_zeros(0.5, 3)
        for k, z in enumerate(zeros, start=1):
            self.assertAlmostEqual(z, k * math.pi, places=10)

    def test_zeros_of_j0(self):
        zeros = bessel_zeros(0.0, 3)
        self.assertAlmostEqual(zeros[0], 2.404825557695773, places=10)
        self.assertAlmostEqual(zeros[1], 5.520078110286311, places=10)
        self.assertAlmostEqual(zeros[2], 8.653727912911013, places=10)

    def test_radial_ball_eigenvalues(self):
        self.assertAlmostEqual(radial_ball_eigenvalues(0.5)[0], math.pi ** 2, places=9)
        self.assertAlmostEqual(radial_ball_eigenvalues(0.5, radius=2.0)[0], math.pi ** 2 / 4.0, places=9)

    def test_argument_errors(self):
        with self.assertRaises(ParameterRangeError):
            bessel_j_series(-0.5, 1.0)
        with self.assertRaises(ParameterRangeError):
            bessel_j_series(0.0, 20.0)
        with self.assertRaises(ParameterRangeError):
            bessel_zeros(0.0, 0)
        with self.assertRaises(ParameterRangeError):
            bessel_zeros(0.0, 10)


if __name__ == '__main__':
    unittest.main()
