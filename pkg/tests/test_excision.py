import unittest
import logging
import math

import numpy as np

from src.constants import ProblemParams
from src.eigensolver import principal_eigenpair
from src.errors import ParameterRangeError
from src.excision import (EXCISION_HEADER, annulus_forms, excision_sweep, gap_variable, richardson,
                          solve_annulus_eigen, solve_annulus_equilibrium, zero_extension)
from src.radial_forms import TEST_M, annulus_submesh, assemble, build_mesh

logging.disable(logging.CRITICAL)

# radii of the sweeps below are nodes of the uniform ball mesh
EXCISION_M = 80
EXCISION_RADII = [0.2, 0.1, 0.05, 0.025]


class TestRichardson(unittest.TestCase):

    def test_quadratic_limit(self):
        xs = [0.1, 0.05, 0.025]
        values = [2.0 + 3.0 * x + 0.5 * x ** 2 for x in xs]
        self.assertAlmostEqual(richardson(xs, values), 2.0, places=12)
        self.assertAlmostEqual(richardson([0.2] + xs, [9.0] + values), 2.0, places=12)

    def test_line_through_two_points(self):
        self.assertAlmostEqual(richardson([0.5, 0.25], [2.0, 1.5]), 1.0, places=14)

    def test_invalid_input(self):
        with self.assertRaises(ParameterRangeError):
            richardson([0.1], [1.0])
        with self.assertRaises(ParameterRangeError):
            richardson([0.1, 0.05], [1.0, 2.0, 3.0])
        with self.assertRaises(ParameterRangeError):
            richardson([0.1, 0.1], [1.0, 2.0])


class TestGapVariable(unittest.TestCase):

    def test_power_rate_below_critical_mu(self):
        self.assertAlmostEqual(gap_variable(ProblemParams(mu=0.1875), 0.04), 0.2, places=14)
        self.assertAlmostEqual(gap_variable(ProblemParams(mu=0.0, validation_mode=True), 0.05), 0.05, places=14)

    def test_logarithmic_rate_at_critical_mu(self):
        self.assertAlmostEqual(gap_variable(ProblemParams(mu=0.25), 0.1), 1.0 / math.log(10.0), places=14)


class TestAnnulus(unittest.TestCase):

    def test_laplacian_on_annulus(self):
        """Radial Dirichlet Laplacian on r < |x| < 1 in R^3: lambda_1 = (pi / (1 - r))^2."""
        params = ProblemParams(mu=0.0, validation_mode=True, r_in=0.1)
        pair = solve_annulus_eigen(params, M=TEST_M)
        expected = (math.pi / 0.9) ** 2
        self.assertAlmostEqual(pair.lambda_1, expected, delta=2e-3 * expected)

    def test_annulus_eigenvalue_above_ball(self):
        params = ProblemParams(mu=0.25)
        ball = principal_eigenpair(assemble(build_mesh(params, TEST_M), params)).lambda_1
        annulus = solve_annulus_eigen(params.with_updates(r_in=0.05), M=TEST_M).lambda_1
        self.assertGreater(annulus, ball)

    def test_annulus_requires_inner_radius(self):
        with self.assertRaises(ParameterRangeError):
            annulus_forms(ProblemParams(mu=0.25), M=TEST_M)

    def test_annulus_equilibrium_below_onset_is_zero(self):
        eq = solve_annulus_equilibrium(ProblemParams(mu=0.25, r_in=0.1), 1.0, M=TEST_M)
        self.assertTrue(eq.is_trivial)

    def test_zero_extension(self):
        params = ProblemParams(mu=0.25)
        ball_mesh = build_mesh(params, TEST_M, 1.0)
        ball = assemble(ball_mesh, params)
        forms = annulus_forms(params.with_updates(r_in=0.25), mesh=annulus_submesh(ball_mesh, 0.25))
        v_hat = zero_extension(forms, np.ones(forms.n_dofs), ball)
        inside = ball.rho < 0.25
        self.assertTrue(np.all(v_hat[inside] == 0.0))
        np.testing.assert_allclose(v_hat[(ball.rho > 0.25)], ball.rho[ball.rho > 0.25] ** ball.beta)


class TestExcisionSweep(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.params = ProblemParams(mu=0.25, gamma=1.0)
        cls.sweep = excision_sweep(cls.params, EXCISION_RADII, lam=20.0, M=EXCISION_M)

    def test_eigenvalues_decrease_to_ball_value(self):
        values = [row.lambda1_r for row in self.sweep.rows]
        for before, after in zip(values, values[1:]):
            self.assertGreater(before, after)
        self.assertTrue(all(row.gap > 0.0 for row in self.sweep.rows))
        self.assertIsNotNone(self.sweep.extrapolated_lambda1)
        self.assertGreaterEqual(self.sweep.extrapolation_error, 0.0)

    def test_equilibrium_distances_decrease(self):
        distances = [row.eq_hmu_dist for row in self.sweep.rows]
        self.assertGreater(distances[-1], 0.0)
        for before, after in zip(distances, distances[1:]):
            self.assertGreater(before, after)

    def test_annulus_equilibria_below_ball_equilibrium(self):
        for row in self.sweep.rows:
            with self.subTest(r=row.r):
                self.assertLessEqual(row.max_pointwise_violation, 1e-6)
                self.assertGreaterEqual(row.far_sup_dist, 0.0)

    def test_csv_rows_end_with_ball_row(self):
        rows = self.sweep.csv_rows()
        self.assertEqual(len(rows), len(EXCISION_RADII) + 1)
        self.assertEqual(len(rows[0]), len(EXCISION_HEADER))
        self.assertEqual(rows[-1][0], 0.0)
        self.assertEqual(rows[-1][1], self.sweep.lambda1)

    def test_invalid_radii(self):
        with self.assertRaises(ParameterRangeError):
            excision_sweep(self.params, [], lam=10.0, M=TEST_M)
        with self.assertRaises(ParameterRangeError):
            excision_sweep(self.params, [0.1, 0.2], lam=10.0, M=TEST_M)
        with self.assertRaises(ParameterRangeError):
            excision_sweep(self.params, [1.5, 0.1], lam=10.0, M=TEST_M)


class TestEigenvalueExtrapolation(unittest.TestCase):

    def test_laplacian_limit_from_annuli(self):
        """Annuli of the unit ball in R^3 with mu = 0: lambda_{1,r} = (pi / (1 - r))^2 -> pi^2."""
        params = ProblemParams(mu=0.0, validation_mode=True, gamma=1.0)
        sweep = excision_sweep(params, EXCISION_RADII[1:], lam=5.0, M=EXCISION_M)
        self.assertLess(sweep.extrapolation_error, 1e-2)
        self.assertAlmostEqual(sweep.extrapolated_lambda1, math.pi ** 2, delta=1e-2 * math.pi ** 2)
        self.assertLess(abs(sweep.extrapolated_lambda1 - sweep.lambda1), sweep.rows[-1].gap)


if __name__ == '__main__':
    unittest.main()
