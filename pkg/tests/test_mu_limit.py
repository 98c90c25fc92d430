import unittest
import logging
import math

import numpy as np

from src.constants import ProblemParams
from src.equilibrium import nonnegative_equilibrium
from src.errors import ParameterRangeError
from src.mu_limit import (DEFAULT_OFFSET_EXPONENT, MU_LIMIT_HEADER, branch_mu_sweep, critical_norm, default_offsets,
                          distance_limit, h10_blowup_probe, probe_lambdas, saturated, to_reference_variable)
from src.radial_forms import assemble, build_mesh, hmu_norm

logging.disable(logging.CRITICAL)

SMALL_M = 16
LADDER_M = 256
CRITICAL_LADDER = [0.24, 0.2475, 0.2499]


class TestSaturation(unittest.TestCase):

    def test_growing_sequences(self):
        self.assertFalse(saturated([1.0, 2.0, 3.0]))
        self.assertFalse(saturated([1.0, 2.0, 2.8]))
        self.assertFalse(saturated([1.0, 2.0]))
        self.assertFalse(saturated([1.0]))

    def test_levelling_sequences(self):
        self.assertTrue(saturated([1.0, 2.0, 2.5]))
        self.assertTrue(saturated([1.0, 2.0, 1.5]))
        self.assertTrue(saturated([1.0, 1.0]))


class TestCriticalNorm(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.params = ProblemParams(mu=0.25)
        cls.mesh = build_mesh(cls.params, 32)

    def test_equals_mu_norm_at_critical_mu(self):
        forms = assemble(self.mesh, self.params)
        v = 1.0 - forms.rho ** 2
        self.assertAlmostEqual(critical_norm(forms, v), hmu_norm(forms, v), places=12)

    def test_below_mu_norm_for_subcritical_mu(self):
        forms = assemble(self.mesh, self.params.with_updates(mu=0.2))
        v = 1.0 - forms.rho ** 2
        value = critical_norm(forms, v)
        self.assertGreater(value, 0.0)
        self.assertLess(value, hmu_norm(forms, v))

    def test_reference_variable(self):
        forms = assemble(self.mesh, self.params.with_updates(mu=0.1875))
        v = 1.0 - forms.rho
        same = to_reference_variable(forms, v, forms.beta)
        np.testing.assert_array_equal(same, v)
        self.assertIsNot(same, v)
        w = to_reference_variable(forms, v, 0.5)
        np.testing.assert_allclose(w[1:], forms.rho[1:] ** 0.25 * v[1:])
        self.assertEqual(w[0], w[1])


class TestBranchMuSweep(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.params = ProblemParams(mu=0.25, gamma=1.0)
        cls.table = branch_mu_sweep(cls.params, [0.2, 0.24, 0.25], lam=10.0, M=SMALL_M, levels=2)

    def test_table_shape(self):
        self.assertEqual(self.table.meshes, [SMALL_M, 2 * SMALL_M])
        rows = self.table.csv_rows()
        self.assertEqual(len(rows), 3)
        self.assertEqual(len(rows[0]), len(MU_LIMIT_HEADER))
        self.assertTrue(math.isnan(rows[0][5]))

    def test_rows_are_nontrivial_and_bounded(self):
        for row in self.table.rows:
            self.assertFalse(row.trivial)
            self.assertLessEqual(row.hmu_star ** 2, row.lam * row.l2 ** 2 + 1e-10)
            self.assertEqual(len(row.h10_trunc), 2)

    def test_critical_row_matches_reference(self):
        last = self.table.rows[-1]
        self.assertEqual(last.mu, 0.25)
        self.assertAlmostEqual(last.dist_to_ref, 0.0, places=10)
        self.assertGreater(self.table.rows[0].dist_to_ref, 0.0)

    def test_critical_norm_matches_direct_solution(self):
        forms = assemble(build_mesh(self.params, 2 * SMALL_M), self.params)
        eq = nonnegative_equilibrium(forms, 10.0)
        self.assertAlmostEqual(self.table.rows[-1].hmu_star, eq.norms.hmu, places=8)

    def test_extrapolated_distance(self):
        self.assertIsNotNone(self.table.extrapolated_distance)
        self.assertGreaterEqual(self.table.extrapolated_distance, 0.0)
        self.assertIsInstance(self.table.distance_limit_ok, bool)
        first = self.table.rows[0].dist_to_ref
        self.assertEqual(self.table.distance_limit_ok, self.table.extrapolated_distance <= 1e-3 * first)

    def test_invalid_mu_lists(self):
        with self.assertRaises(ParameterRangeError):
            branch_mu_sweep(self.params, [0.24, 0.2], lam=10.0, M=SMALL_M, levels=1)
        with self.assertRaises(ParameterRangeError):
            branch_mu_sweep(self.params, [0.2, 0.3], lam=10.0, M=SMALL_M, levels=1)
        with self.assertRaises(ParameterRangeError):
            branch_mu_sweep(self.params.with_updates(r_in=0.1), [0.2], lam=10.0, M=SMALL_M, levels=1)


class TestDistanceLimit(unittest.TestCase):

    def test_linear_in_root_gap(self):
        mus = [0.21, 0.24, 0.2475]
        self.assertAlmostEqual(distance_limit(mus, [3.0 * math.sqrt(0.25 - mu) for mu in mus], 0.25), 0.0,
                               places=12)
        self.assertAlmostEqual(distance_limit(mus, [0.5 + 2.0 * math.sqrt(0.25 - mu) for mu in mus], 0.25), 0.5,
                               places=12)

    def test_clamped_at_zero(self):
        mus = [0.21, 0.2275]
        distances = [-0.1 + 2.0 * math.sqrt(0.25 - mu) for mu in mus]
        self.assertEqual(distance_limit(mus, distances, 0.25), 0.0)

    def test_invalid_rows(self):
        with self.assertRaises(ParameterRangeError):
            distance_limit([0.24], [0.1], 0.25)
        with self.assertRaises(ParameterRangeError):
            distance_limit([0.24, 0.25], [0.1, 0.0], 0.25)


class TestDefaultOffsets(unittest.TestCase):

    def test_schedule(self):
        params = ProblemParams(mu=0.25)
        offsets = default_offsets(params, CRITICAL_LADDER)
        for mu, delta in zip(CRITICAL_LADDER, offsets):
            self.assertAlmostEqual(delta, (0.25 - mu) ** DEFAULT_OFFSET_EXPONENT)
        self.assertTrue(offsets[0] > offsets[1] > offsets[2] > 0.0)
        # offsets scaled by the eigenfunction rate (mu_star - mu)^(-1/2) increase
        scaled = [d / math.sqrt(0.25 - mu) for mu, d in zip(CRITICAL_LADDER, offsets)]
        self.assertTrue(scaled[0] < scaled[1] < scaled[2])

    def test_requires_subcritical_mu(self):
        with self.assertRaises(ParameterRangeError):
            default_offsets(ProblemParams(mu=0.25), [0.2, 0.25])


class TestBlowup(unittest.TestCase):

    def test_offset_lambdas(self):
        params = ProblemParams(mu=0.25)
        mesh = build_mesh(params, 32)
        lambdas, ratios = probe_lambdas(params, [0.1, 0.2, 0.24], [0.5, 0.5, 0.5], mesh)
        self.assertEqual(len(lambdas), 3)
        self.assertTrue(lambdas[0] > lambdas[1] > lambdas[2])
        self.assertTrue(ratios[0] > ratios[1] > ratios[2])
        with self.assertRaises(ParameterRangeError):
            probe_lambdas(params, [0.1, 0.2], [0.5], mesh)
        with self.assertRaises(ParameterRangeError):
            probe_lambdas(params, [0.1], [0.0], mesh)

    def test_report_structure(self):
        params = ProblemParams(mu=0.25, gamma=1.0)
        report = h10_blowup_probe(params, [0.1, 0.2], M=SMALL_M, levels=3)
        self.assertEqual(len(report.table.rows), 2)
        self.assertEqual(report.table.meshes, [16, 32, 64])
        self.assertEqual(len(report.hmu_star_drift), 2)
        self.assertTrue(report.eigen_ratio_decreasing)
        self.assertIsInstance(report.reproduced, bool)
        for row in report.table.rows:
            self.assertEqual(len(row.h10_trunc), 3)
            self.assertFalse(row.trivial)

    def test_explicit_lambdas_must_match(self):
        with self.assertRaises(ParameterRangeError):
            h10_blowup_probe(ProblemParams(), [0.1, 0.2], lambdas=[10.0], M=SMALL_M, levels=1)


class TestBlowupAlongCriticalLadder(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.params = ProblemParams(mu=0.25, gamma=1.0)
        cls.report = h10_blowup_probe(cls.params, CRITICAL_LADDER, M=LADDER_M, levels=3)

    def test_truncated_norm_grows(self):
        self.assertEqual(self.report.table.meshes, [LADDER_M, 2 * LADDER_M, 4 * LADDER_M])
        self.assertTrue(self.report.growth_along_n)
        self.assertTrue(self.report.growth_along_refinement)
        self.assertFalse(self.report.saturated)

    def test_critical_norm_stays_bounded(self):
        self.assertTrue(self.report.stable_critical_norm)
        for row in self.report.table.rows:
            self.assertFalse(row.trivial)
            self.assertLessEqual(row.hmu_star ** 2, row.lam * row.l2 ** 2 + 1e-10)

    def test_lambdas_decrease_to_critical_onset(self):
        lambdas = [row.lam for row in self.report.table.rows]
        self.assertTrue(lambdas[0] > lambdas[1] > lambdas[2])

    def test_eigen_ratio_decreases(self):
        self.assertEqual(len(self.report.eigen_ratios), 3)
        self.assertTrue(self.report.eigen_ratio_decreasing)

    def test_reproduced(self):
        self.assertTrue(self.report.reproduced)

    def test_fixed_mu_saturates(self):
        report = h10_blowup_probe(self.params, [0.1], M=LADDER_M, levels=3)
        self.assertTrue(report.saturated)
        self.assertFalse(report.reproduced)


if __name__ == '__main__':
    unittest.main()
