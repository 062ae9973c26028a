import io
import math

import numpy as np
import pytest
from django.test import SimpleTestCase

from core.exceptions import ConditionViolated, GridOutOfRange, UsageError
from quad_geometry.models import CanonicalQuad, ConvexQuad
from quad_geometry.services import AngleService

from .families import ANCHOR, family_element, family_shape, scaled_shape, validate_grid
from .models import CSV_COLUMNS, Family, Requirement, Verdict
from .sampling import random_convex_quads
from .services import CEX2_ANGLE_GRID, ExperimentService, _map, fit_rate

DAC_SHAPE = ConvexQuad.from_coords([(0, 0), (1, 0), (0.9, 1.1), (-0.1, 1)])
# kite whose angle at (0, -eps) is 0.995 pi
MAC_ONLY_SHAPE = ConvexQuad.from_coords([(-1, 0), (0, -math.tan(0.0025 * math.pi)), (1, 0), (0, 1)])


class RateFitTest(SimpleTestCase):
    def test_exact_power_law(self):
        x = 2.0 ** -np.arange(1, 7)
        rate = fit_rate(x, 3 * x ** 2)
        self.assertAlmostEqual(rate.slope, 2.0, delta=1e-12)
        self.assertLess(rate.residual, 1e-12)
        self.assertEqual(rate.window, 4)

    def test_window_takes_finest_points(self):
        x = np.array([1.0, 0.5, 0.25, 0.125, 0.0625])
        y = np.where(x > 0.9, 1.0, x)
        self.assertAlmostEqual(fit_rate(x, y, window=4).slope, 1.0, delta=1e-12)
        self.assertNotAlmostEqual(fit_rate(x, y, window=5).slope, 1.0, delta=1e-3)


class FamilyTest(SimpleTestCase):
    def test_validity_ranges(self):
        self.assertEqual(validate_grid(Family.CEX1, [0.2, 0.1]), (0.2, 0.1))
        for family, grid in ((Family.CEX1, [0.5]), (Family.CEX2, [0.7]), (Family.CEX2, [0.5]), (Family.CEX1, [])):
            with self.assertRaises(GridOutOfRange):
                validate_grid(family, grid)

    def test_family_elements(self):
        self.assertEqual(family_element(Family.CEX1, 0.1).parameters, (1.0, 0.1, 0.1, 0.2))
        self.assertEqual(family_element(Family.CEX2, 0.55).parameters, (1.0, 1.0, 0.55, 0.55))
        tri = family_element(Family.TRIDEGEN, 0.3)
        np.testing.assert_allclose(tri.coords, [[0, 0], [1, 0], [0.3, 0.7], [0, 0.7]])

    def test_cex2_family_keeps_mac(self):
        for s in CEX2_ANGLE_GRID:
            angles = AngleService.interior_angles(family_element(Family.CEX2, s).to_convex_quad())
            self.assertGreaterEqual(angles.min(), math.pi / 4 - 1e-12)

    def test_scaled_shape(self):
        for h in (0.25, 2.0 ** -6):
            element = scaled_shape(DAC_SHAPE, h)
            self.assertAlmostEqual(element.diameter, h, delta=1e-15)
            np.testing.assert_allclose(element.coords[0], ANCHOR)
            np.testing.assert_allclose(AngleService.interior_angles(element), AngleService.interior_angles(DAC_SHAPE))

    def test_shapes(self):
        self.assertIsInstance(family_shape(Family.CEX1), ConvexQuad)
        a = family_shape(Family.RANDOM_CONVEX, seed=3)
        b = family_shape(Family.RANDOM_CONVEX, seed=3)
        np.testing.assert_array_equal(a.coords, b.coords)
        self.assertIs(family_shape(Family.USER, quads=[DAC_SHAPE]), DAC_SHAPE)
        with self.assertRaises(UsageError):
            family_shape(Family.USER)


class SufficiencyTest(SimpleTestCase):
    def test_table(self):
        self.assertEqual(ExperimentService.sufficient_condition(1, 2), Requirement.RDP)
        self.assertEqual(ExperimentService.sufficient_condition(2, 2.9), Requirement.MAC_MIN)
        self.assertEqual(ExperimentService.sufficient_condition(1, 3), Requirement.DAC)
        self.assertEqual(ExperimentService.sufficient_condition(4, 6), Requirement.DAC)


class MeasureTest(SimpleTestCase):
    def test_reproduction(self):
        square = ConvexQuad.from_coords([(0, 0), (1, 0), (1, 1), (0, 1)])
        for k, field in ((1, 'poly:1:1:1,1:0:2'), (2, 'poly:2:2:1,0:1:-1'), (3, 'poly:3:2:1')):
            row, _ = ExperimentService.measure(square, k, 2, field, 0)
            self.assertGreater(row.semnorm_u, 0.0)
            self.assertLessEqual(row.err_w1p, 1e-10 * row.semnorm_u)
            self.assertLessEqual(row.ratio_lp, 1e-10)

    def test_ratio_invariant_under_scaling(self):
        for quad in random_convex_quads(5, seed=8):
            big = quad.transformed(np.eye(2) * 10.0, (3.0, -1.0))
            small_row, _ = ExperimentService.measure(quad, 2, 2, 'trig-box', 0)
            big_row, _ = ExperimentService.measure(big, 2, 2, 'trig-box', 0)
            self.assertAlmostEqual(small_row.ratio_lp / big_row.ratio_lp, 1.0, delta=1e-7)

    def test_corner_integral_without_closed_form(self):
        # p = 2 integrand is 1/(1 + (s - 1)(x + y)), checked against the p -> 2 limit of the closed form
        s = 0.6
        near = (ExperimentService.corner_integral(s, 2 - 1e-6) + ExperimentService.corner_integral(s, 2 + 1e-6)) / 2
        self.assertAlmostEqual(ExperimentService.corner_integral(s, 2) / near, 1.0, delta=1e-6)


@pytest.mark.slow
class CounterexampleStudyTest(SimpleTestCase):
    def test_cex1(self):
        result = ExperimentService.run_cex1(2)
        self.assertEqual(result.verdict, Verdict.DIVERGES)
        self.assertFalse(result.failed)
        self.assertGreaterEqual(result.rates['basis_norm'].slope, -0.65)
        self.assertLessEqual(result.rates['basis_norm'].slope, -0.35)
        self.assertLessEqual(result.rates['ratio_seminorm'].slope, -0.8)
        for row in result.rows:
            # u depends on x only, so the y-derivative of Q2 u bounds the error from below
            self.assertLessEqual(row.aux2, row.err_w1p * (1 + 1e-8))
            self.assertTrue(row.converged)

    def test_cex1_arguments(self):
        with self.assertRaises(UsageError):
            ExperimentService.run_cex1(3)
        with self.assertRaises(GridOutOfRange):
            ExperimentService.run_cex1(2, s_grid=[0.2, 0.6])

    def test_cex2_diverges_for_p_four(self):
        result = ExperimentService.run_cex2(4)
        self.assertEqual(result.verdict, Verdict.DIVERGES)
        self.assertAlmostEqual(result.rates['basis_norm_power'].slope, -1.0, delta=0.2)

    def test_cex2_bounded_for_p_two(self):
        result = ExperimentService.run_cex2(2, s_grid=CEX2_ANGLE_GRID)
        self.assertEqual(result.verdict, Verdict.BOUNDED)
        self.assertLess(result.details['spread'], 2.0)

    def test_cex2_corner_column(self):
        result = ExperimentService.run_cex2(4, s_grid=CEX2_ANGLE_GRID)
        for row in result.rows:
            self.assertTrue(math.isfinite(row.aux2) and row.aux2 > 0)


@pytest.mark.slow
class ConvergenceStudyTest(SimpleTestCase):
    def test_dac_shape(self):
        result = ExperimentService.run_convergence(Family.USER, k=2, p=4, quads=[DAC_SHAPE])
        self.assertEqual(result.verdict, Verdict.RATE_OK)
        self.assertAlmostEqual(result.rates['seminorm'].slope, 2.0, delta=0.1)
        self.assertAlmostEqual(result.rates['lp'].slope, 3.0, delta=0.1)
        self.assertTrue(result.details['condition_met'])

    def test_mac_only_shape(self):
        result = ExperimentService.run_convergence(k=2, p=2, shape=MAC_ONLY_SHAPE)
        self.assertAlmostEqual(result.rates['seminorm'].slope, 2.0, delta=0.1)
        self.assertTrue(result.details['condition_met'])

    def test_condition_violation_warns(self):
        with self.assertWarns(ConditionViolated):
            result = ExperimentService.run_convergence(k=2, p=4, shape=MAC_ONLY_SHAPE, h_levels=[0.25, 0.125])
        self.assertFalse(result.details['condition_met'])
        self.assertEqual(result.verdict, Verdict.INCONCLUSIVE)

    def test_reproduction_is_exact(self):
        square = ConvexQuad.from_coords([(0, 0), (1, 0), (1, 1), (0, 1)])
        result = ExperimentService.run_convergence(k=2, p=2, shape=square, field='poly:2:2:1,1:0:3')
        self.assertEqual(result.verdict, Verdict.REPRODUCED)
        self.assertFalse(result.failed)

    def test_levels_must_be_positive(self):
        with self.assertRaises(GridOutOfRange):
            ExperimentService.run_convergence(shape=DAC_SHAPE, h_levels=[0.5, 0.0])


@pytest.mark.slow
class UniformityStudyTest(SimpleTestCase):
    def test_max_ratio_is_finite(self):
        result = ExperimentService.run_lp_uniformity(2, 2, num_random=40, seed=42)
        self.assertEqual(result.verdict, Verdict.BOUNDED)
        self.assertTrue(math.isfinite(result.details['max_ratio_lp']))
        self.assertTrue(math.isfinite(result.details['cex1_max_ratio_lp']))
        self.assertEqual(len(result.rows), 40)

    def test_degree_is_validated(self):
        with self.assertRaises(UsageError):
            ExperimentService.run_lp_uniformity(5, 2, num_random=1)


@pytest.mark.slow
class ConstantSweepTest(SimpleTestCase):
    def test_p_two(self):
        result = ExperimentService.run_constant_vs_angle(p=2)
        minimum, maximum = result.children
        self.assertEqual(minimum.verdict, Verdict.DIVERGES)
        self.assertEqual(maximum.verdict, Verdict.BOUNDED)
        self.assertFalse(result.failed)

    def test_p_four(self):
        result = ExperimentService.run_constant_vs_angle(p=4)
        self.assertEqual(result.children[1].verdict, Verdict.DIVERGES)

    def test_rows_are_angles(self):
        minimum = ExperimentService.run_constant_vs_angle(p=2).children[0]
        for row in minimum.rows:
            angles = AngleService.interior_angles(CanonicalQuad(1, row.aux1, row.aux1, 2 * row.aux1).to_convex_quad())
            self.assertAlmostEqual(row.param, angles.min(), delta=1e-14)


class OutputTest(SimpleTestCase):
    def test_csv_is_deterministic(self):
        first, second = io.StringIO(), io.StringIO()
        ExperimentService.write_csv(ExperimentService.run_cex1(2), first)
        ExperimentService.write_csv(ExperimentService.run_cex1(2), second)
        self.assertEqual(first.getvalue(), second.getvalue())
        self.assertEqual(first.getvalue().splitlines()[0], ','.join(CSV_COLUMNS))
        self.assertEqual(len(first.getvalue().splitlines()), 5)

    def test_summary(self):
        summary = ExperimentService.run_cex1(2).summary()
        self.assertEqual(set(summary) >= {'study', 'k', 'p', 'slope', 'residual', 'verdict'}, True)
        self.assertEqual(summary['verdict'], 'DIVERGES')

    def test_constant_sweep_csv_has_sweep_column(self):
        buffer = io.StringIO()
        ExperimentService.write_csv(ExperimentService.run_constant_vs_angle(p=2), buffer)
        self.assertTrue(buffer.getvalue().startswith('sweep,param,'))

    def test_parallel_map_keeps_order(self):
        self.assertEqual(_map(lambda x: x * x, range(10), jobs=3), [x * x for x in range(10)])
