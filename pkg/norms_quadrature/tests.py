import math

import numpy as np
from django.test import SimpleTestCase
from scipy import integrate

from core.exceptions import FlagsNotSatisfied, IndexOutOfRange, UsageError
from experiments.sampling import random_canonical_quads, random_convex_quads, random_triangle
from interpolants.fields import PolynomialField, TrigField, cex1_field
from interpolants.models import RightTriangle
from interpolants.services import InterpolationService
from quad_geometry.models import CanonicalQuad
from quad_geometry.services import ConditionService
from reference_map.models import BilinearMap
from reference_map.services import ReferenceMapService

from .models import NormStatus, RuleKind
from .services import NormService, QuadratureService, graded_breaks, grading_levels

UNIT = CanonicalQuad(1, 1, 1, 1)
I2_HALF_THREE_QUARTERS = 1.726092434710687


def ip_oracle(cq, p):
    value, _ = integrate.dblquad(
        lambda y, x: (1 + cq.beta * x + cq.gamma * y) ** (1 - p), 0, 1, 0, 1, epsabs=1e-14, epsrel=1e-12
    )
    return value


def random_quadratic(rng):
    return PolynomialField.from_terms([(i, j, rng.normal()) for i in range(3) for j in range(3 - i)])


class QuadratureRuleTest(SimpleTestCase):
    def test_single_point_rule(self):
        rule = QuadratureService.gauss_tensor_rule(1)
        self.assertEqual(rule.kind, RuleKind.SQUARE_TENSOR)
        np.testing.assert_allclose(rule.points, [[0.5, 0.5]])
        np.testing.assert_allclose(rule.weights, [1.0])

    def test_tensor_polynomial_exactness(self):
        rule = QuadratureService.gauss_tensor_rule(3)
        x, y = rule.points[:, 0], rule.points[:, 1]
        self.assertAlmostEqual(rule.integrate(x ** 5 * y ** 4), 1 / 30, delta=1e-15)

    def test_tensor_exponential(self):
        rule = QuadratureService.gauss_tensor_rule(10)
        value = rule.integrate(np.exp(rule.points.sum(axis=1)))
        self.assertAlmostEqual(value / (math.e - 1) ** 2, 1.0, delta=1e-12)

    def test_weights_are_positive_and_sum_to_measure(self):
        for n in (1, 4, 17, 64):
            square = QuadratureService.gauss_tensor_rule(n)
            triangle = QuadratureService.gauss_triangle_rule(n)
            segment = QuadratureService.gauss_segment_rule(n)
            self.assertEqual(len(square), n * n)
            self.assertTrue((square.weights > 0).all() and (triangle.weights > 0).all())
            self.assertAlmostEqual(square.measure, 1.0, delta=1e-14)
            self.assertAlmostEqual(triangle.measure, 0.5, delta=1e-14)
            self.assertAlmostEqual(segment.measure, 1.0, delta=1e-14)

    def test_triangle_monomials(self):
        rule = QuadratureService.gauss_triangle_rule(3)
        x, y = rule.points[:, 0], rule.points[:, 1]
        self.assertTrue((x + y <= 1 + 1e-15).all())
        self.assertAlmostEqual(rule.integrate(x ** 2 * y), 1 / 60, delta=1e-15)

    def test_segment_rule(self):
        rule = QuadratureService.gauss_segment_rule(4)
        self.assertEqual(rule.kind, RuleKind.SEGMENT)
        self.assertAlmostEqual(rule.integrate(rule.points[:, 0] ** 7), 1 / 8, delta=1e-15)

    def test_order_is_validated(self):
        for n in (0, 65, 2.5):
            with self.assertRaises(UsageError):
                QuadratureService.gauss_tensor_rule(n)

    def test_composite_rule(self):
        rule = QuadratureService.composite_tensor_rule([0, 0.5, 1], [0, 0.25, 1], 2)
        self.assertEqual(len(rule), 16)
        self.assertAlmostEqual(rule.measure, 1.0, delta=1e-15)
        self.assertAlmostEqual(rule.integrate(rule.points[:, 0] ** 3), 0.25, delta=1e-15)


class GradingTest(SimpleTestCase):
    def test_breaks(self):
        np.testing.assert_allclose(graded_breaks(3, True), [0, 0.5, 0.75, 0.875, 1])
        np.testing.assert_allclose(graded_breaks(3, False), [0, 0.125, 0.25, 0.5, 1])

    def test_levels(self):
        self.assertEqual(grading_levels([1, 1, 1, 1]), 0)
        self.assertEqual(grading_levels([1, 1.2, 1.4, 1.1]), 0)
        self.assertEqual(grading_levels([1, 1, 1e-3, 1]), 12)
        self.assertEqual(grading_levels([1, 1, 0, 1]), 48)

    def test_graded_rule_concentrates_near_small_corner(self):
        rule = QuadratureService.graded_square_rule([1, 0.5, 1e-4, 0.5], 4)
        self.assertAlmostEqual(rule.measure, 1.0, delta=1e-14)
        self.assertGreater(rule.points.max(), 1 - 1e-4)

        rule = QuadratureService.graded_square_rule([1e-4, 0.5, 1, 0.5], 4)
        self.assertLess(rule.points.min(), 1e-4)


class NormTest(SimpleTestCase):
    def test_constant_on_unit_square(self):
        one = PolynomialField.constant(1.0)
        for p in (1, 2, 3, 7.5):
            result = NormService.lp_norm(one, UNIT, p)
            self.assertAlmostEqual(result.value, 1.0, delta=1e-14)
            self.assertTrue(result.converged)
            self.assertEqual(result.status, NormStatus.CONVERGED)

    def test_constant_seminorm_vanishes(self):
        result = NormService.w1p_seminorm(PolynomialField.constant(2.0), UNIT, 2)
        self.assertEqual(result.value, 0.0)
        self.assertTrue(result.converged)

    def test_constant_measures_area(self):
        one = PolynomialField.constant(1.0)
        for quad in random_convex_quads(20, seed=5):
            result = NormService.lp_norm(one, quad, 2)
            self.assertAlmostEqual(result.value ** 2 / quad.area, 1.0, delta=1e-12)

    def test_linear_field(self):
        x = PolynomialField.from_terms([(1, 0, 1.0)])
        self.assertAlmostEqual(NormService.lp_norm(x, UNIT, 2).value, math.sqrt(1 / 3), delta=1e-14)

    def test_cex1_third_seminorm(self):
        u = cex1_field()
        for s in (0.4, 0.1, 0.01):
            cq = CanonicalQuad(1, s, s, 2 * s)
            self.assertAlmostEqual(cq.area, s * (2 + s) / 2, delta=1e-15)
            for p in (1, 2, 3):
                result = NormService.wmp_seminorm(u, cq, 3, p)
                self.assertAlmostEqual(result.value / (6 * cq.area ** (1 / p)), 1.0, delta=1e-12)

    def test_interpolant_gradient_norm(self):
        # Q1 reproduces u = x + 2y, so |Q1 u|_{1,p} = (|K| (1 + 2^p))^(1/p)
        u = PolynomialField.from_terms([(1, 0, 1.0), (0, 1, 2.0)])
        for quad in random_canonical_quads(10, seed=2):
            interpolant = InterpolationService.qk_interpolate(quad, 1, u)
            for p in (2, 3):
                result = NormService.w1p_seminorm(interpolant, quad, p)
                expected = (quad.area * (1 + 2 ** p)) ** (1 / p)
                self.assertAlmostEqual(result.value / expected, 1.0, delta=1e-10)

    def test_phi11_derivative_against_closed_form(self):
        for s in (0.3, 0.1):
            cq = CanonicalQuad(1, s, s, 2 * s)
            phi = InterpolationService.basis_function(cq, 2, 1, 1)
            rule = QuadratureService.composite_tensor_rule(np.linspace(0, 1, 9), np.linspace(0, 1, 9), 16)
            x, y = rule.points[:, 0], rule.points[:, 1]
            dy = 16 * x * ((1 - x) * (1 - 2 * y) + (s - 1) * y * (x - y)) / (s * (1 + x + (s - 1) * y))
            jac = s * (1 + x + (s - 1) * y)
            for p in (2, 4):
                direct = rule.integrate(np.abs(dy) ** p * jac) ** (1 / p)
                result = NormService.component_norm(phi, cq, (0, 1), p)
                self.assertAlmostEqual(result.value / direct, 1.0, delta=1e-8)

    def test_p_is_validated(self):
        for p in (0.5, 65, math.inf, math.nan):
            with self.assertRaises(UsageError):
                NormService.lp_norm(PolynomialField.constant(1.0), UNIT, p)

    def test_unconverged_is_flagged(self):
        wiggly = TrigField(length=0.01)
        with self.assertLogs('norms_quadrature.services', level='WARNING'):
            result = NormService.lp_norm(wiggly, UNIT, 2, order=4)
        self.assertFalse(result.converged)
        self.assertEqual(result.status, NormStatus.UNCONVERGED)
        self.assertGreater(result.error_estimate, 0.0)


class IpIntegralTest(SimpleTestCase):
    def test_p_one(self):
        for cq in random_canonical_quads(20, seed=3):
            result = NormService.ip_integral(cq, 1)
            self.assertEqual(result.value, 1.0)

    def test_parallelogram(self):
        for p in (1, 2, 2.5, 3, 4, 6):
            self.assertAlmostEqual(NormService.ip_integral(CanonicalQuad(2, 0.5, 2, 0.5), p).value, 1.0, delta=1e-13)

    def test_known_value(self):
        cq = CanonicalQuad(1, 1, 0.5, 0.75)
        closed = NormService.ip_integral(cq, 2)
        self.assertEqual(closed.order, 0)
        self.assertAlmostEqual(closed.value / I2_HALF_THREE_QUARTERS, 1.0, delta=1e-13)
        self.assertAlmostEqual(closed.value / ip_oracle(cq, 2), 1.0, delta=1e-10)

    def test_single_zero_coefficient(self):
        # beta = 0, gamma = -1/2: integral of (1 - y/2)^-2 over [0, 1] is 2
        self.assertAlmostEqual(NormService.ip_integral(CanonicalQuad(1, 1, 0.5, 1), 3).value, 2.0, delta=1e-14)

    def test_closed_form_against_quadrature(self):
        for cq in random_canonical_quads(30, seed=4, max_ratio=1.0, min_certificate=1e-2):
            for p in (1, 2, 3, 4):
                closed = NormService.ip_integral(cq, p)
                quadrature = NormService.ip_integral(cq, p, method='quadrature')
                self.assertTrue(quadrature.converged)
                self.assertAlmostEqual(closed.value / quadrature.value, 1.0, delta=1e-9)

    def test_fractional_p_against_oracle(self):
        for cq in (CanonicalQuad(1, 1, 0.5, 0.75), CanonicalQuad(1, 2, 1.5, 0.4)):
            for p in (1.5, 2.5, 3.7):
                result = NormService.ip_integral(cq, p)
                self.assertTrue(result.converged)
                self.assertAlmostEqual(result.value / ip_oracle(cq, p), 1.0, delta=1e-9)

    def test_closed_form_needs_integer_p(self):
        with self.assertRaises(UsageError):
            NormService.ip_integral(CanonicalQuad(1, 1, 0.5, 0.75), 2.5, method='closed')

    def test_near_singular_flag(self):
        cq = CanonicalQuad(1, 1, 0.5, 0.5 + 5e-13)
        self.assertTrue(NormService.ip_integral(cq, 2).near_singular)
        self.assertFalse(NormService.ip_integral(CanonicalQuad(1, 1, 0.5, 0.75), 2).near_singular)

    def test_sine_bound_under_d1(self):
        for cq in random_canonical_quads(200, seed=6, max_ratio=1.0, max_d2=4.0):
            for p in (2, 3, 4, 2.5):
                ip = NormService.ip_integral(cq, p).value
                bound = (min(cq.a, cq.b) / (cq.l_len * math.sin(cq.alpha))) ** (p - 1)
                self.assertLessEqual(ip, bound * (1 + 1e-9))

    def test_scaling_constant_bounded_by_d2(self):
        for cq in random_canonical_quads(100, seed=7, max_ratio=1.0, max_d2=4.0):
            d2 = ConditionService.condition_flags(cq, 4.0)['d2'].attained
            for p in (1, 2, 4, 6):
                self.assertLessEqual(NormService.ip_scaling_constant(cq, p), d2 ** (p - 1) * (1 + 1e-9))

    def test_scaling_constant_grows_toward_three(self):
        cq = CanonicalQuad(1, 1, 0.5001, 0.5001)
        constants = [NormService.ip_scaling_constant(cq, p) for p in (2, 2.5, 2.9)]
        np.testing.assert_allclose(constants, [1.38332, 2.69338, 7.15122], rtol=1e-4)
        self.assertTrue(constants[0] < constants[1] < constants[2])


class CornerIntegralTest(SimpleTestCase):
    def test_against_quadrature(self):
        rule = QuadratureService.gauss_triangle_rule(40)
        origin = np.array([0.75, 0.75])
        edges = np.array([[0.0, 0.25], [0.25, 0.25]])
        points = origin + rule.points @ edges
        for s in (0.55, 0.6, 0.625):
            for p in (2.5, 4, 6):
                factor = 1 + (s - 1) * points.sum(axis=1)
                expected = rule.integrate(factor ** (1 - p)) * abs(np.linalg.det(edges))
                self.assertAlmostEqual(NormService.cex2_corner_integral(s, p) / expected, 1.0, delta=1e-8)

    def test_excluded_exponents(self):
        for p in (2, 3):
            with self.assertRaises(UsageError):
                NormService.cex2_corner_integral(0.55, p)
        with self.assertRaises(UsageError):
            NormService.cex2_corner_integral(0.4, 4)


class EstphiTest(SimpleTestCase):
    def test_unit_square(self):
        for node in ((1, 1), (0, 1), (2, 2), (0, 0)):
            certificate = NormService.certify_estphi(UNIT, 2, 2, node)
            self.assertAlmostEqual(certificate.rhs_scale, 2 ** 0.25, delta=1e-15)
            self.assertTrue(math.isfinite(certificate.ratio) and certificate.ratio > 0)
            self.assertTrue(certificate.flags_hold and certificate.converged)
        self.assertTrue(NormService.certify_estphi(UNIT, 2, 2, (1, 1)).interior)
        self.assertFalse(NormService.certify_estphi(UNIT, 2, 2, (0, 1)).interior)

    def test_ratio_matches_seminorm(self):
        cq = CanonicalQuad(1, 0.5, 0.8, 0.4)
        certificate = NormService.certify_estphi(cq, 3, 2, (1, 2))
        phi = InterpolationService.basis_function(cq, 3, 1, 2)
        self.assertAlmostEqual(certificate.lhs, NormService.w1p_seminorm(phi, cq, 2).value, delta=1e-14)
        expected_scale = cq.diameter ** 0.5 / cq.a ** 0.5
        self.assertAlmostEqual(certificate.ratio, certificate.lhs / expected_scale, delta=1e-12)

    def test_edge_nodes_bounded_on_cex1_family(self):
        # a ratio growing like the rhs scale would give slope -1/2
        grid = (0.1, 0.05, 0.025, 0.0125)
        ratios = []
        for s in grid:
            cq = CanonicalQuad(1, s, s, 2 * s)
            ratios.append(max(NormService.certify_estphi(cq, 2, 2, node).ratio for node in ((0, 1), (2, 1), (1, 2))))
        slope = np.polyfit(np.log(grid), np.log(ratios), 1)[0]
        self.assertGreater(slope, -0.25)

    def test_flags_are_enforced(self):
        cq = CanonicalQuad(1, 1, 0.5001, 0.5001)
        with self.assertRaises(FlagsNotSatisfied) as ctx:
            NormService.certify_estphi(cq, 2, 2, (1, 1))
        self.assertIn('d2', ctx.exception.as_dict()['attained'])
        certificate = NormService.certify_estphi(cq, 2, 2, (1, 1), enforce=False)
        self.assertFalse(certificate.flags_hold)

    def test_required_flags(self):
        self.assertEqual(NormService.required_flags(2, 2, (0, 1)), (('delta1', 'd2'),))
        self.assertEqual(NormService.required_flags(2, 4, (0, 1)), (('d1', 'd2'),))
        self.assertEqual(NormService.required_flags(2, 2, (1, 1)), (('delta1', 'd2', 'd3'), ('d1', 'd2')))
        self.assertEqual(NormService.required_flags(2, 4, (1, 1)), (('d1', 'd2'),))
        self.assertEqual(NormService.required_flags(3, 3, (1, 2)), (('d1', 'd2'),))

    def test_internal_node_needs_d1_for_large_p(self):
        cq = CanonicalQuad(1, 1, 1.5, 1.5)
        self.assertTrue(NormService.certify_estphi(cq, 2, 2, (1, 1)).flags_hold)
        with self.assertRaises(FlagsNotSatisfied) as ctx:
            NormService.certify_estphi(cq, 2, 4, (1, 1))
        self.assertEqual(ctx.exception.as_dict()['required'], [['d1', 'd2']])

    def test_node_out_of_range(self):
        with self.assertRaises(IndexOutOfRange):
            NormService.certify_estphi(UNIT, 2, 2, (3, 0))


class TraceInequalityTest(SimpleTestCase):
    def test_hypotenuse_of_unit_triangle(self):
        check = NormService.trace_inequality_check(RightTriangle(1, 1), None, PolynomialField.constant(1.0), 2)
        self.assertAlmostEqual(check.lhs, 2 ** 0.25, delta=1e-14)
        self.assertAlmostEqual(check.rhs, 2 ** 0.75, delta=1e-14)
        self.assertTrue(check.ok)

    def test_area_ignores_orientation(self):
        length = math.sqrt(13)
        for coords in ([(2, 1), (5, 1), (2, 3)], [(2, 1), (2, 3), (5, 1)]):
            check = NormService.trace_inequality_check(coords, None, PolynomialField.constant(1.0), 2)
            self.assertAlmostEqual(check.lhs, length ** 0.5, delta=1e-13)
            self.assertAlmostEqual(check.rhs, math.sqrt(2 * length), delta=1e-12)

    def test_random_quadratics_on_mac_triangles(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            coords = random_triangle(rng, max_angle=0.9 * math.pi)
            a, b = rng.choice(3, 2, replace=False)
            field = random_quadratic(rng)
            p = rng.choice([1, 2, 4])
            check = NormService.trace_inequality_check(coords, (coords[a], coords[b]), field, p)
            self.assertTrue(check.ok, (coords.tolist(), p, check.as_dict()))

    def test_interpolation_error_on_aux_triangle(self):
        cq = CanonicalQuad(1, 0.5, 0.7, 0.6)
        bm = BilinearMap(cq)
        u = cex1_field()
        error = u - InterpolationService.triangle_pk_interpolate(cq, 2, u)
        for node in ((2, 1), (1, 2), (1, 1)):
            aux = ReferenceMapService.aux_triangle(bm, 2, *node)
            for p in (1, 2, 4):
                self.assertTrue(NormService.trace_inequality_check(aux, None, error, p).ok)

    def test_edge_must_belong_to_triangle(self):
        with self.assertRaises(UsageError):
            NormService.trace_inequality_check(
                RightTriangle(1, 1), ((0, 0), (0.5, 0.5)), PolynomialField.constant(1.0), 2
            )


class PolynomialNormRatioTest(SimpleTestCase):
    def test_ratio_at_least_one(self):
        rng = np.random.default_rng(9)
        for cq in random_canonical_quads(20, seed=9):
            self.assertGreaterEqual(NormService.polynomial_norm_ratio(cq, random_quadratic(rng), 2), 1.0 - 1e-12)

    def test_axis_scaling_invariance(self):
        coeffs = [[1.0, -2.0, 0.5], [0.3, 1.0, 0.0], [2.0, 0.0, 0.0]]
        ratio = NormService.polynomial_norm_ratio(CanonicalQuad(1, 1, 0.7, 0.8), PolynomialField(coeffs), 2)
        scaled = NormService.polynomial_norm_ratio(
            CanonicalQuad(2, 3, 1.4, 2.4), PolynomialField(coeffs, scale=(2, 3)), 2
        )
        self.assertAlmostEqual(ratio / scaled, 1.0, delta=1e-10)
