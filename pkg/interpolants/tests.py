import math

import numpy as np
from django.test import SimpleTestCase

from core.exceptions import (
    DerivativeUnavailable, IndexOutOfRange, InvalidIndex, ParseError, SingularVandermonde, UsageError
)
from experiments.sampling import random_canonical_quads, random_convex_quads
from quad_geometry.models import CanonicalQuad, Point2
from reference_map.models import BilinearMap
from reference_map.services import ReferenceMapService

from .fields import (
    PolynomialField, ScalarField, TrigField, cex1_field, cex2_field, parse_poly, resolve_field
)
from .models import QkBasis, RightTriangle, barycentric_tabulation
from .services import InterpolationService

# relative steps for central differences, by derivative order
FD_STEPS = {1: 1e-6, 2: 1e-4}


class CallableField(ScalarField):
    """Wraps f(points) -> values; derivatives by central differences with steps scaled by h"""

    exact = False

    def __init__(self, func, h=1.0, m_max=2, name='callable'):
        self.func = func
        self.h = float(h)
        self.m_max = min(int(m_max), max(FD_STEPS))
        self.name = name

    def _shifted(self, points, dx, dy):
        return np.asarray(self.func(points + np.array([dx, dy])), dtype=float)

    def _evaluate(self, points, alpha):
        order = sum(alpha)
        if order == 0:
            return np.asarray(self.func(points), dtype=float)
        step = FD_STEPS[order] * self.h
        f = self._shifted
        if alpha == (1, 0):
            return (f(points, step, 0) - f(points, -step, 0)) / (2 * step)
        if alpha == (0, 1):
            return (f(points, 0, step) - f(points, 0, -step)) / (2 * step)
        if alpha == (1, 1):
            return (
                f(points, step, step) - f(points, step, -step)
                - f(points, -step, step) + f(points, -step, -step)
            ) / (4 * step ** 2)
        dx, dy = (step, 0) if alpha == (2, 0) else (0, step)
        return (f(points, dx, dy) - 2 * f(points, 0, 0) + f(points, -dx, -dy)) / step ** 2


def cex1_phi11_dy(s, x, y):
    return 16 * x * ((1 - x) * (1 - 2 * y) + (s - 1) * y * (x - y)) / (s * (1 + x + (s - 1) * y))


def cex2_phi22_dy(s, x, y):
    return x * ((2 * x - 1) * (4 * y - 1) + 2 * (s - 1) * y * (x - y)) / (1 + (s - 1) * (x + y))


def random_poly(rng, k):
    coeffs = np.zeros((k + 1, k + 1))
    for p in range(k + 1):
        for q in range(k + 1 - p):
            coeffs[p, q] = rng.normal()
    return PolynomialField(coeffs)


class FieldTest(SimpleTestCase):
    def test_cex_fields(self):
        u1, u2 = cex1_field(), cex2_field()
        for root in (0.0, 0.5, 1.0):
            self.assertAlmostEqual(u1.value((root, 0.3)), 0.0, places=15)
        self.assertAlmostEqual(u1.value((2.0, 5.0)), 2.0 * 1.5 * 1.0)
        points = np.array([[0.3, 0.1], [0.9, 2.0]])
        np.testing.assert_allclose(u1.evaluate(points, (3, 0)), [6.0, 6.0])
        np.testing.assert_allclose(u1.evaluate(points, (0, 1)), [0.0, 0.0])
        np.testing.assert_allclose(u1.evaluate(points, (2, 1)), [0.0, 0.0])
        x = 0.6
        self.assertAlmostEqual(u2.value((x, 0.0)), x * (x - 0.25) * (x - 0.75) * (x - 0.375) * (x - 1), places=15)

    def test_trig_derivatives_match_closed_form(self):
        field = TrigField()
        points = np.array([[0.2, 0.7], [0.5, 0.5]])
        x, y = points[:, 0], points[:, 1]
        np.testing.assert_allclose(field.evaluate(points), np.sin(math.pi * x) * np.sin(math.pi * y))
        np.testing.assert_allclose(
            field.evaluate(points, (1, 0)), math.pi * np.cos(math.pi * x) * np.sin(math.pi * y), atol=1e-14
        )
        np.testing.assert_allclose(
            field.evaluate(points, (2, 1)), -math.pi ** 3 * np.sin(math.pi * x) * np.cos(math.pi * y), atol=1e-12
        )

    def test_bounding_box_trig_vanishes_on_box(self):
        quad = CanonicalQuad(2.0, 1.0, 1.5, 1.2)
        field = resolve_field('trig-box', quad)
        self.assertEqual(field.length, 2.0)
        self.assertAlmostEqual(field.value((0.0, 0.4)), 0.0, places=15)
        with self.assertRaises(UsageError):
            resolve_field('trig-box')

    def test_poly_spec(self):
        field = resolve_field('poly:2:0:1.5,0:1:-2,1:1:3')
        self.assertAlmostEqual(field.value((2.0, 3.0)), 1.5 * 4 - 2 * 3 + 3 * 6)
        self.assertEqual(field.degree, 2)
        for bad in ('1:2', 'a:0:1', '-1:0:2'):
            with self.assertRaises(ParseError):
                parse_poly(bad)
        with self.assertRaises(UsageError):
            resolve_field('nope')

    def test_callable_field_uses_finite_differences(self):
        field = CallableField(lambda p: np.exp(p[:, 0]) * p[:, 1] ** 2, h=1.0)
        self.assertFalse(field.exact)
        point = np.array([[0.3, 0.8]])
        self.assertAlmostEqual(field.evaluate(point, (1, 0))[0], math.exp(0.3) * 0.64, delta=1e-8)
        self.assertAlmostEqual(field.evaluate(point, (1, 1))[0], math.exp(0.3) * 1.6, delta=1e-6)
        self.assertAlmostEqual(field.evaluate(point, (0, 2))[0], 2 * math.exp(0.3), delta=1e-6)
        with self.assertRaises(DerivativeUnavailable):
            field.evaluate(point, (2, 1))

    def test_difference_field(self):
        diff = cex1_field() - PolynomialField.constant(1.0)
        self.assertAlmostEqual(diff.value((0.5, 0.0)), -1.0)
        self.assertEqual(diff.m_max, math.inf)


class BarycentricTest(SimpleTestCase):
    def test_nodal_and_derivative_values(self):
        nodes = np.array([0.0, 0.5, 1.0])
        values, derivs = barycentric_tabulation(nodes, np.array([0.0, 0.25, 1.0]), order=1)
        np.testing.assert_allclose(values[:, 0], [1, 0, 0], atol=1e-15)
        np.testing.assert_allclose(values[:, 1], [0.375, 0.75, -0.125], atol=1e-15)
        # l_1(x) = 4x(1 - x)
        np.testing.assert_allclose(derivs[1], [4 - 8 * x for x in (0.0, 0.25, 1.0)], atol=1e-13)


class QkBasisTest(SimpleTestCase):
    def test_bilinear_corner_function(self):
        basis = QkBasis(1)
        for x, y in ((0.3, 0.7), (0.0, 0.0), (0.9, 0.2)):
            value, dx, dy = InterpolationService.qk_basis_value_grad(basis, 0, 0, x, y)
            self.assertAlmostEqual(value, (1 - x) * (1 - y), places=15)
            self.assertAlmostEqual(dx, -(1 - y), places=14)
            self.assertAlmostEqual(dy, -(1 - x), places=14)

    def test_nodal_property(self):
        for k in (1, 2, 3, 4):
            basis = QkBasis(k)
            t = np.arange(k + 1) / k
            ref = np.array([[t[r], t[l]] for l in range(k + 1) for r in range(k + 1)])
            table = basis.tabulate(ref, order=0)[(0, 0)].reshape((k + 1) ** 2, -1)
            np.testing.assert_allclose(table, np.eye((k + 1) ** 2), atol=1e-14)

    def test_partition_of_unity(self):
        rng = np.random.default_rng(1)
        for k in (1, 2, 3, 4):
            table = QkBasis(k).tabulate(rng.uniform(0, 1, (20, 2)), order=1)
            np.testing.assert_allclose(table[(0, 0)].sum(axis=(0, 1)), 1.0, atol=1e-13)
            np.testing.assert_allclose(table[(1, 0)].sum(axis=(0, 1)), 0.0, atol=1e-12)
            np.testing.assert_allclose(table[(0, 1)].sum(axis=(0, 1)), 0.0, atol=1e-12)
        self.assertAlmostEqual(QkBasis(2).tabulate([[0.3, 0.7]], order=0)[(0, 0)].sum(), 1.0, places=14)

    def test_interior_functions_vanish_on_boundary(self):
        t = np.linspace(0, 1, 11)
        boundary = np.concatenate([
            np.column_stack([t, 0 * t]), np.column_stack([t, 0 * t + 1]),
            np.column_stack([0 * t, t]), np.column_stack([0 * t + 1, t]),
        ])
        for k in (2, 3, 4):
            table = QkBasis(k).tabulate(boundary, order=0)[(0, 0)]
            np.testing.assert_allclose(table[1:k, 1:k], 0.0, atol=1e-14)

    def test_index_out_of_range(self):
        with self.assertRaises(IndexOutOfRange):
            InterpolationService.qk_basis_value_grad(QkBasis(2), 3, 0, 0.5, 0.5)


class PhysicalGradientTest(SimpleTestCase):
    def test_cex1_closed_form(self):
        rng = np.random.default_rng(2)
        for s in (0.4, 0.1, 0.02):
            cq = CanonicalQuad(1, s, s, 2 * s)
            ref = rng.uniform(0.05, 0.95, (30, 2))
            _, dy = InterpolationService.physical_basis_grad_reference(cq, 2, 1, 1, ref)
            np.testing.assert_allclose(dy, cex1_phi11_dy(s, ref[:, 0], ref[:, 1]), rtol=1e-11, atol=1e-12 / s)

    def test_cex2_closed_form(self):
        rng = np.random.default_rng(3)
        for s in (0.625, 0.51, 0.5 + 2.0 ** -10, 1.0):
            ref = rng.uniform(0.0, 1.0, (30, 2))
            _, dy = InterpolationService.physical_basis_grad_reference(CanonicalQuad(1, 1, s, s), 2, 2, 2, ref)
            np.testing.assert_allclose(dy, cex2_phi22_dy(s, ref[:, 0], ref[:, 1]), rtol=1e-10, atol=1e-13)
        _, dy = InterpolationService.physical_basis_grad_reference(CanonicalQuad(1, 1, 1, 1), 2, 2, 2, [[1, 1]])
        self.assertAlmostEqual(dy[0], 3.0, places=13)

    def test_unit_square_gradient_is_reference_gradient(self):
        basis = QkBasis(3)
        for i, j in ((0, 0), (1, 2), (3, 3)):
            _, gx, gy = InterpolationService.qk_basis_value_grad(basis, i, j, 0.3, 0.6)
            dx, dy = InterpolationService.physical_basis_grad(CanonicalQuad(1, 1, 1, 1), 3, i, j, Point2(0.3, 0.6))
            self.assertAlmostEqual(dx, gx, places=12)
            self.assertAlmostEqual(dy, gy, places=12)

    def test_chain_rule_against_finite_differences(self):
        rng = np.random.default_rng(4)
        quads = [q for q in random_convex_quads(100, seed=4, max_stretch=3.0) if q.shortest_side > 0.2 * q.diameter]
        self.assertGreater(len(quads), 3)
        for quad in quads[:10]:
            bm = BilinearMap(quad)
            phi = InterpolationService.basis_function(bm, 2, 1, 2)
            points = ReferenceMapService.forward_many(bm, rng.uniform(0.2, 0.8, (5, 2)))
            numeric = CallableField(phi.evaluate, h=quad.shortest_side, m_max=1)
            np.testing.assert_allclose(
                phi.gradient(points), numeric.gradient(points),
                rtol=1e-6, atol=1e-6 * np.abs(phi.gradient(points)).max(),
            )

    def test_point_outside_element(self):
        from core.exceptions import NotInElement

        with self.assertRaises(NotInElement):
            InterpolationService.physical_basis_grad(CanonicalQuad(1, 1, 1, 1), 2, 1, 1, Point2(1.5, 0.5))


class QkInterpolateTest(SimpleTestCase):
    def test_constant_is_reproduced(self):
        cq = CanonicalQuad(1.0, 0.8, 0.7, 1.1)
        interpolant = InterpolationService.qk_interpolate(cq, 3, PolynomialField.constant(1.0))
        points = ReferenceMapService.forward_many(BilinearMap(cq), np.random.default_rng(5).uniform(0, 1, (20, 2)))
        np.testing.assert_allclose(interpolant.evaluate(points), 1.0, rtol=1e-12)
        np.testing.assert_allclose(interpolant.gradient(points), 0.0, atol=1e-11)

    def test_bilinear_pullbacks_are_reproduced(self):
        rng = np.random.default_rng(6)
        fields = [PolynomialField.from_terms([(1, 0, 1.0)]), PolynomialField.from_terms([(0, 1, 2.0), (0, 0, 1.0)])]
        for cq in random_canonical_quads(10, seed=6):
            bm = BilinearMap(cq)
            points = ReferenceMapService.forward_many(bm, rng.uniform(0, 1, (20, 2)))
            for field in fields:
                for k in (1, 2, 3):
                    interpolant = InterpolationService.qk_interpolate(bm, k, field)
                    scale = np.abs(field.evaluate(points)).max()
                    np.testing.assert_allclose(interpolant.evaluate(points), field.evaluate(points), atol=1e-12 * scale)
                    np.testing.assert_allclose(
                        interpolant.gradient(points), field.gradient(points), atol=1e-10 * scale / cq.shortest_side
                    )

    def test_nodal_duality(self):
        for quad in random_convex_quads(5, seed=7):
            bm = BilinearMap(quad)
            for k in (1, 2, 3, 4):
                nodes = ReferenceMapService.node_grid(bm, k).flat()
                phi = InterpolationService.basis_function(bm, k, 1, k - 1)
                expected = np.zeros((k + 1) ** 2)
                expected[1 * (k + 1) + k - 1] = 1.0
                np.testing.assert_allclose(phi.evaluate(nodes), expected, atol=1e-12)

    def test_basis_function_is_reproduced(self):
        cq = CanonicalQuad(1.2, 0.9, 1.0, 1.1)
        phi = InterpolationService.basis_function(cq, 2, 1, 1)
        interpolant = InterpolationService.qk_interpolate(cq, 2, phi)
        np.testing.assert_allclose(interpolant.values, phi.values, atol=1e-12)

    def test_partition_of_unity_on_physical_points(self):
        rng = np.random.default_rng(8)
        for quad in random_convex_quads(5, seed=8):
            bm = BilinearMap(quad)
            points = ReferenceMapService.forward_many(bm, rng.uniform(0, 1, (10, 2)))
            total = np.zeros(len(points))
            gradient = np.zeros((len(points), 2))
            for i in range(4):
                for j in range(4):
                    phi = InterpolationService.basis_function(bm, 3, i, j)
                    total += phi.evaluate(points)
                    gradient += phi.gradient(points)
            np.testing.assert_allclose(total, 1.0, atol=1e-11)
            np.testing.assert_allclose(gradient, 0.0, atol=1e-11 / quad.shortest_side)

    def test_cex1_nodal_values(self):
        u = cex1_field()
        for s in (0.4, 0.2, 0.05):
            interpolant = InterpolationService.qk_interpolate(CanonicalQuad(1, s, s, 2 * s), 2, u)
            values = interpolant.values
            np.testing.assert_allclose(values[0, :], 0.0, atol=1e-15)
            np.testing.assert_allclose(values[:, 0], 0.0, atol=1e-15)
            self.assertAlmostEqual(values[1, 1] / (s - 1), (s + 1) * (s - 3) / 64, places=14)
            self.assertAlmostEqual(values[1, 2] / (s - 1), s * (s + 1) / 8, places=14)
            self.assertAlmostEqual(values[2, 2] / (s - 1), s * (s - 0.5), places=14)
            self.assertAlmostEqual(values[2, 1] / (s - 1), s * (s - 2) / 8, places=14)

    def test_cex2_nodal_values(self):
        u = cex2_field()
        for s in (0.5 + 2.0 ** -e for e in range(4, 15)):
            values = InterpolationService.qk_interpolate(CanonicalQuad(1, 1, s, s), 2, u).values
            for i, j in ((1, 1), (1, 2), (2, 1)):
                self.assertLess(abs(values[i, j]), 0.1 * (s - 0.5))
            self.assertGreater(abs(values[2, 2]), 1e-3)
            self.assertNotEqual(values[0, 1], 0.0)

    def test_second_derivatives_are_unavailable(self):
        interpolant = InterpolationService.qk_interpolate(CanonicalQuad(1, 1, 1, 1), 2, cex1_field())
        with self.assertRaises(DerivativeUnavailable):
            interpolant.evaluate([[0.5, 0.5]], (1, 1))

    def test_degree_is_validated(self):
        with self.assertRaises(InvalidIndex):
            InterpolationService.qk_interpolate(CanonicalQuad(1, 1, 1, 1), 11, cex1_field())


class TrianglePkTest(SimpleTestCase):
    def test_linear_field(self):
        field = PolynomialField.from_terms([(1, 0, 1.0), (0, 1, 1.0)])
        pi = InterpolationService.triangle_pk_interpolate(RightTriangle(1, 1), 1, field)
        points = np.random.default_rng(9).uniform(0, 1, (10, 2))
        np.testing.assert_allclose(pi.evaluate(points), points.sum(axis=1), atol=1e-14)

    def test_cubic_against_dense_solve(self):
        field = PolynomialField.from_terms([(3, 0, 1.0)])
        pi = InterpolationService.triangle_pk_interpolate(RightTriangle(1, 1), 2, field)
        self.assertAlmostEqual(pi.value((0.5, 0.0)), 0.125, places=14)

        labels, nodes = RightTriangle(1, 1).nodes(2)
        monomials = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
        V = np.array([[x ** p * y ** q for p, q in monomials] for x, y in nodes])
        coeffs = np.linalg.solve(V, nodes[:, 0] ** 3)
        x, y = 0.25, 0.25
        expected = sum(c * x ** p * y ** q for c, (p, q) in zip(coeffs, monomials))
        self.assertAlmostEqual(pi.value((x, y)), expected, places=13)

    def test_polynomials_are_reproduced(self):
        rng = np.random.default_rng(10)
        for k in (1, 2, 3, 4):
            for a, b in ((1.0, 1.0), (0.1, 3.0), (5.0, 0.2)):
                field = random_poly(rng, k)
                pi = InterpolationService.triangle_pk_interpolate(RightTriangle(a, b), k, field)
                points = rng.uniform(0, 1, (20, 2)) * [a, b]
                exact = field.evaluate(points)
                np.testing.assert_allclose(pi.evaluate(points), exact, atol=1e-11 * np.abs(exact).max())

    def test_nodal_values_match(self):
        triangle = RightTriangle(2.0, 0.5)
        pi = InterpolationService.triangle_pk_interpolate(triangle, 3, cex2_field())
        _, nodes = triangle.nodes(3)
        np.testing.assert_allclose(pi.evaluate(nodes), cex2_field().evaluate(nodes), atol=1e-12)
        self.assertEqual(len(nodes), 10)

    def test_degenerate_triangle(self):
        with self.assertRaises(SingularVandermonde):
            InterpolationService.triangle_pk_interpolate(RightTriangle(0.0, 1.0), 2, cex1_field())

    def test_error_splitting_identity(self):
        rng = np.random.default_rng(11)
        u = TrigField()
        for cq in random_canonical_quads(5, seed=11, max_ratio=1.0):
            bm = BilinearMap(cq)
            for k in (1, 2, 3):
                pi = InterpolationService.triangle_pk_interpolate(cq, k, u)
                grid = ReferenceMapService.node_grid(bm, k)
                residual = (pi - u).evaluate(grid.flat()).reshape(k + 1, k + 1)
                np.testing.assert_allclose(residual[0, :], 0.0, atol=1e-12)
                np.testing.assert_allclose(residual[:, 0], 0.0, atol=1e-12)

                points = ReferenceMapService.forward_many(bm, rng.uniform(0, 1, (50, 2)))
                lhs = (
                    InterpolationService.qk_interpolate(bm, k, pi).evaluate(points)
                    - InterpolationService.qk_interpolate(bm, k, u).evaluate(points)
                )
                rhs = np.zeros(len(points))
                for i in range(1, k + 1):
                    for j in range(1, k + 1):
                        rhs += residual[i, j] * InterpolationService.basis_function(bm, k, i, j).evaluate(points)
                np.testing.assert_allclose(lhs, rhs, atol=1e-10)
