import math

import numpy as np
from django.test import SimpleTestCase

from core.exceptions import IndexOutOfRange, InvalidIndex, NotInElement, PreconditionFailed
from experiments.sampling import random_canonical_quads, random_convex_quads
from quad_geometry.models import CanonicalQuad, ConvexQuad, Point2
from quad_geometry.services import AngleService, ConditionService

from .models import AuxKind, BilinearMap
from .services import ReferenceMapService

UNIT = BilinearMap(CanonicalQuad(1, 1, 1, 1))
CORNERS = ((0, 0), (1, 0), (1, 1), (0, 1))


def canonical_inverse(cq, x, y):
    """Closed-form inverse of the canonical bilinear map from its quadratic in y_hat"""
    g = cq.a_tilde - cq.a
    linear = cq.a * cq.b + (cq.b_tilde - cq.b) * x - g * y
    y_hat = 2 * cq.a * y / (linear + math.sqrt(linear ** 2 + 4 * cq.b * g * cq.a * y))
    x_hat = x / (cq.a + g * y_hat)
    return x_hat, y_hat


def d1_d2_sweep(max_d2=2.0):
    steps = np.arange(1, 21) / 20
    for b in (0.1, 0.5, 1.0, 2.0, 10.0):
        for ra in steps:
            for rb in steps:
                if ra + rb - 1 <= 1e-9:
                    continue
                cq = CanonicalQuad(1.0, b, ra, rb * b)
                if ConditionService.condition_flags(cq, max_d2)['d2'].holds:
                    yield cq


class MapForwardTest(SimpleTestCase):
    def test_unit_square_is_identity(self):
        for x, y in ((0.3, 0.7), (0.0, 1.0), (0.5, 0.5)):
            np.testing.assert_allclose(ReferenceMapService.map_forward(UNIT, x, y).as_array(), [x, y], atol=1e-15)

    def test_corners_land_on_vertices(self):
        elements = random_canonical_quads(20, seed=1) + random_convex_quads(20, seed=1)
        for element in elements:
            bm = BilinearMap(element)
            for corner, vertex in zip(CORNERS, element.coords):
                np.testing.assert_allclose(
                    ReferenceMapService.map_forward(bm, *corner).as_array(), vertex, atol=1e-14 * bm.h
                )

    def test_cex1_centre_is_vertex_average(self):
        for s in (0.4, 0.1, 0.01):
            bm = BilinearMap(CanonicalQuad(1, s, s, 2 * s))
            centre = ReferenceMapService.map_forward(bm, 0.5, 0.5)
            self.assertAlmostEqual(centre.x, (1 + s) / 4, places=15)
            self.assertAlmostEqual(centre.y, 3 * s / 4, places=15)

    def test_canonical_formula(self):
        cq = CanonicalQuad(2.0, 1.5, 1.2, 1.9)
        bm = BilinearMap(cq)
        x, y = 0.3, 0.8
        expected = (cq.a * x * (1 - y) + cq.a_tilde * x * y, cq.b * y * (1 - x) + cq.b_tilde * x * y)
        self.assertAlmostEqual(ReferenceMapService.map_forward(bm, x, y).x, expected[0], places=14)
        self.assertAlmostEqual(ReferenceMapService.map_forward(bm, x, y).y, expected[1], places=14)


class JacobianTest(SimpleTestCase):
    def test_unit_square(self):
        DF, J = ReferenceMapService.jacobian(UNIT, 0.2, 0.9)
        np.testing.assert_allclose(DF, np.eye(2), atol=1e-15)
        self.assertAlmostEqual(J, 1.0, places=15)

    def test_top_corner_matches_convexity_certificate(self):
        for cq in random_canonical_quads(200, seed=2):
            _, J = ReferenceMapService.jacobian(BilinearMap(cq), 1.0, 1.0)
            self.assertAlmostEqual(J / (cq.a * cq.b * cq.certificate), 1.0, delta=1e-13)

    def test_closed_form_and_finite_differences(self):
        bm = BilinearMap(CanonicalQuad(2, 1, 1, 1))
        rng = np.random.default_rng(3)
        step = 1e-6
        for x, y in rng.uniform(0.1, 0.9, (5, 2)):
            DF, J = ReferenceMapService.jacobian(bm, x, y)
            self.assertAlmostEqual(J, 2 * (1 - y / 2), places=14)
            fd = np.column_stack([
                (ReferenceMapService.map_forward(bm, x + step, y).as_array()
                 - ReferenceMapService.map_forward(bm, x - step, y).as_array()) / (2 * step),
                (ReferenceMapService.map_forward(bm, x, y + step).as_array()
                 - ReferenceMapService.map_forward(bm, x, y - step).as_array()) / (2 * step),
            ])
            np.testing.assert_allclose(DF, fd, rtol=1e-7, atol=1e-9)
            self.assertAlmostEqual(np.linalg.det(fd) / J, 1.0, delta=1e-7)

    def test_jacobian_is_positive_on_random_elements(self):
        rng = np.random.default_rng(4)
        for cq in random_canonical_quads(1000, seed=4):
            bm = BilinearMap(cq)
            _, J = ReferenceMapService.jacobian_many(bm, rng.uniform(0, 1, (100, 2)))
            self.assertTrue(np.all(J > 0))

    def test_corner_jacobians_of_physical_element(self):
        for quad in random_convex_quads(50, seed=5):
            bm = BilinearMap(quad)
            _, J = ReferenceMapService.jacobian_many(bm, np.array(CORNERS, dtype=float))
            np.testing.assert_allclose(bm.corner_jacobians(), J, rtol=1e-12)
            self.assertTrue(np.all(J > 0))


class MapInverseTest(SimpleTestCase):
    def test_unit_square(self):
        x_hat, y_hat = ReferenceMapService.map_inverse(UNIT, Point2(0.25, 0.6))
        self.assertAlmostEqual(x_hat, 0.25, places=15)
        self.assertAlmostEqual(y_hat, 0.6, places=15)

    def test_top_vertex(self):
        cq = CanonicalQuad(1, 2, 0.7, 2.5)
        x_hat, y_hat = ReferenceMapService.map_inverse(BilinearMap(cq), Point2(0.7, 2.5))
        self.assertAlmostEqual(x_hat, 1.0, delta=1e-12)
        self.assertAlmostEqual(y_hat, 1.0, delta=1e-12)

    def test_round_trip_on_random_elements(self):
        rng = np.random.default_rng(6)
        for element in random_canonical_quads(10, seed=6) + random_convex_quads(10, seed=6):
            bm = BilinearMap(element)
            ref = rng.uniform(0, 1, (1000, 2))
            physical = ReferenceMapService.forward_many(bm, ref)
            recovered = ReferenceMapService.inverse_many(bm, physical)
            np.testing.assert_allclose(recovered, ref, atol=1e-10)
            np.testing.assert_allclose(
                ReferenceMapService.forward_many(bm, recovered), physical, atol=1e-12 * bm.h
            )

    def test_agrees_with_quadratic_formula(self):
        rng = np.random.default_rng(7)
        for cq in random_canonical_quads(50, seed=7):
            point = ReferenceMapService.map_forward(BilinearMap(cq), *rng.uniform(0, 1, 2))
            expected = canonical_inverse(cq, point.x, point.y)
            np.testing.assert_allclose(
                ReferenceMapService.map_inverse(BilinearMap(cq), point), expected, atol=1e-10
            )

    def test_boundary_points_are_inside(self):
        cq = CanonicalQuad(1, 1, 0.6, 0.8)
        bm = BilinearMap(cq)
        for ref in ((0.0, 0.4), (1.0, 0.3), (0.5, 1.0), (0.0, 0.0)):
            point = ReferenceMapService.map_forward(bm, *ref)
            np.testing.assert_allclose(ReferenceMapService.map_inverse(bm, point), ref, atol=1e-12)

    def test_outside_point_is_rejected(self):
        with self.assertRaises(NotInElement):
            ReferenceMapService.map_inverse(UNIT, Point2(2.0, 2.0))
        with self.assertRaises(NotInElement):
            ReferenceMapService.map_inverse(BilinearMap(CanonicalQuad(1, 1, 0.6, 0.6)), Point2(0.1, -0.5))


class AffineCompositionTest(SimpleTestCase):
    def test_map_of_transformed_element_is_composition(self):
        rng = np.random.default_rng(8)
        for quad in random_convex_quads(50, seed=8):
            B = rng.normal(size=(2, 2))
            if np.linalg.det(B) < 0:
                B[0] *= -1
            P = rng.normal(size=2)
            image = quad.transformed(B, P)
            ref = rng.uniform(0, 1, (20, 2))
            lhs = ReferenceMapService.forward_many(BilinearMap(image), ref)
            rhs = ReferenceMapService.forward_many(BilinearMap(quad), ref) @ B.T + P
            np.testing.assert_allclose(lhs, rhs, atol=1e-12 * image.diameter)


class NodeGridTest(SimpleTestCase):
    def test_unit_square_centre(self):
        grid = ReferenceMapService.node_grid(UNIT, 2)
        self.assertEqual(grid.node(1, 1), Point2(0.5, 0.5))

    def test_corner_nodes_are_vertices(self):
        cq = CanonicalQuad(1.5, 0.5, 1.1, 0.7)
        grid = ReferenceMapService.node_grid(BilinearMap(cq), 3)
        self.assertEqual(grid.node(0, 0), Point2(0, 0))
        self.assertEqual(grid.node(0, 3), Point2(1.5, 0))
        np.testing.assert_allclose(grid.nodes[3, 3], [1.1, 0.7], atol=1e-15)
        np.testing.assert_allclose(grid.nodes[3, 0], [0, 0.5], atol=1e-15)

    def test_cex1_axis_nodes_are_roots(self):
        def u(x):
            return x * (x - 0.5) * (x - 1)

        for s in (0.4, 0.1, 0.01):
            grid = ReferenceMapService.node_grid(BilinearMap(CanonicalQuad(1, s, s, 2 * s)), 2)
            for l in range(3):
                self.assertAlmostEqual(u(grid.nodes[0, l, 0]), 0.0, places=15)
                self.assertAlmostEqual(u(grid.nodes[l, 0, 0]), 0.0, places=15)

    def test_counts_and_classification(self):
        grid = ReferenceMapService.node_grid(BilinearMap(CanonicalQuad(1, 1, 0.8, 0.9)), 3)
        self.assertEqual(grid.flat().shape, (16, 2))
        self.assertEqual(len(grid.interior_indices()), 4)
        self.assertEqual(len(grid.edge_indices()), 12)
        self.assertTrue(grid.is_interior(1, 2))
        self.assertFalse(grid.is_interior(0, 2))
        self.assertEqual(grid.as_list()[1], grid.nodes[0, 1].tolist())

    def test_nodes_lie_in_closed_element(self):
        for quad in random_convex_quads(50, seed=9):
            grid = ReferenceMapService.node_grid(BilinearMap(quad), 4)
            coords = quad.coords
            edges = np.roll(coords, -1, axis=0) - coords
            for node in grid.flat():
                rel = node - coords
                cross = edges[:, 0] * rel[:, 1] - edges[:, 1] * rel[:, 0]
                self.assertTrue(np.all(cross >= -1e-12 * quad.diameter ** 2))

    def test_invalid_degree(self):
        with self.assertRaises(InvalidIndex):
            ReferenceMapService.node_grid(UNIT, 0)


class AuxTriangleTest(SimpleTestCase):
    def test_top_edge_triangle(self):
        cq = CanonicalQuad(1.0, 1.2, 0.9, 1.4)
        bm = BilinearMap(cq)
        triangle = ReferenceMapService.aux_triangle(bm, 3, 3, 2)
        grid = ReferenceMapService.node_grid(bm, 3)
        self.assertEqual(triangle.kind, AuxKind.TOP_EDGE)
        self.assertEqual(triangle.vertices[0], grid.node(3, 2))
        self.assertEqual(triangle.vertices[1], Point2(0, 1.2))
        np.testing.assert_allclose(triangle.vertices[2].as_array(), [2 / 3, 0.4], atol=1e-15)
        self.assertAlmostEqual(triangle.ratio, 2 / 3)
        self.assertEqual(triangle.probe_edge, (grid.node(3, 0), grid.node(3, 2)))

    def test_corner_node_uses_top_construction(self):
        triangle = ReferenceMapService.aux_triangle(BilinearMap(CanonicalQuad(1, 1, 0.8, 0.9)), 2, 2, 2)
        self.assertEqual(triangle.kind, AuxKind.TOP_EDGE)
        self.assertEqual(triangle.ratio, 1.0)

    def test_interior_triangle_on_unit_square(self):
        triangle = ReferenceMapService.aux_triangle(UNIT, 2, 1, 1)
        self.assertEqual(triangle.kind, AuxKind.INTERIOR)
        self.assertEqual(set(triangle.vertices), {Point2(0.5, 0.5), Point2(0.5, 0), Point2(0, 0.5)})
        self.assertEqual(triangle.leg_lengths, (0.5, 0.5))
        self.assertAlmostEqual(triangle.alpha, math.pi / 4)
        self.assertAlmostEqual(triangle.area, 0.125)

    def test_edge_triangles_are_similar_to_upper_corner_triangle(self):
        for cq in random_canonical_quads(50, seed=10):
            bm = BilinearMap(cq)
            v = cq.coords
            upper = AngleService.triangle_angles(v[[2, 3, 1]])
            right = AngleService.triangle_angles(v[[2, 1, 3]])
            for k in (2, 3, 4):
                for j in range(1, k + 1):
                    top = ReferenceMapService.aux_triangle(bm, k, k, j)
                    np.testing.assert_allclose(AngleService.triangle_angles(top.coords), upper, atol=1e-10)
                    self.assertAlmostEqual(top.area / ((j / k) ** 2 * 0.5 * cq.a * cq.b * cq.certificate), 1.0)
                for i in range(1, k):
                    side = ReferenceMapService.aux_triangle(bm, k, i, k)
                    self.assertEqual(side.kind, AuxKind.RIGHT_EDGE)
                    np.testing.assert_allclose(AngleService.triangle_angles(side.coords), right, atol=1e-10)

    def test_axis_nodes_have_no_triangle(self):
        for i, j in ((0, 1), (2, 0), (0, 0)):
            with self.assertRaises(InvalidIndex):
                ReferenceMapService.aux_triangle(UNIT, 2, i, j)
        with self.assertRaises(IndexOutOfRange):
            ReferenceMapService.aux_triangle(UNIT, 3, 4, 1)

    def test_physical_element_is_rejected(self):
        bm = BilinearMap(ConvexQuad.from_coords([0, 0, 1, 0, 1, 1, 0, 1]))
        with self.assertRaises(PreconditionFailed):
            ReferenceMapService.aux_triangle(bm, 2, 1, 1)

    def test_interior_legs_and_angle_under_d1_d2(self):
        min_sin = math.inf
        for cq in d1_d2_sweep():
            bm = BilinearMap(cq)
            d2 = ConditionService.condition_flags(cq, 2.0)['d2'].attained
            for k in (2, 3):
                for i in range(1, k):
                    for j in range(1, k):
                        triangle = ReferenceMapService.aux_triangle(bm, k, i, j)
                        horizontal, vertical = triangle.leg_lengths
                        self.assertGreaterEqual(horizontal, cq.a / k ** 2 * (1 - 1e-12))
                        self.assertLessEqual(horizontal, cq.a * math.hypot(1, d2) * (1 + 1e-12))
                        self.assertGreaterEqual(vertical, cq.b / k ** 2 * (1 - 1e-12))
                        self.assertLessEqual(vertical, cq.b * math.hypot(1, d2) * (1 + 1e-12))
                        min_sin = min(min_sin, math.sin(triangle.alpha))
        self.assertGreater(min_sin, 0.35)
