import math

import numpy as np
from django.test import SimpleTestCase
from scipy.optimize import linprog

from core.exceptions import ConvexityError, DegenerateQuad, UsageError
from experiments.sampling import (
    random_angle_quads, random_canonical_quads, random_convex_quads
)

from .models import AffineMap2, CanonicalQuad, ConvexQuad, Point2, Target
from .services import (
    AngleService, CanonicalizationService, ConditionService, regularity_bound
)

UNIT_SQUARE = ConvexQuad.from_coords([0, 0, 1, 0, 1, 1, 0, 1])
CEX1_GRID = (0.4, 0.2, 0.1, 0.05, 0.025, 0.01)


def cex1(s):
    return CanonicalQuad(1.0, s, s, 2.0 * s)


def tridegen(s):
    return ConvexQuad.from_coords([0, 0, 1, 0, s, 1 - s, 0, 1 - s])


def chebyshev_radius_lp(quad):
    coords = quad.coords
    edges = np.roll(coords, -1, axis=0) - coords
    normals = np.column_stack([-edges[:, 1], edges[:, 0]])
    normals /= np.linalg.norm(normals, axis=1)[:, None]
    offsets = np.sum(normals * coords, axis=1)
    A_ub = np.column_stack([-normals, np.ones(4)])
    result = linprog([0, 0, -1], A_ub=A_ub, b_ub=-offsets, bounds=[(None, None)] * 3)
    return result.x[2]


class ConvexQuadTest(SimpleTestCase):
    def test_rejects_non_finite_vertex(self):
        with self.assertRaises(DegenerateQuad):
            Point2(float('nan'), 0.0)

    def test_rejects_reflex_and_clockwise_input(self):
        with self.assertRaises(ConvexityError):
            ConvexQuad.from_coords([0, 0, 1, 0, 0.2, 0.2, 0, 1])
        with self.assertRaises(ConvexityError):
            ConvexQuad.from_coords([0, 0, 0, 1, 1, 1, 1, 0])

    def test_diameter_can_be_a_side(self):
        quad = ConvexQuad.from_coords([0, 0, 10, 0, 6, 1, 4, 1])
        self.assertAlmostEqual(quad.diameter, 10.0)
        self.assertLess(max(quad.diagonals), quad.diameter)

    def test_cex1_area_matches_shoelace(self):
        for s in CEX1_GRID:
            with self.subTest(s=s):
                self.assertAlmostEqual(cex1(s).area, s * (2.0 + s) / 2.0, places=14)

    def test_canonical_rejects_non_convex_parameters(self):
        with self.assertRaises(ConvexityError):
            CanonicalQuad(1.0, 1.0, 0.5, 0.5)


class AngleServiceTest(SimpleTestCase):
    def test_unit_square_angles(self):
        np.testing.assert_allclose(AngleService.interior_angles(UNIT_SQUARE), [math.pi / 2] * 4, atol=1e-15)

    def test_cex2_family_keeps_quarter_pi_minimum(self):
        for s in (0.5 + 2.0 ** -k for k in range(3, 15)):
            with self.subTest(s=s):
                angles = AngleService.interior_angles(CanonicalQuad(1, 1, s, s).to_convex_quad())
                self.assertGreaterEqual(angles.min(), math.pi / 4 - 1e-12)

    def test_cex1_small_s_has_collapsing_angle(self):
        angles = AngleService.interior_angles(cex1(0.01).to_convex_quad())
        self.assertLess(angles.min(), 0.05)

    def test_angles_sum_to_two_pi(self):
        for quad in random_convex_quads(300, seed=3):
            angles = AngleService.interior_angles(quad)
            self.assertAlmostEqual(angles.sum(), 2 * math.pi, delta=1e-12)
            self.assertTrue(np.all((angles > 0) & (angles < math.pi)))

    def test_distortion_bounds_identity(self):
        identity = AffineMap2.identity()
        for angle in np.linspace(0.05, math.pi - 0.05, 20):
            lo, hi = AngleService.angle_distortion_bounds(identity, angle)
            self.assertLessEqual(lo, angle)
            self.assertGreaterEqual(hi, angle)

    def test_distortion_bounds_shear(self):
        shear = AffineMap2([[1.0, 1.0], [0.0, 1.0]])
        self.assertAlmostEqual(shear.kappa, (3 + math.sqrt(5)) / 2, places=12)
        mapped = AngleService.mapped_angle(shear, [1, 0], [0, 1])
        self.assertAlmostEqual(mapped, math.pi / 4, places=14)
        lo, hi = AngleService.angle_distortion_bounds(shear, math.pi / 2)
        self.assertTrue(lo <= mapped <= hi)

    def test_distortion_bounds_contain_random_images(self):
        rng = np.random.default_rng(11)
        for _ in range(10_000):
            affine = AffineMap2(rng.normal(size=(2, 2)))
            u, v = rng.normal(size=(2, 2))
            angle = AngleService.angle_between(u, v)
            if not 1e-9 < angle < math.pi - 1e-9:
                continue
            lo, hi = AngleService.angle_distortion_bounds(affine, angle)
            mapped = AngleService.mapped_angle(affine, u, v)
            self.assertTrue(lo - 1e-12 <= mapped <= hi + 1e-12)

    def test_distortion_rejects_flat_angle(self):
        with self.assertRaises(UsageError):
            AngleService.angle_distortion_bounds(AffineMap2.identity(), math.pi)


class ClassifyTest(SimpleTestCase):
    def test_unit_square_satisfies_everything(self):
        report = ConditionService.classify(UNIT_SQUARE, math.pi / 3, 2 * math.pi / 3)
        self.assertTrue(report.mac and report.MAC and report.DAC)
        self.assertAlmostEqual(report.h_over_rho, math.sqrt(2))
        payload = report.as_dict()
        self.assertEqual(
            set(payload),
            {'psi_min', 'psi_max', 'mac', 'MAC', 'DAC', 'rdp', 'h_over_rho', 'flags'},
        )
        self.assertEqual(set(payload['flags']), {'d1', 'd2', 'd3', 'delta1', 'delta2'})

    def test_cex1_is_under_mac_three_quarter_pi(self):
        for s in CEX1_GRID:
            with self.subTest(s=s):
                report = ConditionService.classify(cex1(s).to_convex_quad(), 0.1, 3 * math.pi / 4)
                self.assertTrue(report.MAC)
        self.assertFalse(ConditionService.classify(cex1(0.01).to_convex_quad(), 0.1, 3 * math.pi / 4).mac)

    def test_triangle_degenerating_family_keeps_dac(self):
        for s in (0.3, 0.1, 1e-2, 1e-4, 1e-6):
            with self.subTest(s=s):
                report = ConditionService.classify(tridegen(s), math.pi / 4 - 1e-9, 3 * math.pi / 4 + 1e-9)
                self.assertTrue(report.DAC)

    def test_thresholds_are_validated(self):
        with self.assertRaises(UsageError):
            ConditionService.classify(UNIT_SQUARE, 2.0, 1.0)


class RDPTest(SimpleTestCase):
    def test_unit_square(self):
        rdp = ConditionService.check_rdp(UNIT_SQUARE)
        self.assertEqual(rdp.diagonal_index, 1)
        self.assertAlmostEqual(rdp.N, 1.0)
        self.assertAlmostEqual(rdp.psi_M, math.pi / 2)

    def test_cex1_has_uniform_decomposition(self):
        for s in CEX1_GRID:
            with self.subTest(s=s):
                rdp = ConditionService.check_rdp(cex1(s).to_convex_quad())
                self.assertLessEqual(rdp.N, math.sqrt(5) + 1e-12)
                self.assertLessEqual(rdp.psi_M, 3 * math.pi / 4 + 1e-12)

    def test_mac_quads_split_along_longest_diagonal(self):
        psi_M = 0.9 * math.pi
        for quad in random_angle_quads(500, seed=5, psi_M=psi_M):
            rdp = ConditionService.check_rdp(quad, diagonal=ConditionService.longest_diagonal(quad))
            self.assertLessEqual(rdp.N, 1 + 1e-12)
            self.assertLessEqual(rdp.psi_M, psi_M + 1e-12)

    def test_mac_quads_are_dac_or_regular(self):
        psi_m = 0.5
        bound = regularity_bound(psi_m)
        for quad in random_angle_quads(500, seed=6, psi_m=psi_m):
            angles = AngleService.interior_angles(quad)
            dac = angles.max() <= math.pi - psi_m / 2 + 1e-12
            self.assertTrue(dac or ConditionService.regularity_ratio(quad) <= bound)


class RegularityTest(SimpleTestCase):
    def test_unit_square(self):
        center, radius = ConditionService.inscribed_circle(UNIT_SQUARE)
        self.assertAlmostEqual(radius, 0.5)
        self.assertAlmostEqual(center.x, 0.5)
        self.assertAlmostEqual(ConditionService.regularity_ratio(UNIT_SQUARE), math.sqrt(2))

    def test_thin_rectangle(self):
        eps = 0.01
        quad = CanonicalQuad(1.0, eps, 1.0, eps).to_convex_quad()
        self.assertAlmostEqual(ConditionService.regularity_ratio(quad), math.hypot(1, eps) / eps, places=9)

    def test_matches_linear_programming_oracle(self):
        quads = [CanonicalQuad(1, 1, 0.5, 0.75).to_convex_quad()] + random_convex_quads(50, seed=8)
        for quad in quads:
            _, radius = ConditionService.inscribed_circle(quad)
            self.assertAlmostEqual(radius, chebyshev_radius_lp(quad), delta=1e-7 * quad.diameter)
            self.assertGreaterEqual(ConditionService.regularity_ratio(quad), 1.0)


class ConditionFlagsTest(SimpleTestCase):
    def test_unit_square(self):
        flags = ConditionService.condition_flags(CanonicalQuad(1, 1, 1, 1), 2.0)
        self.assertTrue(all(flag.holds for flag in flags.values()))
        self.assertAlmostEqual(flags['d2'].attained, math.sqrt(2))
        self.assertFalse(ConditionService.condition_flags(CanonicalQuad(1, 1, 1, 1), 1.0)['d2'].holds)

    def test_d1_on_shrunk_square(self):
        self.assertTrue(ConditionService.condition_flags(CanonicalQuad(1, 1, 0.6, 0.6), 1.0)['d1'].holds)

    def test_cex1_fails_d1_but_keeps_delta1(self):
        flags = ConditionService.condition_flags(cex1(0.1), 2.0)
        self.assertFalse(flags['d1'].holds)
        self.assertTrue(flags['delta1'].holds)
        self.assertAlmostEqual(flags['delta1'].attained, 2.0)

    def test_tan_alpha_below_aspect_under_d1(self):
        for cq in random_canonical_quads(300, seed=2, max_ratio=1.0):
            self.assertLess(cq.alpha, math.pi / 2)
            self.assertLessEqual(math.tan(cq.alpha), cq.b / cq.a * (1 + 1e-12))


class EquivalenceTest(SimpleTestCase):
    def test_unit_square(self):
        self.assertTrue(ConditionService.equivalence_check(CanonicalQuad(1, 1, 1, 1)))

    def test_flags_co_vary_on_families(self):
        family = [CanonicalQuad(1, b, 0.75, 0.75 * b) for b in np.linspace(0.1, 1.0, 10)]
        family += [cex1(s) for s in (0.4, 0.2, 0.1, 0.05)]
        for cq in family:
            with self.subTest(cq=cq):
                self.assertTrue(ConditionService.equivalence_check(cq))

    def test_cex1_constants_are_uniform(self):
        attained = [ConditionService.condition_flags(cex1(s), 4.0) for s in (0.4, 0.2, 0.1, 0.05)]
        for flags in attained:
            self.assertTrue(flags['delta1'].holds and flags['delta2'].holds and flags['d2'].holds)

    def test_random_elements(self):
        for cq in random_canonical_quads(500, seed=4):
            self.assertTrue(ConditionService.equivalence_check(cq))


class CanonicalizeTest(SimpleTestCase):
    def test_unit_square_is_its_own_canonical_form(self):
        cq, affine = CanonicalizationService.canonicalize(UNIT_SQUARE, Target.DAC)
        self.assertEqual(cq.parameters, (1.0, 1.0, 1.0, 1.0))
        np.testing.assert_allclose(affine.B, np.eye(2), atol=1e-15)
        self.assertEqual(affine.P, Point2(0, 0))

    def test_dac_target_on_skewed_quad(self):
        quad = ConvexQuad.from_coords([0, 0, 1, 0, 1.2, 1, 0.3, 1])
        cq, affine = CanonicalizationService.canonicalize(quad, Target.DAC)
        flags = ConditionService.condition_flags(cq, 4.0)
        self.assertTrue(flags['d1'].holds and flags['d2'].holds)
        self.assertGreaterEqual(cq.b_tilde / cq.b, 0.5)
        self.assertLessEqual(CanonicalizationService.round_trip_error(quad, cq, affine), 1e-12 * quad.diameter)

    def test_round_trip_for_every_target(self):
        for quad in random_convex_quads(500, seed=9):
            for target in Target:
                cq, affine = CanonicalizationService.canonicalize(quad, target)
                error = CanonicalizationService.round_trip_error(quad, cq, affine)
                self.assertLessEqual(error, 1e-10 * quad.diameter, msg=f'{target} {quad.to_line()}')
                self.assertEqual(sorted(affine.vertex_order), [0, 1, 2, 3])
                if target == Target.DAC:
                    flags = ConditionService.condition_flags(cq, math.inf)
                    self.assertTrue(flags['d1'].holds)
                    self.assertTrue(math.isfinite(flags['d2'].attained))
                    self.assertGreaterEqual(cq.b_tilde / cq.b, 0.5)

    def test_shear_condition_number_bound(self):
        for quad in random_convex_quads(200, seed=10):
            _, affine = CanonicalizationService.canonicalize(quad, Target.RDP)
            self.assertLessEqual(affine.kappa, CanonicalizationService.shear_kappa_bound(affine) * (1 + 1e-9))

    def test_rdp_target_on_mac_quads_has_finite_constants(self):
        for quad in random_angle_quads(200, seed=12, psi_M=0.9 * math.pi):
            cq, _ = CanonicalizationService.canonicalize(quad, Target.RDP)
            flags = ConditionService.condition_flags(cq, math.inf)
            self.assertTrue(math.isfinite(flags['delta2'].attained))
            self.assertTrue(math.isfinite(flags['d2'].attained))


class NormalizeTallTest(SimpleTestCase):
    def test_tall_element_is_unchanged(self):
        cq = CanonicalQuad(1, 1, 0.9, 0.9)
        self.assertIs(CanonicalizationService.normalize_tall(cq), cq)

    def test_short_element_is_swapped(self):
        cq = CanonicalQuad(1.0, 2.0, 0.9, 0.6)
        tall = CanonicalizationService.normalize_tall(cq)
        self.assertEqual(tall.parameters, (2.0, 1.0, 0.6, 0.9))
        self.assertGreaterEqual(tall.b_tilde / tall.b, 0.5)
        before = ConditionService.condition_flags(cq, math.inf)
        after = ConditionService.condition_flags(tall, math.inf)
        self.assertAlmostEqual(before['delta1'].attained, after['delta1'].attained)
        self.assertAlmostEqual(cq.area, tall.area)
        self.assertAlmostEqual(cq.diameter, tall.diameter)

    def test_swap_is_an_involution_preserving_sides(self):
        for cq in random_canonical_quads(100, seed=13):
            twice = CanonicalizationService.swap_axes(CanonicalizationService.swap_axes(cq))
            self.assertEqual(twice, cq)
            np.testing.assert_allclose(
                np.sort(cq.side_lengths), np.sort(cq.swapped().side_lengths), rtol=1e-14
            )
