import logging
import math
from itertools import combinations

import numpy as np

from core.conf import quadlab_setting
from core.exceptions import (
    ConstructionFailed, ConvexityError, DegenerateQuad, PreconditionFailed, UsageError
)

from .models import (
    AffineMap2, CanonicalQuad, ConditionFlag, ConditionReport, Point2,
    RDPResult, Target, _cross
)

logger = logging.getLogger(__name__)

ANGLE_TIE = 1e-12

# (diagonal index, diagonal endpoints, off-diagonal vertices)
DIAGONALS = (
    (1, (0, 2), (1, 3)),
    (2, (1, 3), (0, 2)),
)


def regularity_bound(psi_m):
    """h/rho bound for quads under mac(psi_m) that fail MAC(pi - psi_m/2)"""
    return (1.0 + math.tan(psi_m / 2.0) / 2.0) / math.tan(psi_m / 4.0)


class AngleService:
    """Service for interior angles and angle distortion under affine maps"""

    @staticmethod
    def angle_between(u, v):
        """Unsigned angle between two vectors, in [0, pi]"""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        return float(np.arctan2(np.abs(_cross(u, v)), np.dot(u, v)))

    @staticmethod
    def interior_angles(quad):
        """Interior angles at V1..V4 in counterclockwise order"""
        coords = quad.coords
        to_next = np.roll(coords, -1, axis=0) - coords
        to_prev = np.roll(coords, 1, axis=0) - coords
        cross = _cross(to_next, to_prev)
        tolerance = quadlab_setting('CONVEXITY_RTOL') * quad.diameter ** 2
        if np.any(cross <= tolerance):
            raise DegenerateQuad('Angle at a vertex is degenerate', cross_products=cross.tolist())
        dot = np.sum(to_next * to_prev, axis=1)
        return np.arctan2(cross, dot)

    @staticmethod
    def triangle_angles(points):
        """Angles of a triangle at each of its three vertices"""
        points = np.asarray(points, dtype=float)
        return np.array([
            AngleService.angle_between(points[(i + 1) % 3] - points[i], points[(i + 2) % 3] - points[i])
            for i in range(3)
        ])

    @staticmethod
    def mapped_angle(affine, u, v):
        """Angle between the images of u and v under the linear part of the map"""
        return AngleService.angle_between(affine.B @ np.asarray(u, float), affine.B @ np.asarray(v, float))

    @staticmethod
    def angle_distortion_bounds(affine, angle):
        """Interval containing the image of any angle under the map"""
        if not 0.0 < angle < math.pi:
            raise UsageError('Angle must lie in (0, pi)', angle=angle)
        shrink = 2.0 * angle / (affine.kappa * math.pi)
        lo = shrink
        hi = math.pi * (1.0 - 2.0 / (affine.kappa * math.pi)) + shrink
        return lo, hi


class ConditionService:
    """Service for the geometric conditions on a convex quadrilateral"""

    @staticmethod
    def _decomposition(coords, index, ends, others):
        psi = max(
            float(np.max(AngleService.triangle_angles(coords[[ends[0], other, ends[1]]])))
            for other in others
        )
        this = np.linalg.norm(coords[ends[1]] - coords[ends[0]])
        other = np.linalg.norm(coords[others[1]] - coords[others[0]])
        return RDPResult(diagonal_index=index, N=float(other / this), psi_M=psi)

    @staticmethod
    def check_rdp(quad, diagonal=None):
        """Split along the diagonal giving the smallest maximum triangle angle"""
        coords = quad.coords
        candidates = [
            ConditionService._decomposition(coords, index, ends, others)
            for index, ends, others in DIAGONALS
        ]
        if diagonal is not None:
            if diagonal not in (1, 2):
                raise UsageError('Diagonal index must be 1 or 2', diagonal=diagonal)
            return candidates[diagonal - 1]

        best = candidates[0]
        challenger = candidates[1]
        if challenger.psi_M < best.psi_M - ANGLE_TIE:
            best = challenger
        elif abs(challenger.psi_M - best.psi_M) <= ANGLE_TIE and challenger.N < best.N - ANGLE_TIE:
            best = challenger
        return best

    @staticmethod
    def longest_diagonal(quad):
        d1, d2 = quad.diagonals
        return 1 if d1 >= d2 else 2

    @staticmethod
    def inscribed_circle(quad):
        """Chebyshev centre and radius of the four side half-planes"""
        coords = quad.coords
        edges = np.roll(coords, -1, axis=0) - coords
        lengths = np.hypot(edges[:, 0], edges[:, 1])
        normals = np.column_stack([-edges[:, 1], edges[:, 0]]) / lengths[:, None]
        offsets = np.sum(normals * coords, axis=1)
        slack = 1e-12 * quad.diameter

        best_center, best_radius = None, -math.inf
        for active in combinations(range(4), 3):
            system = np.column_stack([normals[list(active)], -np.ones(3)])
            if abs(np.linalg.det(system)) < 1e-14:
                continue
            cx, cy, radius = np.linalg.solve(system, offsets[list(active)])
            center = np.array([cx, cy])
            distances = normals @ center - offsets
            if radius > 0 and np.all(distances >= radius - slack) and radius > best_radius:
                best_center, best_radius = center, float(radius)

        if best_center is None:
            raise DegenerateQuad('No inscribed circle found', vertices=coords.tolist())
        return Point2(*best_center), best_radius

    @staticmethod
    def regularity_ratio(quad):
        """h / rho with rho the diameter of the largest inscribed circle"""
        _, radius = ConditionService.inscribed_circle(quad)
        return quad.diameter / (2.0 * radius)

    @staticmethod
    def condition_flags(cq, C):
        """Attained constants of the conditions on K(a, b, a_tilde, b_tilde)"""
        slack = 1.0 + quadlab_setting('CONDITION_RTOL')
        ratio = max(cq.a_tilde / cq.a, cq.b_tilde / cq.b)
        sin_alpha = math.sin(cq.alpha)
        d2 = 1.0 / sin_alpha if sin_alpha > 0.0 else math.inf
        delta2 = cq.l_len / cq.shortest_side
        d3 = max(cq.a / cq.b, cq.b / cq.a)
        return {
            'delta1': ConditionFlag(ratio <= C * slack, ratio),
            'd1': ConditionFlag(ratio <= slack, ratio),
            'd2': ConditionFlag(d2 <= C * slack, d2),
            'delta2': ConditionFlag(delta2 <= C * slack, delta2),
            'd3': ConditionFlag(d3 <= C * slack, d3),
        }

    @staticmethod
    def equivalence_check(cq):
        """Attained constants of [delta1, d2] and [delta2, d2] bound each other"""
        slack = 1.0 + quadlab_setting('CONDITION_RTOL')
        flags = ConditionService.condition_flags(cq, math.inf)
        delta1 = flags['delta1'].attained
        delta2 = flags['delta2'].attained
        d2 = flags['d2'].attained
        forward = delta2 <= 2.0 * max(1.0, delta1) * d2 * slack
        backward = delta1 <= (1.0 + delta2) * slack
        return bool(forward and backward)

    @staticmethod
    def classify(quad, psi_m, psi_M, flag_constant=None):
        """Angle conditions, RDP, regularity and canonical flags of a quad"""
        if not 0.0 < psi_m <= psi_M < math.pi:
            raise UsageError('Thresholds must satisfy 0 < psi_m <= psi_M < pi', psi_m=psi_m, psi_M=psi_M)
        if flag_constant is None:
            flag_constant = quadlab_setting('FLAG_CONSTANT')

        angles = AngleService.interior_angles(quad)
        cq, _ = CanonicalizationService.canonicalize(quad, Target.RDP)
        report = ConditionReport(
            angles=tuple(float(a) for a in angles),
            psi_m=psi_m,
            psi_M=psi_M,
            mac=bool(angles.min() >= psi_m - ANGLE_TIE),
            MAC=bool(angles.max() <= psi_M + ANGLE_TIE),
            rdp=ConditionService.check_rdp(quad),
            h_over_rho=ConditionService.regularity_ratio(quad),
            flags=ConditionService.condition_flags(cq, flag_constant),
            flag_constant=flag_constant,
        )
        logger.debug('Classified quad %s: psi_min=%.6g psi_max=%.6g', quad.to_line(), report.psi_min, report.psi_max)
        return report


class CanonicalizationService:
    """Service for affine reductions to the K(a, b, a_tilde, b_tilde) family"""

    @staticmethod
    def candidate(quad, start, direction):
        """Canonical element seen from vertex `start`, walking in `direction`"""
        coords = quad.coords
        order = tuple((start + step * direction) % 4 for step in (0, 1, 2, -1))
        P, Q, W, R = coords[list(order)]

        a = float(np.linalg.norm(Q - P))
        u = (Q - P) / a
        u_perp = np.array([-u[1], u[0]])
        along = float(np.dot(R - P, u))
        across = float(_cross(u, R - P))
        sigma = 1.0 if across > 0 else -1.0
        b = abs(across)
        cot_beta = along / b
        beta = math.atan2(b, along)

        B = np.column_stack([u, cot_beta * u + sigma * u_perp])
        a_tilde, b_tilde = np.linalg.solve(B, W - P)
        cq = CanonicalQuad(a, b, a_tilde, b_tilde)
        return cq, AffineMap2(B, Point2(*P), vertex_order=order, beta=beta)

    @staticmethod
    def swap_axes(cq):
        return cq.swapped()

    @staticmethod
    def normalize_tall(cq):
        """Swap axes when b_tilde/b < 1/2 so the returned element has b_tilde/b >= 1/2"""
        if not math.isfinite(ConditionService.condition_flags(cq, math.inf)['d2'].attained):
            raise PreconditionFailed('Angle alpha is degenerate', alpha=cq.alpha)
        if cq.b_tilde / cq.b < 0.5:
            return cq.swapped()
        return cq

    @staticmethod
    def _dac(quad):
        slack = 1.0 + quadlab_setting('CONDITION_RTOL')
        best = None
        for start in range(4):
            try:
                cq, affine = CanonicalizationService.candidate(quad, start, 1)
            except ConvexityError:
                continue
            if max(cq.a_tilde / cq.a, cq.b_tilde / cq.b) > slack:
                continue
            if best is None or math.sin(affine.beta) > math.sin(best[1].beta) + ANGLE_TIE:
                best = (cq, affine)
        if best is None:
            raise ConstructionFailed(
                'No vertex spans a parallelogram containing the quad', vertices=quad.coords.tolist()
            )

        cq, affine = best
        tall = CanonicalizationService.normalize_tall(cq)
        if tall is not cq:
            return tall, affine.swapped()
        return cq, affine

    @staticmethod
    def _diagonal(quad, diagonal):
        rdp = ConditionService.check_rdp(quad, diagonal=diagonal)
        _, ends, others = DIAGONALS[rdp.diagonal_index - 1]
        sides = quad.side_lengths
        shortest = int(np.argmin(sides))
        side_ends = (shortest, (shortest + 1) % 4)

        apex = side_ends[0] if side_ends[0] in others else side_ends[1]
        near = side_ends[1] if apex == side_ends[0] else side_ends[0]
        start = others[1] if apex == others[0] else others[0]
        far = ends[1] if near == ends[0] else ends[0]
        direction = 1 if (start + 1) % 4 == far else -1
        try:
            return CanonicalizationService.candidate(quad, start, direction)
        except ConvexityError as exc:
            raise ConstructionFailed('Diagonal construction produced a non-convex element', **exc.details)

    @staticmethod
    def canonicalize(quad, target):
        """Canonical element K(a, b, a_tilde, b_tilde) and the map L taking it onto quad"""
        target = Target(target)
        if target == Target.DAC:
            return CanonicalizationService._dac(quad)
        if target == Target.RDP:
            return CanonicalizationService._diagonal(quad, None)

        angles = AngleService.interior_angles(quad)
        if target == Target.MAC_ONLY and angles.max() <= math.pi - angles.min() / 2.0 + ANGLE_TIE:
            return CanonicalizationService._dac(quad)
        widest = int(np.argmax(angles))
        return CanonicalizationService._diagonal(quad, 1 if widest in (0, 2) else 2)

    @staticmethod
    def round_trip_error(quad, cq, affine):
        """Largest distance between mapped canonical vertices and their input vertices"""
        mapped = affine.apply(cq.coords)
        expected = quad.coords[list(affine.vertex_order)]
        return float(np.max(np.linalg.norm(mapped - expected, axis=1)))

    @staticmethod
    def shear_kappa_bound(affine):
        return 2.0 / math.sin(affine.beta) ** 2
