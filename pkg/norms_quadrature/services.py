import logging
import math

import numpy as np
from numpy.polynomial.legendre import leggauss

from core.conf import quadlab_setting
from core.exceptions import FlagsNotSatisfied, IndexOutOfRange, UsageError
from interpolants.fields import DifferenceField
from interpolants.models import RightTriangle
from interpolants.services import InterpolationService
from quad_geometry.services import ConditionService
from reference_map.models import AuxTriangle, BilinearMap
from reference_map.services import ReferenceMapService

from .models import EstphiCertificate, NormResult, QuadratureRule, RuleKind, TraceCheck

logger = logging.getLogger(__name__)

MAX_GAUSS_POINTS = 64
MAX_GRADING_LEVELS = 48
IP_ORDER = 12
IP_CLOSED_FORM_MIN = 1e-3
NEAR_SINGULAR = 1e-12
TRACE_SLACK = 1e-9


def _check_p(p):
    if not (math.isfinite(p) and 1.0 <= p <= 64.0):
        raise UsageError('p must lie in [1, 64]', p=p)
    return float(p)


def _conjugate_inverse(p):
    """1/q for the conjugate exponent q of p"""
    return 1.0 - 1.0 / p


def _unit_gauss(n):
    if int(n) != n or not 1 <= n <= MAX_GAUSS_POINTS:
        raise UsageError(f'Gauss order must be an integer in 1..{MAX_GAUSS_POINTS}', order=n)
    t, w = leggauss(int(n))
    return (t + 1.0) / 2.0, w / 2.0


def _cells(breaks, t, w):
    breaks = np.asarray(breaks, dtype=float)
    widths = np.diff(breaks)
    return (breaks[:-1, None] + widths[:, None] * t).ravel(), (widths[:, None] * w).ravel()


def graded_breaks(levels, toward_one=True):
    """Dyadic breakpoints 0, 1/2, 3/4, ..., 1 - 2^-levels, 1 (mirrored when grading toward 0)"""
    breaks = np.append(1.0 - 2.0 ** -np.arange(levels + 1), 1.0)
    return breaks if toward_one else 1.0 - breaks[::-1]


def grading_levels(corner_values):
    """Dyadic levels needed to resolve an affine weight with the given corner values"""
    values = np.abs(np.asarray(corner_values, dtype=float))
    if values.min() <= 0.0:
        return MAX_GRADING_LEVELS
    ratio = values.max() / values.min()
    if ratio <= 1.5:
        return 0
    levels = math.ceil(math.log2(ratio)) + quadlab_setting('GRADING_EXTRA_LEVELS')
    return min(levels, MAX_GRADING_LEVELS)


def _is_even_integer(p):
    return float(p).is_integer() and int(p) % 2 == 0


def _default_order(field):
    if isinstance(field, DifferenceField):
        k = max(_default_order(field.left), _default_order(field.right)) - quadlab_setting('QUADRATURE_EXTRA_ORDER')
    else:
        k = getattr(field, 'k', 2)
    return int(k) + quadlab_setting('QUADRATURE_EXTRA_ORDER')


def _triangle_coords(triangle):
    if isinstance(triangle, (AuxTriangle, RightTriangle)):
        return triangle.coords
    coords = np.asarray(triangle, dtype=float)
    if coords.shape != (3, 2):
        raise UsageError('A triangle needs three vertices', shape=list(coords.shape))
    return coords


class QuadratureService:
    """Service for Gauss-Legendre rules on the reference segment, square and triangle"""

    @staticmethod
    def gauss_segment_rule(n):
        """n-point Gauss rule on [0, 1]"""
        t, w = _unit_gauss(n)
        return QuadratureRule(RuleKind.SEGMENT, int(n), t[:, None], w)

    @staticmethod
    def composite_tensor_rule(breaks_x, breaks_y, n):
        """n x n Gauss points on every cell of the grid breaks_x x breaks_y"""
        t, w = _unit_gauss(n)
        xs, wx = _cells(breaks_x, t, w)
        ys, wy = _cells(breaks_y, t, w)
        X, Y = np.meshgrid(xs, ys, indexing='ij')
        points = np.column_stack([X.ravel(), Y.ravel()])
        return QuadratureRule(RuleKind.SQUARE_TENSOR, int(n), points, np.outer(wx, wy).ravel())

    @staticmethod
    def gauss_tensor_rule(n):
        """n^2-point tensor Gauss rule on the unit square, exact on Q_{2n-1}"""
        return QuadratureService.composite_tensor_rule([0.0, 1.0], [0.0, 1.0], n)

    @staticmethod
    def gauss_triangle_rule(n):
        """Collapsed tensor rule on the triangle (0,0), (1,0), (0,1)"""
        t, w = _unit_gauss(n)
        U, V = np.meshgrid(t, t, indexing='ij')
        W = np.outer(w, w) * (1.0 - U)
        points = np.column_stack([U.ravel(), (V * (1.0 - U)).ravel()])
        return QuadratureRule(RuleKind.TRIANGLE, int(n), points, W.ravel())

    @staticmethod
    def graded_square_rule(corner_values, n, base_cells=1):
        """Tensor rule graded toward the corner where an affine weight is smallest.

        corner_values are the weight at (0,0), (1,0), (1,1), (0,1).
        """
        levels = grading_levels(corner_values)
        corner = int(np.argmin(np.abs(corner_values)))
        uniform = np.linspace(0.0, 1.0, base_cells + 1)
        breaks_x = np.unique(np.concatenate([uniform, graded_breaks(levels, corner in (1, 2))]))
        breaks_y = np.unique(np.concatenate([uniform, graded_breaks(levels, corner in (2, 3))]))
        if levels:
            logger.debug('Grading %d levels toward corner %d', levels, corner)
        return QuadratureService.composite_tensor_rule(breaks_x, breaks_y, n)


class NormService:
    """Service for L^p norms, W^{m,p} seminorms and inequality certificates on elements"""

    @staticmethod
    def _power_integral(field, bm, m, p, rule):
        ref = rule.points
        _, J = ReferenceMapService.jacobian_many(bm, ref)
        integrand = np.zeros(len(ref))
        for a1 in range(m + 1):
            integrand += np.abs(field.pulled_back(bm, ref, (a1, m - a1))) ** p
        return rule.integrate(integrand * np.abs(J))

    @staticmethod
    def wmp_seminorm(field, quad, m, p, order=None, reference_scale=0.0):
        """|v|_{m,p,K}, summing |D^alpha v|^p over the m+1 distinct multi-indices of order m"""
        p = _check_p(p)
        field.check_order((m, 0))
        bm = ReferenceMapService.as_map(quad)
        n = order or _default_order(field)
        corner_values = bm.corner_jacobians()
        base_cells = 1 if _is_even_integer(p) else 4

        values = []
        for order_used in (n, min(n + quadlab_setting('REFINEMENT_STEP'), MAX_GAUSS_POINTS)):
            rule = QuadratureService.graded_square_rule(corner_values, order_used, base_cells)
            values.append(NormService._power_integral(field, bm, m, p, rule) ** (1.0 / p))
        coarse, fine = values
        error = abs(fine - coarse)
        scale = max(fine, reference_scale)
        converged = error == 0.0 or error <= quadlab_setting('QUADRATURE_RTOL') * scale
        if not converged:
            logger.warning(
                'Unconverged |%s|_{%d,%g}: orders %d and %d differ by %.3g', field.name, m, p, n, order_used, error
            )
        return NormResult(value=fine, p=p, order=order_used, error_estimate=error, converged=converged)

    @staticmethod
    def lp_norm(field, quad, p, order=None, reference_scale=0.0):
        """||v||_{0,p,K}"""
        return NormService.wmp_seminorm(field, quad, 0, p, order, reference_scale)

    @staticmethod
    def w1p_seminorm(field, quad, p, order=None, reference_scale=0.0):
        """|v|_{1,p,K}"""
        return NormService.wmp_seminorm(field, quad, 1, p, order, reference_scale)

    @staticmethod
    def component_norm(field, quad, alpha, p, order=None):
        """||D^alpha v||_{0,p,K} for a single multi-index"""
        p = _check_p(p)
        bm = ReferenceMapService.as_map(quad)
        n = order or _default_order(field)
        base_cells = 1 if _is_even_integer(p) else 4
        values = []
        for order_used in (n, min(n + quadlab_setting('REFINEMENT_STEP'), MAX_GAUSS_POINTS)):
            rule = QuadratureService.graded_square_rule(bm.corner_jacobians(), order_used, base_cells)
            _, J = ReferenceMapService.jacobian_many(bm, rule.points)
            integrand = np.abs(field.pulled_back(bm, rule.points, alpha)) ** p * np.abs(J)
            values.append(rule.integrate(integrand) ** (1.0 / p))
        error = abs(values[1] - values[0])
        converged = error == 0.0 or error <= quadlab_setting('QUADRATURE_RTOL') * values[1]
        return NormResult(value=values[1], p=p, order=order_used, error_estimate=error, converged=converged)

    @staticmethod
    def _ip_closed_form(beta, gamma, p):
        m = int(p)
        if m == 2:
            def G1(t):
                return math.log(t)

            def G2(t):
                return t * math.log(t) - t
        elif m == 3:
            def G1(t):
                return -1.0 / t

            def G2(t):
                return -math.log(t)
        else:
            def G1(t):
                return t ** (2 - m) / (2 - m)

            def G2(t):
                return t ** (3 - m) / ((2 - m) * (3 - m))

        if beta == 0.0 and gamma == 0.0:
            return 1.0
        if beta == 0.0 or gamma == 0.0:
            c = gamma if beta == 0.0 else beta
            return (G1(1.0 + c) - G1(1.0)) / c
        return (G2(1.0 + beta + gamma) - G2(1.0 + beta) - G2(1.0 + gamma) + G2(1.0)) / (beta * gamma)

    @staticmethod
    def _ip_quadrature(beta, gamma, p, n):
        corner_values = [1.0, 1.0 + beta, 1.0 + beta + gamma, 1.0 + gamma]
        rule = QuadratureService.graded_square_rule(corner_values, n)
        x, y = rule.points[:, 0], rule.points[:, 1]
        return rule.integrate((1.0 + beta * x + gamma * y) ** (1.0 - p))

    @staticmethod
    def ip_integral(cq, p, method=None):
        """I_p, the integral of (1 + x(b_tilde/b - 1) + y(a_tilde/a - 1))^(1-p) over the unit square"""
        p = _check_p(p)
        beta, gamma = cq.beta, cq.gamma
        near_singular = cq.certificate < NEAR_SINGULAR
        if p == 1.0:
            return NormResult(1.0, p, 0, 0.0, True, near_singular)

        closed_form_ok = float(p).is_integer() and all(
            c == 0.0 or abs(c) >= IP_CLOSED_FORM_MIN for c in (beta, gamma)
        )
        if method is None:
            method = 'closed' if closed_form_ok else 'quadrature'
        if method == 'closed':
            if not float(p).is_integer():
                raise UsageError('The closed form of I_p needs an integer p', p=p)
            value = NormService._ip_closed_form(beta, gamma, p)
            return NormResult(value, p, 0, 0.0, True, near_singular)

        coarse = NormService._ip_quadrature(beta, gamma, p, IP_ORDER)
        fine = NormService._ip_quadrature(beta, gamma, p, IP_ORDER + quadlab_setting('REFINEMENT_STEP'))
        error = abs(fine - coarse)
        converged = error <= quadlab_setting('QUADRATURE_RTOL') * abs(fine)
        if not converged:
            logger.warning('Unconverged I_p for p=%g, certificate %.3g', p, cq.certificate)
        return NormResult(fine, p, IP_ORDER + quadlab_setting('REFINEMENT_STEP'), error, converged, near_singular)

    @staticmethod
    def ip_scaling_constant(cq, p):
        """max{a/b^(p-1), b/a^(p-1)} I_p |l|^(p-1) / h, bounded by D2^(p-1) under D1"""
        ip = NormService.ip_integral(cq, p).value
        weight = max(cq.a / cq.b ** (p - 1), cq.b / cq.a ** (p - 1))
        return weight * ip * cq.l_len ** (p - 1) / cq.diameter

    @staticmethod
    def cex2_corner_integral(s, p):
        """Integral of J^(1-p) over the corner triangle (3/4,3/4), (3/4,1), (1,1) of K(1,1,s,s)"""
        if p in (2, 3):
            raise UsageError('The corner integral has a closed form for p other than 2 and 3', p=p)
        if not 0.5 < s < 1.0:
            raise UsageError('The corner integral needs 1/2 < s < 1', s=s)
        e = 3.0 - p
        numerator = (2 * s - 1) ** e / 2 + (3 * s - 1) ** e / 2 ** (4 - p) - (7 * s - 3) ** e / 4 ** e
        return numerator / ((s - 1) ** 2 * (2 - p) * e)

    @staticmethod
    def required_flags(k, p, node):
        """Condition sets, any of which makes the node estimate available"""
        i, j = node
        if p >= 3:
            return (('d1', 'd2'),)
        if 1 <= i <= k - 1 and 1 <= j <= k - 1:
            return (('delta1', 'd2', 'd3'), ('d1', 'd2'))
        return (('delta1', 'd2'),)

    @staticmethod
    def certify_estphi(cq, k, p, node, flag_constant=None, enforce=True, order=None):
        """Empirical constant of |phi_ij|_{1,p,K} <= C h^(1/p) / L^(1/q)"""
        p = _check_p(p)
        i, j = node
        if not (0 <= i <= k and 0 <= j <= k):
            raise IndexOutOfRange('Node index outside 0..k', k=k, i=i, j=j)
        if flag_constant is None:
            flag_constant = quadlab_setting('FLAG_CONSTANT')

        flags = ConditionService.condition_flags(cq, flag_constant)
        options = NormService.required_flags(k, p, node)
        flags_hold = any(all(flags[name].holds for name in option) for option in options)
        if enforce and not flags_hold:
            raise FlagsNotSatisfied(
                'Element does not satisfy the conditions for this node estimate',
                node=[i, j],
                required=[list(option) for option in options],
                attained={name: flag.attained for name, flag in flags.items()},
            )

        interior = 1 <= i <= k - 1 and 1 <= j <= k - 1
        phi = InterpolationService.basis_function(cq, k, i, j)
        lhs = NormService.w1p_seminorm(phi, cq, p, order)
        length = cq.a if interior else cq.l_len
        rhs_scale = cq.diameter ** (1.0 / p) / length ** _conjugate_inverse(p)
        return EstphiCertificate(
            node=(i, j),
            interior=interior,
            lhs=lhs.value,
            rhs_scale=rhs_scale,
            ratio=lhs.value / rhs_scale,
            flags_hold=flags_hold,
            converged=lhs.converged,
        )

    @staticmethod
    def triangle_norms(field, coords, p, n=12):
        """(||v||_{0,p,T}, |v|_{1,p,T}) on the triangle with the given vertices"""
        p = _check_p(p)
        coords = np.asarray(coords, dtype=float)
        rule = QuadratureService.gauss_triangle_rule(n)
        edges = np.column_stack([coords[1] - coords[0], coords[2] - coords[0]])
        jac = abs(float(np.linalg.det(edges)))
        points = coords[0] + rule.points @ edges.T
        lp = rule.integrate(np.abs(field.evaluate(points)) ** p) * jac
        gradient = np.abs(field.evaluate(points, (1, 0))) ** p + np.abs(field.evaluate(points, (0, 1))) ** p
        w1p = rule.integrate(gradient) * jac
        return lp ** (1.0 / p), w1p ** (1.0 / p)

    @staticmethod
    def edge_norm(field, start, end, p, n=24):
        """||v||_{0,p,e} on the segment from start to end"""
        start = np.asarray(tuple(start), dtype=float)
        end = np.asarray(tuple(end), dtype=float)
        rule = QuadratureService.gauss_segment_rule(n)
        points = start + rule.points * (end - start)
        length = float(np.linalg.norm(end - start))
        return (rule.integrate(np.abs(field.evaluate(points)) ** p) * length) ** (1.0 / p)

    @staticmethod
    def trace_inequality_check(triangle, edge, field, p):
        """||v||_{0,p,e} against 2^(1/q) (|e|/|T|)^(1/p) (||v||_{0,p,T} + h_T |v|_{1,p,T})"""
        p = _check_p(p)
        coords = _triangle_coords(triangle)
        if edge is None:
            edge = triangle.probe_edge if isinstance(triangle, AuxTriangle) else (coords[1], coords[2])
        start, end = (np.asarray(tuple(point), dtype=float) for point in edge)

        h_T = max(float(np.linalg.norm(coords[a] - coords[b])) for a, b in ((0, 1), (1, 2), (2, 0)))
        for point in (start, end):
            if np.min(np.linalg.norm(coords - point, axis=1)) > 1e-12 * h_T:
                raise UsageError('Edge endpoints must be vertices of the triangle', point=point.tolist())

        area = 0.5 * abs(float(np.linalg.det(coords[1:] - coords[0])))
        length = float(np.linalg.norm(end - start))
        lhs = NormService.edge_norm(field, start, end, p)
        lp, w1p = NormService.triangle_norms(field, coords, p)
        rhs = 2.0 ** _conjugate_inverse(p) * (length / area) ** (1.0 / p) * (lp + h_T * w1p)
        return TraceCheck(lhs=lhs, rhs=rhs, ok=bool(lhs <= rhs * (1.0 + TRACE_SLACK)))

    @staticmethod
    def polynomial_norm_ratio(cq, q, p):
        """||q||_{0,p,K} / ||q||_{0,p,T(a,b)}"""
        on_quad = NormService.lp_norm(q, BilinearMap(cq), p)
        on_triangle, _ = NormService.triangle_norms(q, RightTriangle.of(cq).coords, p)
        return on_quad.value / on_triangle
