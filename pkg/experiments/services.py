import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from core.conf import quadlab_setting
from core.exceptions import ConditionViolated, GridOutOfRange, UsageError
from interpolants.fields import resolve_field
from interpolants.services import InterpolationService
from norms_quadrature.services import NormService, QuadratureService
from quad_geometry.services import ANGLE_TIE, AngleService, ConditionService, regularity_bound

from .families import family_element, family_shape, scaled_shape, validate_grid
from .models import Family, RateEstimate, Requirement, StudyResult, SweepRow, Verdict
from .sampling import random_convex_quads

logger = logging.getLogger(__name__)

CEX_DEGREE = 2
CEX1_GRID = (0.2, 0.1, 0.05, 0.025)
CEX2_GRID = tuple(0.5 + 2.0 ** -j for j in range(10, 15))
CEX2_ANGLE_GRID = tuple(0.5 + 2.0 ** -j for j in range(3, 8))
CONVERGENCE_LEVELS = tuple(2.0 ** -j for j in range(2, 7))
DEFAULT_PSI_M = math.pi / 12
DEFAULT_PSI_M_MAX = 0.95 * math.pi

MIN_RATE_POINTS = 4
BOUNDED_SPREAD = 2.0
CEX1_BASIS_SLACK = 0.15
CEX1_RATIO_SLOPE = -0.8
CEX2_SLOPE_TOLERANCE = 0.2
RATE_TOLERANCE = 0.1
REPRODUCTION_LIMIT = 1e-9


def _map(func, items, jobs=1):
    """Apply func to items, concurrently when jobs > 1; results keep input order"""
    items = list(items)
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            return list(executor.map(func, items))
    return [func(item) for item in items]


def _check_k(k, high=10):
    if int(k) != k or not 1 <= k <= high:
        raise UsageError(f'k must be an integer in 1..{high}', k=k)
    return int(k)


def _check_p(p):
    if not (math.isfinite(p) and 1.0 <= p <= 64.0):
        raise UsageError('p must lie in [1, 64]', p=p)
    return float(p)


def fit_rate(x, y, window=None, against='h'):
    """Least-squares slope of log(y) against log(x) over the `window` smallest x"""
    window = window or quadlab_setting('RATE_WINDOW')
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2:
        raise UsageError('A rate needs at least two points', count=len(x))
    finest = np.argsort(x)[:window]
    lx, ly = np.log(x[finest]), np.log(y[finest])
    slope, intercept = np.polyfit(lx, ly, 1)
    residual = float(np.sqrt(np.mean((ly - (slope * lx + intercept)) ** 2)))
    return RateEstimate(float(slope), float(intercept), residual, len(finest), against)


def _reliable(*rates):
    limit = quadlab_setting('RESIDUAL_LIMIT')
    return all(
        rate.window >= MIN_RATE_POINTS and math.isfinite(rate.slope) and rate.residual < limit for rate in rates
    )


def _growth_verdict(x, values, window=None):
    """BOUNDED when the finest values stay within a factor 2, DIVERGES when they grow as x -> 0"""
    rate = fit_rate(x, values, window, 'angle')
    finest = np.asarray(values, dtype=float)[np.argsort(x)[:rate.window]]
    if finest.max() < BOUNDED_SPREAD * finest.min():
        return Verdict.BOUNDED, rate
    if not _reliable(rate):
        return Verdict.INCONCLUSIVE, rate
    return (Verdict.DIVERGES if rate.slope < 0 else Verdict.BOUNDED), rate


class ExperimentService:
    """Service for counterexample, uniformity, convergence and constant studies"""

    @staticmethod
    def sufficient_condition(k, p):
        """Geometric condition under which the uniform W^{1,p} estimate holds"""
        _check_k(k)
        if p >= 3:
            return Requirement.DAC
        return Requirement.RDP if k == 1 else Requirement.MAC_MIN

    @staticmethod
    def satisfies(report, requirement):
        """Whether a classified shape meets a requirement; regularity and DAC stand in for RDP and mac"""
        if requirement == Requirement.DAC:
            return report.DAC
        regular = report.h_over_rho <= regularity_bound(report.psi_m)
        if requirement == Requirement.MAC_MIN:
            return report.mac or report.DAC or regular
        rdp = report.rdp.psi_M <= report.psi_M + ANGLE_TIE and report.rdp.N <= report.flag_constant
        return rdp or report.DAC or regular

    @staticmethod
    def measure(element, k, p, field, param, order=None):
        """One sweep row for Q_k u on `element`, with the interpolant for auxiliary norms"""
        u = resolve_field(field, element)
        interpolant = InterpolationService.qk_interpolate(element, k, u)
        error = u - interpolant

        u_w1p = NormService.w1p_seminorm(u, element, p, order)
        u_lp = NormService.lp_norm(u, element, p, order)
        err_w1p = NormService.w1p_seminorm(error, element, p, order, reference_scale=u_w1p.value)
        err_lp = NormService.lp_norm(error, element, p, order, reference_scale=u_lp.value)
        semnorm = NormService.wmp_seminorm(u, element, k + 1, p, order)

        h = element.diameter
        if semnorm.value > 0.0:
            ratio_seminorm = err_w1p.value / (h ** k * semnorm.value)
            ratio_lp = err_lp.value / (h ** (k + 1) * semnorm.value)
        else:
            ratio_seminorm = ratio_lp = 0.0

        row = SweepRow(
            param=float(param),
            h=h,
            err_w1p=err_w1p.value,
            err_lp=err_lp.value,
            semnorm_u=semnorm.value,
            ratio_seminorm=ratio_seminorm,
            ratio_lp=ratio_lp,
            converged=all(r.converged for r in (u_w1p, u_lp, err_w1p, err_lp, semnorm)),
        )
        return row, interpolant

    @staticmethod
    def corner_integral(s, p, n=40):
        """Integral of J^(1-p) over the Cex 2 corner triangle, by quadrature where no closed form exists"""
        if p not in (2, 3):
            return NormService.cex2_corner_integral(s, p)
        rule = QuadratureService.gauss_triangle_rule(n)
        edges = np.array([[0.0, 0.25], [0.25, 0.25]])
        points = np.array([0.75, 0.75]) + rule.points @ edges
        factor = 1.0 + (s - 1.0) * points.sum(axis=1)
        return rule.integrate(factor ** (1.0 - p)) * abs(float(np.linalg.det(edges)))

    @staticmethod
    def run_cex1(p, s_grid=None, order=None, window=None, jobs=1):
        """Minimum-angle counterexample on K(1, s, s, 2s) with u = x(x - 1/2)(x - 1)"""
        p = _check_p(p)
        if p >= 3:
            raise UsageError('cex1 needs 1 <= p < 3', p=p)
        grid = validate_grid(Family.CEX1, s_grid or CEX1_GRID)
        logger.info('Starting cex1 study: p=%g, %d grid points', p, len(grid))

        def row(s):
            cq = family_element(Family.CEX1, s)
            measured, interpolant = ExperimentService.measure(cq, CEX_DEGREE, p, 'cex1', s, order)
            phi = InterpolationService.basis_function(cq, CEX_DEGREE, 1, 1)
            basis = NormService.component_norm(phi, cq, (0, 1), p, order)
            witness = NormService.component_norm(interpolant, cq, (0, 1), p, order)
            return measured.replace(
                aux1=basis.value,
                aux2=witness.value,
                converged=measured.converged and basis.converged and witness.converged,
            )

        rows = sorted(_map(row, grid, jobs), key=lambda r: r.param)
        s = [r.param for r in rows]
        basis = fit_rate(s, [r.aux1 for r in rows], window, 's')
        ratio = fit_rate(s, [r.ratio_seminorm for r in rows], window, 's')

        if not _reliable(basis, ratio):
            verdict = Verdict.INCONCLUSIVE
        elif basis.slope <= -(1.0 - 1.0 / p) + CEX1_BASIS_SLACK and ratio.slope <= CEX1_RATIO_SLOPE:
            verdict = Verdict.DIVERGES
        else:
            verdict = Verdict.SLOPE_MISMATCH

        logger.info('Finished cex1 study: basis slope %.4g, ratio slope %.4g, %s', basis.slope, ratio.slope, verdict)
        return StudyResult(
            study='cex1',
            k=CEX_DEGREE,
            p=p,
            rows=rows,
            verdict=verdict,
            expected=(Verdict.DIVERGES,),
            rates={'basis_norm': basis, 'ratio_seminorm': ratio},
            details={'expected_basis_slope': -(1.0 - 1.0 / p)},
        )

    @staticmethod
    def run_cex2(p, s_grid=None, order=None, window=None, jobs=1):
        """Maximum-angle counterexample on K(1, 1, s, s) with u = x(x - 1/4)(x - 3/4)(x - 3/8)(x - 1)"""
        p = _check_p(p)
        grid = validate_grid(Family.CEX2, s_grid or CEX2_GRID)
        logger.info('Starting cex2 study: p=%g, %d grid points', p, len(grid))

        def row(s):
            cq = family_element(Family.CEX2, s)
            measured, _ = ExperimentService.measure(cq, CEX_DEGREE, p, 'cex2', s, order)
            phi = InterpolationService.basis_function(cq, CEX_DEGREE, 2, 2)
            basis = NormService.component_norm(phi, cq, (0, 1), p, order)
            return measured.replace(
                aux1=basis.value,
                aux2=ExperimentService.corner_integral(s, p),
                converged=measured.converged and basis.converged,
            )

        rows = sorted(_map(row, grid, jobs), key=lambda r: r.param)
        offsets = [r.param - 0.5 for r in rows]
        ratios = np.array([r.ratio_seminorm for r in rows])
        basis = fit_rate(offsets, [r.aux1 ** p for r in rows], window, 's-1/2')
        ratio = fit_rate(offsets, ratios, window, 's-1/2')
        details = {'expected_basis_slope': 3.0 - p, 'spread': float(ratios.max() / ratios.min())}

        if p < 3:
            expected = (Verdict.BOUNDED,)
            verdict = Verdict.BOUNDED if ratios.max() < BOUNDED_SPREAD * ratios.min() else Verdict.DIVERGES
        elif p == 3:
            # logarithmic growth: monotone as s -> 1/2, no slope target
            expected = (Verdict.DIVERGES,)
            growing = np.all(np.diff([r.aux1 for r in rows]) < 0) and np.all(np.diff(ratios) < 0)
            verdict = Verdict.DIVERGES if growing else Verdict.SLOPE_MISMATCH
        else:
            expected = (Verdict.DIVERGES,)
            if not _reliable(basis, ratio):
                verdict = Verdict.INCONCLUSIVE
            elif (
                abs(basis.slope - (3.0 - p)) <= CEX2_SLOPE_TOLERANCE
                and ratio.slope <= -0.5 * (p - 3.0) / p
            ):
                verdict = Verdict.DIVERGES
            else:
                verdict = Verdict.SLOPE_MISMATCH

        logger.info('Finished cex2 study: basis slope %.4g, %s', basis.slope, verdict)
        return StudyResult(
            study='cex2',
            k=CEX_DEGREE,
            p=p,
            rows=rows,
            verdict=verdict,
            expected=expected,
            rates={'basis_norm_power': basis, 'ratio_seminorm': ratio},
            details=details,
        )

    @staticmethod
    def run_lp_uniformity(k, p, num_random=500, seed=42, include_cex1=True, order=None, jobs=1):
        """Largest ||u - Q_k u||_{0,p} / (h^(k+1) |u|_{k+1,p}) over random convex quads"""
        k = _check_k(k, high=4)
        p = _check_p(p)
        logger.info('Starting lp-uniform study: k=%d p=%g, %d quads, seed %s', k, p, num_random, seed)
        quads = random_convex_quads(num_random, seed)

        def row(item):
            index, quad = item
            return ExperimentService.measure(quad, k, p, 'trig-box', index, order)[0]

        rows = _map(row, enumerate(quads), jobs)
        ratios = np.array([r.ratio_lp for r in rows])
        details = {
            'max_ratio_lp': float(ratios.max()),
            'argmax': int(ratios.argmax()),
            'min_angle': float(min(AngleService.interior_angles(q).min() for q in quads)),
        }
        if include_cex1:
            cex1_rows = [
                ExperimentService.measure(family_element(Family.CEX1, s), k, p, 'trig-box', s, order)[0]
                for s in CEX1_GRID
            ]
            details['cex1_max_ratio_lp'] = max(r.ratio_lp for r in cex1_rows)
            details['cex1_max_ratio_seminorm'] = max(r.ratio_seminorm for r in cex1_rows)

        verdict = Verdict.BOUNDED if np.all(np.isfinite(ratios)) else Verdict.DIVERGES
        logger.info('Finished lp-uniform study: max ratio %.6g', details['max_ratio_lp'])
        return StudyResult(
            study='lp-uniform',
            k=k,
            p=p,
            rows=rows,
            verdict=verdict,
            expected=(Verdict.BOUNDED,),
            details=details,
        )

    @staticmethod
    def run_convergence(
        family=Family.CEX1, k=2, p=2.0, h_levels=None, field='trig', param=None, seed=None, quads=None,
        shape=None, psi_m=DEFAULT_PSI_M, psi_M=DEFAULT_PSI_M_MAX, order=None, window=None, jobs=1,
    ):
        """h-refinement of a fixed shape anchored at (0.3, 0.2)"""
        k = _check_k(k)
        p = _check_p(p)
        shape = shape or family_shape(family, param, seed, quads)
        levels = tuple(sorted((float(h) for h in (h_levels or CONVERGENCE_LEVELS)), reverse=True))
        if not levels or min(levels) <= 0.0:
            raise GridOutOfRange('h levels must be positive', values=list(levels))

        requirement = ExperimentService.sufficient_condition(k, p)
        report = ConditionService.classify(shape, psi_m, psi_M)
        condition_met = ExperimentService.satisfies(report, requirement)
        if not condition_met:
            message = f'Shape does not satisfy {requirement} required for k={k}, p={p:g}; rates are not guaranteed'
            logger.warning(message)
            warnings.warn(message, ConditionViolated)

        logger.info('Starting convergence study: k=%d p=%g, %d levels', k, p, len(levels))

        def row(h):
            return ExperimentService.measure(scaled_shape(shape, h), k, p, field, h, order)[0]

        rows = sorted(_map(row, levels, jobs), key=lambda r: r.param)
        details = {
            'requirement': str(requirement),
            'condition_met': bool(condition_met),
            'psi_min': report.psi_min,
            'psi_max': report.psi_max,
            'shape': shape.to_line(),
        }

        rates = {}
        if max(r.ratio_seminorm for r in rows) <= REPRODUCTION_LIMIT:
            verdict = Verdict.REPRODUCED
        else:
            h = [r.param for r in rows]
            semi = fit_rate(h, [r.err_w1p / r.semnorm_u for r in rows], window)
            lp = fit_rate(h, [r.err_lp / r.semnorm_u for r in rows], window)
            rates = {'seminorm': semi, 'lp': lp}
            if not _reliable(semi, lp):
                verdict = Verdict.INCONCLUSIVE
            elif abs(semi.slope - k) <= RATE_TOLERANCE and abs(lp.slope - (k + 1)) <= RATE_TOLERANCE:
                verdict = Verdict.RATE_OK
            else:
                verdict = Verdict.SLOPE_MISMATCH

        logger.info('Finished convergence study: %s', verdict)
        return StudyResult(
            study='convergence',
            k=k,
            p=p,
            rows=rows,
            verdict=verdict,
            expected=(Verdict.RATE_OK, Verdict.REPRODUCED),
            rates=rates,
            details=details,
        )

    @staticmethod
    def _angle_sweep(name, family, field, grid, k, p, expected, extreme, order, window, jobs):
        def row(s):
            element = family_element(family, s)
            measured, interpolant = ExperimentService.measure(element, k, p, field, s, order)
            witness = NormService.component_norm(interpolant, element, (0, 1), p, order)
            angles = AngleService.interior_angles(element.to_convex_quad())
            scale = measured.h ** k * measured.semnorm_u
            return measured.replace(
                param=float(extreme(angles)),
                aux1=float(s),
                aux2=witness.value / scale if scale > 0 else 0.0,
                converged=measured.converged and witness.converged,
            )

        rows = sorted(_map(row, grid, jobs), key=lambda r: r.param)
        # distance of the swept angle from its degenerate limit
        distance = [r.param if extreme is np.min else math.pi - r.param for r in rows]
        verdict, rate = _growth_verdict(distance, [r.ratio_seminorm for r in rows], window)
        return StudyResult(
            study=name, k=k, p=p, rows=rows, verdict=verdict, expected=expected, rates={'constant': rate}
        )

    @staticmethod
    def run_constant_vs_angle(k=CEX_DEGREE, p=2.0, min_grid=None, max_grid=None, order=None, window=None, jobs=1):
        """Empirical constant against the minimum angle (Cex 1 family) and the maximum angle (Cex 2 family)"""
        k = _check_k(k)
        p = _check_p(p)
        logger.info('Starting constant sweep: k=%d p=%g', k, p)
        minimum = ExperimentService._angle_sweep(
            'min_angle', Family.CEX1, 'cex1', validate_grid(Family.CEX1, min_grid or CEX1_GRID),
            k, p, (Verdict.DIVERGES,), np.min, order, window, jobs,
        )
        maximum = ExperimentService._angle_sweep(
            'max_angle', Family.CEX2, 'cex2', validate_grid(Family.CEX2, max_grid or CEX2_ANGLE_GRID),
            k, p, (Verdict.BOUNDED,) if p < 3 else (Verdict.DIVERGES,), np.max, order, window, jobs,
        )
        children = [minimum, maximum]
        if any(child.failed for child in children):
            verdict = Verdict.SLOPE_MISMATCH
        elif any(child.verdict == Verdict.INCONCLUSIVE for child in children):
            verdict = Verdict.INCONCLUSIVE
        else:
            verdict = maximum.verdict
        logger.info('Finished constant sweep: min-angle %s, max-angle %s', minimum.verdict, maximum.verdict)
        return StudyResult(
            study='constant-sweep', k=k, p=p, rows=[], verdict=verdict, children=children
        )

    @staticmethod
    def write_csv(result, destination):
        """Rows with 17 significant digits, byte-identical across reruns"""
        result.to_frame().to_csv(destination, index=False, float_format='%.17g')
