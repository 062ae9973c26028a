import logging

import numpy as np

from core.exceptions import IndexOutOfRange, InvalidIndex, SingularVandermonde
from reference_map.services import ReferenceMapService

from .models import Interpolant, QkBasis, RightTriangle, TriangleInterpolant, chain_rule

logger = logging.getLogger(__name__)

MAX_DEGREE = 10


def _check_degree(k):
    if int(k) != k or not 1 <= k <= MAX_DEGREE:
        raise InvalidIndex(f'Degree k must be an integer in 1..{MAX_DEGREE}', k=k)
    return int(k)


class InterpolationService:
    """Service for Q_k and P_k Lagrange interpolation"""

    @staticmethod
    def qk_basis_value_grad(basis, i, j, x_hat, y_hat):
        """phi_hat_ij and its reference gradient at (x_hat, y_hat)"""
        if not (0 <= i <= basis.k and 0 <= j <= basis.k):
            raise IndexOutOfRange('Basis index outside 0..k', k=basis.k, i=i, j=j)
        table = basis.tabulate([[x_hat, y_hat]], order=1)
        return (
            float(table[(0, 0)][i, j, 0]),
            float(table[(1, 0)][i, j, 0]),
            float(table[(0, 1)][i, j, 0]),
        )

    @staticmethod
    def physical_basis_grad_reference(quad, k, i, j, ref):
        """Physical gradient of phi_ij at F_K(ref), for an (N, 2) array of reference points"""
        k = _check_degree(k)
        if not (0 <= i <= k and 0 <= j <= k):
            raise IndexOutOfRange('Basis index outside 0..k', k=k, i=i, j=j)
        bm = ReferenceMapService.as_map(quad)
        ref = np.atleast_2d(np.asarray(ref, dtype=float))
        table = QkBasis(k).tabulate(ref, order=1)
        DF, J = ReferenceMapService.jacobian_many(bm, ref)
        return chain_rule(DF, J, table[(1, 0)][i, j], table[(0, 1)][i, j])

    @staticmethod
    def physical_basis_grad(quad, k, i, j, point):
        """(d phi_ij/dx, d phi_ij/dy) at a physical point of K"""
        bm = ReferenceMapService.as_map(quad)
        ref = ReferenceMapService.map_inverse(bm, point)
        dx, dy = InterpolationService.physical_basis_grad_reference(bm, k, i, j, [ref])
        return float(dx[0]), float(dy[0])

    @staticmethod
    def basis_function(quad, k, i, j):
        """phi_ij as an Interpolant with a single unit nodal value"""
        k = _check_degree(k)
        if not (0 <= i <= k and 0 <= j <= k):
            raise IndexOutOfRange('Basis index outside 0..k', k=k, i=i, j=j)
        values = np.zeros((k + 1, k + 1))
        values[i, j] = 1.0
        return Interpolant(ReferenceMapService.as_map(quad), k, values, name=f'phi_{i}{j}')

    @staticmethod
    def qk_interpolate(quad, k, field):
        """Q_k u, the interpolant matching field at the nodes M_ij"""
        k = _check_degree(k)
        bm = ReferenceMapService.as_map(quad)
        grid = ReferenceMapService.node_grid(bm, k)
        values = field.evaluate(grid.flat()).reshape(k + 1, k + 1)
        logger.debug('Interpolated %s with Q%d on %s', field.name, k, bm.owner)
        return Interpolant(bm, k, values, name=f'Q{k}({field.name})')

    @staticmethod
    def triangle_pk_interpolate(triangle, k, field):
        """Pi_k u on T(a, b), solved in the monomial basis of (x/a, y/b)"""
        k = _check_degree(k)
        if not isinstance(triangle, RightTriangle):
            triangle = RightTriangle.of(triangle)
        if not (triangle.a > 0 and triangle.b > 0):
            raise SingularVandermonde('Triangle T(a, b) is degenerate', a=triangle.a, b=triangle.b)

        labels, points = triangle.nodes(k)
        X = points[:, 0] / triangle.a
        Y = points[:, 1] / triangle.b
        exponents = [(p, q) for p in range(k + 1) for q in range(k + 1 - p)]
        V = np.column_stack([X ** p * Y ** q for p, q in exponents])
        values = field.evaluate(points)
        try:
            solution = np.linalg.solve(V, values)
        except np.linalg.LinAlgError as exc:
            raise SingularVandermonde('Nodal system of the triangle is singular', k=k, reason=str(exc))

        coeffs = np.zeros((k + 1, k + 1))
        for (p, q), c in zip(exponents, solution):
            coeffs[p, q] = c
        return TriangleInterpolant(triangle, k, coeffs, values)
