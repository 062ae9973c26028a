import logging
import math

import numpy as np

from core.conf import quadlab_setting
from core.exceptions import (
    IndexOutOfRange, InvalidIndex, NoConvergence, NotInElement, PreconditionFailed
)
from quad_geometry.models import Point2
from quad_geometry.services import AngleService

from .models import AuxKind, AuxTriangle, BilinearMap, NodeGrid

logger = logging.getLogger(__name__)

BOX_TOLERANCE = 1e-10
RESIDUAL_TOLERANCE = 1e-14
STAGNATION_RESIDUAL = 1e-12
STAGNATION_STEP = 64 * np.finfo(float).eps


def _shape_functions(ref):
    x, y = ref[..., 0], ref[..., 1]
    return np.stack([(1 - x) * (1 - y), x * (1 - y), x * y, (1 - x) * y], axis=-1)


class ReferenceMapService:
    """Service for the bilinear reference map and the objects built on it"""

    @staticmethod
    def as_map(element):
        """Wrap a quad in a BilinearMap unless it already is one"""
        return element if isinstance(element, BilinearMap) else BilinearMap(element)

    @staticmethod
    def forward_many(bm, ref):
        """F_K at an (N, 2) array of reference points"""
        ref = np.asarray(ref, dtype=float)
        return _shape_functions(ref) @ bm.vertices

    @staticmethod
    def map_forward(bm, x_hat, y_hat):
        """Physical image F_K(x_hat, y_hat)"""
        return Point2(*ReferenceMapService.forward_many(bm, np.array([x_hat, y_hat])))

    @staticmethod
    def jacobian_many(bm, ref):
        """DF_K as an (N, 2, 2) array and J_K as an (N,) array"""
        ref = np.atleast_2d(np.asarray(ref, dtype=float))
        v1, v2, v3, v4 = bm.vertices
        x, y = ref[:, :1], ref[:, 1:]
        d_dx = (v2 - v1) * (1 - y) + (v3 - v4) * y
        d_dy = (v4 - v1) * (1 - x) + (v3 - v2) * x
        DF = np.stack([d_dx, d_dy], axis=-1)
        J = DF[:, 0, 0] * DF[:, 1, 1] - DF[:, 0, 1] * DF[:, 1, 0]
        return DF, J

    @staticmethod
    def jacobian(bm, x_hat, y_hat):
        """DF_K and det DF_K at one reference point"""
        DF, J = ReferenceMapService.jacobian_many(bm, [x_hat, y_hat])
        return DF[0], float(J[0])

    @staticmethod
    def inverse_many(bm, points):
        """Reference coordinates of an (N, 2) array of physical points by Newton's method"""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        h = bm.h
        center = np.array([[0.5, 0.5]])
        DF0, _ = ReferenceMapService.jacobian_many(bm, center)
        offset = points - ReferenceMapService.forward_many(bm, center)
        ref = center + np.linalg.solve(DF0[0], offset.T).T

        active = np.ones(len(points), dtype=bool)
        residual = np.full(len(points), np.inf)
        max_iter = quadlab_setting('NEWTON_MAX_ITER')
        for iteration in range(max_iter):
            r = ReferenceMapService.forward_many(bm, ref[active]) - points[active]
            DF, J = ReferenceMapService.jacobian_many(bm, ref[active])
            if np.any(J == 0.0) or not np.all(np.isfinite(ref[active])):
                raise NotInElement('Newton iterate left the region where F_K is invertible', iteration=iteration)
            step = np.linalg.solve(DF, r[:, :, None])[:, :, 0]
            ref[active] -= step
            step_norm = np.hypot(step[:, 0], step[:, 1])

            r_new = ReferenceMapService.forward_many(bm, ref[active]) - points[active]
            norm_new = np.hypot(r_new[:, 0], r_new[:, 1])
            done = (norm_new < RESIDUAL_TOLERANCE * h) | (
                (step_norm < STAGNATION_STEP) & (norm_new <= STAGNATION_RESIDUAL * h)
            )
            indices = np.flatnonzero(active)
            residual[indices] = norm_new
            active[indices[done]] = False
            if not active.any():
                logger.debug('Newton inversion of %d points converged in %d iterations', len(points), iteration + 1)
                break
        else:
            worst = int(np.argmax(np.where(active, residual, -np.inf)))
            raise NoConvergence(
                'Newton inversion did not converge',
                residual=float(residual[worst]),
                point=points[worst].tolist(),
                iterations=max_iter,
            )

        outside = np.any((ref < -BOX_TOLERANCE) | (ref > 1.0 + BOX_TOLERANCE), axis=1)
        if outside.any():
            first = int(np.argmax(outside))
            raise NotInElement(
                'Point lies outside the element',
                point=points[first].tolist(),
                reference=ref[first].tolist(),
            )
        return ref

    @staticmethod
    def map_inverse(bm, point):
        """(x_hat, y_hat) with F_K(x_hat, y_hat) = point"""
        x_hat, y_hat = ReferenceMapService.inverse_many(bm, [tuple(point)])[0]
        return float(x_hat), float(y_hat)

    @staticmethod
    def node_grid(bm, k):
        """Interpolation nodes M_ij = F_K(j/k, i/k), 0 <= i, j <= k"""
        if int(k) != k or k < 1:
            raise InvalidIndex('Degree k must be a positive integer', k=k)
        k = int(k)
        t = np.arange(k + 1) / k
        y_hat, x_hat = np.meshgrid(t, t, indexing='ij')
        ref = np.column_stack([x_hat.ravel(), y_hat.ravel()])
        nodes = ReferenceMapService.forward_many(bm, ref).reshape(k + 1, k + 1, 2)
        nodes.setflags(write=False)
        return NodeGrid(k=k, nodes=nodes)

    @staticmethod
    def triangle_node(cq, k, i, j):
        """Node M^T_ij = (a j/k, b i/k) of the triangle T(a, b)"""
        return Point2(cq.a * (j / k), cq.b * (i / k))

    @staticmethod
    def aux_triangle(bm, k, i, j):
        """Auxiliary triangle attached to the node M_ij of a canonical element"""
        if not bm.is_canonical:
            raise PreconditionFailed('Auxiliary triangles are defined on canonical elements only')
        if not (0 <= i <= k and 0 <= j <= k):
            raise IndexOutOfRange('Node index outside 0..k', k=k, i=i, j=j)
        if i == 0 or j == 0:
            raise InvalidIndex('No auxiliary triangle for nodes on the axis edges', k=k, i=i, j=j)

        cq = bm.owner
        grid = ReferenceMapService.node_grid(bm, k)
        m_ij = grid.node(i, j)
        corner = ReferenceMapService.triangle_node

        if i == k:
            return AuxTriangle(
                vertices=(m_ij, corner(cq, k, k, 0), corner(cq, k, k - j, j)),
                kind=AuxKind.TOP_EDGE,
                probe_edge=(grid.node(k, 0), m_ij),
                node=(i, j),
                ratio=j / k,
            )
        if j == k:
            return AuxTriangle(
                vertices=(m_ij, corner(cq, k, 0, k), corner(cq, k, i, k - i)),
                kind=AuxKind.RIGHT_EDGE,
                probe_edge=(grid.node(0, k), m_ij),
                node=(i, j),
                ratio=i / k,
            )

        m_i0 = grid.node(i, 0)
        m_0j = grid.node(0, j)
        alpha = AngleService.angle_between(m_ij.as_array() - m_i0.as_array(), m_0j.as_array() - m_i0.as_array())
        return AuxTriangle(
            vertices=(m_ij, corner(cq, k, 0, j), corner(cq, k, i, 0)),
            kind=AuxKind.INTERIOR,
            probe_edge=(m_i0, m_ij),
            node=(i, j),
            leg_lengths=(
                math.dist(tuple(m_i0), tuple(m_ij)),
                math.dist(tuple(m_0j), tuple(m_ij)),
            ),
            alpha=alpha,
        )
