from dataclasses import dataclass
from functools import cached_property

import numpy as np

from reference_map.models import BilinearMap
from reference_map.services import ReferenceMapService

from .fields import PolynomialField, ScalarField


def barycentric_tabulation(nodes, points, order=0):
    """Lagrange basis on `nodes` and its derivatives at `points`, via the second barycentric formula.

    Returns a list whose entry m is an array indexed [node, point] holding the
    m-th derivative of each nodal polynomial.
    """
    nodes = np.asarray(nodes, dtype=float)
    points = np.asarray(points, dtype=float)

    # D[i, j] = l_i'(x_j)
    D = np.add.outer(-nodes, nodes)
    np.fill_diagonal(D, 1.0)
    w = 1.0 / np.prod(D, axis=0)
    D = np.divide.outer(w, w) / D
    np.fill_diagonal(D, np.diag(D) - np.sum(D, axis=0))

    I = np.add.outer(-nodes, points)
    hits = np.argwhere(np.isclose(I, 0.0, atol=1e-14))
    I[hits[:, 0], hits[:, 1]] = 1.0
    I = w[:, None] / I
    I[:, hits[:, 1]] = 0.0
    I[hits[:, 0], hits[:, 1]] = 1.0
    I = I / np.sum(I, axis=0)

    tables = [I]
    for _ in range(order):
        tables.append(D @ tables[-1])
    return tables


@dataclass(frozen=True, eq=False)
class QkBasis:
    """Tensor-product Lagrange basis of degree k on the unit square.

    phi_hat_ij(x, y) = L_j(x) L_i(y), so phi_hat_ij is 1 at the node (j/k, i/k).
    """

    k: int

    @cached_property
    def nodes_1d(self):
        return np.arange(self.k + 1) / self.k

    def tabulate(self, ref, order=1):
        """{(a1, a2): array [i, j, n]} of reference derivatives with a1 + a2 <= order"""
        ref = np.atleast_2d(np.asarray(ref, dtype=float))
        X = barycentric_tabulation(self.nodes_1d, ref[:, 0], order)
        Y = barycentric_tabulation(self.nodes_1d, ref[:, 1], order)
        return {
            (a1, a2): Y[a2][:, None, :] * X[a1][None, :, :]
            for a1 in range(order + 1)
            for a2 in range(order + 1 - a1)
        }


def chain_rule(DF, J, grad_x_hat, grad_y_hat):
    """Physical gradient DF^{-T} grad_hat for stacked Jacobians"""
    A, B = DF[..., 0, 0], DF[..., 0, 1]
    C, D = DF[..., 1, 0], DF[..., 1, 1]
    return (D * grad_x_hat - C * grad_y_hat) / J, (A * grad_y_hat - B * grad_x_hat) / J


class Interpolant(ScalarField):
    """Q_k u = sum u(M_ij) phi_ij on a quadrilateral, with derivatives up to order one"""

    m_max = 1

    def __init__(self, bm, k, values, name='Qk'):
        self.bm = bm if isinstance(bm, BilinearMap) else BilinearMap(bm)
        self.k = int(k)
        self.values = np.asarray(values, dtype=float).reshape(self.k + 1, self.k + 1)
        self.basis = QkBasis(self.k)
        self.name = name

    @property
    def quad(self):
        return self.bm.owner

    def nodal_value(self, i, j):
        return float(self.values[i, j])

    def _evaluate(self, points, alpha):
        ref = ReferenceMapService.inverse_many(self.bm, points)
        return self._on_reference(ref, alpha)

    def _on_reference(self, ref, alpha):
        table = self.basis.tabulate(ref, order=sum(alpha))
        if alpha == (0, 0):
            return np.einsum('ij,ijn->n', self.values, table[(0, 0)])
        gx = np.einsum('ij,ijn->n', self.values, table[(1, 0)])
        gy = np.einsum('ij,ijn->n', self.values, table[(0, 1)])
        DF, J = ReferenceMapService.jacobian_many(self.bm, ref)
        dx, dy = chain_rule(DF, J, gx, gy)
        return dx if alpha == (1, 0) else dy

    def pulled_back(self, bm, ref, alpha=(0, 0)):
        alpha = tuple(alpha)
        self.check_order(alpha)
        if bm is self.bm or np.array_equal(bm.vertices, self.bm.vertices):
            return self._on_reference(np.atleast_2d(np.asarray(ref, dtype=float)), alpha)
        return super().pulled_back(bm, ref, alpha)


@dataclass(frozen=True)
class RightTriangle:
    """T(a, b) with vertices (0,0), (a,0), (0,b)"""

    a: float
    b: float

    @classmethod
    def of(cls, cq):
        return cls(cq.a, cq.b)

    @property
    def coords(self):
        return np.array([[0.0, 0.0], [self.a, 0.0], [0.0, self.b]])

    @property
    def area(self):
        return 0.5 * self.a * self.b

    @property
    def diameter(self):
        return float(np.hypot(self.a, self.b))

    def nodes(self, k):
        """Nodes M^T_ij = (a j/k, b i/k), 0 <= i + j <= k, with their (i, j) labels"""
        labels = [(i, j) for i in range(k + 1) for j in range(k + 1 - i)]
        points = np.array([[self.a * (j / k), self.b * (i / k)] for i, j in labels])
        return labels, points


class TriangleInterpolant(PolynomialField):
    """Pi_k u as a polynomial in x/a and y/b; evaluation outside T(a, b) extends it to K"""

    def __init__(self, triangle, k, coeffs, nodal_values):
        super().__init__(coeffs, scale=(triangle.a, triangle.b), name=f'Pi{k}')
        self.triangle = triangle
        self.k = k
        self.nodal_values = np.asarray(nodal_values, dtype=float)
