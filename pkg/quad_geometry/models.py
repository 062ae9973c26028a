import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from django.db import models

from core.conf import quadlab_setting
from core.exceptions import ConvexityError, DegenerateQuad

SWAP_AXES = np.array([[0.0, 1.0], [1.0, 0.0]])


class Target(models.TextChoices):
    RDP = 'RDP', 'Regular decomposition'
    REGULAR = 'REGULAR', 'Regularity'
    DAC = 'DAC', 'Double angle condition'
    MAC_ONLY = 'MAC_ONLY', 'Minimum angle condition only'


def _cross(u, v):
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def polygon_metrics(coords):
    """Side lengths, diagonals, diameter and shoelace area of a vertex loop"""
    coords = np.asarray(coords, dtype=float)
    edges = np.roll(coords, -1, axis=0) - coords
    sides = np.hypot(edges[:, 0], edges[:, 1])
    diagonals = (
        float(np.linalg.norm(coords[2] - coords[0])),
        float(np.linalg.norm(coords[3] - coords[1])),
    )
    diameter = max(float(np.linalg.norm(p - q)) for p, q in combinations(coords, 2))
    area = 0.5 * float(np.sum(_cross(coords, np.roll(coords, -1, axis=0))))
    return sides, diagonals, diameter, area


@dataclass(frozen=True)
class Point2:
    """A vertex in the physical plane"""

    x: float
    y: float

    def __post_init__(self):
        object.__setattr__(self, 'x', float(self.x))
        object.__setattr__(self, 'y', float(self.y))
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise DegenerateQuad('Vertex coordinates must be finite', point=[self.x, self.y])

    def __iter__(self):
        yield self.x
        yield self.y

    def as_array(self):
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class ConvexQuad:
    """Strictly convex quadrilateral with vertices in counterclockwise order"""

    vertices: tuple

    def __post_init__(self):
        points = tuple(v if isinstance(v, Point2) else Point2(*v) for v in self.vertices)
        if len(points) != 4:
            raise DegenerateQuad('A quadrilateral needs exactly four vertices', count=len(points))
        object.__setattr__(self, 'vertices', points)

        cross = self.edge_cross_products()
        tolerance = quadlab_setting('CONVEXITY_RTOL') * self.diameter ** 2
        if self.diameter == 0.0 or np.any(cross <= tolerance):
            raise ConvexityError(
                'Vertices do not form a strictly convex counterclockwise quadrilateral',
                cross_products=[float(c) for c in cross],
            )

    @classmethod
    def from_coords(cls, coords):
        values = np.asarray(coords, dtype=float).reshape(4, 2)
        return cls(tuple(Point2(x, y) for x, y in values))

    @property
    def coords(self):
        return np.array([[v.x, v.y] for v in self.vertices])

    def edge_cross_products(self):
        """Cross product of consecutive edges; entry i is the turn at vertex i"""
        coords = self.coords
        incoming = coords - np.roll(coords, 1, axis=0)
        outgoing = np.roll(coords, -1, axis=0) - coords
        return _cross(incoming, outgoing)

    @property
    def side_lengths(self):
        return polygon_metrics(self.coords)[0]

    @property
    def diagonals(self):
        return polygon_metrics(self.coords)[1]

    @property
    def diameter(self):
        return polygon_metrics(self.coords)[2]

    h = diameter

    @property
    def shortest_side(self):
        return float(np.min(self.side_lengths))

    @property
    def area(self):
        return polygon_metrics(self.coords)[3]

    def transformed(self, B, P=(0.0, 0.0)):
        """Image under x -> Bx + P; B must preserve orientation"""
        coords = self.coords @ np.asarray(B, dtype=float).T + np.asarray(P, dtype=float)
        return ConvexQuad.from_coords(coords)

    def to_line(self):
        return ' '.join(f'{value:.17g}' for value in self.coords.ravel())


@dataclass(frozen=True)
class CanonicalQuad:
    """The element K(a, b, a_tilde, b_tilde) with vertices (0,0), (a,0), (a_tilde,b_tilde), (0,b)"""

    a: float
    b: float
    a_tilde: float
    b_tilde: float

    def __post_init__(self):
        for name in ('a', 'b', 'a_tilde', 'b_tilde'):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value <= 0.0:
                raise DegenerateQuad(f'{name} must be a positive finite number', **{name: value})
            object.__setattr__(self, name, value)
        if self.certificate <= 0.0:
            raise ConvexityError(
                'a_tilde/a + b_tilde/b - 1 must be positive',
                certificate=self.certificate,
            )

    @property
    def parameters(self):
        return (self.a, self.b, self.a_tilde, self.b_tilde)

    @property
    def certificate(self):
        return self.a_tilde / self.a + self.b_tilde / self.b - 1.0

    @property
    def beta(self):
        """Coefficient of x_hat in the affine Jacobian factor"""
        return self.b_tilde / self.b - 1.0

    @property
    def gamma(self):
        """Coefficient of y_hat in the affine Jacobian factor"""
        return self.a_tilde / self.a - 1.0

    @property
    def coords(self):
        return np.array([
            [0.0, 0.0],
            [self.a, 0.0],
            [self.a_tilde, self.b_tilde],
            [0.0, self.b],
        ])

    @property
    def l_len(self):
        return math.hypot(self.a_tilde, self.b - self.b_tilde)

    @property
    def alpha(self):
        """Angle at V4 between V4->V3 and V4->V2"""
        to_v3 = np.array([self.a_tilde, self.b_tilde - self.b])
        to_v2 = np.array([self.a, -self.b])
        return math.atan2(abs(float(_cross(to_v3, to_v2))), float(np.dot(to_v3, to_v2)))

    @property
    def side_lengths(self):
        return polygon_metrics(self.coords)[0]

    @property
    def diagonals(self):
        return polygon_metrics(self.coords)[1]

    @property
    def diameter(self):
        return polygon_metrics(self.coords)[2]

    h = diameter

    @property
    def shortest_side(self):
        return float(np.min(self.side_lengths))

    @property
    def area(self):
        return polygon_metrics(self.coords)[3]

    def to_convex_quad(self):
        return ConvexQuad.from_coords(self.coords)

    def swapped(self):
        return CanonicalQuad(self.b, self.a, self.b_tilde, self.a_tilde)


@dataclass(frozen=True, eq=False)
class AffineMap2:
    """x -> Bx + P, remembering which input vertex each canonical vertex lands on"""

    B: np.ndarray
    P: Point2 = Point2(0.0, 0.0)
    vertex_order: tuple = (0, 1, 2, 3)
    beta: float = math.pi / 2

    def __post_init__(self):
        matrix = np.array(self.B, dtype=float).reshape(2, 2)
        matrix.setflags(write=False)
        object.__setattr__(self, 'B', matrix)
        if not isinstance(self.P, Point2):
            object.__setattr__(self, 'P', Point2(*self.P))
        if abs(self.det) <= np.finfo(float).tiny or not np.all(np.isfinite(matrix)):
            raise DegenerateQuad('Affine map matrix is singular', B=matrix.tolist())

    @classmethod
    def identity(cls):
        return cls(np.eye(2))

    @property
    def det(self):
        return float(np.linalg.det(self.B))

    @property
    def kappa(self):
        return float(np.linalg.cond(self.B, 2))

    def apply(self, points):
        points = np.asarray(points, dtype=float)
        return points @ self.B.T + self.P.as_array()

    def swapped(self):
        """The same map precomposed with the coordinate swap (x, y) -> (y, x)"""
        o = self.vertex_order
        return AffineMap2(
            self.B @ SWAP_AXES,
            self.P,
            vertex_order=(o[0], o[3], o[2], o[1]),
            beta=self.beta,
        )


@dataclass(frozen=True)
class ConditionFlag:
    holds: bool
    attained: float

    def as_dict(self):
        return {'holds': bool(self.holds), 'attained': float(self.attained)}


@dataclass(frozen=True)
class RDPResult:
    diagonal_index: int
    N: float
    psi_M: float

    def as_dict(self):
        return {'diag': self.diagonal_index, 'N': self.N, 'psiM': self.psi_M}


@dataclass(frozen=True)
class ConditionReport:
    angles: tuple
    psi_m: float
    psi_M: float
    mac: bool
    MAC: bool
    rdp: RDPResult
    h_over_rho: float
    flags: dict = field(default_factory=dict)
    flag_constant: float = 4.0

    @property
    def psi_min(self):
        return min(self.angles)

    @property
    def psi_max(self):
        return max(self.angles)

    @property
    def DAC(self):
        return self.mac and self.MAC

    def as_dict(self):
        return {
            'psi_min': self.psi_min,
            'psi_max': self.psi_max,
            'mac': self.mac,
            'MAC': self.MAC,
            'DAC': self.DAC,
            'rdp': self.rdp.as_dict() if self.rdp else None,
            'h_over_rho': self.h_over_rho,
            'flags': {name: flag.as_dict() for name, flag in self.flags.items()},
        }
