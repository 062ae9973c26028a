from dataclasses import dataclass

import numpy as np
from django.db import models

from core.exceptions import DegenerateQuad
from quad_geometry.models import CanonicalQuad, ConvexQuad, Point2, _cross


class AuxKind(models.TextChoices):
    TOP_EDGE = 'TOP_EDGE', 'Top edge node'
    RIGHT_EDGE = 'RIGHT_EDGE', 'Right edge node'
    INTERIOR = 'INTERIOR', 'Interior node'


@dataclass(frozen=True, eq=False)
class BilinearMap:
    """The map F_K from the unit square onto a convex quadrilateral.

    `owner` is either a CanonicalQuad, in which case V1 sits at the origin and
    the formulas of the K(a, b, a_tilde, b_tilde) family hold literally, or
    any ConvexQuad with counterclockwise vertices.
    """

    owner: object

    def __post_init__(self):
        if not isinstance(self.owner, (CanonicalQuad, ConvexQuad)):
            raise DegenerateQuad('BilinearMap needs a CanonicalQuad or a ConvexQuad', owner=repr(self.owner))
        vertices = np.array(self.owner.coords, dtype=float)
        vertices.setflags(write=False)
        object.__setattr__(self, 'vertices', vertices)

    @property
    def is_canonical(self):
        return isinstance(self.owner, CanonicalQuad)

    @property
    def h(self):
        return self.owner.diameter

    @property
    def area(self):
        return self.owner.area

    def corner_jacobians(self):
        """J at (0,0), (1,0), (1,1), (0,1); J is affine so these bound it on the square"""
        v = self.vertices
        incoming = v - np.roll(v, 1, axis=0)
        outgoing = np.roll(v, -1, axis=0) - v
        return _cross(outgoing, -incoming)


@dataclass(frozen=True, eq=False)
class NodeGrid:
    """Nodes M_ij = F_K(j/k, i/k) stored as an array indexed [i, j]"""

    k: int
    nodes: np.ndarray

    def node(self, i, j):
        return Point2(*self.nodes[i, j])

    def is_interior(self, i, j):
        return 1 <= i <= self.k - 1 and 1 <= j <= self.k - 1

    def interior_indices(self):
        return [(i, j) for i in range(1, self.k) for j in range(1, self.k)]

    def edge_indices(self):
        return [
            (i, j) for i in range(self.k + 1) for j in range(self.k + 1)
            if not self.is_interior(i, j)
        ]

    def flat(self):
        """(k+1)^2 x 2 array, i outer and j inner"""
        return self.nodes.reshape(-1, 2)

    def as_list(self):
        return self.flat().tolist()


@dataclass(frozen=True)
class AuxTriangle:
    vertices: tuple
    kind: str
    probe_edge: tuple
    node: tuple
    ratio: float = None
    leg_lengths: tuple = None
    alpha: float = None

    @property
    def coords(self):
        return np.array([[v.x, v.y] for v in self.vertices])

    @property
    def area(self):
        p = self.coords
        return 0.5 * abs(float(_cross(p[1] - p[0], p[2] - p[0])))

    @property
    def probe_length(self):
        start, end = self.probe_edge
        return float(np.hypot(end.x - start.x, end.y - start.y))

    def as_dict(self):
        payload = {
            'kind': self.kind,
            'node': list(self.node),
            'vertices': self.coords.tolist(),
            'probe_edge': [list(p) for p in self.probe_edge],
        }
        if self.ratio is not None:
            payload['ratio'] = self.ratio
        if self.leg_lengths is not None:
            payload['leg_lengths'] = list(self.leg_lengths)
            payload['alpha'] = self.alpha
        return payload
