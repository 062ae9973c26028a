"""Seeded generators of random convex elements.

Quads are four sorted points on the unit circle, stretched along one axis by
a log-uniform factor up to `max_stretch` and rotated at random. Rejection
keeps only strictly convex results, which yields narrow, triangle-like and
angle-collapsing shapes alongside well-shaped ones.
"""

import math

import numpy as np

from core.exceptions import ConvexityError, DegenerateQuad
from quad_geometry.models import CanonicalQuad, ConvexQuad
from quad_geometry.services import AngleService


def _rotation(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def random_convex_quad(rng, max_stretch=50.0):
    while True:
        theta = np.sort(rng.uniform(0.0, 2.0 * math.pi, 4))
        points = np.column_stack([np.cos(theta), np.sin(theta)])
        stretch = math.exp(rng.uniform(0.0, math.log(max_stretch)))
        points = points * np.array([1.0, stretch])
        points = points @ _rotation(rng.uniform(0.0, 2.0 * math.pi)).T
        try:
            return ConvexQuad.from_coords(points)
        except ConvexityError:
            continue


def random_convex_quads(count, seed, max_stretch=50.0):
    rng = np.random.default_rng(seed)
    return [random_convex_quad(rng, max_stretch) for _ in range(count)]


def random_angle_quads(count, seed, psi_m=None, psi_M=None, max_stretch=50.0):
    """Random quads whose interior angles respect the given bounds"""
    rng = np.random.default_rng(seed)
    quads = []
    while len(quads) < count:
        quad = random_convex_quad(rng, max_stretch)
        angles = AngleService.interior_angles(quad)
        if psi_m is not None and angles.min() < psi_m:
            continue
        if psi_M is not None and angles.max() > psi_M:
            continue
        quads.append(quad)
    return quads


def random_canonical_quad(rng, max_ratio=2.0, min_certificate=1e-3, scale_range=(0.1, 10.0)):
    low, high = (math.log(v) for v in scale_range)
    while True:
        a, b = np.exp(rng.uniform(low, high, 2))
        ratios = rng.uniform(0.0, max_ratio, 2)
        if ratios.min() <= 0.0 or ratios.sum() - 1.0 <= min_certificate:
            continue
        try:
            return CanonicalQuad(a, b, a * ratios[0], b * ratios[1])
        except DegenerateQuad:
            continue


def random_canonical_quads(count, seed, max_ratio=2.0, max_d2=None, min_certificate=1e-3):
    """Random K(a, b, a_tilde, b_tilde); max_ratio=1 gives elements under D1"""
    rng = np.random.default_rng(seed)
    quads = []
    while len(quads) < count:
        cq = random_canonical_quad(rng, max_ratio, min_certificate)
        if max_d2 is not None and 1.0 / math.sin(cq.alpha) > max_d2:
            continue
        quads.append(cq)
    return quads


def random_triangle(rng, max_angle=None):
    while True:
        points = rng.uniform(-1.0, 1.0, (3, 2)) * np.exp(rng.uniform(-1.0, 1.0, 2))
        area = 0.5 * abs((points[1, 0] - points[0, 0]) * (points[2, 1] - points[0, 1])
                         - (points[1, 1] - points[0, 1]) * (points[2, 0] - points[0, 0]))
        if area < 1e-6:
            continue
        if max_angle is not None and AngleService.triangle_angles(points).max() > max_angle:
            continue
        return points


def write_quads_file(path, quads):
    with open(path, 'w') as handle:
        handle.write('# x1 y1 x2 y2 x3 y3 x4 y4\n')
        for quad in quads:
            handle.write(quad.to_line() + '\n')
