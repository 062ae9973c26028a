"""Element families swept by the studies and their parameter ranges."""

import numpy as np

from core.exceptions import GridOutOfRange, UsageError
from quad_geometry.models import CanonicalQuad, ConvexQuad

from .models import Family
from .sampling import random_convex_quad

# shapes of convergence studies are anchored here and scaled to diameter h
ANCHOR = (0.3, 0.2)

DEFAULT_PARAMS = {
    Family.CEX1: 0.25,
    Family.CEX2: 0.5625,
    Family.TRIDEGEN: 0.5,
}


def in_range(family, s):
    if family == Family.CEX1:
        return 0.0 < s < 0.5
    if family == Family.CEX2:
        return 0.5 < s <= 0.625
    if family == Family.TRIDEGEN:
        return 0.0 < s < 1.0
    return True


def validate_grid(family, grid):
    grid = tuple(float(s) for s in grid)
    if not grid:
        raise GridOutOfRange('Parameter grid is empty', family=str(family))
    bad = [s for s in grid if not in_range(family, s)]
    if bad:
        raise GridOutOfRange(f'Grid values outside the validity range of {family}', family=str(family), values=bad)
    return grid


def family_element(family, s):
    """Element of a one-parameter family"""
    if not in_range(family, s):
        raise GridOutOfRange(f'Parameter outside the validity range of {family}', family=str(family), value=s)
    if family == Family.CEX1:
        return CanonicalQuad(1.0, s, s, 2.0 * s)
    if family == Family.CEX2:
        return CanonicalQuad(1.0, 1.0, s, s)
    if family == Family.TRIDEGEN:
        return ConvexQuad.from_coords([(0.0, 0.0), (1.0, 0.0), (s, 1.0 - s), (0.0, 1.0 - s)])
    raise UsageError(f'{family} is not a one-parameter family')


def family_shape(family, param=None, seed=None, quads=None):
    """Fixed shape used by h-refinement studies"""
    if family == Family.RANDOM_CONVEX:
        return random_convex_quad(np.random.default_rng(seed))
    if family == Family.USER:
        if not quads:
            raise UsageError('USER family needs a quad')
        return quads[0] if isinstance(quads[0], ConvexQuad) else quads[0].to_convex_quad()
    element = family_element(family, DEFAULT_PARAMS[family] if param is None else param)
    return element if isinstance(element, ConvexQuad) else element.to_convex_quad()


def scaled_shape(shape, h, anchor=ANCHOR):
    """Copy of `shape` with its first vertex at `anchor` and diameter h"""
    coords = shape.coords
    return ConvexQuad.from_coords(np.asarray(anchor) + (coords - coords[0]) * (h / shape.diameter))
