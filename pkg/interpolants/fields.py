"""Scalar fields on the plane with partial derivatives.

A field is evaluated on an (N, 2) array of physical points together with a
multi-index (a1, a2) meaning d^a1/dx^a1 d^a2/dy^a2. Built-in fields carry
exact derivatives of every order; a subclass that approximates derivatives
reports `exact = False`.
"""

import math

import numpy as np
from numpy.polynomial import polynomial as P

from core.exceptions import DerivativeUnavailable, ParseError, UsageError

CEX1_ROOTS = (0.0, 0.5, 1.0)
CEX2_ROOTS = (0.0, 0.25, 0.75, 0.375, 1.0)


class ScalarField:
    """Base class; subclasses implement `_evaluate`"""

    name = 'field'
    m_max = math.inf
    exact = True

    def evaluate(self, points, alpha=(0, 0)):
        alpha = tuple(int(a) for a in alpha)
        self.check_order(alpha)
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return self._evaluate(points, alpha)

    def _evaluate(self, points, alpha):
        raise NotImplementedError

    def check_order(self, alpha):
        if min(alpha) < 0 or sum(alpha) > self.m_max:
            raise DerivativeUnavailable(
                f'Field {self.name} provides derivatives up to order {self.m_max}',
                field=self.name,
                alpha=list(alpha),
            )

    def value(self, point):
        return float(self.evaluate([tuple(point)])[0])

    def gradient(self, points):
        return np.column_stack([self.evaluate(points, (1, 0)), self.evaluate(points, (0, 1))])

    def pulled_back(self, bm, ref, alpha=(0, 0)):
        """Physical derivative D^alpha of the field at F_K(ref)"""
        from reference_map.services import ReferenceMapService

        return self.evaluate(ReferenceMapService.forward_many(bm, ref), alpha)

    def __sub__(self, other):
        return DifferenceField(self, other)


class DifferenceField(ScalarField):
    def __init__(self, left, right):
        self.left = left
        self.right = right
        self.name = f'{left.name}-{right.name}'
        self.m_max = min(left.m_max, right.m_max)
        self.exact = left.exact and right.exact

    def _evaluate(self, points, alpha):
        return self.left.evaluate(points, alpha) - self.right.evaluate(points, alpha)

    def pulled_back(self, bm, ref, alpha=(0, 0)):
        self.check_order(alpha)
        return self.left.pulled_back(bm, ref, alpha) - self.right.pulled_back(bm, ref, alpha)


class PolynomialField(ScalarField):
    """sum c[i, j] X^i Y^j with X = (x - x0)/lx and Y = (y - y0)/ly"""

    def __init__(self, coeffs, shift=(0.0, 0.0), scale=(1.0, 1.0), name='poly'):
        self.coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
        self.shift = tuple(float(v) for v in shift)
        self.scale = tuple(float(v) for v in scale)
        self.name = name

    @classmethod
    def from_roots_in_x(cls, roots, name):
        return cls(P.polyfromroots(roots)[:, None], name=name)

    @classmethod
    def from_terms(cls, terms, name='poly'):
        """Build from (i, j, c) triples meaning c x^i y^j"""
        degree_x = max(i for i, _, _ in terms)
        degree_y = max(j for _, j, _ in terms)
        coeffs = np.zeros((degree_x + 1, degree_y + 1))
        for i, j, c in terms:
            coeffs[i, j] += c
        return cls(coeffs, name=name)

    @classmethod
    def constant(cls, value):
        return cls([[value]], name=f'const:{value}')

    @property
    def degree(self):
        nonzero = np.argwhere(self.coeffs != 0.0)
        return int(nonzero.sum(axis=1).max()) if len(nonzero) else 0

    def _evaluate(self, points, alpha):
        c = self.coeffs
        if alpha[0]:
            c = P.polyder(c, alpha[0], scl=1.0 / self.scale[0], axis=0)
        if alpha[1]:
            c = P.polyder(c, alpha[1], scl=1.0 / self.scale[1], axis=1)
        X = (points[:, 0] - self.shift[0]) / self.scale[0]
        Y = (points[:, 1] - self.shift[1]) / self.scale[1]
        return P.polyval2d(X, Y, c)


class TrigField(ScalarField):
    """sin(pi (x - x0)/L) sin(pi (y - y0)/L)"""

    def __init__(self, shift=(0.0, 0.0), length=1.0, name='trig'):
        self.shift = tuple(float(v) for v in shift)
        self.length = float(length)
        self.name = name

    def _evaluate(self, points, alpha):
        w = math.pi / self.length
        tx = w * (points[:, 0] - self.shift[0]) + alpha[0] * math.pi / 2
        ty = w * (points[:, 1] - self.shift[1]) + alpha[1] * math.pi / 2
        return w ** sum(alpha) * np.sin(tx) * np.sin(ty)


def cex1_field():
    return PolynomialField.from_roots_in_x(CEX1_ROOTS, name='cex1')


def cex2_field():
    return PolynomialField.from_roots_in_x(CEX2_ROOTS, name='cex2')


def parse_poly(spec):
    """Parse 'i:j:c,i:j:c,...' into a PolynomialField"""
    terms = []
    for chunk in spec.split(','):
        parts = chunk.strip().split(':')
        if len(parts) != 3:
            raise ParseError('Polynomial terms must look like i:j:c', term=chunk)
        try:
            i, j, c = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError('Polynomial term has a malformed number', term=chunk)
        if i < 0 or j < 0:
            raise ParseError('Polynomial exponents must be non-negative', term=chunk)
        terms.append((i, j, c))
    return PolynomialField.from_terms(terms, name=f'poly:{spec}')


def bounding_box_trig(element):
    coords = element.coords
    lower = coords.min(axis=0)
    length = float((coords.max(axis=0) - lower).max())
    return TrigField(shift=lower, length=length, name='trig-box')


FIELDS = {
    'cex1': lambda element: cex1_field(),
    'cex2': lambda element: cex2_field(),
    'trig': lambda element: TrigField(),
}


def resolve_field(spec, element=None):
    """Field named on the command line; `element` is needed by trig-box only"""
    if isinstance(spec, ScalarField):
        return spec
    if spec.startswith('poly:'):
        return parse_poly(spec[len('poly:'):])
    if spec == 'trig-box':
        if element is None:
            raise UsageError('trig-box needs an element to size its bounding box')
        return bounding_box_trig(element)
    if spec not in FIELDS:
        raise UsageError(f'Unknown field {spec!r}', choices=sorted(FIELDS) + ['trig-box', 'poly:i:j:c,...'])
    return FIELDS[spec](element)
