from dataclasses import dataclass

import numpy as np
from django.db import models


class RuleKind(models.TextChoices):
    SQUARE_TENSOR = 'SQUARE_TENSOR', 'Tensor Gauss rule on the unit square'
    TRIANGLE = 'TRIANGLE', 'Collapsed Gauss rule on the unit triangle'
    SEGMENT = 'SEGMENT', 'Gauss rule on [0, 1]'


class NormStatus(models.TextChoices):
    CONVERGED = 'CONVERGED', 'Refinement stable'
    UNCONVERGED = 'UNCONVERGED', 'Consecutive orders disagree'


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    kind: str
    order: int
    points: np.ndarray
    weights: np.ndarray

    @property
    def measure(self):
        return float(self.weights.sum())

    def __len__(self):
        return len(self.weights)

    def integrate(self, values):
        return float(np.dot(self.weights, values))


@dataclass(frozen=True)
class NormResult:
    value: float
    p: float
    order: int
    error_estimate: float
    converged: bool
    near_singular: bool = False

    @property
    def status(self):
        return NormStatus.CONVERGED if self.converged else NormStatus.UNCONVERGED

    def as_dict(self):
        payload = {
            'value': self.value,
            'p': self.p,
            'order': self.order,
            'error_estimate': self.error_estimate,
            'converged': self.converged,
            'status': str(self.status),
        }
        if self.near_singular:
            payload['near_singular'] = True
        return payload


@dataclass(frozen=True)
class EstphiCertificate:
    node: tuple
    interior: bool
    lhs: float
    rhs_scale: float
    ratio: float
    flags_hold: bool
    converged: bool

    def as_dict(self):
        return {
            'node': list(self.node),
            'interior': self.interior,
            'lhs': self.lhs,
            'rhs_scale': self.rhs_scale,
            'ratio': self.ratio,
            'flags_hold': self.flags_hold,
            'converged': self.converged,
        }


@dataclass(frozen=True)
class TraceCheck:
    lhs: float
    rhs: float
    ok: bool

    def as_dict(self):
        return {'lhs': self.lhs, 'rhs': self.rhs, 'ok': self.ok}
