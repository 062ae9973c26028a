from dataclasses import asdict, dataclass
from dataclasses import field as dataclass_field

import pandas as pd
from django.db import models

CSV_COLUMNS = (
    'param', 'h', 'err_w1p', 'err_lp', 'semnorm_u', 'ratio_seminorm', 'ratio_lp', 'aux1', 'aux2', 'converged'
)


class Family(models.TextChoices):
    CEX1 = 'CEX1', 'K(1, s, s, 2s), 0 < s < 1/2'
    CEX2 = 'CEX2', 'K(1, 1, s, s), 1/2 < s <= 5/8'
    TRIDEGEN = 'TRIDEGEN', '(0,0), (1,0), (s,1-s), (0,1-s), 0 < s < 1'
    RANDOM_CONVEX = 'RANDOM_CONVEX', 'Seeded random convex quad'
    USER = 'USER', 'Quads read from a file'


class Verdict(models.TextChoices):
    DIVERGES = 'DIVERGES', 'Constant grows along the grid'
    BOUNDED = 'BOUNDED', 'Constant stays bounded along the grid'
    RATE_OK = 'RATE_OK', 'Fitted rates match the expected orders'
    REPRODUCED = 'REPRODUCED', 'Interpolation error vanishes at every level'
    SLOPE_MISMATCH = 'SLOPE_MISMATCH', 'Fitted slope outside tolerance'
    INCONCLUSIVE = 'INCONCLUSIVE', 'Fit residual too large to decide'


class Requirement(models.TextChoices):
    RDP = 'RDP', 'Regular decomposition property'
    MAC_MIN = 'mac', 'Minimum angle condition'
    DAC = 'DAC', 'Double angle condition'


@dataclass(frozen=True)
class SweepSpec:
    """Resolved parameters of a study, echoed into every output"""

    study: str
    family: str = None
    grid: tuple = ()
    k: int = 2
    p: float = 2.0
    field: str = None
    seed: int = None
    order: int = None
    window: int = None
    jobs: int = 1
    extra: dict = dataclass_field(default_factory=dict)

    def as_dict(self):
        payload = asdict(self)
        payload['grid'] = list(self.grid)
        extra = payload.pop('extra')
        return {**payload, **extra}


@dataclass(frozen=True)
class SweepRow:
    param: float
    h: float
    err_w1p: float
    err_lp: float
    semnorm_u: float
    ratio_seminorm: float
    ratio_lp: float
    aux1: float = 0.0
    aux2: float = 0.0
    converged: bool = True

    def replace(self, **changes):
        return SweepRow(**{**asdict(self), **changes})


@dataclass(frozen=True)
class RateEstimate:
    """Least-squares slope of log(y) against log(x) over the finest `window` points"""

    slope: float
    intercept: float
    residual: float
    window: int
    against: str = 'h'

    def as_dict(self):
        return asdict(self)


@dataclass
class StudyResult:
    study: str
    k: int
    p: float
    rows: list
    verdict: str
    expected: tuple = ()
    rates: dict = dataclass_field(default_factory=dict)
    details: dict = dataclass_field(default_factory=dict)
    children: list = dataclass_field(default_factory=list)

    @property
    def primary_rate(self):
        return next(iter(self.rates.values()), None)

    @property
    def failed(self):
        """The study ran but the mathematics disagreed with the expected verdict"""
        if self.children:
            return any(child.failed for child in self.children)
        if not self.expected or self.verdict == Verdict.INCONCLUSIVE:
            return False
        return self.verdict not in self.expected

    def summary(self):
        rate = self.primary_rate
        payload = {
            'study': self.study,
            'k': self.k,
            'p': self.p,
            'slope': rate.slope if rate else None,
            'residual': rate.residual if rate else None,
            'verdict': str(self.verdict),
        }
        if self.rates:
            payload['rates'] = {name: estimate.as_dict() for name, estimate in self.rates.items()}
        if self.details:
            payload['details'] = self.details
        if self.children:
            payload['sweeps'] = [child.summary() for child in self.children]
        return payload

    def to_frame(self):
        if self.children:
            frames = [child.to_frame().assign(sweep=child.study) for child in self.children]
            frame = pd.concat(frames, ignore_index=True)
            return frame[['sweep', *CSV_COLUMNS]]
        return pd.DataFrame([asdict(row) for row in self.rows], columns=list(CSV_COLUMNS))
