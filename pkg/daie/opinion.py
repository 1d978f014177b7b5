from dataclasses import dataclass
from typing import Dict

from .errors import DegenerateBaseRate, InvalidOpinion, NegativeEvidence


__all__ = ['Opinion', 'from_evidence', 'expected_probability', 'complement', 'multiply', 'comultiply', 'discount',
           'trust_chain', 'fuse', 'confidence_weight', 'vacuous', 'dogmatic']


TOLERANCE = 1e-9
DEFAULT_WINDOW = 2.0
DEFAULT_BASE_RATE = 0.5


def _clip(x: float) -> float:
    return min(1.0, max(0.0, x))


@dataclass(frozen=True)
class Opinion:
    """Binomial subjective opinion: belief, disbelief and uncertainty masses summing to 1, plus a base rate."""
    b: float
    d: float
    u: float
    a: float = DEFAULT_BASE_RATE

    def __post_init__(self):
        for name in ('b', 'd', 'u', 'a'):
            value = float(getattr(self, name))

            if value < -TOLERANCE or value > 1 + TOLERANCE:
                raise InvalidOpinion(f'{name}={value} outside [0, 1]')

            object.__setattr__(self, name, _clip(value))

        if abs(self.b + self.d + self.u - 1) > TOLERANCE:
            raise InvalidOpinion(f'b + d + u = {self.b + self.d + self.u:.12g}, not 1')

    def as_dict(self, decimals: int = 6) -> Dict[str, float]:
        return dict(b=round(self.b, decimals), d=round(self.d, decimals), u=round(self.u, decimals),
                    a=round(self.a, decimals))

    def __str__(self):
        return f'({self.b:.3f}, {self.d:.3f}, {self.u:.3f} | a={self.a:.2f})'


def vacuous(a: float = DEFAULT_BASE_RATE) -> Opinion:
    return Opinion(0.0, 0.0, 1.0, a)


def dogmatic(p: float, a: float = DEFAULT_BASE_RATE) -> Opinion:
    return Opinion(p, 1.0 - p, 0.0, a)


def from_evidence(r: float, s: float, window: float = DEFAULT_WINDOW, base_rate: float = DEFAULT_BASE_RATE) -> Opinion:
    if r < 0 or s < 0:
        raise NegativeEvidence(f'Evidence counts must be nonnegative, got r={r}, s={s}')

    total = r + s + window

    return Opinion(r / total, s / total, window / total, base_rate)


def expected_probability(x: Opinion) -> float:
    return _clip(x.b + x.a * x.u)


def complement(x: Opinion) -> Opinion:
    return Opinion(x.d, x.b, x.u, 1.0 - x.a)


def multiply(x: Opinion, y: Opinion) -> Opinion:
    """Conjunction (normal product)."""
    denom = 1.0 - x.a * y.a

    if denom <= 0:
        raise DegenerateBaseRate('Product undefined when both base rates are 1')

    b = x.b * y.b + ((1 - x.a) * y.a * x.b * y.u + x.a * (1 - y.a) * x.u * y.b) / denom
    d = x.d + y.d - x.d * y.d
    u = x.u * y.u + ((1 - y.a) * x.b * y.u + (1 - x.a) * x.u * y.b) / denom

    return _renormalized(b, d, u, x.a * y.a)


def comultiply(x: Opinion, y: Opinion) -> Opinion:
    """Disjunction (normal coproduct), dual of `multiply`."""
    a = x.a + y.a - x.a * y.a

    if a <= 0:
        raise DegenerateBaseRate('Coproduct undefined when both base rates are 0')

    b = x.b + y.b - x.b * y.b
    d = x.d * y.d + (x.a * (1 - y.a) * x.d * y.u + (1 - x.a) * y.a * x.u * y.d) / a
    u = x.u * y.u + (y.a * x.d * y.u + x.a * x.u * y.d) / a

    return _renormalized(b, d, u, a)


def discount(trust: Opinion, x: Opinion) -> Opinion:
    return _renormalized(trust.b * x.b, trust.b * x.d, trust.d + trust.u + trust.b * x.u, x.a)


def trust_chain(t1: Opinion, t2: Opinion) -> Opinion:
    """Trust in a source reached through an intermediary: discount(t1, discount(t2, x)) == discount(chain, x)."""
    return discount(t1, t2)


def fuse(x: Opinion, y: Opinion) -> Opinion:
    """Cumulative fusion of two independent opinions about the same proposition."""
    if x.u <= TOLERANCE and y.u <= TOLERANCE:
        return _renormalized((x.b + y.b) / 2, (x.d + y.d) / 2, 0.0, (x.a + y.a) / 2)

    kappa = x.u + y.u - x.u * y.u
    b = (x.b * y.u + y.b * x.u) / kappa
    d = (x.d * y.u + y.d * x.u) / kappa
    u = (x.u * y.u) / kappa

    denom = x.u + y.u - 2 * x.u * y.u

    if denom <= TOLERANCE:
        a = (x.a + y.a) / 2
    else:
        a = (x.a * y.u + y.a * x.u - (x.a + y.a) * x.u * y.u) / denom

    return _renormalized(b, d, u, a)


def confidence_weight(x: Opinion) -> float:
    return 1.0 - x.u


def _renormalized(b: float, d: float, u: float, a: float) -> Opinion:
    b, d, u = _clip(b), _clip(d), _clip(u)
    total = b + d + u

    return Opinion(b / total, d / total, u / total, _clip(a))
