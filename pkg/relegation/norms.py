r"""Weighted Fourier norms (majorant form) and the Cauchy-type bounds built on them.

The weighted Fourier norm of :math:`g = \sum_k g_k e^{ik\cdot q}` is replaced by
the computable majorant

.. math::

    \|g\|_{\rho,\sigma,R} \le \sum_k \Big(\sum |c|\,\rho^{|m_p|} R^{|m_z|+|m_w|}\Big) e^{|k|\sigma},

which over-estimates the sup-norm version, so every bound keeps its direction.
"""

import math
from dataclasses import dataclass
from typing import Tuple

from .errors import ParameterError
from .series_core import PoissonSeries, magnitude


@dataclass(frozen=True)
class DomainParams:
    """Analyticity radii (rho, sigma, R) of the domain D_{rho,sigma,R}."""

    rho: float
    sigma: float
    R: float

    def __post_init__(self):
        for name in ("rho", "sigma", "R"):
            value = getattr(self, name)
            if not value > 0:
                raise ParameterError(f"domain radius {name} must be positive, got {value}")

    def scaled(self, fraction: float) -> "DomainParams":
        """The restricted domain fraction * (rho, sigma, R)."""
        return DomainParams(fraction * self.rho, fraction * self.sigma, fraction * self.R)

    def doubled_sigma(self) -> "DomainParams":
        """The domain D_{rho, 2 sigma, R} on which f0 and H1 are given."""
        return DomainParams(self.rho, 2.0 * self.sigma, self.R)

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.rho, self.sigma, self.R)


@dataclass(frozen=True)
class Restriction:
    """A restriction fraction d in (0, 1]."""

    fraction: float

    def __post_init__(self):
        if not 0 < self.fraction <= 1:
            raise ParameterError(f"restriction fraction must lie in (0, 1], got {self.fraction}")


def _fraction(value) -> float:
    return value.fraction if isinstance(value, Restriction) else float(value)


def weighted_norm(g: PoissonSeries, dp: DomainParams) -> float:
    """Majorant of the weighted Fourier norm of g on D_{rho,sigma,R}."""
    total = 0.0
    for key, c in g.items():
        total += (
            magnitude(c)
            * dp.rho ** sum(key.mp)
            * dp.R ** (sum(key.mz) + sum(key.mw))
            * math.exp(key.trig_degree * dp.sigma)
        )
    return total


def sup_norm_estimate(g: PoissonSeries, dp: DomainParams) -> float:
    """Majorant used in place of the sup norm |g|_{rho,sigma,R}."""
    return weighted_norm(g, dp)


def xi(dp: DomainParams) -> float:
    """Xi = 2 / (e rho sigma) + 1 / R^2."""
    return 2.0 / (math.e * dp.rho * dp.sigma) + 1.0 / dp.R ** 2


def cauchy_bounds(norm_g: float, dp: DomainParams, d) -> Tuple[float, float, float]:
    """Bounds for the p, q and z derivatives on the domain restricted by d.

    Returns:
        (||g|| / (d rho), ||g|| / (e d sigma), ||g|| / (d R)).
    """
    d = _fraction(d)
    if not 0 < d < 1:
        raise ParameterError(f"Cauchy restriction d must satisfy 0 < d < 1, got {d}")
    return (norm_g / (d * dp.rho), norm_g / (math.e * d * dp.sigma), norm_g / (d * dp.R))


def bracket_bound(norm_g: float, norm_gp: float, d, dprime, delta, dp: DomainParams) -> float:
    """Xi / ((d + delta) delta) * ||g|| ||g'||.

    ``norm_g`` is taken on the domain 1 - d - d', ``norm_gp`` on 1 - d', and the
    bound holds on 1 - d - d' - delta.
    """
    d, dprime, delta = _fraction(d), float(dprime if not isinstance(dprime, Restriction) else dprime.fraction), _fraction(delta)
    if not (d > 0 and dprime >= 0 and delta > 0 and d + dprime + delta < 1):
        raise ParameterError(
            f"bracket bound needs d > 0, d' >= 0, delta > 0 and d + d' + delta < 1, "
            f"got d={d}, d'={dprime}, delta={delta}"
        )
    return xi(dp) / ((d + delta) * delta) * norm_g * norm_gp


def multi_bracket_bound(norm_X: float, norm_g: float, j: int, d, dp: DomainParams) -> float:
    """(j! / e^2) (e^2 Xi / d^2)^j ||X||^j ||g|| for the j-fold Lie derivative."""
    d = _fraction(d)
    if j < 1:
        raise ParameterError(f"bracket multiplicity j must be at least 1, got {j}")
    if not 0 < d < 1:
        raise ParameterError(f"restriction d must satisfy 0 < d < 1, got {d}")
    return math.factorial(j) / math.e ** 2 * (math.e ** 2 * xi(dp) / d ** 2) ** j * norm_X ** j * norm_g


def lie_transform_condition(b: float, G: float, d, dp: DomainParams) -> Tuple[bool, float]:
    """e^2 Xi G / d^2 + b <= 1/2 for generating sequences with ||X_s|| <= b^{s-1} G / s.

    Returns:
        (holds, margin) where margin is the left side divided by 1/2.
    """
    d = _fraction(d)
    if not 0 < d < 0.5:
        raise ParameterError(f"restriction d must satisfy 0 < d < 1/2, got {d}")
    lhs = math.e ** 2 * xi(dp) * G / d ** 2 + b
    return lhs <= 0.5, lhs / 0.5
