import math

import pytest

from conftest import random_series
from relegation.errors import ParameterError
from relegation.norms import (
    DomainParams,
    Restriction,
    bracket_bound,
    cauchy_bounds,
    lie_transform_condition,
    multi_bracket_bound,
    sup_norm_estimate,
    weighted_norm,
    xi,
)
from relegation.series_core import PoissonSeries, derivative, poisson_bracket


def _domain(rng):
    return DomainParams(*rng.uniform(0.5, 2.0, 3))


def test_weighted_norm_example():
    g = PoissonSeries.monomial(1, 1, 2, k=[1], mp=[2], mz=[1])
    dp = DomainParams(0.5, 1.0, 3.0)
    assert weighted_norm(g, dp) == pytest.approx(2 * 0.25 * 3 * math.e)
    assert sup_norm_estimate(g, dp) == weighted_norm(g, dp)
    assert weighted_norm(PoissonSeries.zero(1, 1), dp) == 0


def test_domain_params_validation():
    with pytest.raises(ParameterError):
        DomainParams(0.0, 1.0, 1.0)
    with pytest.raises(ParameterError):
        Restriction(1.5)
    dp = DomainParams(1.0, 2.0, 3.0)
    assert dp.scaled(0.5).as_tuple() == (0.5, 1.0, 1.5)
    assert dp.doubled_sigma().sigma == 4.0
    assert xi(DomainParams(1.0, 1.0, 1.0)) == pytest.approx(2 / math.e + 1)


def test_cauchy_bounds_dominate_derivatives(rng):
    violations = 0
    for _ in range(100):
        n1, n2 = int(rng.integers(1, 3)), int(rng.integers(0, 3))
        g = random_series(rng, n1, n2, terms=5, max_k=3, max_degree=4)
        dp = _domain(rng)
        d = float(rng.uniform(0.05, 0.9))
        bp, bq, bz = cauchy_bounds(weighted_norm(g, dp), dp, d)
        inner = dp.scaled(1 - d)
        for j in range(n1):
            violations += weighted_norm(derivative(g, "p", j), inner) > bp * (1 + 1e-12)
            violations += weighted_norm(derivative(g, "q", j), inner) > bq * (1 + 1e-12)
        for j in range(n2):
            violations += weighted_norm(derivative(g, "z", j), inner) > bz * (1 + 1e-12)
            violations += weighted_norm(derivative(g, "w", j), inner) > bz * (1 + 1e-12)
    assert violations == 0


def test_bracket_bound_dominates(rng):
    for _ in range(100):
        n1, n2 = int(rng.integers(1, 3)), int(rng.integers(0, 3))
        g = random_series(rng, n1, n2, terms=4, max_k=2, max_degree=3)
        gp = random_series(rng, n1, n2, terms=4, max_k=2, max_degree=3)
        dp = _domain(rng)
        d, dprime, delta = rng.uniform(0.02, 0.3, 3)
        bound = bracket_bound(
            weighted_norm(g, dp.scaled(1 - d - dprime)),
            weighted_norm(gp, dp.scaled(1 - dprime)),
            d, dprime, delta, dp,
        )
        measured = weighted_norm(poisson_bracket(g, gp), dp.scaled(1 - d - dprime - delta))
        assert measured <= bound * (1 + 1e-12)


def test_multi_bracket_bound_dominates(rng):
    for _ in range(100):
        n1, n2 = int(rng.integers(1, 3)), int(rng.integers(0, 2))
        X = random_series(rng, n1, n2, terms=3, max_k=2, max_degree=2)
        g = random_series(rng, n1, n2, terms=3, max_k=2, max_degree=2)
        dp = _domain(rng)
        d = float(rng.uniform(0.1, 0.9))
        inner = dp.scaled(1 - d)
        nested = g
        for j in range(1, 6):
            nested = poisson_bracket(X, nested)
            bound = multi_bracket_bound(weighted_norm(X, dp), weighted_norm(g, dp), j, d, dp)
            assert weighted_norm(nested, inner) <= bound * (1 + 1e-12)


def test_parameter_ranges():
    dp = DomainParams(1.0, 1.0, 1.0)
    with pytest.raises(ParameterError):
        cauchy_bounds(1.0, dp, 1.0)
    with pytest.raises(ParameterError):
        bracket_bound(1.0, 1.0, 0.5, 0.3, 0.3, dp)
    with pytest.raises(ParameterError):
        multi_bracket_bound(1.0, 1.0, 0, 0.5, dp)
    with pytest.raises(ParameterError):
        lie_transform_condition(0.1, 1.0, 0.5, dp)
    assert cauchy_bounds(1.0, dp, Restriction(0.5)) == cauchy_bounds(1.0, dp, 0.5)


def test_lie_transform_condition():
    dp = DomainParams(1.0, 1.0, 1.0)
    holds, margin = lie_transform_condition(0.1, 1e-4, 0.25, dp)
    expected = math.e ** 2 * xi(dp) * 1e-4 / 0.25 ** 2 + 0.1
    assert holds
    assert margin == pytest.approx(expected / 0.5)
    assert not lie_transform_condition(0.45, 1e-2, 0.25, dp)[0]
