import os
import sys
from fractions import Fraction

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from relegation.norms import DomainParams  # noqa: E402
from relegation.relegation_engine import HamiltonianSpec  # noqa: E402
from relegation.resonance import FrequencyVector  # noqa: E402
from relegation.series_core import PoissonSeries, add  # noqa: E402

FIXTURES = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "fixtures")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long running acceptance checks")


def fixture_path(name):
    return os.path.join(FIXTURES, name)


def random_series(rng, n1, n2, terms=4, max_k=2, max_degree=3, exact=False):
    """A sparse random series with |k| <= max_k and total degree <= max_degree."""
    data = {}
    for _ in range(terms):
        k = rng.integers(-max_k, max_k + 1, n1)
        while np.abs(k).sum() > max_k:
            k = rng.integers(-max_k, max_k + 1, n1)
        exps = np.zeros(n1 + 2 * n2, dtype=int)
        for _ in range(rng.integers(0, max_degree + 1)):
            if len(exps):
                exps[rng.integers(0, len(exps))] += 1
        if exact:
            value = (Fraction(int(rng.integers(-9, 10)), int(rng.integers(1, 5))),
                     Fraction(int(rng.integers(-9, 10)), int(rng.integers(1, 5))))
        else:
            value = complex(rng.normal(), rng.normal())
        key = (tuple(k), tuple(exps[:n1]), tuple(exps[n1:n1 + n2]), tuple(exps[n1 + n2:]))
        data[key] = value
    return PoissonSeries(n1, n2, data, exact)


def cosines(n1, n2, harmonics, exact=False):
    """sum_k a_k cos(k.q) from a mapping k -> a_k."""
    total = PoissonSeries.zero(n1, n2, exact)
    for k, amplitude in harmonics.items():
        total = add(total, PoissonSeries.cosine(n1, n2, k, amplitude, exact))
    return total


def pendulum_spec(mu=0.1, epsilon=0.01, K=2, L=2, r=3, exact=False, **kwargs):
    """H = p + mu p^2/2 + epsilon (cos q + cos 2q / 10)."""
    f0 = PoissonSeries.monomial(1, 0, Fraction(1, 2), mp=[2], exact=exact)
    H1 = cosines(1, 0, {(1,): 1, (2,): Fraction(1, 10)}, exact)
    if exact:
        mu, epsilon = Fraction(mu).limit_denominator(10 ** 6), Fraction(epsilon).limit_denominator(10 ** 6)
    return HamiltonianSpec(
        omega=FrequencyVector.rational([1]),
        f0=f0,
        mu=mu,
        H1=H1,
        epsilon=epsilon,
        dp=DomainParams(1.0, 1.0, 1.0),
        K=K,
        Kprime=0,
        L=L,
        r=r,
        **kwargs,
    )


def resonant_spec(L=2, r=3, n2=1, exact=False):
    """omega = (1, -1), f0 = cos(q1 + q2), optional |z|^2 cos q1 coupling."""
    f0 = cosines(2, n2, {(1, 1): 1}, exact)
    H1 = cosines(2, n2, {(1, 0): 1, (1, -1): Fraction(1, 2)}, exact)
    if n2:
        coupling = PoissonSeries(
            2, n2,
            {((1, 0), (0, 0), (1,), (1,)): (0, Fraction(-1, 4)),
             ((-1, 0), (0, 0), (1,), (1,)): (0, Fraction(-1, 4))},
            exact,
        )
        H1 = add(H1, coupling)
    return HamiltonianSpec(
        omega=FrequencyVector.rational([1, -1]),
        f0=f0,
        mu=Fraction(1, 20) if exact else 0.05,
        H1=H1,
        epsilon=Fraction(1, 100) if exact else 0.01,
        dp=DomainParams(1.0, 1.0, 1.0),
        K=2,
        Kprime=2,
        L=L,
        r=r,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def pendulum():
    return pendulum_spec()


@pytest.fixture
def certified_pendulum():
    return pendulum_spec(mu=1e-5, epsilon=1e-13, K=5, L=2, r=4)
