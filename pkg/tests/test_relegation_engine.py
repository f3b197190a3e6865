import logging
from dataclasses import replace
from fractions import Fraction

import pytest

from conftest import pendulum_spec, random_series, resonant_spec
from relegation.errors import ParameterError, ResourceError, SequencingError, SmallDivisorError, StructuralError
from relegation.norms import DomainParams
from relegation.relegation_engine import (
    FORWARD,
    INVERSE,
    HamiltonianSpec,
    NormalFormResult,
    assemble_psi,
    forward_pieces,
    homological_residual,
    homological_solve,
    lie_apply,
    lie_apply_graded,
    relegate,
    relegation_step,
    residual_series,
    split_perturbation,
)
from relegation.resonance import FrequencyVector, resonance_module
from relegation.series_core import PoissonSeries, dumps, poisson_bracket, scale, sub
from relegation.verification import oracle_assemble_psi, oracle_inverse_lie_apply, oracle_lie_apply


def _suite():
    return [
        pendulum_spec(r=4, L=3),
        resonant_spec(L=2, r=3, n2=1),
        resonant_spec(L=1, r=3, n2=0),
    ]


def test_homological_solution_example():
    w = FrequencyVector.rational([1])
    M = resonance_module(w)
    psi = PoissonSeries.monomial(1, 0, 1, k=[1])
    sol = homological_solve(psi, w, M)
    assert sol.X == PoissonSeries.monomial(1, 0, -1j, k=[1])
    assert sol.Z.is_zero


@pytest.mark.parametrize("omega", [[1, -1], [1, 2], [2, 3]])
def test_homological_exactness(rng, omega):
    w = FrequencyVector.rational(omega)
    M = resonance_module(w)
    h0 = PoissonSeries.frequency_hamiltonian([float(v) for v in w.omega])
    for _ in range(100):
        psi = random_series(rng, 2, 0, terms=5, max_k=3)
        sol = homological_solve(psi, w, M)
        assert homological_residual(sol, psi, h0) <= 1e-13 * max(1.0, psi.max_abs())
        assert all(M.contains(k) for k in sol.Z.harmonics())
        assert not any(M.contains(k) for k in sol.X.harmonics())


def test_homological_exactness_over_rationals(rng):
    w = FrequencyVector.rational(["1/2", "-3/2"])
    M = resonance_module(w)
    h0 = PoissonSeries.frequency_hamiltonian(w.omega, exact=True)
    for _ in range(20):
        psi = random_series(rng, 2, 0, terms=5, max_k=3, exact=True)
        sol = homological_solve(psi, w, M)
        assert sub(sub(sol.Z, poisson_bracket(h0, sol.X)), psi).is_zero


def test_small_divisor_floor():
    w = FrequencyVector.floating([1.0, 1.0 + 1e-13], [], zero_tol=1e-15)
    psi = PoissonSeries.monomial(2, 0, 1, k=[1, -1])
    with pytest.raises(SmallDivisorError) as info:
        homological_solve(psi, w, resonance_module(w), 1e-12)
    assert info.value.k == (1, -1)


def test_relegation_step_leftover():
    spec = pendulum_spec(L=2)
    step = relegation_step(scale(spec.H1, spec.epsilon), spec.f0, spec.mu, 2, spec.omega, spec.module)
    assert len(step.parts) == 3
    assert step.leftover == poisson_bracket(spec.mu_f0, step.parts[-1].X)
    with pytest.raises(ParameterError):
        relegation_step(spec.H1, spec.f0, spec.mu, -1, spec.omega, spec.module)


@pytest.mark.parametrize("spec", _suite())
def test_relegation_chain_identities(spec):
    result = relegate(spec)
    assert result.order == spec.r
    assert len(result.chain_residuals) == spec.r * (spec.L + 1)
    assert max(result.chain_residuals.values()) <= 1e-12
    for Z in result.Z[1:]:
        assert poisson_bracket(Z, spec.h0).is_zero
    assert result.class_overflow == []
    assert result.transform_defect <= 1e-12
    for s in range(1, spec.r + 1):
        assert len(result.X_parts[s - 1]) == spec.L + 1


def test_relegation_is_exact_over_rationals():
    spec = pendulum_spec(r=3, L=2, exact=True)
    result = relegate(spec)
    assert all(value == 0 for value in result.chain_residuals.values())
    assert result.transform_defect == 0
    floating = relegate(pendulum_spec(r=3, L=2))
    for exact_X, float_X in zip(result.X, floating.X):
        as_float = PoissonSeries(1, 0, {key: complex(float(c.x), float(c.y)) for key, c in exact_X.items()})
        assert as_float.approx_equal(float_X, rtol=1e-12, atol=1e-15)


def test_class_bookkeeping_is_recorded():
    spec = resonant_spec(L=2, r=2, n2=0)
    result = relegate(spec)
    assert "psi_1" in result.class_tags
    assert result.class_tags["X_1,0"].K2 <= spec.K
    assert result.class_tags["X_1,2"].K2 <= spec.K + 2 * spec.Kprime
    assert not relegate(spec, track_classes=False).class_tags


def test_relegation_step_reports_link_residuals():
    spec = pendulum_spec(L=3)
    step = relegation_step(scale(spec.H1, spec.epsilon), spec.f0, spec.mu, 3, spec.omega, spec.module)
    assert len(step.residuals) == 4
    assert max(step.residuals) <= 1e-12
    exact = pendulum_spec(L=3, exact=True)
    step = relegation_step(scale(exact.H1, exact.epsilon), exact.f0, exact.mu, 3, exact.omega, exact.module)
    assert step.residuals == (0, 0, 0, 0)


def test_relegate_keeps_the_step_residuals(pendulum):
    result = relegate(pendulum)
    step = relegation_step(result.psi[1], pendulum.f0, pendulum.mu, pendulum.L, pendulum.omega, pendulum.module)
    assert [result.chain_residuals[(2, j)] for j in range(pendulum.L + 1)] == list(step.residuals)


def test_class_bookkeeping_in_four_actions():
    # omega = (1, -1, 1, 2): cos 13 q1 is 7 steps from the resonance module
    spec = HamiltonianSpec(
        omega=FrequencyVector.rational([1, -1, 1, 2]),
        f0=PoissonSeries.cosine(4, 0, [1, 1, 0, 0]),
        mu=1e-3,
        H1=PoissonSeries.cosine(4, 0, [13, 0, 0, 0]),
        epsilon=1e-6,
        dp=DomainParams(1.0, 1.0, 1.0),
        K=13,
        Kprime=2,
        L=1,
        r=2,
    )
    result = relegate(spec)
    assert result.order == 2
    assert result.class_tags["psi_2"] == (7, 13)
    assert result.class_tags["X_2,0"] == (7, 13)
    assert result.class_tags["X_2,1"].K1 <= 9
    assert result.class_overflow == []


def test_class_bookkeeping_over_budget_is_logged(caplog):
    spec = HamiltonianSpec(
        omega=FrequencyVector.floating([1.0, -1.0], [[1, 1]]),
        f0=PoissonSeries.cosine(2, 0, [1, 1]),
        mu=0.1,
        H1=PoissonSeries.cosine(2, 0, [1, 0]),
        epsilon=0.01,
        dp=DomainParams(1.0, 1.0, 1.0),
        K=2,
        Kprime=2,
        L=1,
        r=1,
        enumeration_budget=10,
    )
    with caplog.at_level(logging.WARNING):
        result = relegate(spec)
    assert result.order == 1
    assert "psi_1" not in result.class_tags
    assert any("class of psi_1 not computed" in message for message in result.class_overflow)
    assert "class of psi_1" in caplog.text


def test_lie_transform_round_trip(rng):
    for _ in range(5):
        X = [random_series(rng, 2, 1, terms=2, max_k=1, max_degree=2, exact=True) for _ in range(4)]
        g = random_series(rng, 2, 1, terms=3, max_k=1, max_degree=2, exact=True)
        forward = forward_pieces(X, g, 4)
        back = lie_apply_graded(X, forward, 4, INVERSE)
        assert back[0] == g
        assert all(piece.is_zero for piece in back[1:])


def test_lie_transform_round_trip_floating(rng):
    X = [random_series(rng, 1, 1, terms=2, max_k=1, max_degree=2) for _ in range(3)]
    g = random_series(rng, 1, 1, terms=3, max_k=1, max_degree=2)
    forward = lie_apply_graded(X, [g], 3, FORWARD)
    back = lie_apply_graded(X, forward, 3, INVERSE)
    assert back[0].approx_equal(g)
    scale_ = max(piece.max_abs() for piece in forward)
    assert all(piece.max_abs() <= 1e-12 * scale_ for piece in back[1:])


@pytest.mark.parametrize("order", [1, 2, 3, 4])
def test_engine_matches_naive_expansion(rng, order):
    X = [random_series(rng, 2, 1, terms=2, max_k=1, max_degree=2) for _ in range(order)]
    g = random_series(rng, 2, 1, terms=3, max_k=1, max_degree=2)
    assert lie_apply(X, g, order).approx_equal(oracle_lie_apply(X, g, order), rtol=1e-12)
    assert lie_apply(X, g, order, INVERSE).approx_equal(oracle_inverse_lie_apply(X, g, order), rtol=1e-12)


def test_first_order_transform(rng):
    X = [random_series(rng, 1, 0, terms=2)]
    g = random_series(rng, 1, 0, terms=2)
    expected = g + poisson_bracket(X[0], g)
    assert lie_apply(X, g, 1).approx_equal(expected)


def test_assembled_psi_matches_direct_formula():
    for spec in (pendulum_spec(r=4, L=2, exact=True), resonant_spec(L=2, r=3, n2=1, exact=True)):
        result = relegate(spec)
        for s in range(1, spec.r + 1):
            assert assemble_psi(s, result) == oracle_assemble_psi(s, result)
            assert result.psi[s - 1] == oracle_assemble_psi(s, result)


def test_assemble_psi_needs_history(pendulum):
    fresh = NormalFormResult(pendulum, split_perturbation(pendulum), Z=[pendulum.Z0])
    assert assemble_psi(1, fresh) == fresh.shells[0]
    with pytest.raises(SequencingError):
        assemble_psi(3, fresh)
    with pytest.raises(ParameterError):
        assemble_psi(0, fresh)


def test_birkhoff_step_for_zero_depth():
    result = relegate(pendulum_spec(L=0, r=2))
    for s in range(1, 3):
        assert len(result.X_parts[s - 1]) == 1
        assert result.X[s - 1] == result.X_parts[s - 1][0]


def test_residual_decreases_with_order():
    maxima = [residual_series(relegate(pendulum_spec(r=r))).max_abs() for r in (1, 2, 3)]
    assert maxima[0] > maxima[1] > maxima[2]


def test_split_folds_extra_shells(caplog):
    spec = pendulum_spec(K=1, r=1)
    with caplog.at_level(logging.WARNING):
        shells = split_perturbation(spec)
    assert len(shells) == 2
    assert shells[0].is_zero
    assert sorted(shells[1].harmonics()) == [(-2,), (-1,), (1,), (2,)]
    assert "folded" in caplog.text


def test_split_pads_missing_shells():
    spec = pendulum_spec(K=5, r=3)
    shells = split_perturbation(spec)
    assert len(shells) == 4
    assert all(shell.is_zero for shell in shells[1:])


def test_empty_perturbation():
    spec = replace(pendulum_spec(), H1=PoissonSeries.zero(1, 0))
    result = relegate(spec)
    assert all(X.is_zero for X in result.X)
    assert result.normal_form() == spec.Z0


def test_spec_validation():
    spec = pendulum_spec()
    with pytest.raises(StructuralError):
        replace(spec, f0=PoissonSeries.cosine(1, 0, [1]))
    with pytest.raises(ParameterError):
        replace(spec, K=0)
    with pytest.raises(ParameterError):
        replace(spec, L=-1)
    with pytest.raises(ParameterError):
        replace(resonant_spec(), Kprime=1)
    with pytest.raises(StructuralError):
        replace(spec, H1=PoissonSeries.zero(2, 0))
    with pytest.raises(StructuralError):
        HamiltonianSpec(
            omega=FrequencyVector.floating([1.0], []), f0=PoissonSeries.zero(1, 0, exact=True), mu=Fraction(0),
            H1=PoissonSeries.zero(1, 0, exact=True), epsilon=Fraction(0), dp=DomainParams(1, 1, 1),
            K=1, Kprime=0, L=0, r=1,
        )


def test_mu_not_above_epsilon_warns(caplog):
    with caplog.at_level(logging.WARNING):
        pendulum_spec(mu=0.01, epsilon=0.01)
    assert "does not exceed" in caplog.text


def test_term_budget(pendulum):
    with pytest.raises(ResourceError) as info:
        relegate(replace(pendulum, term_budget=3))
    assert info.value.order_reached is not None


def test_relegation_is_deterministic(pendulum):
    first, second = relegate(pendulum), relegate(pendulum)
    assert [dumps(X) for X in first.X] == [dumps(X) for X in second.X]
    assert [dumps(Z) for Z in first.Z] == [dumps(Z) for Z in second.Z]
