import csv
import math

import numpy as np
import pytest

from conftest import pendulum_spec, random_series
from relegation.errors import ParameterError, StructuralError
from relegation.estimates import EstimateInputs, build_report
from relegation.norms import DomainParams
from relegation.relegation_engine import forward_pieces, lie_apply, relegate
from relegation.resonance import FrequencyVector, ResonanceModule, orthogonal_lambda, resonance_module
from relegation.series_core import PoissonSeries, add, poisson_bracket, scale
from relegation.verification import (
    DriftRecord,
    PhasePoint,
    displacement_check,
    evaluate,
    evaluate_many,
    integrate_flow,
    integrator_order,
    measure_drift,
    near_invariance_check,
    oracle_E,
    real_bracket,
    residual_decay_utest,
    residual_diagnostics,
    residual_profile,
    rk8_step,
    sample_points,
    write_drift_csv,
)


def _pendulum_hamiltonian():
    return add(PoissonSeries.monomial(1, 0, 0.5, mp=[2]), PoissonSeries.cosine(1, 0, [1], -1.0))


def _record(p_rows, phi=None):
    p = np.array(p_rows, dtype=float)
    n = len(p)
    states = np.hstack([p, np.zeros_like(p)])
    return DriftRecord(
        times=np.arange(n, dtype=float),
        states=states,
        n1=p.shape[1],
        n2=0,
        phi0_path=p[:, 0],
        phi_path=np.zeros(n) if phi is None else np.asarray(phi, dtype=float),
        energy_error=np.zeros(n),
    )


def test_phase_point():
    pt = PhasePoint([0.1], [2 * math.pi + 0.5], [0.3], [0.4])
    assert pt.q[0] == pytest.approx(0.5)
    assert (pt.n1, pt.n2) == (1, 1)
    assert pt.z[0] == pytest.approx((0.3 + 0.4j) / math.sqrt(2))
    assert pt.w[0] == pytest.approx(1j * np.conj(pt.z[0]))
    back = PhasePoint.from_state(pt.as_state(), 1, 1)
    np.testing.assert_allclose(back.as_state(), pt.as_state())
    with pytest.raises(StructuralError):
        PhasePoint([0.1, 0.2], [0.0])
    with pytest.raises(ParameterError):
        PhasePoint([math.nan], [0.0])


def test_evaluate_examples():
    spec = pendulum_spec()
    pt = PhasePoint([0.3], [0.0])
    expected = 0.3 + 0.1 * 0.09 / 2 + 0.01 * (1 + 0.1)
    assert evaluate(spec.hamiltonian(), pt, real=True) == pytest.approx(expected)
    radius = PoissonSeries.monomial(1, 1, -1j, mz=[1], mw=[1])
    assert evaluate(radius, PhasePoint([0.0], [0.0], [0.6], [0.8]), real=True).real == pytest.approx(0.5)
    with pytest.raises(StructuralError):
        evaluate(PoissonSeries.monomial(1, 0, 1j, mp=[1]), pt, real=True)
    with pytest.raises(StructuralError):
        evaluate(PoissonSeries.zero(2, 0), pt)


def test_real_bracket_matches_series_bracket(rng):
    for _ in range(20):
        f = random_series(rng, 1, 1, terms=3, max_degree=2)
        g = random_series(rng, 1, 1, terms=3, max_degree=2)
        pt = PhasePoint(rng.uniform(-0.5, 0.5, 1), rng.uniform(0, 6, 1), rng.uniform(-0.5, 0.5, 1),
                        rng.uniform(-0.5, 0.5, 1))
        expected = evaluate(poisson_bracket(f, g), pt)
        assert abs(real_bracket(f, g, pt) - expected) <= 1e-10 * (1 + abs(expected))


def test_linear_flow():
    h0 = PoissonSeries.frequency_hamiltonian([1.0, 2.0])
    rec = integrate_flow(h0, PhasePoint([0.2, -0.1], [0.5, 1.0]), 1.0, 0.1, lam=[1.0, 1.0])
    assert rec.times[-1] == pytest.approx(1.0)
    np.testing.assert_allclose(rec.q_path[-1], [1.5, 3.0], rtol=1e-12)
    np.testing.assert_allclose(rec.p_path[-1], [0.2, -0.1])
    assert rec.phi0_path[-1] == pytest.approx(0.1)
    assert np.isnan(rec.phi_path).all()
    assert rec.energy_error.max() <= 1e-14


def test_harmonic_flow_keeps_radius():
    H = add(PoissonSeries.frequency_hamiltonian([1.0], n2=1), PoissonSeries.monomial(1, 1, -1j, mz=[1], mw=[1]))
    rec = integrate_flow(H, PhasePoint([0.0], [0.0], [0.6], [0.0]), 5.0, 0.05)
    radius = np.hypot(rec.x_path[:, 0], rec.y_path[:, 0])
    np.testing.assert_allclose(radius, 0.6, rtol=1e-10)
    assert rec.energy_error.max() <= 1e-10


@pytest.mark.slow
def test_pendulum_energy_is_conserved():
    rec = integrate_flow(_pendulum_hamiltonian(), PhasePoint([0.5], [0.3]), 10.0, 0.05)
    assert rec.energy_error.max() <= 1e-10


def test_flow_stops_at_the_domain_edge():
    H = PoissonSeries.cosine(1, 0, [1])
    rec = integrate_flow(H, PhasePoint([0.0], [math.pi / 2]), 2.0, 0.1, domain=DomainParams(0.5, 1.0, 1.0))
    assert rec.exit_time is not None
    assert 0.5 <= rec.exit_time <= 0.6 + 1e-9
    assert np.all(np.abs(rec.p_path) <= 0.5)


def test_integrate_flow_arguments():
    H = PoissonSeries.frequency_hamiltonian([1.0])
    with pytest.raises(ParameterError):
        integrate_flow(H, PhasePoint([0.0], [0.0]), 1.0, 0.0)
    with pytest.raises(StructuralError):
        integrate_flow(H, PhasePoint([0.0, 0.0], [0.0, 0.0]), 1.0, 0.1)


def test_integrator_is_eighth_order():
    result = integrator_order(_pendulum_hamiltonian(), PhasePoint([0.5], [0.3]), 2.0, 0.25)
    assert result.error_half < result.error_dt
    assert 6.5 <= result.order <= 9.5


def test_single_step_matches_the_exponential():
    # y' = A y with a rotation generator: one step of size h is exact up to h^9
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    for h in (0.1, 0.2):
        y = rk8_step(lambda t, y: A @ y, 0.0, np.array([1.0, 0.0]), h)
        np.testing.assert_allclose(y, [math.cos(h), -math.sin(h)], rtol=0, atol=h ** 9)
    grow = rk8_step(lambda t, y: y * (1 + t), 0.0, np.array([1.0]), 0.1)
    assert grow[0] == pytest.approx(math.exp(0.1 + 0.005), rel=1e-9)


def test_measure_drift():
    trivial = _record([[0.0, 0.0], [0.3, 0.4], [0.0, 0.1]])
    assert measure_drift(trivial, ResonanceModule.trivial(2)) == pytest.approx(0.5)
    np.testing.assert_allclose(trivial.distance_path, [0.0, 0.5, 0.1])

    M = resonance_module(FrequencyVector.rational([1, -1]))
    along = _record([[0.0, 0.0], [0.2, 0.2], [0.5, 0.5]])
    assert measure_drift(along, M) == pytest.approx(0.0, abs=1e-15)
    across = _record([[0.0, 0.0], [0.1, -0.1]])
    assert measure_drift(across, M) == pytest.approx(0.1 * math.sqrt(2))


def test_near_invariance_check():
    steady = _record([[0.0]] * 3, phi=[1.0, 1.0, 1.0])
    assert near_invariance_check(steady, 0.0, 1.0).ok
    jump = _record([[0.0]] * 3, phi=[1.0, 1.0, 2.0])
    check = near_invariance_check(jump, 0.0, 1.0)
    assert not check.ok
    assert check.worst_excess == pytest.approx(0.875)
    assert near_invariance_check(jump, 1.0, 1.0).ok


def test_drift_csv(tmp_path):
    rec = _record([[0.0, 0.0], [0.3, 0.4]])
    path = tmp_path / "drift.csv"
    with pytest.raises(ParameterError):
        write_drift_csv(rec, path)
    measure_drift(rec, ResonanceModule.trivial(2))
    write_drift_csv(rec, path)
    with open(path, newline="") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["t", "p1", "p2", "phi0", "phi", "dist"]
    assert len(rows) == 3
    assert float(rows[2][-1]) == pytest.approx(0.5)


def test_residual_decay_utest(rng):
    previous = rng.uniform(1.0, 2.0, 30)
    assert residual_decay_utest(previous, rng.uniform(0.0, 0.5, 30)) == 'pass'
    assert residual_decay_utest(previous, previous) == 'fail'


def test_sample_points(rng):
    dp = DomainParams(1.0, 1.0, 2.0)
    points = sample_points(dp, 50, 2, 1, fraction=0.5, rng=rng)
    assert len(points) == 50
    for pt in points:
        assert np.linalg.norm(pt.p) <= 0.5 + 1e-12
        assert math.hypot(pt.x[0], pt.y[0]) <= 1.0 + 1e-12
        assert np.all((0 <= pt.q) & (pt.q < 2 * math.pi))
    again = sample_points(dp, 50, 2, 1, fraction=0.5, rng=np.random.default_rng(20240611))
    first = sample_points(dp, 50, 2, 1, fraction=0.5, rng=np.random.default_rng(20240611))
    np.testing.assert_array_equal([pt.as_state() for pt in again], [pt.as_state() for pt in first])


def test_evaluate_many_with_threads(rng):
    g = random_series(rng, 2, 1, terms=6)
    points = sample_points(DomainParams(1.0, 1.0, 1.0), 20, 2, 1, rng=rng)
    np.testing.assert_allclose(evaluate_many(g, points, threads=4), evaluate_many(g, points))


def test_naive_pieces_match_engine(rng):
    X = [random_series(rng, 1, 1, terms=2, max_k=1, max_degree=2, exact=True) for _ in range(3)]
    g = random_series(rng, 1, 1, terms=2, max_k=1, max_degree=2, exact=True)
    for j, piece in enumerate(forward_pieces(X, g, 3)):
        assert piece == oracle_E(X, g, j)


def test_displacement_of_the_certified_transform(certified_pendulum, rng):
    result = relegate(certified_pendulum)
    points = sample_points(certified_pendulum.dp, 10, 1, 0, rng=rng)
    report = displacement_check(result, points)
    assert report.threshold == pytest.approx(1 / 16)
    assert report.ok
    assert report.max_forward < 1e-10


@pytest.mark.slow
def test_residual_decays_with_order(rng):
    spec = pendulum_spec()
    points = sample_points(spec.dp, 40, 1, 0, rng=rng)
    profile = residual_profile(spec, [1, 2, 3], points)
    for r in (1, 2):
        assert profile[r + 1].max() < profile[r].max() / 10
        assert residual_decay_utest(profile[r], profile[r + 1]) == 'pass'


@pytest.mark.slow
def test_certified_residual_and_integral(certified_pendulum, rng):
    spec = certified_pendulum
    report = build_report(EstimateInputs.from_spec(spec))
    assert report.certified
    points = sample_points(spec.dp, 100, 1, 0, rng=rng)

    profile = residual_profile(spec, [1, 2, 3, 4], points)
    # below epsilon * 1e-14 the residuals are rounding noise
    floor = 1e-14 * float(spec.epsilon)
    for r in (1, 2, 3):
        assert profile[r + 1].max() <= profile[r].max() + floor
    result = residual_diagnostics(relegate(spec), points)
    assert max(result.residual_diag) <= report.remainder_bound

    lam = orthogonal_lambda(spec.module)
    phi = lie_apply(result.X, scale(PoissonSeries.variable(1, 0, "p", 0), float(lam[0])), result.order)
    t_span = min(1e3, report.t_local)
    rec = integrate_flow(spec.hamiltonian(), PhasePoint([0.2], [0.4]), t_span, 0.1, lam=lam, phi=phi)
    assert near_invariance_check(rec, report.drift_rate, spec.dp.rho).ok
    allowance = report.drift_rate * rec.times + spec.dp.rho / 8
    assert np.all(100 * rec.energy_error <= allowance)
