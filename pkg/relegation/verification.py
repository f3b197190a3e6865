"""Numerical ground truth: evaluation on the real chart, flow integration, drift and oracles.

The Cartesian block is charted as

    z = (x + i y) / sqrt(2),    iz̄ = (y + i x) / sqrt(2),

so that {iz̄, z} = 1 becomes {y, x} = 1 and y plays the role of an angle.
"""

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np
from scipy.integrate import DOP853
from scipy.stats import mannwhitneyu

from .errors import IntegrationError, ParameterError, StructuralError
from .norms import DomainParams
from .relegation_engine import HamiltonianSpec, NormalFormResult, lie_apply, relegate, residual_series
from .resonance import ResonanceModule, projection_matrix
from .series_core import PoissonSeries, derivative, poisson_bracket, scale, sub, sum_series

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
REALITY_TOL = 1e-10

# Dormand--Prince 8(5,3) tableau of scipy's DOP853 solver, used here with a fixed step
_RK_STAGES = DOP853.n_stages
_RK_A = DOP853.A
_RK_B = DOP853.B
_RK_C = DOP853.C


@dataclass(frozen=True, eq=False)
class PhasePoint:
    """A real point (p, q, x, y); q is reduced to [0, 2 pi)."""

    p: np.ndarray
    q: np.ndarray
    x: np.ndarray = field(default_factory=lambda: np.zeros(0))
    y: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        p, q = np.atleast_1d(np.asarray(self.p, dtype=float)), np.atleast_1d(np.asarray(self.q, dtype=float))
        x, y = np.atleast_1d(np.asarray(self.x, dtype=float)), np.atleast_1d(np.asarray(self.y, dtype=float))
        if p.shape != q.shape or x.shape != y.shape:
            raise StructuralError(f"point blocks have shapes p{p.shape}, q{q.shape}, x{x.shape}, y{y.shape}")
        if not all(np.all(np.isfinite(v)) for v in (p, q, x, y)):
            raise ParameterError("phase point has non-finite entries")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", np.mod(q, 2 * np.pi))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n1(self) -> int:
        return len(self.p)

    @property
    def n2(self) -> int:
        return len(self.x)

    @property
    def z(self) -> np.ndarray:
        return (self.x + 1j * self.y) / SQRT2

    @property
    def w(self) -> np.ndarray:
        return (self.y + 1j * self.x) / SQRT2

    def as_state(self) -> np.ndarray:
        return np.concatenate([self.p, self.q, self.x, self.y])

    @classmethod
    def from_state(cls, state: np.ndarray, n1: int, n2: int) -> "PhasePoint":
        return cls(state[:n1], state[n1:2 * n1], state[2 * n1:2 * n1 + n2], state[2 * n1 + n2:])


def evaluate(g: PoissonSeries, pt: PhasePoint, real: bool = False) -> complex:
    """Value of g at a real point.

    Raises:
        StructuralError: On a dimension mismatch, or when ``real`` is set and the
            imaginary part exceeds 1e-10 (1 + |value|).
    """
    if (g.n1, g.n2) != (pt.n1, pt.n2):
        raise StructuralError(f"series dimensions ({g.n1}, {g.n2}) do not match point ({pt.n1}, {pt.n2})")
    value = g(pt.p, pt.q, pt.z, pt.w)
    if real and abs(value.imag) > REALITY_TOL * (1 + abs(value)):
        raise StructuralError(f"series is not real at the sampled point: value {value}")
    return value


def real_bracket(f: PoissonSeries, g: PoissonSeries, pt: PhasePoint) -> complex:
    """{f, g} at pt computed in the real coordinates (q, p) and (y, x)."""
    def grads(h):
        dq = np.array([evaluate(derivative(h, "q", j), pt) for j in range(h.n1)])
        dp = np.array([evaluate(derivative(h, "p", j), pt) for j in range(h.n1)])
        dz = np.array([evaluate(derivative(h, "z", j), pt) for j in range(h.n2)])
        dw = np.array([evaluate(derivative(h, "w", j), pt) for j in range(h.n2)])
        return dq, dp, (dz + 1j * dw) / SQRT2, (1j * dz + dw) / SQRT2

    fq, fp, fx, fy = grads(f)
    gq, gp, gx, gy = grads(g)
    return complex(np.sum(fq * gp - fp * gq) + np.sum(fy * gx - fx * gy))


def _check_chart() -> None:
    pt = PhasePoint([0.3], [1.1], [0.7], [-0.2])
    w = PoissonSeries.variable(1, 1, "w", 0)
    z = PoissonSeries.variable(1, 1, "z", 0)
    value = real_bracket(w, z, pt)
    if abs(value - 1) > 1e-12:
        raise StructuralError(f"real chart does not transport {{iz̄, z}} = 1, got {value}")


_check_chart()


@dataclass
class DriftRecord:
    """An orbit sampled at fixed steps, with the first integrals along it."""

    times: np.ndarray
    states: np.ndarray
    n1: int
    n2: int
    phi0_path: np.ndarray
    phi_path: np.ndarray
    energy_error: np.ndarray
    exit_time: Optional[float] = None
    distance_path: Optional[np.ndarray] = None
    max_fast_drift_distance: float = math.nan

    @property
    def p_path(self) -> np.ndarray:
        return self.states[:, :self.n1]

    @property
    def q_path(self) -> np.ndarray:
        return self.states[:, self.n1:2 * self.n1]

    @property
    def x_path(self) -> np.ndarray:
        return self.states[:, 2 * self.n1:2 * self.n1 + self.n2]

    @property
    def y_path(self) -> np.ndarray:
        return self.states[:, 2 * self.n1 + self.n2:]


class HamiltonianVectorField:
    """Hamilton's equations of a series H in the real chart.

    q' = dH/dp, p' = -dH/dq, y' = dH/dx, x' = -dH/dy.
    """

    def __init__(self, H: PoissonSeries):
        self.H = H
        self.n1, self.n2 = H.n1, H.n2
        self.dq = [derivative(H, "q", j) for j in range(self.n1)]
        self.dp = [derivative(H, "p", j) for j in range(self.n1)]
        self.dz = [derivative(H, "z", j) for j in range(self.n2)]
        self.dw = [derivative(H, "w", j) for j in range(self.n2)]

    def __call__(self, t: float, state: np.ndarray) -> np.ndarray:
        n1, n2 = self.n1, self.n2
        p, q = state[:n1], state[n1:2 * n1]
        x, y = state[2 * n1:2 * n1 + n2], state[2 * n1 + n2:]
        z, w = (x + 1j * y) / SQRT2, (y + 1j * x) / SQRT2
        at = lambda g: g(p, q, z, w)  # noqa: E731
        Hq = np.array([at(g) for g in self.dq])
        Hp = np.array([at(g) for g in self.dp])
        Hz = np.array([at(g) for g in self.dz])
        Hw = np.array([at(g) for g in self.dw])
        Hx = (Hz + 1j * Hw) / SQRT2
        Hy = (1j * Hz + Hw) / SQRT2
        return np.concatenate([-Hq.real, Hp.real, -Hy.real, Hx.real])


def rk8_step(f, t: float, y: np.ndarray, h: float) -> np.ndarray:
    """One explicit eighth-order Runge-Kutta step."""
    K = np.empty((_RK_STAGES, y.size))
    K[0] = f(t, y)
    for s in range(1, _RK_STAGES):
        K[s] = f(t + _RK_C[s] * h, y + h * (K[:s].T @ _RK_A[s, :s]))
    return y + h * (K.T @ _RK_B)


def _inside(state: np.ndarray, n1: int, n2: int, domain: Optional[DomainParams]) -> bool:
    if domain is None:
        return True
    p = state[:n1]
    xy = state[2 * n1:]
    return bool(np.linalg.norm(p) <= domain.rho and np.linalg.norm(xy) <= domain.R)


def integrate_flow(
    H: PoissonSeries,
    pt0: PhasePoint,
    t_span: float,
    dt: float,
    lam: Optional[Sequence[float]] = None,
    phi: Optional[PoissonSeries] = None,
    domain: Optional[DomainParams] = None,
) -> DriftRecord:
    """Integrate the flow of H from pt0 with a fixed step.

    Args:
        lam: Direction of Phi0 = lam . p; defaults to e_1.
        phi: The transformed integral T_X Phi0, recorded along the orbit when given.
        domain: Stop (and record ``exit_time``) when |p| > rho or |(x, y)| > R.

    Raises:
        IntegrationError: If the state becomes non-finite.
    """
    if dt <= 0 or t_span < 0:
        raise ParameterError(f"need dt > 0 and t_span >= 0, got dt={dt}, t_span={t_span}")
    if (H.n1, H.n2) != (pt0.n1, pt0.n2):
        raise StructuralError(f"Hamiltonian dimensions ({H.n1}, {H.n2}) do not match point ({pt0.n1}, {pt0.n2})")
    n1, n2 = H.n1, H.n2
    lam = np.eye(n1)[0] if lam is None else np.asarray(lam, dtype=float)
    field_ = HamiltonianVectorField(H)
    steps = int(round(t_span / dt))

    state = pt0.as_state()
    energy0 = evaluate(H, pt0, real=True).real
    times, states, errors, phis = [0.0], [state], [0.0], []
    if phi is not None:
        phis.append(evaluate(phi, pt0).real)
    exit_time = None
    for n in range(1, steps + 1):
        state = rk8_step(field_, (n - 1) * dt, state, dt)
        if not np.all(np.isfinite(state)):
            raise IntegrationError(f"non-finite state at t = {n * dt:.6g}")
        if not _inside(state, n1, n2, domain):
            exit_time = n * dt
            logger.info("orbit left the domain at t = %.6g", exit_time)
            break
        point = PhasePoint.from_state(state, n1, n2)
        times.append(n * dt)
        states.append(state)
        errors.append(abs(evaluate(H, point).real - energy0))
        if phi is not None:
            phis.append(evaluate(phi, point).real)

    states = np.array(states)
    return DriftRecord(
        times=np.array(times),
        states=states,
        n1=n1,
        n2=n2,
        phi0_path=states[:, :n1] @ lam,
        phi_path=np.array(phis) if phi is not None else np.full(len(times), np.nan),
        energy_error=np.array(errors),
        exit_time=exit_time,
    )


def measure_drift(rec: DriftRecord, M: ResonanceModule) -> float:
    """max_t dist(p(t), p(0) + span(M)); also stored on the record."""
    if not len(rec.times):
        raise ParameterError("empty drift record")
    complement = np.eye(rec.n1) - projection_matrix(M)
    offsets = (rec.p_path - rec.p_path[0]) @ complement.T
    rec.distance_path = np.linalg.norm(offsets, axis=1)
    rec.max_fast_drift_distance = float(rec.distance_path.max())
    return rec.max_fast_drift_distance


class InvarianceCheck(NamedTuple):
    ok: bool
    worst_excess: float


def near_invariance_check(rec: DriftRecord, drift_rate: float, rho: float) -> InvarianceCheck:
    """|Phi(t) - Phi(0)| <= drift_rate |t| + rho / 8 along the record."""
    deviation = np.abs(rec.phi_path - rec.phi_path[0])
    excess = deviation - (drift_rate * np.abs(rec.times) + rho / 8)
    worst = float(np.nanmax(excess))
    return InvarianceCheck(worst <= 0, worst)


def write_drift_csv(rec: DriftRecord, path) -> None:
    """Columns t, p_1..p_n1, phi0, phi, dist."""
    if rec.distance_path is None:
        raise ParameterError("run measure_drift before exporting the record")
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["t"] + [f"p{j + 1}" for j in range(rec.n1)] + ["phi0", "phi", "dist"])
        for i, t in enumerate(rec.times):
            writer.writerow(
                [repr(float(t))]
                + [repr(float(v)) for v in rec.p_path[i]]
                + [repr(float(rec.phi0_path[i])), repr(float(rec.phi_path[i])), repr(float(rec.distance_path[i]))]
            )


# ----------------------------------------------------------------------------
# sampling and residuals
# ----------------------------------------------------------------------------

def _ball(rng: np.random.Generator, dim: int, radius: float) -> np.ndarray:
    if dim == 0:
        return np.zeros(0)
    direction = rng.standard_normal(dim)
    direction /= np.linalg.norm(direction)
    return radius * rng.uniform() ** (1.0 / dim) * direction


def sample_points(
    dp: DomainParams,
    n: int,
    n1: int,
    n2: int,
    fraction: float = 0.75,
    rng: Optional[np.random.Generator] = None,
) -> List[PhasePoint]:
    """n real points with |p| <= fraction rho and |(x, y)| <= fraction R."""
    rng = np.random.default_rng() if rng is None else rng
    points = []
    for _ in range(n):
        xy = _ball(rng, 2 * n2, fraction * dp.R)
        points.append(PhasePoint(_ball(rng, n1, fraction * dp.rho), rng.uniform(0, 2 * np.pi, n1), xy[:n2], xy[n2:]))
    return points


def evaluate_many(g: PoissonSeries, points: Sequence[PhasePoint], threads: int = 1) -> np.ndarray:
    """|g| at every point, spread over a thread pool."""
    if threads <= 1:
        return np.array([abs(evaluate(g, pt)) for pt in points])
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return np.array(list(pool.map(lambda pt: abs(evaluate(g, pt)), points)))


def residual_diagnostics(result: NormalFormResult, points: Sequence[PhasePoint], threads: int = 1) -> NormalFormResult:
    """The result with ``residual_diag`` set to |T_X Z^{(r)} - H| at the points."""
    values = evaluate_many(residual_series(result), points, threads)
    return replace(result, residual_diag=tuple(float(v) for v in values))


def residual_profile(
    spec: HamiltonianSpec,
    orders: Sequence[int],
    points: Sequence[PhasePoint],
    threads: int = 1,
) -> Dict[int, np.ndarray]:
    """|T_X Z^{(r)} - H| at the points for each order r."""
    profile = {}
    for r in orders:
        result = relegate(replace(spec, r=r), track_classes=False)
        profile[r] = evaluate_many(residual_series(result), points, threads)
        logger.info("order %d: max residual %.3e", r, profile[r].max())
    return profile


def residual_decay_utest(previous, current, threshold=0.05):

    '''
        One-sided Mann-Whitney U test that the residual samples of an order are
        stochastically smaller than those of the order before.

        Input variables:
            + previous:  [list / array]  residual samples of order r
            + current:   [list / array]  residual samples of order r + 1
            + threshold: [float]         p-value below which the decay is accepted

        Output variable: the test result ('pass' or 'fail')
    '''

    previous = list(previous)
    current = list(current)

    _, p_value = mannwhitneyu(current, previous, alternative='less')
    if p_value < threshold:
        return 'pass'
    else:
        return 'fail'


class DisplacementReport(NamedTuple):
    max_forward: float
    max_inverse: float
    threshold: float
    ok: bool


def displacement_check(result: NormalFormResult, points: Sequence[PhasePoint]) -> DisplacementReport:
    """max |T_X p_j - p_j| and |T_X^{-1} p_j - p_j| over the points against rho / 16."""
    spec = result.spec
    forward = inverse = 0.0
    for j in range(spec.n1):
        p_j = PoissonSeries.variable(spec.n1, spec.n2, "p", j, spec.exact)
        moved = sub(lie_apply(result.X, p_j, result.order), p_j)
        moved_back = sub(lie_apply(result.X, p_j, result.order, "inverse"), p_j)
        forward = max(forward, max(abs(evaluate(moved, pt)) for pt in points))
        inverse = max(inverse, max(abs(evaluate(moved_back, pt)) for pt in points))
    threshold = spec.dp.rho / 16
    return DisplacementReport(forward, inverse, threshold, forward <= threshold and inverse <= threshold)


class IntegratorOrder(NamedTuple):
    error_dt: float
    error_half: float
    ratio: float
    order: float


def integrator_order(H: PoissonSeries, pt: PhasePoint, t_span: float, dt: float) -> IntegratorOrder:
    """Final-state errors at dt and dt/2 against a dt/8 reference, and the observed order."""
    final = lambda step: integrate_flow(H, pt, t_span, step).states[-1]  # noqa: E731
    reference = final(dt / 8)
    error_dt = float(np.linalg.norm(final(dt) - reference))
    error_half = float(np.linalg.norm(final(dt / 2) - reference))
    ratio = error_dt / error_half if error_half else math.inf
    return IntegratorOrder(error_dt, error_half, ratio, math.log2(ratio) if ratio > 0 else math.nan)


# ----------------------------------------------------------------------------
# oracles
# ----------------------------------------------------------------------------

def _compositions(j: int):
    # ordered sequences of positive integers summing to j
    if j == 0:
        yield ()
        return
    for first in range(1, j + 1):
        for rest in _compositions(j - first):
            yield (first,) + rest


def _generator(X, i):
    return X[i - 1] if i <= len(X) else None


def oracle_lie_apply(X: Sequence[PoissonSeries], g: PoissonSeries, order: int) -> PoissonSeries:
    """sum_{j<=order} E_j g expanded over compositions (i_1, ..., i_m) of j.

    E_j g = sum prod_k (i_k / J_k) L_{X_{i_1}} ... L_{X_{i_m}} g with J_k = i_k + ... + i_m.
    """
    total = [g]
    for j in range(1, order + 1):
        for path in _compositions(j):
            if any(_generator(X, i) is None for i in path):
                continue
            value = g
            remaining = 0
            weight = Fraction(1)
            for i in reversed(path):
                remaining += i
                weight *= Fraction(i, remaining)
                value = poisson_bracket(X[i - 1], value)
            total.append(scale(value, weight))
    return sum_series(total, g.n1, g.n2, g.exact)


def oracle_inverse_lie_apply(X: Sequence[PoissonSeries], g: PoissonSeries, order: int) -> PoissonSeries:
    """sum_{j<=order} D_j g expanded over compositions (i_1, ..., i_m) of j.

    D_j g = sum prod_k (-i_k / J_k) L_{X_{i_m}} ... L_{X_{i_1}} g with J_k = i_k + ... + i_m.
    """
    total = [g]
    for j in range(1, order + 1):
        for path in _compositions(j):
            if any(_generator(X, i) is None for i in path):
                continue
            value = g
            remaining = j
            weight = Fraction(1)
            for i in path:
                weight *= Fraction(-i, remaining)
                remaining -= i
                value = poisson_bracket(X[i - 1], value)
            total.append(scale(value, weight))
    return sum_series(total, g.n1, g.n2, g.exact)


def oracle_E(X: Sequence[PoissonSeries], g: PoissonSeries, j: int) -> PoissonSeries:
    """The single piece E_j g by naive recursion."""
    if j == 0:
        return g
    terms = [
        scale(poisson_bracket(X[i - 1], oracle_E(X, g, j - i)), Fraction(i, j))
        for i in range(1, j + 1)
        if _generator(X, i) is not None
    ]
    return sum_series(terms, g.n1, g.n2, g.exact)


def oracle_assemble_psi(s: int, result: NormalFormResult) -> PoissonSeries:
    """Psi_s from the grade-s balance of T_X Z = H.

    Psi_s = h_s - sum_{m<s} E_{s-m} Z_m - sum_{i<s} (i/s) L_{X_i} E_{s-i} Z_0 - L_{X_{s-1,L}} mu f0.
    """
    spec = result.spec
    X = result.X[:s - 1]
    terms = [result.shells[s - 1]]
    for m in range(1, s):
        terms.append(scale(oracle_E(X, result.Z[m], s - m), -1))
    for i in range(1, s):
        inner = oracle_E(X, result.Z[0], s - i)
        terms.append(scale(poisson_bracket(X[i - 1], inner), Fraction(-i, s)))
    terms.append(scale(poisson_bracket(result.X_L(s - 1), spec.mu_f0), -1))
    return sum_series(terms, spec.n1, spec.n2, spec.exact)
