r"""The relegation normal-form algorithm driven by Lie transforms.

The Hamiltonian is

.. math::

    H = h_0 + \mu f_0 + \varepsilon H_1, \qquad h_0 = \omega\cdot p,

with :math:`\{h_0, f_0\} = 0`. The perturbation is cut into Fourier shells
:math:`h_s` of width ``K`` and at every order ``s`` the chain

.. math::

    Z_{s,0} - \{h_0, X_{s,0}\} = \Psi_s, \qquad
    Z_{s,j} - \{h_0, X_{s,j}\} = \{\mu f_0, X_{s,j-1}\},\ j = 1..L

is solved with ``h0`` alone; the last link :math:`\{\mu f_0, X_{s,L}\}` is
pushed to order ``s + 1``. Grades follow the shell index, so a bracket of
grades ``a`` and ``b`` has grade ``a + b`` while ``mu f0`` counts as grade zero.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

from .enumeration import DEFAULT_BUDGET
from .errors import ParameterError, ResourceError, SequencingError, SmallDivisorError, StructuralError
from .norms import DomainParams, weighted_norm
from .resonance import FrequencyVector, ResonanceModule, resonance_module
from .series_core import (
    ClassTag,
    PoissonSeries,
    add,
    class_of,
    coerce,
    fourier_split,
    poisson_bracket,
    scale,
    split_resonant,
    sub,
    sum_series,
)

logger = logging.getLogger(__name__)

DEFAULT_TERM_BUDGET = 200_000
RESIDUAL_RTOL = 1e-12

FORWARD = "forward"
INVERSE = "inverse"


@dataclass(frozen=True)
class HamiltonianSpec:
    """H = omega.p + mu f0 + epsilon H1 together with the algorithm parameters.

    Args:
        omega: Frequency vector of h0.
        f0: Resonant part of the integrable Hamiltonian, class (0, Kprime).
        mu: Size of f0.
        H1: The perturbation, scaled by ``epsilon``.
        epsilon: Size of the perturbation.
        dp: Analyticity radii used for the per-order norms.
        K: Width of the Fourier shells.
        Kprime: Largest |k| in f0.
        L: Relegation depth (0 gives the classical Birkhoff step).
        r: Normalization order.
        buffer: Extra grades kept for residual diagnostics.
        small_divisor_floor: Smallest accepted |k.omega|; defaults to 1e-12 |omega|.
        term_budget: Largest admissible number of terms in one generated series.
        enumeration_budget: Budget of the lattice enumerations.

    Raises:
        StructuralError: If the series dimensions disagree or f0 has non-resonant harmonics.
        ParameterError: If an integer or size parameter is out of range.
    """

    omega: FrequencyVector
    f0: PoissonSeries
    mu: object
    H1: PoissonSeries
    epsilon: object
    dp: DomainParams
    K: int
    Kprime: int
    L: int
    r: int
    buffer: int = 1
    small_divisor_floor: Optional[float] = None
    term_budget: int = DEFAULT_TERM_BUDGET
    enumeration_budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        if (self.f0.n1, self.f0.n2) != (self.H1.n1, self.H1.n2):
            raise StructuralError(
                f"f0 has dimensions ({self.f0.n1}, {self.f0.n2}) but H1 has ({self.H1.n1}, {self.H1.n2})"
            )
        if self.omega.n1 != self.H1.n1:
            raise StructuralError(f"omega has {self.omega.n1} entries, the series have n1 = {self.H1.n1}")
        if self.f0.exact != self.H1.exact:
            raise StructuralError("f0 and H1 must use the same coefficient field")
        if self.H1.exact and not self.omega.exact:
            raise StructuralError("exact series need rational frequencies")
        for name in ("K", "r"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be a positive integer, got {getattr(self, name)}")
        for name in ("Kprime", "L", "buffer"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.mu < 0 or self.epsilon < 0:
            raise ParameterError(f"mu and epsilon must be non-negative, got mu={self.mu}, epsilon={self.epsilon}")
        if self.term_budget < 1:
            raise ParameterError(f"term_budget must be positive, got {self.term_budget}")
        M = self.module
        for k in self.f0.harmonics():
            if not M.contains(k):
                raise StructuralError(f"f0 contains the non-resonant harmonic {k}, so {{h0, f0}} != 0")
        if self.f0.trig_bound is not None and self.f0.trig_bound > self.Kprime:
            raise ParameterError(f"f0 has a harmonic of size {self.f0.trig_bound} > Kprime = {self.Kprime}")
        if not self.mu > self.epsilon:
            logger.warning("mu = %s does not exceed epsilon = %s", self.mu, self.epsilon)

    @property
    def n1(self) -> int:
        return self.H1.n1

    @property
    def n2(self) -> int:
        return self.H1.n2

    @property
    def exact(self) -> bool:
        return self.H1.exact

    @property
    def module(self) -> ResonanceModule:
        return resonance_module(self.omega)

    @property
    def h0(self) -> PoissonSeries:
        entries = self.omega.omega if self.exact else [float(v) for v in self.omega.omega]
        return PoissonSeries.frequency_hamiltonian(entries, self.n2, self.exact)

    @property
    def mu_f0(self) -> PoissonSeries:
        return scale(self.f0, self.mu)

    @property
    def Z0(self) -> PoissonSeries:
        return add(self.h0, self.mu_f0)

    @property
    def divisor_floor(self) -> float:
        if self.small_divisor_floor is not None:
            return self.small_divisor_floor
        return 1e-12 * self.omega.norm

    def hamiltonian(self) -> PoissonSeries:
        """The full H = h0 + mu f0 + epsilon H1."""
        return add(self.Z0, scale(self.H1, self.epsilon))


class HomologicalSolution(NamedTuple):
    X: PoissonSeries
    Z: PoissonSeries


class RelegationStep(NamedTuple):
    """X_s, Z_s, the leftover {mu f0, X_{s,L}} and the chain links (X_{s,j}, Z_{s,j}) with their residuals."""

    X: PoissonSeries
    Z: PoissonSeries
    leftover: PoissonSeries
    parts: Tuple[HomologicalSolution, ...]
    residuals: Tuple[float, ...] = ()


@dataclass
class NormalFormResult:
    """Everything the relegation run produced.

    ``X[s - 1]`` is the generating function of order ``s``; ``Z[0]`` is
    ``h0 + mu f0``. The unrelegated remainder is not stored as a series;
    ``transform_defect`` and ``residual_diag`` describe it.
    """

    spec: HamiltonianSpec
    shells: List[PoissonSeries]
    X: List[PoissonSeries] = field(default_factory=list)
    X_parts: List[List[PoissonSeries]] = field(default_factory=list)
    Z: List[PoissonSeries] = field(default_factory=list)
    Z_parts: List[List[PoissonSeries]] = field(default_factory=list)
    psi: List[PoissonSeries] = field(default_factory=list)
    leftovers: List[PoissonSeries] = field(default_factory=list)
    chain_residuals: Dict[Tuple[int, int], float] = field(default_factory=dict)
    norms: Dict[str, List[float]] = field(default_factory=dict)
    class_tags: Dict[str, ClassTag] = field(default_factory=dict)
    class_overflow: List[str] = field(default_factory=list)
    transform_defect: float = math.nan
    residual_diag: Tuple[float, ...] = ()

    @property
    def order(self) -> int:
        return len(self.X)

    def X_L(self, s: int) -> PoissonSeries:
        """X_{s,L}; the zero series for s = 0."""
        if s == 0:
            return PoissonSeries.zero(self.spec.n1, self.spec.n2, self.spec.exact)
        return self.X_parts[s - 1][-1]

    def normal_form(self) -> PoissonSeries:
        """Z^{(r)} = Z_0 + Z_1 + ... + Z_r."""
        return sum_series(self.Z, self.spec.n1, self.spec.n2, self.spec.exact)


# ----------------------------------------------------------------------------
# splitting and homological equations
# ----------------------------------------------------------------------------

def split_perturbation(spec: HamiltonianSpec) -> List[PoissonSeries]:
    """Shells h_1..h_{r+1} of epsilon H1; shells past r + 1 are folded into the last one."""
    shells = fourier_split(scale(spec.H1, spec.epsilon), spec.K)
    tracked = spec.r + 1
    if len(shells) > tracked:
        folded = sum_series(shells[tracked - 1:], spec.n1, spec.n2, spec.exact)
        logger.warning(
            "folded %d Fourier shells beyond order %d into h_%d", len(shells) - tracked, tracked, tracked
        )
        shells = shells[:tracked - 1] + [folded]
    while len(shells) < tracked:
        shells.append(PoissonSeries.zero(spec.n1, spec.n2, spec.exact))
    return shells


def homological_solve(
    psi: PoissonSeries,
    w: FrequencyVector,
    M: ResonanceModule,
    floor: Optional[float] = None,
) -> HomologicalSolution:
    """Solve Z - {h0, X} = psi with Z the resonant part of psi.

    A non-resonant term c e^{ik.q} of psi becomes c / (i k.omega) e^{ik.q} in X.

    Raises:
        SmallDivisorError: If |k.omega| < floor for a non-resonant k.
    """
    if floor is None:
        floor = 1e-12 * w.norm
    resonant, other = split_resonant(psi, M)
    X_terms = {}
    factors = {}
    for key, c in other.items():
        if key.k not in factors:
            divisor = w.dot(key.k)
            if abs(float(divisor)) < floor:
                raise SmallDivisorError(key.k, abs(float(divisor)), floor)
            inverse = -1 / divisor if isinstance(divisor, Fraction) else -1.0 / divisor
            factors[key.k] = coerce((0, inverse), psi.exact)
        X_terms[key] = c * factors[key.k]
    X = PoissonSeries._from_canonical(psi.n1, psi.n2, X_terms, psi.exact)
    return HomologicalSolution(X, resonant)


def homological_residual(sol: HomologicalSolution, psi: PoissonSeries, h0: PoissonSeries) -> float:
    """max |coefficient| of Z - {h0, X} - psi."""
    return sub(sub(sol.Z, poisson_bracket(h0, sol.X)), psi).max_abs()


def relegation_step(
    psi_s: PoissonSeries,
    f0: PoissonSeries,
    mu,
    L: int,
    w: FrequencyVector,
    M: ResonanceModule,
    floor: Optional[float] = None,
) -> RelegationStep:
    """Run the L-step chain of homological equations for one order.

    Every link is checked against its own equation Z_{s,j} - {h0, X_{s,j}} = rhs_j;
    the residuals come back on the step. A residual above rounding (any nonzero
    residual for exact series) is logged as a warning.
    """
    if L < 0:
        raise ParameterError(f"relegation depth L must be non-negative, got {L}")
    h0 = PoissonSeries.frequency_hamiltonian(
        w.omega if psi_s.exact else [float(v) for v in w.omega], psi_s.n2, psi_s.exact
    )
    mu_f0 = scale(f0, mu)
    parts = []
    residuals = []
    rhs = psi_s
    for j in range(L + 1):
        sol = homological_solve(rhs, w, M, floor)
        residual = homological_residual(sol, rhs, h0)
        tolerance = 0.0 if psi_s.exact else RESIDUAL_RTOL * max(1.0, rhs.max_abs())
        if residual > tolerance:
            logger.warning("chain link %d: residual %.3e above %.1e", j, residual, tolerance)
        else:
            logger.debug("chain link %d: residual %.3e", j, residual)
        parts.append(sol)
        residuals.append(residual)
        rhs = poisson_bracket(mu_f0, sol.X)
    X = sum_series((part.X for part in parts), psi_s.n1, psi_s.n2, psi_s.exact)
    Z = sum_series((part.Z for part in parts), psi_s.n1, psi_s.n2, psi_s.exact)
    return RelegationStep(X, Z, rhs, tuple(parts), tuple(residuals))


# ----------------------------------------------------------------------------
# Lie transforms
# ----------------------------------------------------------------------------

def _generator(X: Sequence[PoissonSeries], i: int) -> Optional[PoissonSeries]:
    if 1 <= i <= len(X) and not X[i - 1].is_zero:
        return X[i - 1]
    return None


def forward_pieces(X: Sequence[PoissonSeries], g: PoissonSeries, order: int) -> List[PoissonSeries]:
    """[E_0 g, ..., E_order g] with E_j g = sum_{i=1}^{j} (i/j) L_{X_i} E_{j-i} g."""
    if order < 0:
        raise ParameterError(f"order must be non-negative, got {order}")
    pieces = [g]
    for j in range(1, order + 1):
        terms = []
        for i in range(1, j + 1):
            Xi = _generator(X, i)
            if Xi is None or pieces[j - i].is_zero:
                continue
            terms.append(scale(poisson_bracket(Xi, pieces[j - i]), Fraction(i, j)))
        pieces.append(sum_series(terms, g.n1, g.n2, g.exact))
    return pieces


def inverse_pieces(X: Sequence[PoissonSeries], g: PoissonSeries, order: int) -> List[PoissonSeries]:
    """[D_0 g, ..., D_order g] with D_j g = -sum_{i=1}^{j} (i/j) D_{j-i} L_{X_i} g.

    D_{j-i} acts on the function L_{X_i} g, so values are memoized by
    (j, sequence of generator indices already applied to g).
    """
    if order < 0:
        raise ParameterError(f"order must be non-negative, got {order}")
    applied: Dict[Tuple[int, ...], PoissonSeries] = {(): g}
    memo: Dict[Tuple[int, Tuple[int, ...]], PoissonSeries] = {}

    def target(path):
        if path not in applied:
            applied[path] = poisson_bracket(X[path[-1] - 1], target(path[:-1]))
        return applied[path]

    def D(j, path):
        if j == 0:
            return target(path)
        if (j, path) not in memo:
            terms = []
            for i in range(1, j + 1):
                if _generator(X, i) is None:
                    continue
                inner = path + (i,)
                if target(inner).is_zero:
                    continue
                terms.append(scale(D(j - i, inner), Fraction(-i, j)))
            memo[(j, path)] = sum_series(terms, g.n1, g.n2, g.exact)
        return memo[(j, path)]

    return [D(j, ()) for j in range(order + 1)]


def _pieces(X, g, order, direction):
    if direction == FORWARD:
        return forward_pieces(X, g, order)
    if direction == INVERSE:
        return inverse_pieces(X, g, order)
    raise ParameterError(f"direction must be '{FORWARD}' or '{INVERSE}', got '{direction}'")


def lie_apply(X: Sequence[PoissonSeries], g: PoissonSeries, order: int, direction: str = FORWARD) -> PoissonSeries:
    """T_X g (or its inverse) truncated at ``order``, with g of grade zero."""
    return sum_series(_pieces(X, g, order, direction), g.n1, g.n2, g.exact)


def lie_apply_graded(
    X: Sequence[PoissonSeries],
    pieces: Sequence[PoissonSeries],
    order: int,
    direction: str = FORWARD,
) -> List[PoissonSeries]:
    """Graded T_X on [g_0, g_1, ...]: grade n of the result is sum_m E_{n-m} g_m, n <= order."""
    if not pieces:
        raise ParameterError("lie_apply_graded needs at least one graded piece")
    first = pieces[0]
    out = [PoissonSeries.zero(first.n1, first.n2, first.exact) for _ in range(order + 1)]
    for m, g in enumerate(pieces[:order + 1]):
        if g.is_zero:
            continue
        for j, piece in enumerate(_pieces(X, g, order - m, direction)):
            out[m + j] = add(out[m + j], piece)
    return out


# ----------------------------------------------------------------------------
# the algorithm
# ----------------------------------------------------------------------------

def assemble_psi(s: int, result: NormalFormResult) -> PoissonSeries:
    r"""The known term of order s.

    .. math::

        \Psi_s = h_s - \sum_{j=1}^{s-1}\frac{j}{s}\big(L_{X_j} h_{s-j} + E_{s-j} Z_j\big)
               - \sum_{j=1}^{s-1}\frac{j}{s} L_{X_j}\big(L_{X_{s-j,L}}\mu f_0
               - L_{X_{s-j-1,L}}\mu f_0\big) - L_{X_{s-1,L}}\mu f_0,

    with X_{0,L} = 0.

    Raises:
        SequencingError: If the orders below s are not complete.
    """
    if s < 1:
        raise ParameterError(f"order s must be positive, got {s}")
    if result.order < s - 1 or len(result.shells) < s:
        raise SequencingError(f"order {s} needs orders 1..{s - 1}, only {result.order} are available")
    spec = result.spec
    n1, n2, exact = spec.n1, spec.n2, spec.exact
    mu_f0 = spec.mu_f0
    X = result.X[:s - 1]

    def relegated(n):
        return poisson_bracket(result.X_L(n), mu_f0)

    terms = [result.shells[s - 1]]
    for j in range(1, s):
        weight = Fraction(-j, s)
        Xj = X[j - 1]
        inner = add(result.shells[s - j - 1], sub(relegated(s - j), relegated(s - j - 1)))
        terms.append(scale(poisson_bracket(Xj, inner), weight))
        terms.append(scale(forward_pieces(X, result.Z[j], s - j)[-1], weight))
    terms.append(scale(relegated(s - 1), -1))
    return sum_series(terms, n1, n2, exact)


def transformed_hamiltonian(result: NormalFormResult, order: Optional[int] = None) -> PoissonSeries:
    """Grades <= order of T_X Z^{(r)}; order defaults to r."""
    if order is None:
        order = result.order
    return sum_series(lie_apply_graded(result.X, result.Z, order), result.spec.n1, result.spec.n2, result.spec.exact)


def residual_series(result: NormalFormResult) -> PoissonSeries:
    """T_X Z^{(r)} - H with T_X truncated at r + buffer."""
    return sub(transformed_hamiltonian(result, result.order + result.spec.buffer), result.spec.hamiltonian())


def transform_defect(result: NormalFormResult) -> float:
    """Size of grades <= r of T_X Z^{(r)} - (h0 + mu f0 + h_1 + ... + h_r) - {X_{r,L}, mu f0}.

    The relegated terms telescope, so this vanishes up to rounding.
    """
    spec = result.spec
    r = result.order
    target = sum_series([spec.Z0] + result.shells[:r], spec.n1, spec.n2, spec.exact)
    expected = poisson_bracket(result.X_L(r), spec.mu_f0)
    return sub(sub(transformed_hamiltonian(result, r), target), expected).max_abs()


def _check_budget(s: int, spec: HamiltonianSpec, **series: PoissonSeries) -> None:
    for name, g in series.items():
        if len(g) > spec.term_budget:
            raise ResourceError(
                f"{name} of order {s} has {len(g)} terms, budget is {spec.term_budget}", order_reached=s - 1
            )


def _tag(result: NormalFormResult, name: str, g: PoissonSeries) -> Optional[ClassTag]:
    try:
        tag = class_of(g, result.spec.module, result.spec.enumeration_budget)
    except ResourceError as error:
        message = f"class of {name} not computed: {error}"
        result.class_overflow.append(message)
        logger.warning(message)
        return None
    result.class_tags[name] = tag
    return tag


def _record_classes(result: NormalFormResult, s: int, step: RelegationStep, psi: PoissonSeries) -> None:
    spec = result.spec
    tag = _tag(result, f"psi_{s}", psi)
    bound = ClassTag(s * spec.K, s * (spec.K + spec.L * spec.Kprime))
    if tag is not None and not tag.within(bound):
        message = f"psi_{s} has class {tuple(tag)} outside {tuple(bound)}"
        result.class_overflow.append(message)
        logger.warning(message)
    for j, part in enumerate(step.parts):
        tag = _tag(result, f"X_{s},{j}", part.X)
        if tag is None:
            continue
        if s == 1:
            bound = ClassTag(spec.K, spec.K + j * spec.Kprime)
            if not tag.within(bound):
                message = f"X_1,{j} has class {tuple(tag)} outside {tuple(bound)}"
                result.class_overflow.append(message)
                logger.warning(message)


def relegate(spec: HamiltonianSpec, track_classes: bool = True) -> NormalFormResult:
    """Build the generating sequence X_1..X_r and the normal form Z_0..Z_r.

    Raises:
        SmallDivisorError: When a non-resonant divisor falls below the floor.
        ResourceError: When a generated series exceeds the term budget.
    """
    M = spec.module
    result = NormalFormResult(spec, split_perturbation(spec))
    result.Z.append(spec.Z0)
    result.norms = {"h": [weighted_norm(h, spec.dp) for h in result.shells], "X": [], "Z": [], "psi": []}
    logger.info(
        "relegating to order %d with K=%d, L=%d (n1=%d, n2=%d, resonance dim %d)",
        spec.r, spec.K, spec.L, spec.n1, spec.n2, M.dim,
    )
    for s in range(1, spec.r + 1):
        psi = assemble_psi(s, result)
        _check_budget(s, spec, psi=psi)
        step = relegation_step(psi, spec.f0, spec.mu, spec.L, spec.omega, M, spec.divisor_floor)
        _check_budget(s, spec, X=step.X, Z=step.Z)
        for j, residual in enumerate(step.residuals):
            result.chain_residuals[(s, j)] = residual

        result.psi.append(psi)
        result.X.append(step.X)
        result.X_parts.append([part.X for part in step.parts])
        result.Z.append(step.Z)
        result.Z_parts.append([part.Z for part in step.parts])
        result.leftovers.append(step.leftover)
        result.norms["psi"].append(weighted_norm(psi, spec.dp))
        result.norms["X"].append(weighted_norm(step.X, spec.dp))
        result.norms["Z"].append(weighted_norm(step.Z, spec.dp))
        if track_classes:
            _record_classes(result, s, step, psi)
        logger.info(
            "order %d: |psi|=%.3e |X|=%.3e |Z|=%.3e (%d, %d, %d terms)",
            s, result.norms["psi"][-1], result.norms["X"][-1], result.norms["Z"][-1],
            len(psi), len(step.X), len(step.Z),
        )

    result.transform_defect = transform_defect(result)
    logger.info("transform defect after order %d: %.3e", spec.r, result.transform_defect)
    return result
