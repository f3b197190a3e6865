"""Frequency vectors, resonance modules and small-divisor enumeration."""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache, reduce
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .enumeration import DEFAULT_BUDGET, l1_ball, l1_shells
from .errors import ConfigurationError, DegenerateError, ParameterError, StructuralError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FrequencyVector:
    """The frequency vector omega of h0 = omega . p with its Diophantine constants.

    Args:
        omega: Entries as Fractions (rational mode) or floats (float mode).
        gamma: Diophantine constant, positive.
        tau: Diophantine exponent.
        declared_basis: Float mode only, the user supplied basis of the resonance module.
        zero_tol: Float mode only, the largest |k.omega| accepted for a declared basis vector.
    """

    omega: Tuple
    gamma: float = 1.0
    tau: float = 2.0
    declared_basis: Optional[Tuple[Tuple[int, ...], ...]] = None
    zero_tol: float = 1e-12

    def __post_init__(self):
        if self.gamma <= 0:
            raise ParameterError(f"gamma must be positive, got {self.gamma}")
        if not self.omega:
            raise ParameterError("omega must have at least one entry")
        if self.exact and self.declared_basis is not None:
            raise ConfigurationError("a resonance basis is only declared for float frequencies",
                                     field="problem.resonance_basis")
        if not self.exact and self.declared_basis is not None:
            for k in self.declared_basis:
                if len(k) != self.n1:
                    raise ConfigurationError(f"basis vector {k} has length {len(k)}, expected {self.n1}",
                                             field="problem.resonance_basis")
                if abs(self.dot(k)) >= self.zero_tol:
                    raise ConfigurationError(
                        f"declared basis vector {k} has |k.omega| = {abs(self.dot(k)):.3e} "
                        f">= zero_tol {self.zero_tol:.1e}",
                        field="problem.resonance_basis",
                    )

    @classmethod
    def rational(cls, entries: Sequence, gamma: float = 1.0, tau: float = 2.0) -> "FrequencyVector":
        """Exact frequencies from ints, Fractions or strings such as "1/2"."""
        return cls(tuple(Fraction(v) for v in entries), gamma, tau)

    @classmethod
    def floating(
        cls,
        entries: Sequence[float],
        basis: Sequence[Sequence[int]],
        gamma: float = 1.0,
        tau: float = 2.0,
        zero_tol: float = 1e-12,
    ) -> "FrequencyVector":
        return cls(tuple(float(v) for v in entries), gamma, tau,
                   tuple(tuple(int(x) for x in k) for k in basis), zero_tol)

    @property
    def n1(self) -> int:
        return len(self.omega)

    @property
    def exact(self) -> bool:
        return all(isinstance(v, Fraction) for v in self.omega)

    def dot(self, k: Sequence[int]):
        """k . omega, exact in rational mode."""
        return sum((int(a) * b for a, b in zip(k, self.omega)), Fraction(0) if self.exact else 0.0)

    def as_array(self) -> np.ndarray:
        return np.array([float(v) for v in self.omega])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))

    def integer_direction(self) -> Tuple[Tuple[int, ...], int]:
        """(a, D) with omega = a / D and a integer; rational mode only."""
        denominator = reduce(math.lcm, (v.denominator for v in self.omega), 1)
        return tuple(int(v * denominator) for v in self.omega), denominator


@dataclass(frozen=True)
class ResonanceModule:
    """A basis of the lattice M_omega = {k : k . omega = 0}."""

    basis: Tuple[Tuple[int, ...], ...]
    n1: int
    omega: Optional[FrequencyVector] = None

    @property
    def dim(self) -> int:
        return len(self.basis)

    @property
    def is_trivial(self) -> bool:
        return self.dim == 0

    @classmethod
    def trivial(cls, n1: int) -> "ResonanceModule":
        return cls((), n1)

    def contains(self, k: Sequence[int]) -> bool:
        return bool(self.contains_many(np.asarray([k], dtype=np.int64))[0])

    def contains_many(self, points: np.ndarray) -> np.ndarray:
        """Membership for every row of an (N, n1) integer array."""
        points = np.asarray(points, dtype=np.int64).reshape(-1, self.n1)
        if self.omega is not None and self.omega.exact:
            a, _ = self.omega.integer_direction()
            return points @ np.asarray(a, dtype=np.int64) == 0
        if self.is_trivial:
            return ~points.any(axis=1)
        B = np.asarray(self.basis, dtype=float)
        coeffs, *_ = np.linalg.lstsq(B.T, points.T.astype(float), rcond=None)
        rounded = np.rint(coeffs)
        return np.all(np.rint(B.T @ rounded).astype(np.int64) == points.T, axis=0)


def _kernel_basis(a: Sequence[int]) -> Tuple[Tuple[int, ...], ...]:
    # unimodular column reduction of the row a: a.U has a single non-zero entry
    n = len(a)
    row = list(a)
    U = [[int(i == j) for j in range(n)] for i in range(n)]  # U[i] is column i
    while sum(1 for v in row if v) > 1:
        pivot = min((i for i in range(n) if row[i]), key=lambda i: abs(row[i]))
        for j in range(n):
            if j != pivot and row[j]:
                factor = row[j] // row[pivot]
                row[j] -= factor * row[pivot]
                U[j] = [x - factor * y for x, y in zip(U[j], U[pivot])]
    basis = [U[j] for j in range(n) if row[j] == 0]
    basis = _size_reduce(basis)
    return tuple(tuple(_positive_first(b)) for b in basis)


def _size_reduce(basis):
    changed = True
    while changed:
        changed = False
        for i in range(len(basis)):
            for j in range(len(basis)):
                if i == j:
                    continue
                bi, bj = basis[i], basis[j]
                norm_i = sum(x * x for x in bi)
                factor = round(sum(x * y for x, y in zip(bj, bi)) / norm_i)
                if factor:
                    candidate = [y - factor * x for x, y in zip(bi, bj)]
                    if sum(x * x for x in candidate) < sum(y * y for y in bj):
                        basis[j] = candidate
                        changed = True
    return basis


def _positive_first(b):
    for v in b:
        if v:
            return b if v > 0 else [-x for x in b]
    return b


def resonance_module(w: FrequencyVector) -> ResonanceModule:
    """Integer basis of the kernel of k -> k . omega.

    Rational mode clears denominators and reduces exactly; float mode returns the
    declared basis unchanged.

    Raises:
        ConfigurationError: In float mode when no basis was declared.
    """
    if w.exact:
        a, _ = w.integer_direction()
        basis = _kernel_basis(a)
        logger.debug("resonance module of %s has basis %s", a, basis)
        return ResonanceModule(basis, w.n1, w)
    if w.declared_basis is None:
        raise ConfigurationError(
            "float frequencies need an explicit resonance_basis (use [] for non-resonant)",
            field="problem.resonance_basis",
        )
    basis = tuple(w.declared_basis)
    if basis and np.linalg.matrix_rank(np.asarray(basis, dtype=float)) < len(basis):
        raise ConfigurationError("declared resonance basis is linearly dependent",
                                 field="problem.resonance_basis")
    return ResonanceModule(basis, w.n1, w)


def is_resonant(k: Sequence[int], M: ResonanceModule) -> bool:
    """k . omega == 0 exactly (rational mode) or k in the integer span of the basis."""
    if len(k) != M.n1:
        raise StructuralError(f"harmonic {tuple(k)} has length {len(k)}, expected {M.n1}")
    return M.contains(k)


def _value_distance(a: Tuple[int, ...], target: int, limit: int) -> int:
    # fewest unit steps +-a_i from 0 to target; some optimal ordering keeps the
    # partial sums within one step of the segment [min(0, target), max(0, target)]
    steps = sorted({abs(v) for v in a if v})
    reach = steps[-1]
    low, high = min(0, target) - reach, max(0, target) + reach
    seen = {0}
    frontier = [0]
    for depth in range(1, limit + 1):
        following = []
        for value in frontier:
            for step in steps:
                for nxt in (value + step, value - step):
                    if nxt == target:
                        return depth
                    if low <= nxt <= high and nxt not in seen:
                        seen.add(nxt)
                        following.append(nxt)
        frontier = following
    return limit


@lru_cache(maxsize=4096)
def _lattice_distance(k: Tuple[int, ...], M: ResonanceModule, budget: int) -> int:
    size = sum(abs(v) for v in k)
    if size == 0 or M.contains(k):
        return 0
    if M.is_trivial:
        return size
    if M.omega is not None and M.omega.exact:
        # k - k' lies in M iff a.(k - k') = 0, so only the value a.k matters
        a, _ = M.omega.integer_direction()
        return _value_distance(a, sum(x * y for x, y in zip(a, k)), size)
    # a closer lattice vector k' satisfies |k'| <= |k| + |k - k'| < 2|k|
    candidates = l1_ball(M.n1, 2 * size, budget, include_zero=True)
    members = candidates[M.contains_many(candidates)]
    return int(np.abs(members - np.asarray(k)).sum(axis=1).min())


def lattice_distance(k: Sequence[int], M: ResonanceModule, budget: int = DEFAULT_BUDGET) -> int:
    """min over k' in M of |k - k'|_1.

    Exact frequencies reduce this to a shortest path over the values a.d and never
    enumerate. A declared float basis enumerates the l1 ball of radius 2|k|.

    Raises:
        ResourceError: Float mode only, if that ball exceeds ``budget``.
    """
    return _lattice_distance(tuple(int(v) for v in k), M, budget)


class AlphaResult(NamedTuple):
    value: float
    argmin: Tuple[int, ...]


def _divisors(w: FrequencyVector, points: np.ndarray) -> np.ndarray:
    if w.exact:
        a, denominator = w.integer_direction()
        return np.abs(points @ np.asarray(a, dtype=np.int64)) / denominator
    return np.abs(points @ w.as_array())


def alpha_r(
    w: FrequencyVector,
    M: ResonanceModule,
    r: int,
    K: int,
    budget: int = DEFAULT_BUDGET,
    order: str = "ball",
) -> AlphaResult:
    """min |k . omega| over non-resonant k with |k| <= rK.

    Args:
        order: ``"ball"`` enumerates the l1 ball lexicographically, ``"shells"``
            enumerates shell by shell; both give the same minimum.

    Raises:
        DegenerateError: If every enumerated harmonic is resonant.
        ResourceError: If the enumeration exceeds ``budget``.
    """
    if r < 1 or K < 1:
        raise ParameterError(f"r and K must be positive, got r={r}, K={K}")
    radius = r * K
    best_value, best_k = math.inf, None
    if order == "ball":
        batches = [l1_ball(w.n1, radius, budget)]
    elif order == "shells":
        batches = [shell for _, shell in l1_shells(w.n1, radius, budget)]
    else:
        raise ParameterError(f"unknown enumeration order '{order}'")
    for points in batches:
        points = points[~M.contains_many(points)]
        if not len(points):
            continue
        values = _divisors(w, points)
        i = int(np.argmin(values))
        if values[i] < best_value or (values[i] == best_value and tuple(points[i]) < best_k):
            best_value, best_k = float(values[i]), tuple(int(v) for v in points[i])
    if best_k is None:
        raise DegenerateError(f"every harmonic with |k| <= {radius} is resonant")
    return AlphaResult(best_value, best_k)


class DiophantineResult(NamedTuple):
    ok: bool
    worst_k: Optional[Tuple[int, ...]]
    worst_ratio: float


def diophantine_check(w: FrequencyVector, M: ResonanceModule, rK: int, budget: int = DEFAULT_BUDGET) -> DiophantineResult:
    """Check |k . omega| >= gamma / |k|^tau for every non-resonant 0 < |k| <= rK.

    The worst ratio |k . omega| |k|^tau / gamma is returned with its harmonic;
    the check passes when it is at least one.
    """
    points = l1_ball(w.n1, rK, budget)
    points = points[~M.contains_many(points)]
    if not len(points):
        return DiophantineResult(True, None, math.inf)
    sizes = np.abs(points).sum(axis=1).astype(float)
    ratios = _divisors(w, points) * sizes ** w.tau / w.gamma
    i = int(np.argmin(ratios))
    worst = tuple(int(v) for v in points[i])
    ok = bool(ratios[i] >= 1.0)
    if not ok:
        logger.warning("Diophantine condition fails at k = %s (ratio %.3e)", worst, ratios[i])
    return DiophantineResult(ok, worst, float(ratios[i]))


def projection_matrix(M: ResonanceModule) -> np.ndarray:
    """Orthogonal projector of R^n1 onto span(M)."""
    if M.is_trivial:
        return np.zeros((M.n1, M.n1))
    B = np.asarray(M.basis, dtype=float)
    return B.T @ np.linalg.solve(B @ B.T, B)


def orthogonal_lambda(M: ResonanceModule) -> np.ndarray:
    """A vector of length 1/2 orthogonal to span(M), used for Phi0 = lambda . p."""
    complement = np.eye(M.n1) - projection_matrix(M)
    for column in complement.T:
        norm = np.linalg.norm(column)
        if norm > 1e-12:
            return 0.5 * column / norm
    raise DegenerateError("the resonance module spans every direction, no lambda is orthogonal to it")
