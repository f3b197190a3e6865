r"""Sparse Fourier--Taylor series in the variables :math:`(p, q, z, i\bar z)`.

A series is a finite sum of terms

.. math::

    c \, p^{m_p} z^{m_z} (i\bar z)^{m_w} e^{i k\cdot q},

stored as a map from :class:`TermKey` ``(k, mp, mz, mw)`` to the coefficient
``c``. The map never holds an exact zero. Coefficients are complex doubles or,
for exact oracles, Gaussian rationals from ``sympy``.

The Poisson bracket follows the convention

.. math::

    \{g, g'\} = \sum_j \left(\partial_{q_j} g\, \partial_{p_j} g'
        - \partial_{p_j} g\, \partial_{q_j} g'\right)
      + \sum_j \left(\partial_{w_j} g\, \partial_{z_j} g'
        - \partial_{z_j} g\, \partial_{w_j} g'\right),

with :math:`w = i\bar z`, so that ``{q_j, p_j} = 1`` and ``{w_j, z_j} = 1``.
"""

import logging
import math
from fractions import Fraction
from functools import cached_property
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from sympy.polys.domains import QQ, QQ_I

from .enumeration import DEFAULT_BUDGET
from .errors import ParameterError, StructuralError
from .resonance import ResonanceModule, lattice_distance

logger = logging.getLogger(__name__)

VARIABLES = ("p", "q", "z", "w")


class TermKey(NamedTuple):
    """Exponent data of one term: Fourier harmonic and monomial exponents."""

    k: Tuple[int, ...]
    mp: Tuple[int, ...]
    mz: Tuple[int, ...]
    mw: Tuple[int, ...]

    @property
    def trig_degree(self) -> int:
        """The l1 norm |k| of the harmonic."""
        return sum(abs(v) for v in self.k)

    @property
    def taylor_degree(self) -> int:
        """Total polynomial degree in (p, z, w)."""
        return sum(self.mp) + sum(self.mz) + sum(self.mw)

    def __add__(self, other: "TermKey") -> "TermKey":  # type: ignore[override]
        return TermKey(
            tuple(a + b for a, b in zip(self.k, other.k)),
            tuple(a + b for a, b in zip(self.mp, other.mp)),
            tuple(a + b for a, b in zip(self.mz, other.mz)),
            tuple(a + b for a, b in zip(self.mw, other.mw)),
        )


class ClassTag(NamedTuple):
    """The pair (K1, K2) of the function class P_{K1,K2}."""

    K1: int
    K2: int

    def within(self, other: "ClassTag") -> bool:
        """True when this class is contained in ``other`` componentwise."""
        return self.K1 <= other.K1 and self.K2 <= other.K2


# ----------------------------------------------------------------------------
# coefficient fields
# ----------------------------------------------------------------------------

def _to_qq(value) -> object:
    if QQ.of_type(value):
        return value
    if isinstance(value, Fraction):
        return QQ(value.numerator, value.denominator)
    if isinstance(value, float):
        frac = Fraction(value)
        return QQ(frac.numerator, frac.denominator)
    return QQ(value)


def coerce(value, exact: bool):
    """Convert a Python number (or pair re, im) into the coefficient field."""
    if exact:
        if hasattr(value, "x") and hasattr(value, "y"):
            return value
        if isinstance(value, tuple):
            re, im = value
        elif isinstance(value, complex):
            re, im = value.real, value.imag
        else:
            re, im = value, 0
        return QQ_I(_to_qq(re), _to_qq(im))
    if isinstance(value, tuple):
        return complex(float(value[0]), float(value[1]))
    if hasattr(value, "x") and hasattr(value, "y"):
        return complex(float(value.x), float(value.y))
    return complex(value)


def imag_unit(exact: bool):
    return QQ_I(0, 1) if exact else 1j


def is_zero(c) -> bool:
    if isinstance(c, complex):
        return c == 0
    return c.x == 0 and c.y == 0


def magnitude(c) -> float:
    """|c| as a float for either field."""
    if isinstance(c, complex):
        return abs(c)
    return math.hypot(float(c.x), float(c.y))


def as_complex(c) -> complex:
    if isinstance(c, complex):
        return c
    return complex(float(c.x), float(c.y))


# ----------------------------------------------------------------------------
# the series value type
# ----------------------------------------------------------------------------

class PoissonSeries:
    """An immutable finite Fourier--Taylor series.

    Args:
        n1: Number of action-angle pairs.
        n2: Number of Cartesian pairs (z, iz̄).
        terms: Map from term keys (or 4-tuples of exponent sequences) to coefficients.
        exact: Use Gaussian rational coefficients instead of complex doubles.

    Raises:
        StructuralError: If a key has the wrong lengths or negative exponents.
    """

    def __init__(
        self,
        n1: int,
        n2: int,
        terms: Optional[Dict] = None,
        exact: bool = False,
        dropped_mass: float = 0.0,
    ) -> None:
        if n1 < 0 or n2 < 0:
            raise StructuralError(f"dimensions must be non-negative, got ({n1}, {n2})")
        self.n1 = int(n1)
        self.n2 = int(n2)
        self.exact = bool(exact)
        self.dropped_mass = float(dropped_mass)
        canonical: Dict[TermKey, object] = {}
        for key, value in (terms or {}).items():
            key = self._check_key(key)
            c = coerce(value, self.exact)
            if key in canonical:
                c = canonical[key] + c
            canonical[key] = c
        self._terms = {key: c for key, c in canonical.items() if not is_zero(c)}

    @classmethod
    def _from_canonical(cls, n1, n2, terms, exact, dropped_mass=0.0) -> "PoissonSeries":
        new = object.__new__(cls)
        new.n1 = n1
        new.n2 = n2
        new.exact = exact
        new.dropped_mass = dropped_mass
        new._terms = {key: c for key, c in terms.items() if not is_zero(c)}
        return new

    def _check_key(self, key) -> TermKey:
        k, mp, mz, mw = (tuple(int(v) for v in part) for part in key)
        if (len(k), len(mp), len(mz), len(mw)) != (self.n1, self.n1, self.n2, self.n2):
            raise StructuralError(
                f"term key lengths {(len(k), len(mp), len(mz), len(mw))} do not match "
                f"dimensions ({self.n1}, {self.n1}, {self.n2}, {self.n2})"
            )
        if min(mp + mz + mw, default=0) < 0:
            raise StructuralError(f"negative exponent in term key {key}")
        return TermKey(k, mp, mz, mw)

    # -- constructors --------------------------------------------------------

    @classmethod
    def zero(cls, n1: int, n2: int, exact: bool = False) -> "PoissonSeries":
        return cls(n1, n2, {}, exact)

    @classmethod
    def constant(cls, n1: int, n2: int, value, exact: bool = False) -> "PoissonSeries":
        return cls.monomial(n1, n2, value, exact=exact)

    @classmethod
    def monomial(
        cls,
        n1: int,
        n2: int,
        coefficient=1,
        k: Optional[Sequence[int]] = None,
        mp: Optional[Sequence[int]] = None,
        mz: Optional[Sequence[int]] = None,
        mw: Optional[Sequence[int]] = None,
        exact: bool = False,
    ) -> "PoissonSeries":
        """A single term; omitted exponent vectors default to zero."""
        key = (
            tuple(k) if k is not None else (0,) * n1,
            tuple(mp) if mp is not None else (0,) * n1,
            tuple(mz) if mz is not None else (0,) * n2,
            tuple(mw) if mw is not None else (0,) * n2,
        )
        return cls(n1, n2, {key: coefficient}, exact)

    @classmethod
    def variable(cls, n1: int, n2: int, name: str, j: int, exact: bool = False) -> "PoissonSeries":
        """The coordinate function p_j, z_j or w_j = iz̄_j, or e^{i q_j} for name 'q'."""
        unit = [0] * (n1 if name in ("p", "q") else n2)
        unit[j] = 1
        return cls.monomial(n1, n2, 1, **{{"p": "mp", "q": "k", "z": "mz", "w": "mw"}[name]: unit}, exact=exact)

    @classmethod
    def from_terms(cls, n1: int, n2: int, rows: Iterable[Sequence], exact: bool = False) -> "PoissonSeries":
        """Build from rows ``[re, im, k, mp, mz, mw]``; repeated keys are summed."""
        terms: Dict = {}
        for row in rows:
            if len(row) != 6:
                raise StructuralError(f"a term row has 6 entries [re, im, k, mp, mz, mw], got {len(row)}")
            re, im, *key = row
            key = tuple(tuple(part) for part in key)
            value = coerce((Fraction(re), Fraction(im)) if exact else (re, im), exact)
            terms[key] = terms[key] + value if key in terms else value
        return cls(n1, n2, terms, exact)

    @classmethod
    def frequency_hamiltonian(cls, omega: Sequence, n2: int = 0, exact: bool = False) -> "PoissonSeries":
        """h0 = omega . p."""
        n1 = len(omega)
        terms = {}
        for j, w in enumerate(omega):
            mp = [0] * n1
            mp[j] = 1
            terms[((0,) * n1, tuple(mp), (0,) * n2, (0,) * n2)] = w
        return cls(n1, n2, terms, exact)

    @classmethod
    def cosine(cls, n1: int, n2: int, k: Sequence[int], amplitude=1, exact: bool = False) -> "PoissonSeries":
        """amplitude * cos(k . q) as (e^{ik.q} + e^{-ik.q}) / 2."""
        half = coerce(amplitude, exact) * coerce(Fraction(1, 2), exact)
        k = tuple(int(v) for v in k)
        minus_k = tuple(-v for v in k)
        return cls(
            n1, n2,
            {(k, (0,) * n1, (0,) * n2, (0,) * n2): half,
             (minus_k, (0,) * n1, (0,) * n2, (0,) * n2): half},
            exact,
        )

    @classmethod
    def sine(cls, n1: int, n2: int, k: Sequence[int], amplitude=1, exact: bool = False) -> "PoissonSeries":
        """amplitude * sin(k . q) as (e^{ik.q} - e^{-ik.q}) / 2i."""
        half = coerce(amplitude, exact) * coerce((0, Fraction(-1, 2)), exact)
        k = tuple(int(v) for v in k)
        minus_k = tuple(-v for v in k)
        return cls(
            n1, n2,
            {(k, (0,) * n1, (0,) * n2, (0,) * n2): half,
             (minus_k, (0,) * n1, (0,) * n2, (0,) * n2): -half},
            exact,
        )

    # -- inspection ----------------------------------------------------------

    def items(self) -> List[Tuple[TermKey, object]]:
        """Terms in lexicographic key order."""
        return sorted(self._terms.items())

    def coefficient(self, key) -> object:
        key = self._check_key(key)
        return self._terms.get(key, coerce(0, self.exact))

    def __len__(self) -> int:
        return len(self._terms)

    def __iter__(self):
        return iter(self.items())

    @property
    def is_zero(self) -> bool:
        return not self._terms

    @property
    def trig_bound(self) -> Optional[int]:
        """max |k| over stored terms (None for the empty series)."""
        return max((key.trig_degree for key in self._terms), default=None)

    @property
    def taylor_bound(self) -> Optional[int]:
        return max((key.taylor_degree for key in self._terms), default=None)

    def harmonics(self) -> List[Tuple[int, ...]]:
        return sorted({key.k for key in self._terms})

    def __eq__(self, other) -> bool:
        if not isinstance(other, PoissonSeries):
            return NotImplemented
        return (self.n1, self.n2, self.exact) == (other.n1, other.n2, other.exact) and self._terms == other._terms

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"PoissonSeries(n1={self.n1}, n2={self.n2}, terms={len(self)}, exact={self.exact})"

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, PoissonSeries):
            return add(self, other)
        return add(self, PoissonSeries.constant(self.n1, self.n2, other, self.exact))

    __radd__ = __add__

    def __neg__(self):
        return scale(self, -1)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, PoissonSeries):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def approx_equal(self, other: "PoissonSeries", rtol: float = 1e-12, atol: float = 0.0) -> bool:
        """Coefficientwise comparison relative to the larger coefficient magnitude."""
        _check_dims(self, other)
        scale_ = max(
            max((magnitude(c) for c in self._terms.values()), default=0.0),
            max((magnitude(c) for c in other._terms.values()), default=0.0),
        )
        diff = sub(self, other)
        return all(magnitude(c) <= atol + rtol * scale_ for c in diff._terms.values())

    def max_abs(self) -> float:
        return max((magnitude(c) for c in self._terms.values()), default=0.0)

    # -- evaluation ----------------------------------------------------------

    @cached_property
    def _arrays(self):
        keys = list(self._terms)
        n = len(keys)
        k = np.array([key.k for key in keys], dtype=float).reshape(n, self.n1)
        mp = np.array([key.mp for key in keys], dtype=np.int64).reshape(n, self.n1)
        mz = np.array([key.mz for key in keys], dtype=np.int64).reshape(n, self.n2)
        mw = np.array([key.mw for key in keys], dtype=np.int64).reshape(n, self.n2)
        c = np.array([as_complex(self._terms[key]) for key in keys], dtype=complex)
        return k, mp, mz, mw, c

    def __call__(self, p, q, z=(), w=()) -> complex:
        """Evaluate at a complex point (p, q, z, w) with w = iz̄."""
        if self.is_zero:
            return 0j
        k, mp, mz, mw, c = self._arrays
        p = np.asarray(p, dtype=complex).reshape(self.n1)
        q = np.asarray(q, dtype=complex).reshape(self.n1)
        values = c * np.exp(1j * (k @ q)) * _monomials(p, mp)
        if self.n2:
            z = np.asarray(z, dtype=complex).reshape(self.n2)
            w = np.asarray(w, dtype=complex).reshape(self.n2)
            values = values * _monomials(z, mz) * _monomials(w, mw)
        return complex(values.sum())


def _monomials(x: np.ndarray, exponents: np.ndarray) -> np.ndarray:
    # x**0 is taken as 1 also at x = 0
    powers = np.ones(exponents.shape, dtype=complex)
    for j in range(exponents.shape[1]):
        column = exponents[:, j]
        nonzero = column > 0
        powers[nonzero, j] = x[j] ** column[nonzero]
    return np.prod(powers, axis=1)


# ----------------------------------------------------------------------------
# operations
# ----------------------------------------------------------------------------

def _check_dims(a: PoissonSeries, b: PoissonSeries) -> None:
    if (a.n1, a.n2) != (b.n1, b.n2):
        raise StructuralError(f"dimension mismatch: ({a.n1}, {a.n2}) vs ({b.n1}, {b.n2})")
    if a.exact != b.exact:
        raise StructuralError("cannot combine exact and floating-point series")


def add(a: PoissonSeries, b: PoissonSeries) -> PoissonSeries:
    """Termwise sum in canonical form."""
    _check_dims(a, b)
    terms = dict(a._terms)
    for key, c in b._terms.items():
        terms[key] = terms[key] + c if key in terms else c
    return PoissonSeries._from_canonical(a.n1, a.n2, terms, a.exact)


def sub(a: PoissonSeries, b: PoissonSeries) -> PoissonSeries:
    return add(a, scale(b, -1))


def scale(g: PoissonSeries, factor) -> PoissonSeries:
    c = coerce(factor, g.exact)
    return PoissonSeries._from_canonical(g.n1, g.n2, {key: c * v for key, v in g._terms.items()}, g.exact)


def sum_series(series: Iterable[PoissonSeries], n1: int, n2: int, exact: bool = False) -> PoissonSeries:
    total = PoissonSeries.zero(n1, n2, exact)
    for g in series:
        total = add(total, g)
    return total


def _accumulate_product(acc: Dict, a_terms: Dict, b_terms: Dict, sign) -> None:
    for ka, ca in a_terms.items():
        for kb, cb in b_terms.items():
            key = ka + kb
            value = sign * ca * cb
            acc[key] = acc[key] + value if key in acc else value


def mul(a: PoissonSeries, b: PoissonSeries) -> PoissonSeries:
    """Distributive product; harmonics and exponents add."""
    _check_dims(a, b)
    acc: Dict[TermKey, object] = {}
    _accumulate_product(acc, a._terms, b._terms, coerce(1, a.exact))
    return PoissonSeries._from_canonical(a.n1, a.n2, acc, a.exact)


def _derivative_terms(g: PoissonSeries, var: str, j: int) -> Dict[TermKey, object]:
    out: Dict[TermKey, object] = {}
    if var == "q":
        i_unit = imag_unit(g.exact)
        for key, c in g._terms.items():
            if key.k[j]:
                out[key] = c * i_unit * coerce(key.k[j], g.exact)
        return out
    field = {"p": "mp", "z": "mz", "w": "mw"}[var]
    for key, c in g._terms.items():
        exps = getattr(key, field)
        if exps[j]:
            lowered = exps[:j] + (exps[j] - 1,) + exps[j + 1:]
            out[key._replace(**{field: lowered})] = c * coerce(exps[j], g.exact)
    return out


def derivative(g: PoissonSeries, var: str, j: int) -> PoissonSeries:
    """Partial derivative with respect to p_j, q_j, z_j or w_j."""
    if var not in VARIABLES:
        raise ParameterError(f"unknown variable '{var}', expected one of {VARIABLES}")
    size = g.n1 if var in ("p", "q") else g.n2
    if not 0 <= j < size:
        raise ParameterError(f"index {j} out of range for variable '{var}'")
    return PoissonSeries._from_canonical(g.n1, g.n2, _derivative_terms(g, var, j), g.exact)


def poisson_bracket(g: PoissonSeries, gp: PoissonSeries) -> PoissonSeries:
    """The exact bracket {g, gp} of two finite series."""
    _check_dims(g, gp)
    acc: Dict[TermKey, object] = {}
    plus, minus = coerce(1, g.exact), coerce(-1, g.exact)
    if g.is_zero or gp.is_zero:
        return PoissonSeries.zero(g.n1, g.n2, g.exact)
    for j in range(g.n1):
        _accumulate_product(acc, _derivative_terms(g, "q", j), _derivative_terms(gp, "p", j), plus)
        _accumulate_product(acc, _derivative_terms(g, "p", j), _derivative_terms(gp, "q", j), minus)
    for j in range(g.n2):
        _accumulate_product(acc, _derivative_terms(g, "w", j), _derivative_terms(gp, "z", j), plus)
        _accumulate_product(acc, _derivative_terms(g, "z", j), _derivative_terms(gp, "w", j), minus)
    return PoissonSeries._from_canonical(g.n1, g.n2, acc, g.exact)


def lie_derivative(X: PoissonSeries, g: PoissonSeries) -> PoissonSeries:
    """L_X g = {X, g}."""
    return poisson_bracket(X, g)


def fourier_split(g: PoissonSeries, K: int) -> List[PoissonSeries]:
    """Shells h_s holding the harmonics with (s-1)K <= |k| < sK, s = 1..s_max."""
    if K < 1:
        raise ParameterError(f"shell width K must be a positive integer, got {K}")
    if g.is_zero:
        return []
    s_max = g.trig_bound // K + 1
    shells: List[Dict[TermKey, object]] = [{} for _ in range(s_max)]
    for key, c in g._terms.items():
        shells[key.trig_degree // K][key] = c
    return [PoissonSeries._from_canonical(g.n1, g.n2, terms, g.exact) for terms in shells]


def class_of(g: PoissonSeries, M: ResonanceModule, budget: int = DEFAULT_BUDGET) -> ClassTag:
    """Smallest (K1, K2) such that g belongs to P_{K1,K2} for the module M.

    ``budget`` only limits the lattice search of a declared float basis.
    """
    if g.is_zero:
        return ClassTag(0, 0)
    K1 = 0
    for k in g.harmonics():
        K1 = max(K1, lattice_distance(k, M, budget))
    return ClassTag(K1, g.trig_bound)


def split_resonant(g: PoissonSeries, M: ResonanceModule) -> Tuple[PoissonSeries, PoissonSeries]:
    """(resonant part, non-resonant part) of g with respect to M."""
    resonant, other = {}, {}
    verdict: Dict[Tuple[int, ...], bool] = {}
    for key, c in g._terms.items():
        if key.k not in verdict:
            verdict[key.k] = M.contains(key.k)
        (resonant if verdict[key.k] else other)[key] = c
    return (
        PoissonSeries._from_canonical(g.n1, g.n2, resonant, g.exact),
        PoissonSeries._from_canonical(g.n1, g.n2, other, g.exact),
    )


def resonant_part(g: PoissonSeries, M: ResonanceModule) -> PoissonSeries:
    return split_resonant(g, M)[0]


def nonresonant_part(g: PoissonSeries, M: ResonanceModule) -> PoissonSeries:
    return split_resonant(g, M)[1]


def truncate(g: PoissonSeries, max_trig: Optional[int] = None, max_taylor: Optional[int] = None) -> PoissonSeries:
    """Drop the terms with |k| > max_trig or total degree > max_taylor.

    The sum of the dropped coefficient magnitudes is added to ``dropped_mass``.
    """
    if (max_trig is not None and max_trig < 0) or (max_taylor is not None and max_taylor < 0):
        raise ParameterError("truncation bounds must be non-negative")
    kept, dropped = {}, 0.0
    for key, c in g._terms.items():
        if (max_trig is not None and key.trig_degree > max_trig) or (
            max_taylor is not None and key.taylor_degree > max_taylor
        ):
            dropped += magnitude(c)
        else:
            kept[key] = c
    if dropped:
        logger.debug("truncation dropped %d terms of mass %.3e", len(g) - len(kept), dropped)
    return PoissonSeries._from_canonical(g.n1, g.n2, kept, g.exact, g.dropped_mass + dropped)


# ----------------------------------------------------------------------------
# text format
# ----------------------------------------------------------------------------

def _format_scalar(value, exact: bool) -> str:
    return str(value) if exact else repr(float(value))


def dumps(g: PoissonSeries) -> str:
    """Serialize to the line based text format, terms in lexicographic order."""
    header = f"{g.n1} {g.n2}" + (" exact" if g.exact else "")
    lines = [header]
    for key, c in g.items():
        if g.exact:
            re, im = _format_scalar(c.x, True), _format_scalar(c.y, True)
        else:
            re, im = _format_scalar(c.real, False), _format_scalar(c.imag, False)
        groups = [" ".join(str(v) for v in part) for part in key]
        lines.append(f"{re} {im} | " + " | ".join(groups))
    return "\n".join(lines) + "\n"


def loads(text: str) -> PoissonSeries:
    """Parse the text format; raises StructuralError with the offending line number."""
    lines = [line for line in text.splitlines() if line.strip() and not line.lstrip().startswith("#")]
    if not lines:
        raise StructuralError("empty series text: missing 'n1 n2' header")
    head = lines[0].split()
    try:
        n1, n2 = int(head[0]), int(head[1])
    except (IndexError, ValueError):
        raise StructuralError(f"line 1: malformed header '{lines[0]}'") from None
    exact = len(head) > 2 and head[2] == "exact"
    terms = {}
    for number, line in enumerate(lines[1:], start=2):
        fields = line.split("|")
        if len(fields) != 5:
            raise StructuralError(f"line {number}: expected 5 '|'-separated fields, got {len(fields)}")
        try:
            re_text, im_text = fields[0].split()
            if exact:
                value = (Fraction(re_text), Fraction(im_text))
            else:
                value = complex(float(re_text), float(im_text))
            key = tuple(tuple(int(v) for v in field.split()) for field in fields[1:])
        except ValueError as exc:
            raise StructuralError(f"line {number}: {exc}") from None
        if key in terms:
            raise StructuralError(f"line {number}: duplicate term key {key}")
        terms[key] = value
    return PoissonSeries(n1, n2, terms, exact)


def dump(g: PoissonSeries, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(dumps(g))


def load(path) -> PoissonSeries:
    with open(path, encoding="utf-8") as handle:
        return loads(handle.read())
