"""Run configuration: a TOML (or JSON) file parsed into frozen dataclasses.

A config has five tables::

    [problem]    n1, n2, omega or omega_float, mu, epsilon, f0, H1 and
                 optionally resonance_basis, gamma, tau, zero_tol, exact
    [domain]     rho, sigma, R
    [algorithm]  K, Kprime, L, r and optionally d, buffer,
                 small_divisor_floor, term_budget, enumeration_budget
    [verify]     optional: points, t_span, dt, lambda, orders, fraction,
                 start_p, start_q, start_x, start_y
    [output]     optional: format, manifest, certificate, drift_csv, summary

``omega`` holds exact rationals written as integers or strings such as ``"1/2"``;
``omega_float`` holds floats and needs ``resonance_basis``. Exactly one of the
two is given.
Series terms are inline arrays ``[re, im, [k...], [mp...], [mz...], [mw...]]``.
"""

import json
import logging
import math
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, fields
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from .enumeration import DEFAULT_BUDGET
from .errors import ConfigurationError, RelegationError
from .norms import DomainParams
from .relegation_engine import DEFAULT_TERM_BUDGET, HamiltonianSpec
from .resonance import FrequencyVector
from .series_core import PoissonSeries

logger = logging.getLogger(__name__)

_TOML_POSITION = re.compile(r"at line (\d+), column (\d+)")


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _scalar(value, field: str):
    """An int, float or a rational written as a string."""
    if _is_number(value):
        return value
    if isinstance(value, str):
        try:
            return Fraction(value)
        except (ValueError, ZeroDivisionError):
            pass
    raise ConfigurationError(f"expected a number or a rational string, got {value!r}", field=field)


def _echo_scalar(value):
    if isinstance(value, Fraction):
        return str(value)
    return value


def _int_field(data: Dict, table: str, name: str, default=None, minimum: Optional[int] = None) -> int:
    value = data.get(name, default)
    field = f"{table}.{name}"
    if value is None:
        raise ConfigurationError("missing required key", field=field)
    if not _is_int(value):
        raise ConfigurationError(f"expected an integer, got {value!r}", field=field)
    if minimum is not None and value < minimum:
        raise ConfigurationError(f"must be at least {minimum}, got {value}", field=field)
    return value


def _float_field(data: Dict, table: str, name: str, default=None, positive: bool = False) -> float:
    value = data.get(name, default)
    field = f"{table}.{name}"
    if value is None:
        raise ConfigurationError("missing required key", field=field)
    if not _is_number(value):
        raise ConfigurationError(f"expected a number, got {value!r}", field=field)
    if positive and not value > 0:
        raise ConfigurationError(f"must be positive, got {value}", field=field)
    return float(value)


def _vector(data: Dict, table: str, name: str) -> Optional[Tuple[float, ...]]:
    value = data.get(name)
    if value is None:
        return None
    if not isinstance(value, list) or not all(_is_number(v) for v in value):
        raise ConfigurationError(f"expected a list of numbers, got {value!r}", field=f"{table}.{name}")
    return tuple(float(v) for v in value)


def _terms(data: Dict, table: str, name: str, exact: bool) -> Tuple[Tuple, ...]:
    rows = data.get(name, [])
    field = f"{table}.{name}"
    if not isinstance(rows, list):
        raise ConfigurationError("expected a list of term rows", field=field)
    out = []
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != 6:
            raise ConfigurationError(
                f"term {i} must be [re, im, [k], [mp], [mz], [mw]], got {row!r}", field=field
            )
        re_, im_ = (_scalar(v, field) for v in row[:2])
        if not exact and (isinstance(re_, Fraction) or isinstance(im_, Fraction)):
            re_, im_ = float(re_), float(im_)
        for part in row[2:]:
            if not isinstance(part, list) or not all(_is_int(v) for v in part):
                raise ConfigurationError(f"term {i} has a non-integer exponent vector {part!r}", field=field)
        out.append((re_, im_) + tuple(tuple(part) for part in row[2:]))
    return tuple(out)


def _frequencies(data: Dict, n1: int) -> Tuple[Optional[Tuple], Optional[Tuple[float, ...]]]:
    """(omega, omega_float); exactly one of them is set."""
    omega, omega_float = data.get("omega"), data.get("omega_float")
    if omega is not None and omega_float is not None:
        raise ConfigurationError("omega and omega_float are mutually exclusive", field="problem.omega_float")
    if omega_float is not None:
        if not isinstance(omega_float, list) or len(omega_float) != n1 or not all(_is_number(v) for v in omega_float):
            raise ConfigurationError(f"expected a list of {n1} numbers, got {omega_float!r}",
                                     field="problem.omega_float")
        return None, tuple(float(v) for v in omega_float)
    if not isinstance(omega, list) or len(omega) != n1:
        raise ConfigurationError(f"expected a list of {n1} frequencies, got {omega!r}", field="problem.omega")
    if any(isinstance(v, float) for v in omega):
        raise ConfigurationError("float frequencies belong in problem.omega_float", field="problem.omega")
    return tuple(_scalar(v, "problem.omega") for v in omega), None


def _reject_unknown(data: Dict, table: str, cls) -> None:
    known = {f.name for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigurationError(f"unknown key '{key}' in table [{table}]", field=f"{table}.{key}")


@dataclass(frozen=True)
class ProblemConfig:
    n1: int
    n2: int
    omega: Optional[Tuple]
    mu: Any
    epsilon: Any
    f0: Tuple[Tuple, ...]
    H1: Tuple[Tuple, ...]
    omega_float: Optional[Tuple[float, ...]] = None
    resonance_basis: Optional[Tuple[Tuple[int, ...], ...]] = None
    gamma: float = 1.0
    tau: float = 2.0
    zero_tol: float = 1e-12
    exact: bool = False

    @classmethod
    def from_dict(cls, data: Dict) -> "ProblemConfig":
        _reject_unknown(data, "problem", cls)
        n1 = _int_field(data, "problem", "n1", minimum=1)
        n2 = _int_field(data, "problem", "n2", default=0, minimum=0)
        omega, omega_float = _frequencies(data, n1)
        basis = data.get("resonance_basis")
        if basis is not None:
            if not isinstance(basis, list) or not all(
                isinstance(k, list) and all(_is_int(v) for v in k) for k in basis
            ):
                raise ConfigurationError("expected a list of integer vectors", field="problem.resonance_basis")
            basis = tuple(tuple(k) for k in basis)
        exact = data.get("exact", False)
        if not isinstance(exact, bool):
            raise ConfigurationError(f"expected true or false, got {exact!r}", field="problem.exact")
        return cls(
            n1=n1,
            n2=n2,
            omega=omega,
            omega_float=omega_float,
            mu=_scalar(data.get("mu", 0), "problem.mu"),
            epsilon=_scalar(data.get("epsilon", 0), "problem.epsilon"),
            f0=_terms(data, "problem", "f0", exact),
            H1=_terms(data, "problem", "H1", exact),
            resonance_basis=basis,
            gamma=_float_field(data, "problem", "gamma", 1.0, positive=True),
            tau=_float_field(data, "problem", "tau", 2.0),
            zero_tol=_float_field(data, "problem", "zero_tol", 1e-12, positive=True),
            exact=exact,
        )

    @property
    def rational(self) -> bool:
        return self.omega_float is None

    def frequency(self) -> FrequencyVector:
        if self.rational:
            if self.resonance_basis is not None:
                raise ConfigurationError("a resonance basis is only declared for float frequencies",
                                         field="problem.resonance_basis")
            return FrequencyVector.rational(self.omega, self.gamma, self.tau)
        if self.resonance_basis is None:
            raise ConfigurationError(
                "float frequencies need an explicit resonance_basis (use [] for non-resonant)",
                field="problem.resonance_basis",
            )
        return FrequencyVector.floating(self.omega_float, self.resonance_basis, self.gamma, self.tau, self.zero_tol)

    def series(self, name: str) -> PoissonSeries:
        try:
            return PoissonSeries.from_terms(self.n1, self.n2, getattr(self, name), self.exact)
        except RelegationError as exc:
            raise ConfigurationError(str(exc), field=f"problem.{name}") from None

    def size(self, name: str):
        """mu or epsilon in the coefficient field of the series."""
        value = getattr(self, name)
        if self.exact:
            return Fraction(value)
        return float(value)

    def to_dict(self) -> Dict:
        data = {
            "n1": self.n1,
            "n2": self.n2,
            "mu": _echo_scalar(self.mu),
            "epsilon": _echo_scalar(self.epsilon),
            "f0": [[_echo_scalar(t[0]), _echo_scalar(t[1])] + [list(p) for p in t[2:]] for t in self.f0],
            "H1": [[_echo_scalar(t[0]), _echo_scalar(t[1])] + [list(p) for p in t[2:]] for t in self.H1],
            "gamma": self.gamma,
            "tau": self.tau,
            "zero_tol": self.zero_tol,
            "exact": self.exact,
        }
        if self.rational:
            data["omega"] = [_echo_scalar(v) for v in self.omega]
        else:
            data["omega_float"] = list(self.omega_float)
        if self.resonance_basis is not None:
            data["resonance_basis"] = [list(k) for k in self.resonance_basis]
        return data


@dataclass(frozen=True)
class DomainConfig:
    rho: float
    sigma: float
    R: float

    @classmethod
    def from_dict(cls, data: Dict) -> "DomainConfig":
        _reject_unknown(data, "domain", cls)
        return cls(*(_float_field(data, "domain", name, positive=True) for name in ("rho", "sigma", "R")))

    def params(self) -> DomainParams:
        return DomainParams(self.rho, self.sigma, self.R)

    def to_dict(self) -> Dict:
        return {"rho": self.rho, "sigma": self.sigma, "R": self.R}


@dataclass(frozen=True)
class AlgorithmConfig:
    K: int
    Kprime: int
    L: int
    r: int
    d: float = 0.125
    buffer: int = 1
    small_divisor_floor: Optional[float] = None
    term_budget: int = DEFAULT_TERM_BUDGET
    enumeration_budget: int = DEFAULT_BUDGET

    @classmethod
    def from_dict(cls, data: Dict) -> "AlgorithmConfig":
        _reject_unknown(data, "algorithm", cls)
        d = _float_field(data, "algorithm", "d", 0.125, positive=True)
        if not d < 0.5:
            raise ConfigurationError(f"must lie in (0, 1/2), got {d}", field="algorithm.d")
        floor = data.get("small_divisor_floor")
        return cls(
            K=_int_field(data, "algorithm", "K", minimum=1),
            Kprime=_int_field(data, "algorithm", "Kprime", minimum=0),
            L=_int_field(data, "algorithm", "L", minimum=0),
            r=_int_field(data, "algorithm", "r", minimum=1),
            d=d,
            buffer=_int_field(data, "algorithm", "buffer", 1, minimum=0),
            small_divisor_floor=None if floor is None else _float_field(
                data, "algorithm", "small_divisor_floor", positive=True
            ),
            term_budget=_int_field(data, "algorithm", "term_budget", DEFAULT_TERM_BUDGET, minimum=1),
            enumeration_budget=_int_field(data, "algorithm", "enumeration_budget", DEFAULT_BUDGET, minimum=1),
        )

    def to_dict(self) -> Dict:
        data = {
            "K": self.K, "Kprime": self.Kprime, "L": self.L, "r": self.r, "d": self.d, "buffer": self.buffer,
            "term_budget": self.term_budget, "enumeration_budget": self.enumeration_budget,
        }
        if self.small_divisor_floor is not None:
            data["small_divisor_floor"] = self.small_divisor_floor
        return data


@dataclass(frozen=True)
class VerifyConfig:
    points: int = 100
    t_span: float = 10.0
    dt: float = 1e-2
    lam: Optional[Tuple[float, ...]] = None
    orders: Optional[Tuple[int, ...]] = None
    fraction: float = 0.75
    start_p: Optional[Tuple[float, ...]] = None
    start_q: Optional[Tuple[float, ...]] = None
    start_x: Optional[Tuple[float, ...]] = None
    start_y: Optional[Tuple[float, ...]] = None

    @classmethod
    def from_dict(cls, data: Dict) -> "VerifyConfig":
        known = {f.name for f in fields(cls)} - {"lam"} | {"lambda"}
        for key in data:
            if key not in known:
                raise ConfigurationError(f"unknown key '{key}' in table [verify]", field=f"verify.{key}")
        orders = data.get("orders")
        if orders is not None:
            if not isinstance(orders, list) or not orders or not all(_is_int(v) and v >= 1 for v in orders):
                raise ConfigurationError(f"expected a list of positive orders, got {orders!r}", field="verify.orders")
            orders = tuple(orders)
        fraction = _float_field(data, "verify", "fraction", 0.75, positive=True)
        if fraction > 1:
            raise ConfigurationError(f"must lie in (0, 1], got {fraction}", field="verify.fraction")
        t_span = _float_field(data, "verify", "t_span", 10.0)
        if t_span < 0:
            raise ConfigurationError(f"must be non-negative, got {t_span}", field="verify.t_span")
        return cls(
            points=_int_field(data, "verify", "points", 100, minimum=1),
            t_span=t_span,
            dt=_float_field(data, "verify", "dt", 1e-2, positive=True),
            lam=_vector(data, "verify", "lambda"),
            orders=orders,
            fraction=fraction,
            start_p=_vector(data, "verify", "start_p"),
            start_q=_vector(data, "verify", "start_q"),
            start_x=_vector(data, "verify", "start_x"),
            start_y=_vector(data, "verify", "start_y"),
        )

    def to_dict(self) -> Dict:
        data = {"points": self.points, "t_span": self.t_span, "dt": self.dt, "fraction": self.fraction}
        optional = {
            "lambda": self.lam, "orders": self.orders, "start_p": self.start_p,
            "start_q": self.start_q, "start_x": self.start_x, "start_y": self.start_y,
        }
        data.update({key: list(value) for key, value in optional.items() if value is not None})
        return data


@dataclass(frozen=True)
class OutputConfig:
    format: str = "text"
    manifest: str = "manifest.json"
    certificate: str = "certificate.json"
    drift_csv: str = "drift.csv"
    summary: str = "verify.json"

    @classmethod
    def from_dict(cls, data: Dict) -> "OutputConfig":
        _reject_unknown(data, "output", cls)
        for key, value in data.items():
            if not isinstance(value, str):
                raise ConfigurationError(f"expected a string, got {value!r}", field=f"output.{key}")
        config = cls(**data)
        if config.format not in ("text", "json"):
            raise ConfigurationError(f"format must be 'text' or 'json', got '{config.format}'", field="output.format")
        return config

    def to_dict(self) -> Dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_TABLES = ("problem", "domain", "algorithm", "verify", "output")


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemConfig
    domain: DomainConfig
    algorithm: AlgorithmConfig
    verify: VerifyConfig = VerifyConfig()
    output: OutputConfig = OutputConfig()

    @classmethod
    def from_dict(cls, data: Dict) -> "RunConfig":
        """Validate a parsed document; every error names the offending field."""
        if not isinstance(data, dict):
            raise ConfigurationError("a config must be a table of tables")
        for key, value in data.items():
            if key not in _TABLES:
                raise ConfigurationError(f"unknown table [{key}]", field=key)
            if not isinstance(value, dict):
                raise ConfigurationError(f"[{key}] must be a table", field=key)
        for key in ("problem", "domain", "algorithm"):
            if key not in data:
                raise ConfigurationError(f"missing table [{key}]", field=key)
        return cls(
            problem=ProblemConfig.from_dict(data["problem"]),
            domain=DomainConfig.from_dict(data["domain"]),
            algorithm=AlgorithmConfig.from_dict(data["algorithm"]),
            verify=VerifyConfig.from_dict(data.get("verify", {})),
            output=OutputConfig.from_dict(data.get("output", {})),
        )

    def to_dict(self) -> Dict:
        """The config echo; ``RunConfig.from_dict(config.to_dict()) == config``."""
        return {name: getattr(self, name).to_dict() for name in _TABLES}

    def build_spec(self) -> HamiltonianSpec:
        """The HamiltonianSpec of this run."""
        problem, algorithm = self.problem, self.algorithm
        return HamiltonianSpec(
            omega=problem.frequency(),
            f0=problem.series("f0"),
            mu=problem.size("mu"),
            H1=problem.series("H1"),
            epsilon=problem.size("epsilon"),
            dp=self.domain.params(),
            K=algorithm.K,
            Kprime=algorithm.Kprime,
            L=algorithm.L,
            r=algorithm.r,
            buffer=algorithm.buffer,
            small_divisor_floor=algorithm.small_divisor_floor,
            term_budget=algorithm.term_budget,
            enumeration_budget=algorithm.enumeration_budget,
        )


def _locate(text: str, field: Optional[str]) -> Tuple[Optional[int], Optional[int]]:
    # line and column of "key =" inside "[table]", or of the table header
    if not field:
        return None, None
    table, _, key = field.partition(".")
    current = None
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith("[") and not stripped.startswith("[["):
            current = stripped.strip("[]").strip()
            if current == table and not key:
                return number, line.index("[") + 1
            continue
        if current == table and key and re.match(rf"{re.escape(key)}\s*=", stripped):
            return number, line.index(key) + 1
    return None, None


def loads_config(text: str, fmt: str = "toml") -> RunConfig:
    """Parse config text.

    Raises:
        ConfigurationError: With line and column for syntax errors and, in TOML,
            for the offending key of a validation error when it can be found.
    """
    if fmt == "toml":
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            match = _TOML_POSITION.search(str(exc))
            line, column = (int(match.group(1)), int(match.group(2))) if match else (None, None)
            raise ConfigurationError(f"TOML syntax error: {exc}", line=line, column=column) from None
    elif fmt == "json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"JSON syntax error: {exc.msg}", line=exc.lineno, column=exc.colno) from None
    else:
        raise ConfigurationError(f"unknown config format '{fmt}'")
    try:
        return RunConfig.from_dict(data)
    except ConfigurationError as exc:
        if fmt == "toml" and exc.line is None:
            line, column = _locate(text, exc.field)
            if line is not None:
                message = str(exc).split("] ", 1)[-1]
                raise ConfigurationError(message, field=exc.field, line=line, column=column) from None
        raise


def load_config(path) -> RunConfig:
    """Read a .toml or .json config file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config '{path}': {exc.strerror}") from None
    config = loads_config(text, "json" if path.suffix.lower() == ".json" else "toml")
    logger.debug("loaded config %s", path)
    return config


def canonical_json(data: Dict) -> str:
    """Sorted, indented JSON; non-finite floats are written as strings."""
    def clean(value):
        if isinstance(value, float) and not math.isfinite(value):
            return str(value)
        if isinstance(value, dict):
            return {str(k): clean(v) for k, v in value.items()}
        if isinstance(value, (list, tuple)):
            return [clean(v) for v in value]
        return value

    return json.dumps(clean(data), sort_keys=True, indent=2) + "\n"
