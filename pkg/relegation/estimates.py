"""Derived constants, smallness conditions, remainder bounds and stability times."""

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, NamedTuple, Optional, Tuple

from .enumeration import DEFAULT_BUDGET
from .errors import CertificateRefused, ParameterError
from .norms import DomainParams, Restriction, lie_transform_condition, weighted_norm, xi
from .resonance import AlphaResult, FrequencyVector, ResonanceModule, alpha_r, diophantine_check

logger = logging.getLogger(__name__)

A_PRIORI = "a-priori"
A_POSTERIORI = "a-posteriori"

MU_THRESHOLD = 2.0 ** -7
ETA_THRESHOLD = 0.5
LOG_SPACE_FROM = 30


@dataclass(frozen=True)
class EstimateInputs:
    """Everything the estimate formulas read.

    Args:
        G: Bound for the norm of f0 on the 2 sigma domain.
        H1_norm: Majorant of |H1| on the 2 sigma domain.
        d: Final restriction of the generating-function lemma, 1/8 in the main statement.
        F: Overrides the decay constant F (used by the a-posteriori mode).
        alpha: Precomputed small divisor, enumerated when absent.
    """

    dp: DomainParams
    mu: float
    epsilon: float
    G: float
    H1_norm: float
    K: int
    Kprime: int
    L: int
    r: int
    w: FrequencyVector
    M: ResonanceModule
    d: float = 0.125
    F: Optional[float] = None
    alpha: Optional[AlphaResult] = None
    enumeration_budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        for name in ("mu", "epsilon", "G", "H1_norm"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.K < 1 or self.r < 1:
            raise ParameterError(f"K and r must be at least 1, got K={self.K}, r={self.r}")
        if self.L < 0 or self.Kprime < 0:
            raise ParameterError(f"L and Kprime must be non-negative, got L={self.L}, Kprime={self.Kprime}")
        Restriction(self.d)
        if self.d >= 1:
            raise ParameterError(f"restriction d must be below 1, got {self.d}")

    @property
    def n1(self) -> int:
        return self.w.n1

    @property
    def Xi(self) -> float:
        return xi(self.dp)

    def small_divisor(self) -> AlphaResult:
        if self.alpha is not None:
            return self.alpha
        return alpha_r(self.w, self.M, self.r, self.K, self.enumeration_budget)

    @classmethod
    def from_spec(cls, spec, G: Optional[float] = None, H1_norm: Optional[float] = None, d: float = 0.125):
        """Inputs for a HamiltonianSpec; missing norms are the majorants on the 2 sigma domain."""
        wide = spec.dp.doubled_sigma()
        return cls(
            dp=spec.dp,
            mu=float(spec.mu),
            epsilon=float(spec.epsilon),
            G=weighted_norm(spec.f0, wide) if G is None else G,
            H1_norm=weighted_norm(spec.H1, wide) if H1_norm is None else H1_norm,
            K=spec.K,
            Kprime=spec.Kprime,
            L=spec.L,
            r=spec.r,
            w=spec.omega,
            M=spec.module,
            d=d,
            enumeration_budget=spec.enumeration_budget,
        )


class Conditions(NamedTuple):
    mu_ok: bool
    eta_ok: bool
    mu_margin: float
    eta_margin: float
    eta: float


class EtaTheta(NamedTuple):
    """eta_1..eta_s (index s - 1), theta_0..theta_s and the cap (C_r + zeta)^{s-1} 4^{s-1} / s."""

    eta: List[float]
    theta: List[float]
    cap: List[float]
    log_cap: List[float]
    reduced: List[float]


class GeneratingBounds(NamedTuple):
    C_r: float
    b: float
    psi: List[float]
    X: List[float]
    certified: bool
    margin: float


class NonresonantCertificate(NamedTuple):
    r_real: float
    r_opt: int
    K_opt: int
    epsilon_star: float
    T_const: float
    t_star: float
    log10_t_star: float


def _spread(sigma: float) -> float:
    return (1.0 + math.exp(-sigma / 2)) / (1.0 - math.exp(-sigma / 2))


def decay_constants(inputs: EstimateInputs) -> Tuple[float, float]:
    """zeta = e^{-K sigma / 2} and F = epsilon ((1 + e^{-sigma/2}) / (1 - e^{-sigma/2}))^{n1} |H1|."""
    sigma = inputs.dp.sigma
    zeta = math.exp(-inputs.K * sigma / 2)
    if inputs.F is not None:
        return zeta, inputs.F
    return zeta, inputs.epsilon * _spread(sigma) ** inputs.n1 * inputs.H1_norm


def big_A(inputs: EstimateInputs) -> float:
    """A = 2^21 Xi^2 ((1 + e^{-sigma/2}) / (1 - e^{-sigma/2}))^{n1} |H1|."""
    return 2.0 ** 21 * inputs.Xi ** 2 * _spread(inputs.dp.sigma) ** inputs.n1 * inputs.H1_norm


def check_conditions(inputs: EstimateInputs, alpha: Optional[float] = None) -> Conditions:
    """9 r^2 L Xi mu G / alpha_r <= 2^-7 and eta = eps r^4 A / alpha_r^2 + 4 e^{-K sigma/2} <= 1/2.

    Margins are the left sides divided by the thresholds.
    """
    if alpha is None:
        alpha = inputs.small_divisor().value
    r = inputs.r
    mu_value = 9 * r ** 2 * inputs.L * inputs.Xi * inputs.mu * inputs.G / alpha
    eta = inputs.epsilon * r ** 4 * big_A(inputs) / alpha ** 2 + 4 * math.exp(-inputs.K * inputs.dp.sigma / 2)
    conditions = Conditions(
        mu_value <= MU_THRESHOLD, eta <= ETA_THRESHOLD, mu_value / MU_THRESHOLD, eta / ETA_THRESHOLD, eta
    )
    if not conditions.mu_ok:
        logger.warning("smallness condition on mu fails (margin %.3e)", conditions.mu_margin)
    if not conditions.eta_ok:
        logger.warning("smallness condition on eta fails (eta = %.3e)", eta)
    return conditions


def catalan_numbers(n: int) -> List[int]:
    """nu_1 = 1, nu_s = sum_{j=1}^{s-1} nu_j nu_{s-j}, for s = 1..n."""
    nu = [1]
    for s in range(2, n + 1):
        nu.append(sum(nu[j - 1] * nu[s - j - 1] for j in range(1, s)))
    return nu[:max(n, 0)]


def eta_theta_sequences(C_r: float, zeta: float, s_max: int) -> EtaTheta:
    """The eta/theta recursion of the generating-function estimates.

    ``reduced`` is the sequence eta'_s = zeta^{s-1} + C_r sum eta'_j eta'_{s-j} obtained by
    eliminating theta; the Catalan cap holds for it. The full ``eta`` keeps the weighted
    j/s sums and the theta coupling, which can push it above the cap for some (C_r, zeta)
    in (0, 1), so the cap is checked on ``reduced`` only. The caps are evaluated in log
    space from s = 30 on.
    """
    if s_max < 1:
        raise ParameterError(f"s_max must be at least 1, got {s_max}")
    eta: List[float] = []
    theta: List[float] = [1.0]
    reduced: List[float] = []
    for s in range(1, s_max + 1):
        value = zeta ** (s - 1)
        value += C_r / s * math.fsum(j * eta[j - 1] * zeta ** (s - j - 1) for j in range(1, s))
        value += C_r / s * math.fsum(j * eta[j - 1] * eta[s - j - 1] for j in range(1, s))
        value += 1.0 / s * math.fsum(j * eta[j - 1] * theta[s - j] for j in range(1, s))
        eta.append(value)
        theta.append(C_r / s * math.fsum(j * eta[j - 1] * theta[s - j] for j in range(1, s + 1)))
        reduced.append(zeta ** (s - 1) + C_r * math.fsum(reduced[j - 1] * reduced[s - j - 1] for j in range(1, s)))

    log_cap, cap = [], []
    for s in range(1, s_max + 1):
        base = C_r + zeta
        if base == 0:
            log_value = 0.0 if s == 1 else -math.inf
        else:
            log_value = (s - 1) * math.log(base) + (s - 1) * math.log(4.0) - math.log(s)
        log_cap.append(log_value)
        if s < LOG_SPACE_FROM:
            cap.append(base ** (s - 1) * 4.0 ** (s - 1) / s)
        else:
            cap.append(math.exp(log_value) if log_value < 709 else math.inf)
    if not all(math.isfinite(v) for v in eta):
        logger.warning("eta recursion overflowed before s = %d", s_max)
    return EtaTheta(eta, theta, cap, log_cap, reduced)


def generating_bounds(inputs: EstimateInputs, F: float, alpha: float) -> GeneratingBounds:
    """||Psi_s|| <= b^{s-1} F / s and ||X_s|| <= b^{s-1} (2F / alpha_r) / s on the (1 - d) domain.

    b = 4 (2^7 r^4 F Xi^2 / (alpha_r^2 d^4) + zeta); the bounds are certified when
    9 r^2 L Xi mu G / (alpha_r d^2) <= 1/2.
    """
    zeta = math.exp(-inputs.K * inputs.dp.sigma / 2)
    r, d, Xi = inputs.r, inputs.d, inputs.Xi
    C_r = 2.0 ** 7 * r ** 4 * F * Xi ** 2 / (alpha ** 2 * d ** 4)
    b = 4.0 * (C_r + zeta)
    condition = 9 * r ** 2 * inputs.L * Xi * inputs.mu * inputs.G / (alpha * d ** 2)
    psi = [b ** (s - 1) / s * F for s in range(1, r + 1)]
    X = [b ** (s - 1) / s * 2.0 * F / alpha for s in range(1, r + 1)]
    return GeneratingBounds(C_r, b, psi, X, condition <= 0.5, condition / 0.5)


def remainder_bound(inputs: EstimateInputs, eta: float) -> Tuple[float, bool]:
    """(epsilon A / (2^18 Xi^2) eta^r, certified) with certified meaning eta < 1."""
    value = inputs.epsilon * big_A(inputs) / (2.0 ** 18 * inputs.Xi ** 2) * eta ** inputs.r
    return value, eta < 1


def local_stability_time(inputs: EstimateInputs, eta: float) -> Tuple[float, float, float]:
    """(t*, drift rate, log10 t*).

    t* = 2^12 e rho sigma Xi^2 / (A epsilon eta^r); the drift rate
    epsilon A eta^r / (2^14 e sigma Xi^2) makes drift * t* = rho / 4.
    """
    dp, Xi, r = inputs.dp, inputs.Xi, inputs.r
    A = big_A(inputs)
    rate = inputs.epsilon * A * eta ** r / (2.0 ** 14 * math.e * dp.sigma * Xi ** 2)
    if inputs.epsilon == 0 or A == 0 or eta == 0:
        return math.inf, rate, math.inf
    log10_t = (
        math.log10(2.0 ** 12 * math.e * dp.rho * dp.sigma * Xi ** 2)
        - math.log10(A) - math.log10(inputs.epsilon) - r * math.log10(eta)
    )
    t_star = 10.0 ** log10_t if log10_t < 308 else math.inf
    return t_star, rate, log10_t


def mu_star(inputs: EstimateInputs, alpha: float) -> float:
    """Largest mu with 9 r^2 L Xi mu G / alpha_r <= 2^-7."""
    denominator = 9 * inputs.r ** 2 * inputs.L * inputs.Xi * inputs.G
    return math.inf if denominator == 0 else MU_THRESHOLD * alpha / denominator


def epsilon_star(inputs: EstimateInputs, alpha: float) -> float:
    """Largest epsilon with eps r^4 A / alpha_r^2 + 4 e^{-K sigma / 2} <= 1/2 (0 if K is too small)."""
    room = ETA_THRESHOLD - 4 * math.exp(-inputs.K * inputs.dp.sigma / 2)
    if room <= 0:
        return 0.0
    A = big_A(inputs)
    return math.inf if A == 0 else room * alpha ** 2 / (inputs.r ** 4 * A)


def optimal_K(sigma: float) -> int:
    return math.ceil(2 * (1 + 3 * math.log(2)) / sigma)


def nonresonant_certificate(inputs: EstimateInputs) -> NonresonantCertificate:
    """The exponential stability time for a non-resonant omega.

    K = ceil(2 (1 + 3 log 2) / sigma), r = (gamma^2 / (2 eps e A K^{2 tau}))^{1 / (4 + 2 tau)},
    eps* = gamma^2 / (2 e A K^{2 tau}), T = 2^12 e rho sigma Xi^2 / A and
    t* <= (T / eps) exp(r). The engine order is r floored to an integer >= 1.

    Raises:
        CertificateRefused: If the resonance module is not trivial.
    """
    if not inputs.M.is_trivial:
        raise CertificateRefused(
            f"the non-resonant certificate needs a trivial resonance module, got basis {inputs.M.basis}"
        )
    w, dp = inputs.w, inputs.dp
    if w.tau <= inputs.n1:
        logger.warning("tau = %s does not exceed n1 = %d", w.tau, inputs.n1)
    K_opt = optimal_K(dp.sigma)
    A = big_A(inputs)
    if A == 0:
        return NonresonantCertificate(math.inf, 1, K_opt, math.inf, math.inf, math.inf, math.inf)
    eps_star = w.gamma ** 2 / (2 * math.e * A * K_opt ** (2 * w.tau))
    T_const = 2.0 ** 12 * math.e * dp.rho * dp.sigma * inputs.Xi ** 2 / A
    if inputs.epsilon == 0:
        return NonresonantCertificate(math.inf, 1, K_opt, eps_star, T_const, math.inf, math.inf)
    r_real = (eps_star / inputs.epsilon) ** (1.0 / (4 + 2 * w.tau))
    log10_t = math.log10(T_const / inputs.epsilon) + r_real / math.log(10)
    t_star = 10.0 ** log10_t if log10_t < 308 else math.inf
    if inputs.epsilon > eps_star:
        logger.warning("epsilon = %.3e exceeds epsilon* = %.3e, so r < 1", inputs.epsilon, eps_star)
    return NonresonantCertificate(r_real, max(1, math.floor(r_real)), K_opt, eps_star, T_const, t_star, log10_t)


# ----------------------------------------------------------------------------
# reports
# ----------------------------------------------------------------------------

def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


@dataclass
class EstimateReport:
    """Every derived constant of one estimate run, with the condition flags."""

    mode: str
    zeta: float
    F: float
    Xi: float
    A: float
    alpha_r: float
    alpha_argmin: Tuple[int, ...]
    eta: float
    C_r: float
    b: float
    condition_mu_ok: bool
    condition_eta_ok: bool
    mu_margin: float
    eta_margin: float
    lemma_condition_ok: bool
    lemma_margin: float
    mu_star: float
    epsilon_star: float
    remainder_bound: float
    remainder_certified: bool
    t_local: float
    log10_t_local: float
    drift_rate: float
    psi_bounds: List[float]
    X_bounds: List[float]
    diophantine_ok: Optional[bool] = None
    diophantine_worst: Optional[Tuple[int, ...]] = None
    measured_psi: List[float] = field(default_factory=list)
    measured_X: List[float] = field(default_factory=list)
    transform_condition_ok: Optional[bool] = None
    transform_margin: Optional[float] = None
    domination_ok: Optional[bool] = None
    nonresonant: Optional[NonresonantCertificate] = None

    @property
    def certified(self) -> bool:
        return self.condition_mu_ok and self.condition_eta_ok

    def to_dict(self) -> Dict:
        data = asdict(self)
        if self.nonresonant is not None:
            data["nonresonant"] = self.nonresonant._asdict()
        data["certified"] = self.certified
        return _jsonable(data)

    def summary(self) -> str:
        """A fixed-width table for the terminal."""
        rows = [
            ("mode", self.mode),
            ("Xi", f"{self.Xi:.6e}"),
            ("A", f"{self.A:.6e}"),
            ("zeta", f"{self.zeta:.6e}"),
            ("F", f"{self.F:.6e}"),
            ("alpha_r", f"{self.alpha_r:.6e} at k = {self.alpha_argmin}"),
            ("eta", f"{self.eta:.6e}"),
            ("mu condition", f"{'ok' if self.condition_mu_ok else 'FAILS'} (margin {self.mu_margin:.3e})"),
            ("eta condition", f"{'ok' if self.condition_eta_ok else 'FAILS'} (margin {self.eta_margin:.3e})"),
            ("lemma condition", f"{'ok' if self.lemma_condition_ok else 'FAILS'} (margin {self.lemma_margin:.3e})"),
            ("mu*", f"{self.mu_star:.6e}"),
            ("epsilon*", f"{self.epsilon_star:.6e}"),
            ("remainder bound", f"{self.remainder_bound:.6e}"),
            ("t* (local)", f"{self.t_local:.6e} (log10 {self.log10_t_local:.3f})"),
            ("drift rate", f"{self.drift_rate:.6e}"),
        ]
        if self.transform_condition_ok is not None:
            rows.append((
                "transform condition",
                f"{'ok' if self.transform_condition_ok else 'FAILS'} (margin {self.transform_margin:.3e})",
            ))
        if self.domination_ok is not None:
            rows.append(("a-posteriori domination", "ok" if self.domination_ok else "FAILS"))
        if self.nonresonant is not None:
            nr = self.nonresonant
            rows += [
                ("K_opt", str(nr.K_opt)),
                ("r_opt", f"{nr.r_opt} ({nr.r_real:.6e})"),
                ("epsilon* (theorem)", f"{nr.epsilon_star:.6e}"),
                ("T", f"{nr.T_const:.6e}"),
                ("t* (non-resonant)", f"{nr.t_star:.6e} (log10 {nr.log10_t_star:.3f})"),
            ]
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


def a_posteriori_inputs(inputs: EstimateInputs, result) -> EstimateInputs:
    """Replace the declared norms by majorants of the series of a relegation run.

    G and |H1| are measured on the 2 sigma domain; F becomes the smallest value with
    ||h_s|| <= zeta^{s-1} F for the measured shells.
    """
    spec = result.spec
    wide = inputs.dp.doubled_sigma()
    zeta = math.exp(-inputs.K * inputs.dp.sigma / 2)
    F = 0.0
    for s, h in enumerate(result.shells[:inputs.r], start=1):
        norm = weighted_norm(h, inputs.dp)
        if norm:
            F = max(F, norm / zeta ** (s - 1))
    return replace(
        inputs,
        G=weighted_norm(spec.f0, wide),
        H1_norm=weighted_norm(spec.H1, wide),
        F=F,
    )


def measured_norms(result, d: float) -> Tuple[List[float], List[float]]:
    """||Psi_s|| and ||X_s|| on the (1 - d) restricted domain."""
    dp = result.spec.dp.scaled(1 - d)
    return [weighted_norm(g, dp) for g in result.psi], [weighted_norm(g, dp) for g in result.X]


def build_report(
    inputs: EstimateInputs,
    mode: str = A_PRIORI,
    result=None,
    certificate: str = "local",
) -> EstimateReport:
    """Evaluate every estimate for ``inputs``.

    Args:
        mode: ``"a-priori"`` uses the declared norms, ``"a-posteriori"`` the norms of ``result``.
        result: A NormalFormResult; needed by the a-posteriori mode, optional otherwise.
        certificate: ``"local"``, ``"nonresonant"`` or ``"both"``.
    """
    if mode not in (A_PRIORI, A_POSTERIORI):
        raise ParameterError(f"mode must be '{A_PRIORI}' or '{A_POSTERIORI}', got '{mode}'")
    if certificate not in ("local", "nonresonant", "both"):
        raise ParameterError(f"unknown certificate '{certificate}'")
    if mode == A_POSTERIORI:
        if result is None:
            raise ParameterError("the a-posteriori mode needs a relegation result")
        inputs = a_posteriori_inputs(inputs, result)

    alpha = inputs.small_divisor()
    inputs = replace(inputs, alpha=alpha)
    zeta, F = decay_constants(inputs)
    conditions = check_conditions(inputs, alpha.value)
    bounds = generating_bounds(inputs, F, alpha.value)
    remainder, remainder_ok = remainder_bound(inputs, conditions.eta)
    t_local, rate, log10_t = local_stability_time(inputs, conditions.eta)
    dioph = diophantine_check(inputs.w, inputs.M, inputs.r * inputs.K, inputs.enumeration_budget)

    report = EstimateReport(
        mode=mode,
        zeta=zeta,
        F=F,
        Xi=inputs.Xi,
        A=big_A(inputs),
        alpha_r=alpha.value,
        alpha_argmin=alpha.argmin,
        eta=conditions.eta,
        C_r=bounds.C_r,
        b=bounds.b,
        condition_mu_ok=conditions.mu_ok,
        condition_eta_ok=conditions.eta_ok,
        mu_margin=conditions.mu_margin,
        eta_margin=conditions.eta_margin,
        lemma_condition_ok=bounds.certified,
        lemma_margin=bounds.margin,
        mu_star=mu_star(inputs, alpha.value),
        epsilon_star=epsilon_star(inputs, alpha.value),
        remainder_bound=remainder,
        remainder_certified=remainder_ok,
        t_local=t_local,
        log10_t_local=log10_t,
        drift_rate=rate,
        psi_bounds=bounds.psi,
        X_bounds=bounds.X,
        diophantine_ok=dioph.ok,
        diophantine_worst=dioph.worst_k,
    )
    if 0 < inputs.d < 0.5:
        # generators bounded by b^{s-1} ||X_1|| / s keep T_X analytic on the (1 - d) domain
        ok, margin = lie_transform_condition(bounds.b, bounds.X[0], inputs.d, inputs.dp)
        report.transform_condition_ok, report.transform_margin = ok, margin
        if not ok and report.certified:
            logger.warning("the Lie transform condition fails (margin %.3e)", margin)
    else:
        logger.debug("no Lie transform condition for d = %s", inputs.d)
    if result is not None:
        psi_norms, X_norms = measured_norms(result, inputs.d)
        report.measured_psi, report.measured_X = psi_norms, X_norms
        report.domination_ok = all(m <= b for m, b in zip(psi_norms, bounds.psi)) and all(
            m <= b for m, b in zip(X_norms, bounds.X)
        )
        if not report.domination_ok and report.certified:
            logger.warning("measured norms exceed the generating-function bounds")
    if certificate in ("nonresonant", "both"):
        report.nonresonant = nonresonant_certificate(inputs)
    logger.info(
        "estimates (%s): eta=%.3e, remainder=%.3e, certified=%s", mode, report.eta, remainder, report.certified
    )
    return report
