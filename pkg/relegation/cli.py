"""Command line front-end: ``python -m relegation <command> --config run.toml``.

Commands
    relegate   run the normal form and write the X_s / Z_s series and a manifest
    estimate   evaluate the estimates and write a certificate
    verify     residual, drift and displacement checks for a relegate run
    split      write the Fourier shells h_s of epsilon H1
    norm       print the weighted norms of the input series

Exit codes: 0 success, 1 error, 2 completed but not certified.
"""

import argparse
import hashlib
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, NamedTuple

import numpy as np

from . import __version__
from .config import RunConfig, canonical_json, load_config
from .errors import ConfigurationError, RelegationError
from .estimates import A_POSTERIORI, A_PRIORI, EstimateInputs, build_report, check_conditions, decay_constants
from .norms import weighted_norm
from .relegation_engine import NormalFormResult, lie_apply, relegate, residual_series, split_perturbation
from .resonance import orthogonal_lambda
from .series_core import PoissonSeries, dump, load, scale, sum_series
from .verification import (
    PhasePoint,
    displacement_check,
    evaluate_many,
    integrate_flow,
    integrator_order,
    measure_drift,
    near_invariance_check,
    residual_decay_utest,
    residual_profile,
    sample_points,
    write_drift_csv,
)

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_UNCERTIFIED = 2

RESIDUAL_TOL = 1e-10


class Gate(NamedTuple):
    name: str
    ok: bool
    detail: str = ""


def print_gate(gate: Gate) -> None:
    tag = "PASS" if gate.ok else "FAIL"
    detail = f"  {gate.detail}" if gate.detail else ""
    print(f"{tag:<5} {gate.name:<40}{detail}")


def config_digest(config: RunConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def _header(command: str, config: RunConfig) -> Dict:
    return {
        "tool": "relegation",
        "version": __version__,
        "command": command,
        "config": config.to_dict(),
        "config_sha256": config_digest(config),
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, data: Dict) -> None:
    path.write_text(canonical_json(data), encoding="utf-8")
    logger.info("wrote %s", path)


def _inputs(config: RunConfig, spec) -> EstimateInputs:
    return EstimateInputs.from_spec(spec, d=config.algorithm.d)


# ----------------------------------------------------------------------------
# relegate
# ----------------------------------------------------------------------------

def cmd_relegate(args, config: RunConfig) -> int:
    spec = config.build_spec()
    result = relegate(spec)
    out = _out_dir(args)

    series = {"Z_0": result.Z[0]}
    for s in range(1, result.order + 1):
        if not result.X[s - 1].is_zero:
            series[f"X_{s}"] = result.X[s - 1]
        if not result.Z[s].is_zero:
            series[f"Z_{s}"] = result.Z[s]
    files = {}
    for name, g in series.items():
        dump(g, out / f"{name}.txt")
        files[name] = f"{name}.txt"

    conditions = check_conditions(_inputs(config, spec))
    manifest = _header("relegate", config)
    manifest.update(
        order=result.order,
        series=files,
        norms=result.norms,
        chain_residual_max=max(result.chain_residuals.values(), default=0.0),
        transform_defect=result.transform_defect,
        class_overflow=result.class_overflow,
        conditions=conditions._asdict(),
    )
    _write_json(out / config.output.manifest, manifest)

    print(f"order {result.order}: wrote {len(files)} series to {out}")
    print(f"transform defect {result.transform_defect:.3e}, eta {conditions.eta:.3e}")
    if conditions.mu_ok and conditions.eta_ok:
        return EXIT_OK
    print("smallness conditions fail: the normal form is not certified")
    return EXIT_UNCERTIFIED


def _read_manifest(out: Path, config: RunConfig) -> Dict:
    path = out / config.output.manifest
    if not path.exists():
        raise ConfigurationError(f"no manifest at '{path}', run 'relegate' first", field="output.manifest")
    manifest = json.loads(path.read_text(encoding="utf-8"))
    if manifest.get("config_sha256") != config_digest(config):
        raise ConfigurationError(f"manifest '{path}' was written for a different config", field="output.manifest")
    return manifest


def result_from_manifest(config: RunConfig, out: Path) -> NormalFormResult:
    """Rebuild the generating and normal-form sequences written by ``relegate``."""
    spec = config.build_spec()
    manifest = _read_manifest(out, config)
    files = manifest["series"]
    zero = PoissonSeries.zero(spec.n1, spec.n2, spec.exact)

    def read(name):
        return load(out / files[name]) if name in files else zero

    order = manifest["order"]
    return NormalFormResult(
        spec,
        split_perturbation(spec),
        X=[read(f"X_{s}") for s in range(1, order + 1)],
        Z=[read("Z_0")] + [read(f"Z_{s}") for s in range(1, order + 1)],
    )


# ----------------------------------------------------------------------------
# estimate
# ----------------------------------------------------------------------------

def cmd_estimate(args, config: RunConfig) -> int:
    spec = config.build_spec()
    result = relegate(spec) if args.a_posteriori else None
    report = build_report(
        _inputs(config, spec), A_POSTERIORI if args.a_posteriori else A_PRIORI, result, args.certificate
    )
    out = _out_dir(args)

    checks = {
        "mu_condition": report.condition_mu_ok,
        "eta_condition": report.condition_eta_ok,
        "lemma_condition": report.lemma_condition_ok,
        "transform_condition": report.transform_condition_ok,
        "remainder_certified": report.remainder_certified,
        "diophantine": report.diophantine_ok,
    }
    certificate = _header("estimate", config)
    certificate.update(report=report.to_dict(), checks=checks)
    if result is not None:
        checks["domination"] = report.domination_ok
        certificate["engine"] = {"norms": result.norms, "transform_defect": result.transform_defect}
    summary = out / config.output.summary
    if summary.exists():
        verification = json.loads(summary.read_text(encoding="utf-8"))
        if verification.get("config_sha256") == certificate["config_sha256"]:
            certificate["verification"] = {"gates": verification["gates"]}
    _write_json(out / config.output.certificate, certificate)

    if config.output.format == "json":
        print(canonical_json(report.to_dict()), end="")
    else:
        print(report.summary())
    return EXIT_OK if report.certified else EXIT_UNCERTIFIED


# ----------------------------------------------------------------------------
# verify
# ----------------------------------------------------------------------------

def _start_point(config: RunConfig, n1: int, n2: int, fallback: PhasePoint) -> PhasePoint:
    v = config.verify
    if all(value is None for value in (v.start_p, v.start_q, v.start_x, v.start_y)):
        return fallback
    return PhasePoint(
        v.start_p or [0.0] * n1, v.start_q or [0.0] * n1, v.start_x or [0.0] * n2, v.start_y or [0.0] * n2
    )


def cmd_verify(args, config: RunConfig) -> int:
    out = _out_dir(args)
    result = result_from_manifest(config, out)
    spec, v = result.spec, config.verify
    dp = spec.dp
    rng = np.random.default_rng(args.seed)
    points = sample_points(dp, v.points, spec.n1, spec.n2, v.fraction, rng)
    report = build_report(_inputs(config, spec))
    gates: List[Gate] = []

    orders = v.orders or tuple(range(1, spec.r + 1))
    profile = residual_profile(spec, orders, points, args.threads)
    maxima = {r: float(profile[r].max()) for r in orders}
    decreasing = all(maxima[b] <= maxima[a] + RESIDUAL_TOL for a, b in zip(orders, orders[1:]))
    utests = {f"{a}->{b}": residual_decay_utest(profile[a], profile[b]) for a, b in zip(orders, orders[1:])}
    gates.append(Gate("residual decreases with r", decreasing,
                      " ".join(f"r={r}:{m:.2e}" for r, m in maxima.items())))

    residual = float(evaluate_many(residual_series(result), points, args.threads).max())
    if report.certified:
        gates.append(Gate("residual within remainder bound", residual <= report.remainder_bound + RESIDUAL_TOL,
                          f"{residual:.3e} <= {report.remainder_bound:.3e}"))

    lam = np.asarray(v.lam) if v.lam is not None else orthogonal_lambda(spec.module)
    phi0 = sum_series(
        (scale(PoissonSeries.variable(spec.n1, spec.n2, "p", j, spec.exact), float(c)) for j, c in enumerate(lam)),
        spec.n1, spec.n2, spec.exact,
    )
    phi = lie_apply(result.X, phi0, result.order)
    start = _start_point(config, spec.n1, spec.n2, points[0])
    H = spec.hamiltonian()
    rec = integrate_flow(H, start, v.t_span, v.dt, lam, phi, dp)
    drift = measure_drift(rec, spec.module)
    invariance = near_invariance_check(rec, report.drift_rate, dp.rho)
    gates.append(Gate("near-invariance of Phi", invariance.ok, f"worst excess {invariance.worst_excess:.3e}"))
    allowance = report.drift_rate * rec.times[-1] + dp.rho / 8
    energy = float(rec.energy_error.max())
    gates.append(Gate("energy error below drift allowance", bool(100 * energy <= allowance),
                      f"{energy:.3e} vs {allowance:.3e}"))

    if report.certified:
        displacement = displacement_check(result, points)
        gates.append(Gate("displacement of T_X p", displacement.ok,
                          f"{max(displacement.max_forward, displacement.max_inverse):.3e} <= {displacement.threshold:.3e}"))

    integrator = None
    if args.dt_halving:
        integrator = integrator_order(H, start, v.t_span, v.dt)
        gates.append(Gate("integrator order", integrator.error_dt <= 1e-11 or integrator.order >= 6,
                          f"observed order {integrator.order:.2f}"))

    write_drift_csv(rec, out / config.output.drift_csv)
    summary = _header("verify", config)
    summary.update(
        residual_max={str(r): m for r, m in maxima.items()},
        residual_utest=utests,
        residual=residual,
        drift=drift,
        exit_time=rec.exit_time,
        integrator=integrator._asdict() if integrator is not None else None,
        gates=[gate._asdict() for gate in gates],
    )
    _write_json(out / config.output.summary, summary)

    for gate in gates:
        print_gate(gate)
    if rec.exit_time is not None:
        print(f"orbit left the domain at t = {rec.exit_time:.6g}")
    return EXIT_OK if all(gate.ok for gate in gates) else EXIT_UNCERTIFIED


# ----------------------------------------------------------------------------
# split / norm
# ----------------------------------------------------------------------------

def cmd_split(args, config: RunConfig) -> int:
    spec = config.build_spec()
    out = _out_dir(args)
    zeta, F = decay_constants(_inputs(config, spec))
    for s, h in enumerate(split_perturbation(spec), start=1):
        dump(h, out / f"h_{s}.txt")
        norm, bound = weighted_norm(h, spec.dp), zeta ** (s - 1) * F
        if norm > bound:
            logger.warning("h_%d has norm %.6e above zeta^%d F = %.6e", s, norm, s - 1, bound)
        print(f"h_{s}: {len(h)} terms, norm {norm:.6e}, zeta^{s - 1} F {bound:.6e}")
    return EXIT_OK


def cmd_norm(args, config: RunConfig) -> int:
    spec = config.build_spec()
    wide = spec.dp.doubled_sigma()
    named = [("H1", spec.H1), ("f0", spec.f0)]
    named += [(f"h_{s}", h) for s, h in enumerate(split_perturbation(spec), start=1)]
    rows = {name: {"terms": len(g), "norm": weighted_norm(g, spec.dp), "norm_2sigma": weighted_norm(g, wide)}
            for name, g in named}
    if config.output.format == "json":
        print(canonical_json(rows), end="")
        return EXIT_OK
    width = max(len(name) for name in rows)
    print(f"{'series':<{width}}  {'terms':>7}  {'norm':>14}  {'norm (2 sigma)':>14}")
    for name, row in rows.items():
        print(f"{name:<{width}}  {row['terms']:>7}  {row['norm']:>14.6e}  {row['norm_2sigma']:>14.6e}")
    return EXIT_OK


COMMANDS = {
    "relegate": cmd_relegate,
    "estimate": cmd_estimate,
    "verify": cmd_verify,
    "split": cmd_split,
    "norm": cmd_norm,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="Run config (.toml or .json).")
    common.add_argument("--out", default="out", help="Output directory (default: out).")
    common.add_argument("--threads", type=int, default=1, help="Worker threads for point sampling.")
    common.add_argument("--seed", type=int, default=0, help="Seed of the sampled test points.")
    common.add_argument("--a-posteriori", action="store_true", dest="a_posteriori",
                        help="Take the norms from a relegation run instead of the config.")
    common.add_argument("-v", "--verbose", action="store_true", help="Log at DEBUG level.")

    parser = argparse.ArgumentParser(prog="relegation", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("relegate", parents=[common], help="Compute the relegation normal form.")
    estimate = commands.add_parser("estimate", parents=[common], help="Evaluate the estimates.")
    estimate.add_argument("--certificate", choices=["local", "nonresonant", "both"], default="local",
                          help="Which stability certificate to include (default: local).")
    verify = commands.add_parser("verify", parents=[common], help="Check a relegation run numerically.")
    verify.add_argument("--dt-halving", action="store_true", dest="dt_halving",
                        help="Report the observed integrator order.")
    commands.add_parser("split", parents=[common], help="Write the Fourier shells.")
    commands.add_parser("norm", parents=[common], help="Print weighted norms.")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT)
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_ERROR
    try:
        config = load_config(args.config)
        return COMMANDS[args.command](args, config)
    except RelegationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
