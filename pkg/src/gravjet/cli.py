"""Command-line entry point: identity suite, metric checks, Noether currents and 1-D evolution.

Exit codes: 0 when every check passes, 1 when a check fails, 2 on input errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .curvature import SignatureError, SingularMetricError, density, invert_metric
from .jet_algebra import DomainError, JetOrderError, MetricJet, pair_label
from .metric_dsl import FamilyError, ParseError, load_family, load_vector_field, prolong_family

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2

INPUT_ERRORS = (FamilyError, ParseError, SingularMetricError, SignatureError, DomainError,
                JetOrderError, OSError, ValueError, KeyError)


class InputError(Exception):
    pass


# ---------------------------------------------------------------------------
# report assembly

def make_report(suite: str, checks: list, seed=None, samples=None, tolerance=None, c0=None,
                values: Optional[dict] = None) -> dict:
    from .multivector_solver import C0
    report = {
        "suite": suite,
        "seed": seed,
        "samples": samples,
        "tolerance": tolerance,
        "pass": all(c["pass"] for c in checks),
        "checks": checks,
        "environment": {
            "version": __version__,
            "c0_factor": C0 if c0 is None else c0,
            "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        },
    }
    if values is not None:
        report["values"] = values
    return report


def check_entry(name: str, residual: float, tolerance: float, reference: str, samples: int = 1) -> dict:
    residual = float(residual)
    return {
        "name": name,
        "max_residual": residual,
        "tolerance": tolerance,
        "pass": bool(residual < tolerance),
        "reference": reference,
        "samples": samples,
    }


def _json_ready(obj):
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_ready(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def render(report: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(_json_ready(report), indent=2, sort_keys=False) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["name", "max_residual", "tolerance", "pass", "samples", "reference"])
    for c in report["checks"]:
        w.writerow([c["name"], repr(c["max_residual"]), repr(c["tolerance"]), c["pass"], c["samples"],
                    c["reference"]])
    return buf.getvalue()


def write_atomic(path: Path, text: str) -> None:
    """Write through a temporary file in the target directory, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(report: dict, args) -> int:
    text = render(report, args.format)
    if args.output:
        write_atomic(Path(args.output), text)
    else:
        sys.stdout.write(text)
    for c in report["checks"]:
        status = "PASS" if c["pass"] else "FAIL"
        print(f"[{status}] {c['name']}: {c['max_residual']:.3e} (tol {c['tolerance']:.1e})", file=sys.stderr)
    return EXIT_OK if report["pass"] else EXIT_FAIL


# ---------------------------------------------------------------------------
# argument parsing helpers

def parse_point(text: str) -> list[float]:
    try:
        vals = [float(s) for s in text.split(",")]
    except ValueError as exc:
        raise InputError(f"--at expects four comma-separated numbers, got {text!r}") from exc
    if len(vals) != 4:
        raise InputError(f"--at expects four comma-separated numbers, got {len(vals)}")
    return vals


def parse_triple(text: str) -> list[float]:
    try:
        vals = [float(s) for s in text.split(",")]
    except ValueError as exc:
        raise InputError(f"expected three comma-separated numbers, got {text!r}") from exc
    if len(vals) != 3:
        raise InputError(f"expected three comma-separated numbers, got {len(vals)}")
    return vals


def _tol(args, default: float) -> float:
    return default if args.tolerance is None else args.tolerance


# ---------------------------------------------------------------------------
# verify

def cmd_verify(args) -> int:
    from .suite import CHECKS, calibrated_c0, draw_samples, get_check, run_check

    if args.samples < 1:
        raise InputError("--samples must be at least 1")
    names = args.checks.split(",") if args.checks else [c.name for c in CHECKS]
    try:
        selected = [get_check(n) for n in names]
    except KeyError as exc:
        raise InputError(f"unknown check {exc.args[0]!r}") from exc
    jets, aux = draw_samples(args.seed, args.samples, args.order)
    results = [run_check(c, jets, aux, args.tolerance) for c in selected]
    checks = [check_entry(r.name, r.max_residual, r.tolerance, r.reference, r.samples) for r in results]
    report = make_report("verify", checks, seed=args.seed, samples=args.samples, tolerance=args.tolerance,
                         c0=calibrated_c0(jets))
    return emit(report, args)


# ---------------------------------------------------------------------------
# check

def einstein_scale(jet: MetricJet) -> float:
    """Magnitude bound for the terms of rho G^{ab}: the yardstick for 'scaled' residuals."""
    gi = np.abs(np.asarray(invert_metric(jet.g))).max()
    d1 = np.abs(np.asarray(jet.dg)).max()
    d2 = np.abs(np.asarray(jet.d2g)).max()
    return float(density(jet.g)) * (1.0 + gi) ** 4 * (1.0 + d1 ** 2 + d2)


def derivative_scale(jet: MetricJet) -> float:
    d1 = np.abs(np.asarray(jet.dg)).max()
    d3 = np.abs(np.asarray(jet.d3g)).max()
    return einstein_scale(jet) * (1.0 + d1) * (1.0 + d1 + d3)


def check_family(fam, point: Sequence[float], order: int = 3, tolerance: Optional[float] = None):
    """Constraint residuals and field values of a metric family at a point."""
    from . import eh_lagrangian as eh
    from . import legendre_hamiltonian as lh
    from . import matter_em as em

    jet = prolong_family(fam, point, order)
    el = np.asarray(eh.euler_lagrange(jet))
    de = np.asarray(eh.d_euler_lagrange(jet))
    mom = lh.legendre(jet)
    H = float(eh.hamiltonian(jet))
    H_leg = float(eh.hamiltonian_legendre(jet))
    t = lambda d: d if tolerance is None else tolerance
    checks = [
        check_entry("einstein", np.abs(el).max() / einstein_scale(jet), t(1e-8),
                    "vacuum Einstein equations L^{ab} = 0"),
        check_entry("einstein_derivative", np.abs(de).max() / derivative_scale(jet), t(1e-6),
                    "derived constraints D_t L^{ab} = 0"),
        check_entry("hamiltonian_forms", abs(H - H_leg) / (1.0 + max(abs(H), abs(H_leg))), t(1e-9),
                    "quadratic Hamiltonian equals the Legendre-transform expression"),
        check_entry("momentum_inversion",
                    np.abs(np.asarray(lh.invert_momenta(jet.g, mom.p1)) - np.asarray(jet.dg)).max()
                    / (1.0 + np.abs(np.asarray(jet.dg)).max()), t(1e-9),
                    "velocities are recovered from the first-order momenta"),
    ]
    values = {
        "point": list(point),
        "euler_lagrange": {pair_label(i): float(el[i]) for i in range(10)},
        "d_euler_lagrange_max": float(np.abs(de).max()),
        "hamiltonian": H,
        "lagrangian": float(eh.lagrangian_vacuum(jet)),
    }
    if fam.has_em_field:
        field = em.EMField(fam.em_tensor(point))
        src = np.asarray(em.sourced_euler_lagrange(jet, field))
        sourced = np.asarray(em.sourced_einstein_residual(jet, field))
        via_el = np.asarray(em.einstein_from_euler_lagrange(jet, src))
        T = np.asarray(em.stress_energy(jet.g, field))
        checks.append(check_entry("sourced_einstein", np.abs(sourced).max() / (1.0 + np.abs(T).max()),
                                  t(1e-8), "Einstein equations with the electromagnetic stress-energy tensor"))
        checks.append(check_entry("sourced_forms", np.abs(sourced - via_el).max() / (1.0 + np.abs(T).max()),
                                  t(1e-8), "sourced Euler-Lagrange tensor maps to G - 8 pi T"))
        checks.append(check_entry("em_trace", abs(float(np.sum(np.asarray(invert_metric(jet.g)) * T)))
                                  / (1.0 + np.abs(T).max()), t(1e-10),
                                  "electromagnetic stress-energy tensor is trace-free"))
        values["stress_energy"] = T
    return checks, values


def cmd_check(args) -> int:
    fam = load_family(args.metric_file)
    point = parse_point(args.at)
    checks, values = check_family(fam, point, args.order, args.tolerance)
    values["family"] = fam.name
    return emit(make_report("check", checks, tolerance=args.tolerance, values=values), args)


# ---------------------------------------------------------------------------
# noether

def cmd_noether(args) -> int:
    from . import noether as nt

    fam = load_family(args.metric_file)
    Z = load_vector_field(args.vector_file, fam.coord_names)
    points = [parse_point(a) for a in args.at]
    rows = []
    worst = 0.0
    for p in points:
        jet = prolong_family(fam, p, 3)
        field = nt.taylor_field(Z, p)
        S = nt.noether_current(field, jet).S
        div = nt.divergence_residual(field, jet)
        scale = 1.0 + float(np.abs(S).max())
        worst = max(worst, div / scale)
        rows.append({"point": p, "S": S, "divergence": div})
    checks = [check_entry("current_divergence", worst, _tol(args, 1e-6),
                          "the Noether current of a lifted vector field is conserved on solutions",
                          len(points))]
    return emit(make_report("noether", checks, tolerance=args.tolerance,
                            values={"family": fam.name, "currents": rows}), args)


# ---------------------------------------------------------------------------
# integrate

def load_state(path):
    from .evolution_1d import EvolState

    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON at offset {exc.pos}: {exc.msg}") from exc

    def vec(key, prefix):
        raw = d.get(key)
        if isinstance(raw, dict):
            try:
                return np.array([float(raw[f"{prefix}{pair_label(i)}"]) for i in range(10)])
            except KeyError as exc:
                raise InputError(f"{path}: '{key}' lacks component {exc.args[0]}") from exc
        arr = np.asarray(raw, dtype=float)
        if arr.shape != (10,):
            raise InputError(f"{path}: '{key}' needs 10 packed components")
        return arr

    if "t" not in d:
        raise InputError(f"{path}: missing 't'")
    return EvolState(float(d["t"]), vec("g", "g"), vec("v", "v"))


def cmd_integrate(args) -> int:
    from . import evolution_1d as ev

    if (args.kasner is None) == (args.from_state is None):
        raise InputError("give exactly one of --kasner and --from")
    if args.kasner is not None:
        p = parse_triple(args.kasner)
        state = ev.kasner(p, args.t0)
    else:
        state = load_state(args.from_state)
    try:
        traj = ev.integrate(state, args.t1, args.h, tol_track=_tol(args, ev.TRACK_TOL))
    except ev.EvolutionError as exc:
        checks = [check_entry("integration", float("inf"), 0.0, f"trajectory halted: {exc}")]
        return emit(make_report("integrate", checks, tolerance=args.tolerance,
                                values={"failed_step": exc.step, "message": str(exc)}), args)
    if args.trajectory:
        buf = io.StringIO()
        traj.write_csv(buf)
        write_atomic(Path(args.trajectory), buf.getvalue())
    checks = [check_entry("ricci_tracking", traj.max_ricci, _tol(args, ev.TRACK_TOL),
                          "trajectories of the closure stay Ricci-flat", len(traj.t)),
              check_entry("trace_conditions", float(np.max(traj.consistency)), ev.CONSISTENCY_TOL,
                          "accepted states meet the trace conditions of the closure", len(traj.t))]
    if args.kasner is not None:
        exact = np.stack([ev.kasner(p, t).g for t in traj.t])
        checks.append(check_entry("kasner_reproduction", float(np.abs(traj.g - exact).max()), _tol(args, 1e-5),
                                  "closed-form Kasner metric", len(traj.t)))
    values = {"steps": len(traj.t) - 1, "final_t": float(traj.t[-1]),
              "final_g": traj.g[-1], "final_v": traj.v[-1]}
    return emit(make_report("integrate", checks, tolerance=args.tolerance, values=values), args)


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tolerance", type=float, default=None, help="override every check tolerance")
    common.add_argument("--output", default=None, help="report path (default: stdout)")
    common.add_argument("--format", choices=("json", "csv"), default="json")

    parser = argparse.ArgumentParser(prog="gravjet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gravjet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", parents=[common], help="run the identity suite on random jets")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--order", type=int, choices=(3, 4), default=3)
    p.add_argument("--checks", default=None, help="comma-separated subset of check names")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("check", parents=[common], help="evaluate constraints of a metric family at a point")
    p.add_argument("metric_file")
    p.add_argument("--at", required=True, help="x0,x1,x2,x3")
    p.add_argument("--order", type=int, choices=(3, 4), default=3)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("noether", parents=[common], help="Noether current and its divergence")
    p.add_argument("metric_file")
    p.add_argument("vector_file")
    p.add_argument("--at", required=True, action="append", help="x0,x1,x2,x3 (repeatable)")
    p.set_defaults(func=cmd_noether)

    p = sub.add_parser("integrate", parents=[common], help="integrate the one-coordinate evolution")
    p.add_argument("--kasner", default=None, help="p1,p2,p3")
    p.add_argument("--from", dest="from_state", default=None, help="initial state JSON")
    p.add_argument("--t0", type=float, default=1.0)
    p.add_argument("--t1", type=float, required=True)
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--trajectory", default=None, help="trajectory CSV path")
    p.set_defaults(func=cmd_integrate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"gravjet {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except INPUT_ERRORS as exc:
        print(f"gravjet {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
