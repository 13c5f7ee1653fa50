"""Command-line entry point (``randcert``)."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import digp
from .bell import (
    Behavior,
    BellExpression,
    BinaryCorrelators,
    Scenario,
    behavior_from_correlators,
    bell_value,
    chsh_expression,
    local_bound_strategy,
    min_entropy,
    mix_with_noise,
    pr_box,
    uniform_behavior,
    validate_behavior,
)
from .certificates import (
    Certificate,
    certified_bound,
    extract_certificate,
    rescale_to_named_form,
    verify_certificate,
)
from .conic import export_sdpa, load_settings
from .errors import (
    InfeasibleProblemError,
    RandcertError,
    SolverError,
    StructuralError,
    UnverifiedCertificateError,
)
from .models import (
    cglmp_behavior,
    cglmp_expression,
    chsh_noise_behavior,
    i1beta_expression,
    i1beta_for_theta,
    partial_entangled_behavior,
)
from .sweep import EXPERIMENTS, SweepSpec, parse_number, plot_rows, rows_to_csv, run_sweep

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INFEASIBLE = 2
EXIT_SOLVER = 3
EXIT_UNVERIFIED = 4

MODELS = ("chsh", "partial", "cglmp", "uniform", "pr-box")


def _number(text: str) -> float:
    try:
        return parse_number(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _scenario(text: str) -> Scenario:
    try:
        nx, ny, da, db = (int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("scenario must be nx,ny,da,db") from None
    return Scenario(nx, ny, da, db)


def _theta(args) -> float | None:
    return args.theta_frac if args.theta_frac is not None else args.theta


def load_behavior(path: str) -> Behavior:
    """Behavior JSON, or a correlator file ``{"mean_a": .., "mean_b": .., "corr": ..}``."""
    d = json.loads(Path(path).read_text())
    if "corr" in d:
        return behavior_from_correlators(BinaryCorrelators(d["mean_a"], d["mean_b"], d["corr"]))
    return Behavior.from_dict(d)


def behavior_from_args(args, required: bool = True) -> Behavior | None:
    if getattr(args, "behavior", None):
        return load_behavior(args.behavior)
    model = getattr(args, "model", None)
    if model is None:
        if required:
            raise StructuralError("give --behavior FILE or --model NAME")
        return None
    v = 1.0 if args.v is None else args.v
    if model == "chsh":
        return chsh_noise_behavior(v)
    if model == "partial":
        theta = _theta(args)
        if theta is None:
            raise StructuralError("--model partial needs --theta or --theta-frac")
        return partial_entangled_behavior(theta, v)
    if model == "cglmp":
        if args.alpha is None:
            raise StructuralError("--model cglmp needs --alpha")
        return mix_with_noise(cglmp_behavior(args.alpha), v)
    if model == "uniform":
        return uniform_behavior(args.scenario)
    return mix_with_noise(pr_box(), v)


def named_expression(name: str, args) -> BellExpression:
    if name == "chsh":
        return chsh_expression()
    if name == "cglmp":
        return cglmp_expression()
    if name.startswith("i1beta"):
        _, _, beta = name.partition(":")
        if beta:
            return i1beta_expression(parse_number(beta))
        theta = _theta(args)
        if theta is None:
            raise StructuralError("i1beta needs an explicit beta (i1beta:0.5) or --theta")
        return i1beta_expression(i1beta_for_theta(theta))
    path = Path(name)
    if not path.exists():
        raise StructuralError(f"{name!r} is neither a named expression nor a file")
    return BellExpression.from_json(path.read_text())


def parse_mode(text: str, args, p: Behavior | None):
    """``full`` or ``bell:EXPR[=VALUE],...``; missing values are read off the behavior."""
    if text == "full":
        if p is None:
            raise StructuralError("full-behavior mode needs a behavior")
        return None
    if not text.startswith("bell:"):
        raise StructuralError(f"mode must be 'full' or 'bell:...', got {text!r}")
    cons = []
    for item in text[5:].split(","):
        name, eq, val = item.partition("=")
        f = named_expression(name.strip(), args)
        if eq:
            value = parse_number(val)
        elif p is not None:
            value = bell_value(f, p)
        else:
            raise StructuralError(f"no value for {name!r} and no behavior to compute it from")
        cons.append((f, value))
    return cons


def problem_from_args(args) -> digp.GuessingProblem:
    p = behavior_from_args(args, required=args.mode == "full")
    cons = parse_mode(args.mode, args, p)
    target = digp.Target.parse(args.target)
    if cons is None:
        return digp.GuessingProblem.full(p, target, args.level)
    return digp.GuessingProblem.bell(cons, target, args.level, at_least=args.at_least)


def _write(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _level(text: str):
    return int(text) if text.isdigit() else text


# -- subcommands ---------------------------------------------------------------

def cmd_validate(args) -> int:
    p = behavior_from_args(args)
    rep = validate_behavior(p, tol=args.tol or 1e-9)
    print(rep.summary())
    return EXIT_OK if rep.passed else EXIT_INPUT


def cmd_behavior(args) -> int:
    p = behavior_from_args(args)
    _write(p.to_json(), args.out)
    return EXIT_OK


def cmd_local_bound(args) -> int:
    f = named_expression(args.expression, args)
    value, strat = local_bound_strategy(f)
    print(f"local bound {value:.10g}  (A outputs {list(strat.assign_a)}, B outputs {list(strat.assign_b)})")
    return EXIT_OK


def _solve(args):
    gp = problem_from_args(args)
    settings = load_settings(tol=args.tol)
    cone = "ns" if args.ns else "npa"
    if args.export_sdpa:
        Path(args.export_sdpa).write_text(export_sdpa(digp.assemble_primal(gp, cone).program))
    return gp, digp.solve(gp, settings=settings, cone=cone), settings


def cmd_solve(args) -> int:
    gp, sol, _ = _solve(args)
    _write(json.dumps(sol.to_dict(), indent=2), args.out)
    g = sol.value
    print(f"G = {g:.8f}  (H_min = {min_entropy(g):.6f} bits)  target {gp.target}  "
          f"{'NS' if args.ns else 'level ' + str(gp.level)}  gap {sol.report.gap:.2g}", file=sys.stderr)
    return EXIT_OK


def cmd_certificate(args) -> int:
    if args.load:
        cert = Certificate.from_json(Path(args.load).read_text())
        cert = verify_certificate(cert, tol=args.tol)
        p = behavior_from_args(args, required=False)
        _write(cert.to_json(), args.out)
        if p is not None:
            try:
                print(f"certified bound {certified_bound(cert, p):.8f}", file=sys.stderr)
            except UnverifiedCertificateError:
                pass
    else:
        _, sol, settings = _solve(args)
        cert = extract_certificate(sol, verify=not args.no_verify, settings=settings)
        doc = cert.to_dict()
        if cert.scenario.da == 2 and cert.scenario.db == 2 and cert.scenario.nx == cert.scenario.ny == 2:
            try:
                fit = rescale_to_named_form(cert)
                doc["chsh_family_fit"] = {"f11": fit.f11, "f22": fit.f22, "scale": fit.scale,
                                          "offset": fit.offset, "residual": fit.residual}
            except RandcertError:
                pass
        _write(json.dumps(doc, indent=2), args.out)
        print(f"bound {cert.bound:.8f}  primal {sol.value:.8f}", file=sys.stderr)
    print(f"margins {['%.2e' % m for m in cert.margins]}  verified={cert.verified}", file=sys.stderr)
    return EXIT_OK if cert.verified or args.no_verify else EXIT_UNVERIFIED


def cmd_sweep(args) -> int:
    spec = SweepSpec.default(
        args.experiment, grid=args.grid, modes=args.modes.split(",") if args.modes else None,
        target=args.target, level=args.level, v=0.99 if args.v is None else args.v,
        ns=args.ns, tol=args.tol, verify=args.verify)
    rows = run_sweep(spec, workers=args.workers)
    text = rows_to_csv(rows)
    _write(text, args.csv)
    if args.plot:
        plot_rows(rows, args.plot, title=args.experiment)
    bad = [r for r in rows if r["status"] != "optimal"]
    for r in bad:
        print(f"point {r['parameter']}={r['value']} mode {r['mode']}: {r['status']}", file=sys.stderr)
    return EXIT_OK if not bad else EXIT_SOLVER


# -- parser --------------------------------------------------------------------

def _source_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("behavior source")
    g.add_argument("--behavior", metavar="FILE", help="Behavior JSON or correlator JSON")
    g.add_argument("--model", choices=MODELS)
    g.add_argument("--v", type=_number, help="visibility (white-noise mixing)")
    g.add_argument("--theta", type=_number, help="partial model angle in radians")
    g.add_argument("--theta-frac", type=_number, metavar="EXPR", help="angle as e.g. 27/200pi")
    g.add_argument("--alpha", type=_number, help="cglmp state parameter")
    g.add_argument("--scenario", type=_scenario, default=Scenario(2, 2, 2, 2), help="nx,ny,da,db for uniform")


def _problem_flags(p: argparse.ArgumentParser):
    _source_flags(p)
    p.add_argument("--target", default="local:1", help="local:x or global:x,y (1-based)")
    p.add_argument("--level", type=_level, default=digp.DEFAULT_LEVEL, help="relaxation level, e.g. 2 or 1+AB")
    p.add_argument("--mode", default="full", help="full or bell:EXPR[=VALUE],...")
    p.add_argument("--at-least", action="store_true", help="Bell values as lower bounds")
    p.add_argument("--ns", action="store_true", help="no-signaling LP instead of the moment relaxation")
    p.add_argument("--tol", type=float)
    p.add_argument("--export-sdpa", metavar="FILE")
    p.add_argument("--out", metavar="FILE")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="randcert", description="Device-independent randomness bounds.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check normalization, no-signaling and positivity")
    _source_flags(p)
    p.add_argument("--tol", type=float)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("behavior", help="write a model behavior (or converted correlators) as JSON")
    _source_flags(p)
    p.add_argument("--out", metavar="FILE")
    p.set_defaults(func=cmd_behavior)

    p = sub.add_parser("local-bound", help="maximum of an expression over deterministic strategies")
    p.add_argument("expression", help="chsh, cglmp, i1beta:BETA or a BellExpression JSON file")
    p.add_argument("--theta", type=_number)
    p.add_argument("--theta-frac", type=_number)
    p.set_defaults(func=cmd_local_bound)

    p = sub.add_parser("solve", help="guessing probability of one instance")
    _problem_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("certificate", help="extract and verify the dual Bell expression")
    _problem_flags(p)
    p.add_argument("--load", metavar="FILE", help="re-verify a saved certificate instead of solving")
    p.add_argument("--no-verify", action="store_true")
    p.set_defaults(func=cmd_certificate)

    p = sub.add_parser("sweep", help="parameter sweep to CSV (and optionally a plot)")
    p.add_argument("experiment", choices=sorted(EXPERIMENTS))
    p.add_argument("--grid", help="start:stop:step or comma list (pi multiples allowed)")
    p.add_argument("--modes", help="comma list, e.g. full,chsh")
    p.add_argument("--target")
    p.add_argument("--level", type=_level)
    p.add_argument("--v", type=_number, help="visibility for partial-entangled (default 0.99)")
    p.add_argument("--ns", action="store_true")
    p.add_argument("--tol", type=float)
    p.add_argument("--verify", action="store_true", help="verify every certificate")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--csv", metavar="FILE")
    p.add_argument("--plot", metavar="FILE")
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; keep 2 for infeasible problems
        return EXIT_OK if not exc.code else EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InfeasibleProblemError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (RandcertError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
