"""Command line front end: ``homlab {cell,solve,sweep,validate}``.

Exit codes: 0 success, 1 validation failure, 2 solver failure, 3 I/O failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from .cell_solver import dump_field, solve_cell_problems
from .corrector_expansion import PhiStrategy
from .domain_solver import solve_homogenized_problem, solve_oscillating
from .errors import CoefficientError, CoercivityError, CompatibilityError, ConvergenceError, UnderResolvedError
from .periodic_fields import coefficients_from_config, load_config, validate_coefficients
from .rate_harness import SweepConfig, emit_report, make_problem_data, run_convergence_sweep

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("homlab")


def _floats(text):
    return [float(eval_fraction(t)) for t in text.split(",") if t.strip()]


def eval_fraction(token):
    """Parse ``0.125`` or ``1/8``."""
    token = token.strip()
    if "/" in token:
        num, den = token.split("/", 1)
        return float(num) / float(den)
    return float(token)


def _phi_kind(text):
    return PhiStrategy(text.strip(), 1.0).kind


def build_parser():
    parser = argparse.ArgumentParser(prog="homlab", description="Periodic homogenization lab for Neumann problems.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON configuration file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--verbose", action="store_true", help="log solver progress to stderr")
    sub = parser.add_subparsers(dest="verb", required=True)

    cell = sub.add_parser("cell", parents=[common], help="solve cell problems and print homogenized tensors")
    cell.add_argument("--format", default="csv", help="field dump format: csv or npy")

    solve = sub.add_parser("solve", parents=[common], help="one oscillating and homogenized Neumann solve")
    solve.add_argument("--eps", help="scale eps (one value)")
    solve.add_argument("--cells-per-eps", type=int)

    sweep = sub.add_parser("sweep", parents=[common], help="full convergence study")
    sweep.add_argument("--eps", help="comma list of eps values")
    sweep.add_argument("--cells-per-eps", type=int)
    sweep.add_argument("--phi", help="single, double or steklov (comma list allowed)")
    sweep.add_argument("--format", default=None, help="report formats, e.g. csv,json,svg")
    sweep.add_argument("--workers", type=int)

    sub.add_parser("validate", parents=[common], help="check coefficient hypotheses")
    return parser


def _write_json(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _cmd_validate(args, cfg):
    cs = coefficients_from_config(cfg, check=False)
    report = validate_coefficients(cs)
    payload = report.to_dict()
    print(json.dumps(payload, indent=2, sort_keys=True, default=float))
    if args.out:
        _write_json(Path(args.out) / "validation.json", payload)
    return EXIT_OK if report.ok else EXIT_VALIDATION


def _cmd_cell(args, cfg):
    cs = coefficients_from_config(cfg)
    corr, hom = solve_cell_problems(cs, tol=float(cfg.get("cell_tol", 1e-9)))
    payload = {"homogenized": hom.to_dict(), "residuals": {str(k): float(v) for k, v in corr.residual_norms.items()}}
    print(json.dumps(payload, indent=2, sort_keys=True))
    if args.out:
        out = Path(args.out)
        _write_json(out / "homogenized.json", payload)
        fmt = args.format.split(",")[0]
        for name in ("chi", "theta", "vartheta"):
            dump_field(out / f"{name}.{fmt}", getattr(corr, name), fmt=fmt)
    return EXIT_OK


def _cmd_solve(args, cfg):
    cs = coefficients_from_config(cfg)
    if args.eps:
        eps = eval_fraction(args.eps)
    else:
        eps = cfg.get("eps", 1 / 8)
        eps = float(eps[0] if isinstance(eps, list) else eps)
    q = args.cells_per_eps or int(cfg.get("cells_per_eps", 32))
    n = int(round(q / eps))
    data = make_problem_data(cfg.get("data", "cosine"), cs.m, cs.d, int(cfg.get("seed", 0)))
    tol = float(cfg.get("tol", 1e-10))
    corr, hom = solve_cell_problems(cs, tol=float(cfg.get("cell_tol", 1e-9)))
    ue = solve_oscillating(cs, eps, data, n, tol=tol)
    u0 = solve_homogenized_problem(hom, data, n, tol=tol)
    payload = {
        "eps": eps,
        "n": n,
        "iterations": ue.iterations,
        "relative_residual": ue.relative_residual,
        "tolerance": ue.tolerance,
        "compatibility_residual": ue.compatibility_residual.tolist(),
        "homogenized_relative_residual": u0.relative_residual,
    }
    print(json.dumps(payload, indent=2, sort_keys=True))
    if args.out:
        out = Path(args.out)
        _write_json(out / "solve.json", payload)
        dump_field(out / "u_eps.csv", ue.u.values)
        dump_field(out / "u0.csv", u0.u.values)
    return EXIT_OK


def _cmd_sweep(args, cfg):
    cfg = dict(cfg)
    if args.eps:
        cfg["eps"] = _floats(args.eps)
    if args.cells_per_eps:
        cfg["cells_per_eps"] = args.cells_per_eps
    if args.phi:
        cfg["phi"] = [_phi_kind(p) for p in args.phi.split(",")]
    if args.format:
        cfg["formats"] = [f.strip() for f in args.format.split(",") if f.strip()]
    if args.workers:
        cfg["workers"] = args.workers
    if args.out:
        cfg["out"] = args.out
    sweep_cfg = SweepConfig.from_dict(cfg)
    report = run_convergence_sweep(sweep_cfg)
    for row in report.rows:
        print(f"eps={row['eps']:.6g} l2_diff={row['l2_diff']:.4e} h1_w={row['h1_w']:.4e} "
              f"layer_energy={row['layer_energy']:.4e}")
    for name, fit in report.slopes.items():
        print(f"slope {name}: {fit.slope:.4f} [{fit.interval[0]:.4f}, {fit.interval[1]:.4f}]")
    for failure in report.failures:
        print(f"failed eps={failure['eps']:.6g}: {failure['error']}", file=sys.stderr)
    if sweep_cfg.out:
        for path in emit_report(report, sweep_cfg.out, sweep_cfg.formats):
            print(f"wrote {path}")
    return EXIT_SOLVER if report.partial else EXIT_OK


_COMMANDS = {"validate": _cmd_validate, "cell": _cmd_cell, "solve": _cmd_solve, "sweep": _cmd_sweep}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"homlab: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        return _COMMANDS[args.verb](args, cfg)
    except (ConvergenceError, CompatibilityError) as exc:
        print(f"homlab: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"homlab: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except (CoefficientError, CoercivityError, UnderResolvedError, ValueError, KeyError, TypeError) as exc:
        print(f"homlab: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
