"""
Command-line front end.

    omlevy [--config FILE] [--seed S] [--out DIR] [--threads K] [--print-config]
           {mptp,simulate,tube,validate}

Exit codes: 0 success, 1 failed validation, 2 usage or configuration error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import os
import sys
from typing import Optional

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .levy import AlphaStableMeasure
from .model import (ConstraintViolation, GridTooCoarse, action, double_well_langevin,
                    kinematic_residual, quadratic_langevin, read_path_csv, variational_residual,
                    write_path_csv)
from .pathways import (BoundaryProblem, SingularSystem, SolverConfig,
                       optimize_boundary_velocities, quadratic_analytic_mptp,
                       quadratic_global_mptp, solve_el4_bvp, solve_hp_bvp)
from .shooting import IntegrationFailure, NoConvergence
from .simulate import (BudgetExceeded, SimulationBlowUp, estimate_tube_probability,
                       format_report, om_ratio_check, simulate_bridge_ensemble,
                       simulate_ensemble)
from .validation import render, run_criteria

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def build_model(cfg: RunConfig):
    m = cfg.model
    measure = AlphaStableMeasure(m.alpha, m.beta) if m.levy == "stable" else None
    make = quadratic_langevin if m.potential == "quadratic" else double_well_langevin
    return make(cfg.gamma, m.mu, measure)


def solve_mptp(cfg: RunConfig, model):
    """Dispatch to the closed form, a shooting solver or the velocity search.

    Returns the path and an ordered report dictionary.
    """
    p, nm = cfg.problem, cfg.numerics
    quadratic = cfg.model.potential == "quadratic"
    full = p.y0 is not None and p.yT is not None
    method = nm.solver
    if method == "auto":
        if quadratic:
            method = "analytic"
        else:
            method = "el4" if full else "optimize"
    scfg = SolverConfig(rtol=nm.rtol, bvp_tol=nm.bvp_tol, segments=nm.segments,
                        nodes=nm.n + 1, seed=nm.seed)
    report = {}
    if method == "analytic" and full:
        mp = quadratic_analytic_mptp(cfg.gamma, model.Lambda,
                                     BoundaryProblem(p.x0, p.xT, p.T, p.y0, p.yT))
        path, method = mp.to_path(nm.n + 1), "closed-form"
    elif method == "analytic":
        mp = quadratic_global_mptp(cfg.gamma, model.Lambda, p.x0, p.xT, p.T)
        path, method = mp.to_path(nm.n + 1), "closed-form-global"
    elif method == "optimize":
        opt = optimize_boundary_velocities(model, p.x0, p.xT, p.T, scfg)
        path = opt.path
        report.update(evaluations=opt.evaluations, converged_restarts=opt.converged_restarts,
                      **opt.solution.report())
    else:
        solver = solve_el4_bvp if method == "el4" else solve_hp_bvp
        sol = solver(model, BoundaryProblem(p.x0, p.xT, p.T, p.y0, p.yT), scfg)
        path = sol.path
        report.update(sol.report())
    out = {"method": method, "action": action(model, path, check="ignore"),
           "y0": float(path.phi2[0]), "yT": float(path.phi2[-1]),
           "kinematic_residual": kinematic_residual(model, path),
           "el_residual": float(np.max(np.abs(variational_residual(model, path))))}
    out.update(report)
    return path, out


def _out_file(cfg: RunConfig, name: str) -> str:
    os.makedirs(cfg.output.directory, exist_ok=True)
    return os.path.join(cfg.output.directory, cfg.output.prefix + name)


def _emit(cfg, name, text):
    sys.stdout.write(text)
    with open(_out_file(cfg, name), "w") as fh:
        fh.write(text)


def cmd_mptp(cfg: RunConfig, threads: int = 1) -> int:
    model = build_model(cfg)
    path, report = solve_mptp(cfg, model)
    write_path_csv(path, _out_file(cfg, "mptp.csv"))
    _emit(cfg, "mptp_report.txt", format_report(report))
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, threads: int = 1) -> int:
    model = build_model(cfg)
    p, nm = cfg.problem, cfg.numerics
    mptp, mreport = solve_mptp(cfg, model)
    write_path_csv(mptp, _out_file(cfg, "mptp.csv"))
    z0 = (p.x0, p.y0 if p.y0 is not None else mreport["y0"])
    if nm.mode == "bridge":
        ens = simulate_bridge_ensemble(model, z0, p.xT, nm.end_tol, nm.n_keep, p.T, nm.dt,
                                       nm.seed, nm.delta, nm.max_attempts, threads=threads)
        paths, errors, attempts = ens.paths, ens.attempt_errors, ens.attempts
        accepted = errors <= nm.end_tol
    else:
        paths = simulate_ensemble(model, z0, p.T, nm.dt, nm.seed, nm.n_keep, nm.delta,
                                  threads=threads)
        errors = np.array([abs(sp.x[-1] - p.xT) for sp in paths])
        attempts = len(paths)
        accepted = np.ones(attempts, dtype=bool)
    for sp in paths:
        write_path_csv(sp.to_path(), _out_file(cfg, f"path_{sp.index:07d}.csv"))
    with open(_out_file(cfg, "manifest.csv"), "w") as fh:
        fh.write("seed,accepted,endpoint_error\n")
        for k in range(attempts):
            fh.write(f"{k},{int(accepted[k])},{errors[k]:.17g}\n")
    _emit(cfg, "simulate_report.txt", format_report({
        "mode": nm.mode, "master_seed": nm.seed, "z0_x": float(z0[0]), "z0_y": float(z0[1]),
        "kept": len(paths), "attempts": attempts,
        "acceptance_rate": len(paths) / attempts if attempts else float("nan"),
        "mptp_action": mreport["action"]}))
    return EXIT_OK


def cmd_tube(cfg: RunConfig, threads: int = 1) -> int:
    model = build_model(cfg)
    nm, tube = cfg.numerics, cfg.tube
    if tube.path_a is None:
        phi_a, _ = solve_mptp(cfg, model)
    else:
        phi_a = read_path_csv(tube.path_a)
    blocks, status = [], EXIT_OK
    if tube.path_b is None:
        for est in estimate_tube_probability(model, phi_a, list(tube.epsilon), nm.n_samples,
                                             phi_a.T, nm.dt, nm.seed, nm.delta, threads):
            blocks.append(format_report(est.report()))
    else:
        phi_b = read_path_csv(tube.path_b)
        for eps in tube.epsilon:
            r = om_ratio_check(model, phi_a, phi_b, eps, nm.n_samples, nm.dt, nm.seed,
                               nm.delta, threads=threads)
            blocks.append(format_report(r.report()))
            if r.degenerate:
                status = EXIT_NUMERIC
    _emit(cfg, "tube_report.txt", "\n".join(blocks))
    if status != EXIT_OK:
        print("error: a tube had no hits; only a one-sided bound on the ratio is reported",
              file=sys.stderr)
    return status


def cmd_validate(cfg: RunConfig, threads: int = 1, only=None) -> int:
    results = run_criteria(cfg.numerics.seed, only, threads=threads)
    sys.stdout.write(render(results, cfg.numerics.seed))
    return EXIT_OK if all(r.passed for r in results) else EXIT_VALIDATION


def _u64(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _criteria_list(text):
    try:
        return sorted({int(v) for v in text.split(",") if v.strip()})
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text!r}") from None


def _add_globals(p, suppress):
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    p.add_argument("--config", metavar="FILE", help="run configuration file", **kw)
    p.add_argument("--seed", type=_u64, help="master seed (overrides the config)", **kw)
    p.add_argument("--out", metavar="DIR", help="output directory (overrides the config)", **kw)
    p.add_argument("--threads", type=_positive_int, help="worker threads for ensembles", **kw)
    p.add_argument("--print-config", action="store_true",
                   help="print the resolved configuration and exit", **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="omlevy", description="Most probable transition pathways and tube probabilities "
                                   "for degenerate Levy-driven systems.")
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command")
    for name, text in [("mptp", "compute a most probable transition pathway"),
                       ("simulate", "simulate a raw or endpoint-conditioned ensemble"),
                       ("tube", "estimate tube probabilities or their ratio"),
                       ("validate", "run the built-in acceptance suite")]:
        sp = sub.add_parser(name, help=text, description=text)
        _add_globals(sp, suppress=True)
        if name == "validate":
            sp.add_argument("--only", type=_criteria_list, metavar="N[,N...]",
                            help="run only these criteria")
    return parser


COMMANDS = {"mptp": cmd_mptp, "simulate": cmd_simulate, "tube": cmd_tube}


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        cfg = cfg.with_overrides(seed=args.seed, out=args.out).validate()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.print_config:
        sys.stdout.write(cfg.to_text())
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("error: a command is required", file=sys.stderr)
        return EXIT_CONFIG
    threads = args.threads or 1
    try:
        if args.command == "validate":
            return cmd_validate(cfg, threads, getattr(args, "only", None))
        return COMMANDS[args.command](cfg, threads)
    except (ConfigError, ConstraintViolation, GridTooCoarse, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NoConvergence, IntegrationFailure, SingularSystem, BudgetExceeded,
            SimulationBlowUp) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
