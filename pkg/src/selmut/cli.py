"""Command-line front end.

Exit status: 0 when every check passed, 1 when a check failed, 2 on a
configuration or runtime error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import analysis
from .config import ExperimentConfig, parse_config
from .dynamics import simulate
from .errors import ConfigError, SelmutError, SweepError
from .export import atomic_write, convergence_csv, read_trajectory_csv, report_json, trajectory_csv
from .hj import solve_hj
from .rates import validate_initial
from .scaling import LatticeField, sample_field

EXIT_OK, EXIT_CHECK_FAILED, EXIT_ERROR = 0, 1, 2


def _u0_field(cfg: ExperimentConfig, scaling, window, space):
    u0 = sample_field(cfg.initial.u0, window)
    if space == "u":
        return u0
    return LatticeField(window, np.exp(scaling.log_K * u0.values), "n")


def _run_discrete(cfg, scaling, window, space, shift=0.0):
    init = _u0_field(cfg, scaling, window, "u")
    if shift:
        init = LatticeField(window, init.values + shift, "u")
    if space == "n":
        init = LatticeField(window, np.exp(scaling.log_K * init.values), "n")
    return simulate(init, cfg.T, scaling, cfg.rates, cfg.kernel, cfg.integrator, cfg.output_times)


def cmd_simulate(cfg: ExperimentConfig, args):
    trajs, reports = [], []
    lattice_checks = [c for c in cfg.checks if c in analysis.CHECK_IDS]
    for K in cfg.K_list:
        scaling = cfg.scaling(K)
        window = cfg.trait_window(scaling)
        reports.append(validate_initial(cfg.initial, scaling, window))
        tr = _run_discrete(cfg, scaling, window, cfg.space)
        trajs.append(tr)
        upper = n_traj = None
        if "comparison" in lattice_checks:
            upper = _run_discrete(cfg, scaling, window, cfg.space, shift=0.1)
        if "u_n_consistency" in lattice_checks and cfg.space == "u":
            n_traj = _run_discrete(cfg, scaling, window, "n")
        reports += analysis.run_checks(tr, cfg.rates, cfg.kernel, scaling, lattice_checks,
                                       upper=upper, n_traj=n_traj, L=cfg.initial.L)
    return {"trajectory.csv": trajectory_csv(trajs)}, reports


def cmd_solve_hj(cfg: ExperimentConfig, args):
    tr = solve_hj(cfg.initial.u0, cfg.T, cfg.rates, cfg.kernel, cfg.hj_grid(), cfg.output_times)
    reports = [analysis.check_obstacle(tr)]
    return {"trajectory.csv": trajectory_csv([tr])}, reports


def cmd_verify(cfg: ExperimentConfig, args):
    path = args.trajectory or cfg.trajectory
    reports = []
    lattice_checks = [c for c in cfg.checks if c in analysis.CHECK_IDS]
    if path:
        for tr in read_trajectory_csv(path, cfg.scaling):
            if tr.space == "hj":
                checks = [c for c in lattice_checks if c == "obstacle"] or ["obstacle"]
                reports += analysis.run_checks(tr, cfg.rates, cfg.kernel, None, checks)
            else:
                checks = [c for c in lattice_checks if c != "obstacle"]
                reports += analysis.run_checks(tr, cfg.rates, cfg.kernel, tr.scaling, checks,
                                               L=cfg.initial.L)
    rc = cfg.random_suite_config()
    if "mass_bound_random" in cfg.checks:
        reports += list(analysis.mass_bound_random(cfg.rates, cfg.kernel, rc))
    if "comparison_random" in cfg.checks:
        reports.append(analysis.comparison_random(cfg.rates, cfg.kernel, rc))
    if not path and not reports:
        raise ConfigError(["verify needs a trajectory file or randomized checks"])
    return {}, reports


def cmd_converge(cfg: ExperimentConfig, args):
    res = analysis.convergence_sweep(cfg.sweep_config(), threads=args.threads)
    return {"convergence.csv": convergence_csv(res.records, timings=args.timings)}, res.reports


COMMANDS = {
    "simulate-discrete": cmd_simulate,
    "solve-hj": cmd_solve_hj,
    "verify": cmd_verify,
    "converge": cmd_converge,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="selmut", description=(
        "Simulate the rescaled lattice selection-mutation model, solve its limiting "
        "obstacle Hamilton-Jacobi equation, and verify the estimates between them."))
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="YAML experiment file")
    ap.add_argument("--output", help="output directory (overrides output_dir)")
    ap.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
    ap.add_argument("--strict", dest="strict", action="store_true", default=True,
                    help="reject unknown config keys (default)")
    ap.add_argument("--no-strict", dest="strict", action="store_false")
    ap.add_argument("--trajectory", help="trajectory CSV for verify")
    ap.add_argument("--timings", action="store_true",
                    help="fill the runtime column (makes outputs run-dependent)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_ERROR
    try:
        cfg = parse_config(args.config, strict=args.strict)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_ERROR
    out_dir = args.output or cfg.output_dir
    try:
        os.makedirs(out_dir, exist_ok=True)
        if not os.access(out_dir, os.W_OK):
            raise OSError(f"output directory {out_dir} is not writable")
        files, reports = COMMANDS[args.command](cfg, args)
        for name, text in files.items():
            atomic_write(os.path.join(out_dir, name), text)
        atomic_write(os.path.join(out_dir, "report.json"), report_json(reports))
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except SweepError as exc:
        print(f"{args.command}: {exc} ({len(exc.records)} member(s) finished)", file=sys.stderr)
        return EXIT_ERROR
    except (SelmutError, OSError, ValueError) as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    failed = [r.check_id for r in reports if not r.passed]
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.check_id} margin={r.worst_margin:.6g}")
    if failed:
        return EXIT_CHECK_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
