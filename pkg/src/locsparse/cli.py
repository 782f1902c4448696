"""Command-line driver: ``locsparse <command> [--config PATH] [--seed N] [--out DIR]``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .admm import debias_on_support, solve
from .dictionary import check_scaling_condition, mutual_incoherence
from .experiments import (default_dictionary, default_kernel_size, default_regions, make_phantom,
                          sweep_v, synthesize)
from .io import atomic_write, checksum, load_matrix, write_matrix
from .model import ContractError, Conv2dOperator, DenseOperator, gaussian_kernel
from .recovery import check_source_condition, extract_support, predict_asymptotic_support

log = logging.getLogger("locsparse")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class NumericalFailure(RuntimeError):
    pass


def build_dictionary(cfg):
    d = cfg.dictionary
    return default_dictionary(d.n_atoms, d.n_samples, d.t_end, d.decay_low, d.decay_high,
                              d.peak_time, d.normalization)


def build_operator(cfg):
    p = cfg.problem
    if p.operator == "dense":
        try:
            matrix = load_matrix(p.operator_path)
        except OSError as exc:
            raise cfgmod.ConfigError(f"cannot read operator: {exc}") from exc
        if matrix.shape[1] != p.m1 * p.m2:
            raise cfgmod.ConfigError(
                f"operator has {matrix.shape[1]} columns, expected m1*m2 = {p.m1 * p.m2}")
        return DenseOperator(matrix)
    size = p.kernel_size or default_kernel_size(min(p.m1, p.m2))
    sigma = p.kernel_sigma or None
    return Conv2dOperator(gaussian_kernel(size, sigma), (p.m1, p.m2))


def build_phantom(cfg):
    p = cfg.problem
    return make_phantom(p.m1, p.m2, default_regions(p.m1, p.m2, value=p.phantom_value),
                        cfg.dictionary.n_atoms)


def build_data(cfg, A, B, phantom):
    p = cfg.problem
    if p.data_path:
        try:
            W = load_matrix(p.data_path)
        except OSError as exc:
            raise cfgmod.ConfigError(f"cannot read data: {exc}") from exc
        if W.shape != (A.out_dim, B.values.shape[0]):
            raise cfgmod.ConfigError(f"data has shape {W.shape}, expected "
                                     f"{(A.out_dim, B.values.shape[0])}")
        return W
    return synthesize(A, B, phantom, p.sigma, cfg.run.seed)


def _finite(X, what):
    if not np.all(np.isfinite(X)):
        raise NumericalFailure(f"{what} contains non-finite values")
    return X


def _out(cfg) -> Path:
    out = Path(cfg.run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write(out / "config.ini", cfgmod.serialize(cfg))
    return out


def _write_json(path, obj):
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_gen_dict(cfg):
    B = build_dictionary(cfg)
    out = _out(cfg)
    write_matrix(out / "dictionary.lspm", B.values)
    write_matrix(out / "time_grid.lspm", B.time_grid)
    return {"dictionary": str(out / "dictionary.lspm"), "checksum": checksum(B.values)}


def cmd_gen_phantom(cfg):
    ph = build_phantom(cfg)
    out = _out(cfg)
    write_matrix(out / "phantom.lspm", ph.U_true.values)
    return {"phantom": str(out / "phantom.lspm"), "checksum": checksum(ph.U_true.values)}


def cmd_forward(cfg):
    A, B = build_operator(cfg), build_dictionary(cfg)
    W = _finite(synthesize(A, B, build_phantom(cfg), cfg.problem.sigma, cfg.run.seed), "data")
    out = _out(cfg)
    write_matrix(out / "data.lspm", W)
    return {"data": str(out / "data.lspm"), "checksum": checksum(W)}


def cmd_solve(cfg):
    A, B = build_operator(cfg), build_dictionary(cfg)
    W = _finite(build_data(cfg, A, B, build_phantom(cfg)), "data")
    U, report = solve(A, B, W, cfg.solver.params())
    _finite(U, "solution")
    summary = {
        "iterations": report.iterations,
        "stop_reason": report.stop_reason,
        "objective": report.objective,
        "final_lambda": report.lam,
        "final_mu": report.mu,
        "residual_history": report.residual_history.tolist(),
        "tolerance_history": report.tolerance_history.tolist(),
        "penalty_history": [list(p) for p in report.penalty_history],
        "two_pass": cfg.solver.two_pass,
    }
    if cfg.solver.two_pass:
        support = extract_support(U, cfg.solver.support_tol)
        U, second = debias_on_support(A, B, W, support, cfg.solver.params())
        _finite(U, "debiased solution")
        summary["second_pass"] = ({"method": "nnls"} if second is None else
                                  {"method": "admm", "iterations": second.iterations,
                                   "stop_reason": second.stop_reason})
    out = _out(cfg)
    write_matrix(out / "coefficients.lspm", U)
    summary["checksum"] = checksum(U)
    _write_json(out / "report.json", summary)
    return {"coefficients": str(out / "coefficients.lspm"), "iterations": report.iterations,
            "stop_reason": report.stop_reason}


def sweep_csv(table) -> str:
    lines = [",".join(table.HEADER)]
    for row in table.rows:
        lines.append(",".join(repr(float(row[k])) if k != "iterations" else str(row[k])
                              for k in table.HEADER))
    return "\n".join(lines) + "\n"


def cmd_sweep(cfg):
    A, B = build_operator(cfg), build_dictionary(cfg)
    table = sweep_v(A, B, build_phantom(cfg), cfg.problem.sigma, cfg.run.seed,
                    cfg.sweep.v_list, cfg.solver.params(), rel_tol=cfg.sweep.rel_tol)
    out = _out(cfg)
    atomic_write(out / "sweep.csv", sweep_csv(table))
    return {"table": str(out / "sweep.csv"), "rows": len(table.rows)}


def cmd_analyze(cfg):
    A, B = build_operator(cfg), build_dictionary(cfg)
    phantom = build_phantom(cfg)
    W = _finite(build_data(cfg, A, B, phantom), "data")
    truth = phantom.labels
    scaling = check_scaling_condition(B, truth)
    predicted = predict_asymptotic_support(A, W, B)
    fg = truth >= 0
    report = {
        "mutual_incoherence": mutual_incoherence(B),
        "scaling_condition": {
            "satisfied": scaling.satisfied,
            "violations": [list(v) for v in scaling.violations],
        },
        "predicted_support": {
            "argmax": predicted.argmax.tolist(),
            "tie_count": int((predicted.mask.sum(axis=1) > 1).sum()),
            "foreground_agreement": float(np.mean(predicted.argmax[fg] == truth[fg]))
            if fg.any() else None,
        },
    }
    src = check_source_condition(phantom.U_true, A, B, nonnegative=True)
    report["source_condition"] = (
        {"status": "skipped", "reason": "problem too large for the dense LP"}
        if src.Q is None and not np.isfinite(src.residual) else
        {"status": "satisfied" if src.satisfied else "not satisfied",
         "residual": src.residual})
    out = _out(cfg)
    _write_json(out / "analysis.json", report)
    return {"analysis": str(out / "analysis.json")}


COMMANDS = {
    "gen-dict": cmd_gen_dict,
    "gen-phantom": cmd_gen_phantom,
    "forward": cmd_forward,
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "analyze": cmd_analyze,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="locsparse", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="INI run configuration")
        p.add_argument("--seed", type=int, help="override run.seed")
        p.add_argument("--out", help="override run.out_dir")
        if name == "solve":
            p.add_argument("--two-pass", action="store_true",
                           help="debias on the recovered support")
    return parser


def resolve_config(args):
    cfg = cfgmod.load(args.config) if args.config else cfgmod.RunConfig()
    run = cfg.run
    if args.seed is not None:
        run = dataclasses.replace(run, seed=args.seed)
    if args.out is not None:
        run = dataclasses.replace(run, out_dir=args.out)
    solver = cfg.solver
    if getattr(args, "two_pass", False):
        solver = dataclasses.replace(solver, two_pass=True)
    return dataclasses.replace(cfg, run=run, solver=solver).validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        result = COMMANDS[args.command](cfg)
    except (NumericalFailure, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ContractError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
