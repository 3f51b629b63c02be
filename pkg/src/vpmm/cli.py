"""Command-line front end: ``vpmm <subcommand> --config <path|name>``.

Exit codes: 0 success, 1 a diagnostic failed, 2 configuration error,
3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .config import REFERENCE_CONFIGS, RunConfig, load_config
from .errors import ConfigError, InnerSolverDiverged, StepRejected, VpmmIOError
from .io import serialize_trajectory, summary_dict, write_json
from .scheme import run

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


def run_config(cfg: RunConfig, eta=None):
    system = cfg.system(eta)
    return run(cfg.initial_field(system.model), cfg.grid, system, cfg.settings, cfg.quadrature, cfg)


def _relative_max(values, E):
    """Largest per-step value relative to ``1 + |E^n|`` over steps 1..N."""
    v = np.asarray(values)[1:] / (1.0 + np.abs(np.asarray(E)[1:]))
    return float(np.max(v)) if len(v) else 0.0


def build_report(cfg: RunConfig, gradient_samples=5) -> dg.DiagnosticsReport:
    """Run the configuration and certify the trajectory and the model functions."""
    rep = dg.DiagnosticsReport()
    system = cfg.system()
    traj = run(cfg.initial_field(system.model), cfg.grid, system, cfg.settings, cfg.quadrature, cfg)
    span = f"steps 1..{cfg.grid.N}"
    rep.add("fenchel_gap", "discrete flow rule (Fenchel equality)", _relative_max(traj.fenchel_gap, traj.E), cfg.settings.gap_tol, evaluated_on=span)
    rep.add(
        "comparison_slack",
        "incremental minimality against the previous state",
        _relative_max(-np.asarray(traj.comparison_slack), traj.E),
        cfg.settings.comparison_tol,
        evaluated_on=span,
    )
    scale = dg.edi_scale(traj)
    rep.add(
        "edi_prefix",
        "energy-dissipation inequality",
        dg.edi_prefix_max(traj) / scale,
        cfg.residual_scale,
        evaluated_on="every prefix [0, t^n]",
    )
    if cfg.eta > 0 and cfg.grid.N >= 2:
        fine_cfg = cfg.replace(steps=2 * cfg.grid.N)
        fine_sys = fine_cfg.system()
        fine = run(fine_cfg.initial_field(fine_sys.model), fine_cfg.grid, fine_sys, fine_cfg.settings, fine_cfg.quadrature, fine_cfg)
        coarse_cr = dg.chain_rule_check(traj, system)
        fine_cr = dg.chain_rule_check(fine, fine_sys)
        C = coarse_cr.max_defect / traj.tau
        rep.add(
            "chain_rule",
            "chain rule for the regularized energy",
            fine_cr.max_defect,
            max(1e-3, C * fine.tau),
            evaluated_on=f"N={fine_cfg.grid.N}, excluded steps {fine_cr.excluded}",
            note=f"C={C:.4g} from N={cfg.grid.N}",
        )
        e0, e1 = dg.edb_residual(traj), dg.edb_residual(fine)
        rep.add("edb_decrease", "energy-dissipation balance under refinement", e1, e0, passed=e1 < e0 or e1 == 0.0, evaluated_on=f"N={cfg.grid.N} -> {fine_cfg.grid.N}")
        rep.add("edb_residual", "energy-dissipation balance", e1, 1e-3 * scale, evaluated_on=f"N={fine_cfg.grid.N}")
    elif cfg.grid.N >= 2:
        cr = dg.chain_rule_check(traj, system)
        rep.add("chain_rule", "chain rule", cr.max_defect, float("inf"), passed=True, note=cr.label)
    grads = dg.gradient_fd_suite(system, n_samples=gradient_samples, seed=cfg.data["seed"])
    rep.add("gradient_fd", "assembled and pointwise derivatives", grads.max_error, grads.tol, evaluated_on=f"{gradient_samples} states")
    broken = dg.gradient_fd_suite(system, n_samples=1, seed=cfg.data["seed"], break_gradient=True)
    rep.add("gradient_fd_negative_control", "broken gradient must be detected", broken.max_error, grads.tol, passed=not broken.passed)
    mat = cfg.material
    survey = dg.stress_control_survey(mat.elastic, mat.q_F, cfg.dim, seed=cfg.data["seed"])
    rep.add("stress_control", "Mandel stress control", survey.max_ratio, survey.bound, note=f"C5={survey.C5:.4g}")
    dp = cfg.dissipation
    tol = 1e-8 if dp.p == 2 else 1e-6
    rep.add("conjugate_oracle", "closed-form dual dissipation", dg.conjugate_oracle(dp, 100, cfg.data["seed"], cfg.dim), tol)
    return rep


def _out_dir(args):
    out = Path(args.out) if args.out else Path(".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args, cfg):
    out = _out_dir(args)
    csv_path = out / cfg.data["output"]["csv"]
    json_path = out / cfg.data["output"]["json"]
    try:
        traj = run_config(cfg)
    except StepRejected as exc:
        if exc.trajectory is not None and len(exc.trajectory.t):
            serialize_trajectory(exc.trajectory, csv_path)
            write_json(summary_dict(exc.trajectory, {"rejected": str(exc)}), json_path)
        raise
    serialize_trajectory(traj, csv_path)
    summ = summary_dict(traj, {"config": cfg.name})
    write_json(summ, json_path)
    print(f"wrote {csv_path} and {json_path}")
    print(f"E: {summ['E_initial']:.6g} -> {summ['E_final']:.6g}, max EDI prefix residual {summ['edi_prefix_max']:.3e}")
    return EXIT_OK


def cmd_check(args, cfg):
    rep = build_report(cfg)
    out = _out_dir(args)
    path = out / "check_report.json"
    path.write_text(rep.to_json() + "\n")
    print(rep.table())
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_study_tau(args, cfg):
    threads = int(os.environ.get("VPMM_THREADS", "1"))

    def level(N):
        c = cfg.replace(steps=N)
        return run_config(c)

    study = dg.tau_refinement_study(level, args.levels, cfg.grid.N, threads, p=cfg.dissipation.p, weights=cfg.model().nodal_weights)
    out = _out_dir(args)
    path = out / "study_tau.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["N", "tau", "cauchy_difference", "edi_prefix_max", "edb_residual"])
        for row in study.rows():
            # the finest level has no finer partner to difference against
            w.writerow([row[0]] + ["" if np.isnan(v) else repr(float(v)) for v in row[1:]])
    for row in study.rows():
        diff = "-" if np.isnan(row[2]) else f"{row[2]:.4e}"
        print(f"N={row[0]:5d} tau={row[1]:.4g} diff={diff} edi={row[3]:.3e} edb={row[4]:.3e}")
    print("differences strictly decreasing:", study.monotone)
    return EXIT_OK


def cmd_survey_stress(args, cfg):
    mat = cfg.material
    s = dg.stress_control_survey(mat.elastic, mat.q_F, cfg.dim, seed=cfg.data["seed"])
    rep = {"schema": "vpmm-json-1", "max_ratio": s.max_ratio, "bound_C4": s.bound, "C5": s.C5, "samples": len(s.table), "passed": s.passed}
    write_json(rep, _out_dir(args) / "stress_survey.json")
    print(f"max |M|/(W+1) = {s.max_ratio:.6g} <= C4 = {s.bound:.6g}: {s.passed}; C5 = {s.C5:.6g}")
    return EXIT_OK if s.passed else EXIT_FAIL


def cmd_oracle_conjugate(args, cfg):
    from .constitutive import DissipationParams

    rows, ok = [], True
    for p, tol in ((2.0, 1e-8), (1.5, 1e-6)):
        for sig in (0.5, 1.0, 2.0):
            for nu in (0.5, 1.0):
                err = dg.conjugate_oracle(DissipationParams(sig, nu, p), 100, cfg.data["seed"], cfg.dim)
                ok &= err < tol
                rows.append({"p": p, "sigma_yield": sig, "nu": nu, "max_abs_error": err, "tolerance": tol})
    write_json({"schema": "vpmm-json-1", "passed": bool(ok), "cases": rows}, _out_dir(args) / "conjugate_oracle.json")
    print(f"{len(rows)} parameter cases, max error {max(r['max_abs_error'] for r in rows):.3e}, passed: {bool(ok)}")
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {
    "run": cmd_run,
    "check": cmd_check,
    "study-tau": cmd_study_tau,
    "survey-stress": cmd_survey_stress,
    "oracle-conjugate": cmd_oracle_conjugate,
}


def make_parser():
    ap = argparse.ArgumentParser(prog="vpmm", description="Minimizing movements for finite-strain gradient viscoplasticity.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=name not in ("survey-stress", "oracle-conjugate"), help=f"TOML path or one of {', '.join(REFERENCE_CONFIGS)}")
        sp.add_argument("--eta", type=float, default=None, help="override the regularization weight")
        sp.add_argument("--steps", type=int, default=None, help="override the number of time steps")
        sp.add_argument("--out", default=None, help="output directory (default: current directory)")
        if name == "study-tau":
            sp.add_argument("--levels", type=int, default=3)
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = load_config(args.config or "point_stationary").replace(eta=args.eta, steps=args.steps)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StepRejected, InnerSolverDiverged) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except VpmmIOError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
