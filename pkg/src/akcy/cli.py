"""Batch front end:  akcy run | check | diagnose | sweep.

Exit codes: 0 success, 2 invariant-suite failure, 3 solver failure,
4 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import calculus as ca
from .diagnostics import csv_row, diagnostics
from .errors import AkcyError, ConfigError, ScenarioInvalid
from .fields import TwoForm
from .grid import random_bandlimited
from .io import dump_field, load_field
from .reports import RunReport, write_convergence_csv
from .scenarios import RunConfig, build_scenario, load_config
from .solver import (Problem, c_of_t, continuity_path, make_anchor,
                     newton_solve_at_t, phi_map, uniqueness_test)

log = logging.getLogger("akcy")

EXIT_OK = 0
EXIT_CHECK_FAILED = 2
EXIT_SOLVER_FAILED = 3
EXIT_CONFIG_ERROR = 4


def _setup_logging(level: str):
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")


def _config_echo(cfg: RunConfig) -> dict:
    return {
        "n": list(cfg.n), "periods": list(cfg.periods),
        "scenario": cfg.scenario, "epsilon": cfg.epsilon,
        "perturbation_modes": cfg.perturbation_modes,
        "seed": cfg.seed,
        "f_modes": [{"mode": list(m.mode), "amplitude": m.amplitude,
                     "phase": list(m.phase)} for m in cfg.f_modes],
        "solver": {
            "newton_tol": cfg.solver.newton_tol,
            "newton_max_iter": cfg.solver.newton_max_iter,
            "dt_init": cfg.solver.dt_init, "dt_min": cfg.solver.dt_min,
            "dt_max": cfg.solver.dt_max, "p": cfg.solver.p,
            "claim_threshold": cfg.solver.claim_threshold,
            "class_mode": cfg.solver.class_mode,
        },
        "outputs": {"directory": cfg.outputs.directory,
                    "dump_fields": cfg.outputs.dump_fields,
                    "log_level": cfg.outputs.log_level},
    }


def _path_diagnostics(cfg: RunConfig, problem, f: np.ndarray, csv_rows: list,
                      outdir: Path, artifacts: list):
    grid = problem.triple.grid

    def fn(state, prob, t):
        ct = c_of_t(grid, f, prob.triple.omega, t)
        f_eff = t * f + ct
        rec = diagnostics(prob.triple, state.omega_prime, f_eff,
                          p=cfg.solver.p, mode=cfg.solver.class_mode,
                          basis=prob.basis, t=t, c_hat=state.c_hat,
                          claim_threshold=cfg.solver.claim_threshold)
        rho = ca.wedge22(state.omega_prime.data, state.omega_prime.data)
        res_vol = float(np.max(np.abs(rho / (np.exp(f_eff) * prob.triple.vol_density)
                                      - 1.0)))
        csv_rows.append(csv_row(rec, state.residuals.newton_iters, res_vol,
                                state.residuals.res_selfdual,
                                state.residuals.res_gauge))
        if cfg.outputs.dump_fields:
            path = outdir / f"omega_prime_t{t:.6f}.akf"
            dump_field(state.omega_prime, path)
            artifacts.append(str(path))
        if rec.claim_warning:
            log.warning("claim monitor >= threshold at t=%.4f "
                        "(claim=%.3e class=%.3e)", t, rec.claim_quantity,
                        rec.class_term_lp)
        return rec

    return fn


def cmd_run(cfg: RunConfig, config_path: str) -> int:
    outdir = Path(cfg.outputs.directory)
    outdir.mkdir(parents=True, exist_ok=True)
    report = RunReport(command="run", config=_config_echo(cfg))
    csv_rows, artifacts = [], []
    t0 = time.perf_counter()
    try:
        triple, fs = build_scenario(cfg)
    except (ScenarioInvalid, ConfigError) as err:
        report.fail("build_scenario", str(err))
        report.write(outdir / "report.json")
        return EXIT_CONFIG_ERROR
    f = fs.data
    report.timings["build_scenario_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    try:
        problem = Problem.build(triple, f, cfg.solver)
        diag_fn = _path_diagnostics(cfg, problem, f, csv_rows, outdir, artifacts)
        result = continuity_path(problem, diagnostics_fn=diag_fn)
    except AkcyError as err:
        report.fail("continuity_path", f"{type(err).__name__}: {err}")
        csv_path = write_convergence_csv(outdir / "convergence.csv", csv_rows)
        report.artifacts = [str(csv_path)] + artifacts
        report.write(outdir / "report.json")
        return EXIT_SOLVER_FAILED
    report.timings["continuity_path_s"] = time.perf_counter() - t0

    state = result.state
    rho = ca.wedge22(state.omega_prime.data, state.omega_prime.data)
    res_vol = float(np.max(np.abs(rho / (np.exp(f) * triple.vol_density) - 1.0)))
    p_dev = float(np.max(np.abs(ca.proj_p(triple.J.data, state.omega_prime.data))))
    pairing = ca.integrate_density(triple.grid,
                                   ca.wedge22(state.omega_prime.data,
                                              triple.omega.data))
    tol = cfg.solver.newton_tol
    report.add_criterion("volume_residual", res_vol < 10.0 * tol, res_vol, 10.0 * tol)
    report.add_criterion("selfdual_residual", p_dev < 1e-8, p_dev, 1e-8)
    report.add_criterion("pairing_positive", pairing > 0.0, pairing, 0.0)
    if result.records:
        rec = result.records[-1]
        report.add_criterion("trace_identity", rec.trace_identity_residual < 1e-7,
                             rec.trace_identity_residual, 1e-7)
        report.add_criterion("trace_lower_bound", rec.lower_bound_margin > -1e-7,
                             rec.lower_bound_margin, -1e-7)
        report.add_criterion("min_eig_gprime", rec.min_eig_gprime > 0.0,
                             rec.min_eig_gprime, 0.0)
        report.add_criterion("records_finite", all(r.finite()
                                                   for r in result.records))
    report.final_residuals = {
        "volume": res_vol, "selfdual": p_dev,
        "gauge": state.residuals.res_gauge,
        "newton_phi": state.residuals.res_phi,
        "s": state.s,
    }

    if cfg.uniqueness_seeds is not None:
        t0 = time.perf_counter()
        try:
            cmp = uniqueness_test(triple, f, cfg.solver, cfg.uniqueness_seeds)
            report.add_criterion("uniqueness_l2", cmp["l2_difference"] < 1e-6,
                                 cmp["l2_difference"], 1e-6)
            report.final_residuals["uniqueness"] = {
                k: cmp[k] for k in ("l2_difference", "wedge_mechanism",
                                    "p_mechanism", "class_difference")}
        except AkcyError as err:
            report.fail("uniqueness", f"{type(err).__name__}: {err}")
        report.timings["uniqueness_s"] = time.perf_counter() - t0

    csv_path = write_convergence_csv(outdir / "convergence.csv", csv_rows)
    final_path = outdir / "omega_prime_final.akf"
    dump_field(state.omega_prime, final_path)
    artifacts.append(str(final_path))
    report.artifacts = [str(csv_path)] + artifacts
    report.write(outdir / "report.json")
    log.info("run finished: passed=%s", report.passed)
    return EXIT_OK if report.passed else EXIT_SOLVER_FAILED


def cmd_check(cfg: RunConfig, config_path: str) -> int:
    from .checks import run_property_suites
    outdir = Path(cfg.outputs.directory)
    outdir.mkdir(parents=True, exist_ok=True)
    report = RunReport(command="check", config=_config_echo(cfg))
    t0 = time.perf_counter()
    try:
        run_property_suites(cfg, report)
    except (ScenarioInvalid, ConfigError) as err:
        report.fail("build_scenario", str(err))
        report.write(outdir / "report.json")
        return EXIT_CONFIG_ERROR
    report.timings["total_s"] = time.perf_counter() - t0
    report.write(outdir / "report.json")
    for c in report.criteria:
        log.info("%-44s %s", c["name"], "pass" if c["passed"] else "FAIL")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_diagnose(dump_path: str, cfg: RunConfig) -> int:
    outdir = Path(cfg.outputs.directory)
    outdir.mkdir(parents=True, exist_ok=True)
    triple, fs = build_scenario(cfg)
    field = load_field(dump_path, grid=triple.grid)
    if not isinstance(field, TwoForm):
        field = TwoForm(field.grid, field.data)
    from .hodge import harmonic_selfdual_basis
    basis = None
    if cfg.solver.class_mode == "drifting":
        basis = harmonic_selfdual_basis(triple.grid, triple.g, omega=triple.omega)
    rec = diagnostics(triple, field, fs.data, p=cfg.solver.p,
                      mode=cfg.solver.class_mode, basis=basis, t=1.0,
                      claim_threshold=cfg.solver.claim_threshold)
    from .reports import _tolist
    import dataclasses as dc
    payload = _tolist(dc.asdict(rec))
    print(json.dumps(payload, indent=2, sort_keys=True))
    (outdir / "diagnose.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, eps_list: list[float]) -> int:
    import csv as _csv

    from .structures import nijenhuis, nijenhuis_norms
    outdir = Path(cfg.outputs.directory)
    outdir.mkdir(parents=True, exist_ok=True)
    report = RunReport(command="sweep", config=_config_echo(cfg))
    rows = []
    for eps in eps_list:
        sub = RunConfig(**{**cfg.__dict__})
        sub.scenario = "perturbed"
        sub.epsilon = float(eps)
        row = {"epsilon": float(eps)}
        try:
            triple, fs = build_scenario(sub)
            nij = nijenhuis(triple.grid, triple.J)
            norms = nijenhuis_norms(triple.grid, nij, triple.g, p=cfg.solver.p,
                                    ginv=triple.ginv)
            row.update({"nij_l1": norms["l1"], "nij_lp": norms["lp"],
                        "nij_c0": norms["c0"]})
            problem = Problem.build(triple, fs.data, sub.solver)
            result = continuity_path(problem)
            rho = ca.wedge22(result.state.omega_prime.data,
                             result.state.omega_prime.data)
            row["volume_residual"] = float(np.max(np.abs(
                rho / (np.exp(fs.data) * triple.vol_density) - 1.0)))
            row["success"] = True
            row["failure"] = ""
        except AkcyError as err:
            row["success"] = False
            row["failure"] = f"{type(err).__name__}: {err}"
            row.setdefault("volume_residual", float("nan"))
            row.setdefault("nij_l1", float("nan"))
            row.setdefault("nij_lp", float("nan"))
            row.setdefault("nij_c0", float("nan"))
        rows.append(row)
        log.info("eps=%g success=%s", eps, row["success"])
    cols = ["epsilon", "nij_l1", "nij_lp", "nij_c0", "success",
            "volume_residual", "failure"]
    path = outdir / "sweep.csv"
    with open(path, "w", newline="") as fh:
        w = _csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for row in rows:
            out = {}
            for k in cols:
                v = row.get(k, "")
                out[k] = format(v, ".17g") if isinstance(v, float) else v
            w.writerow(out)
    report.artifacts = [str(path)]
    report.final_residuals = {"rows": len(rows)}
    report.write(outdir / "report.json")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="akcy",
        description="Almost-Kahler Calabi-Yau solver on the flat 4-torus")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="solve the volume equation per config")
    p_run.add_argument("config")
    p_check = sub.add_parser("check", help="run the module property suites")
    p_check.add_argument("config")
    p_diag = sub.add_parser("diagnose", help="recompute diagnostics from a dump")
    p_diag.add_argument("dump")
    p_diag.add_argument("config")
    p_sweep = sub.add_parser("sweep", help="epsilon sweep of the perturbed scenario")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--eps", required=True,
                         help="comma-separated epsilon values")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    _setup_logging(cfg.outputs.log_level)

    try:
        if args.command == "run":
            return cmd_run(cfg, args.config)
        if args.command == "check":
            return cmd_check(cfg, args.config)
        if args.command == "diagnose":
            return cmd_diagnose(args.dump, cfg)
        if args.command == "sweep":
            try:
                eps = [float(v) for v in args.eps.split(",") if v.strip()]
            except ValueError as err:
                print(f"config error: bad --eps: {err}", file=sys.stderr)
                return EXIT_CONFIG_ERROR
            return cmd_sweep(cfg, eps)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except ScenarioInvalid as err:
        print(f"scenario invalid: {err}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
