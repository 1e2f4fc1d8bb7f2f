"""Command line runner: `jeq <task> --scenario <file> [--out <dir>] [--threads k]`.

Every run writes its artifacts and a manifest.json under
<out>/<UTC timestamp>-<config hash>/. Exit codes: 0 success, 2 invalid scenario,
3 solver failure.
"""
import argparse
import copy
import hashlib
import json
import os
import sys
import time
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path

import mpire
import numpy as np
from loguru import logger

from jeq import __version__
from jeq.data import scenario as sc
from jeq.errors import ConfigInvalid, JeqError, SolverFailed, WindowTooShort
from jeq.geom.core import HermitianField
from jeq.geom.fieldio import export_csv, read_field, write_field, write_table
from jeq.geom.subsolution import (
    asymptotic_deviation,
    form_positivity_slack,
    slack_profile,
    subsolution_slack,
)
from jeq.models.classes import class_pipeline, report_json, to_exact
from jeq.models.cusp import (
    AsymptoticFit,
    CuspProfile,
    decay_improvement,
    solve_cusp_bvp,
    translation_sequence_test,
)
from jeq.models.functionals import EnergyReport, k_energy
from jeq.opt.path import TRACE_COLUMNS, march_path, normalize_pair

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 2, 3


def setup_logging(level: str = "INFO") -> None:
    """One serialized stderr sink, shared by sweep workers."""
    logger.remove()
    logger.add(sys.stderr, level=level, enqueue=True,
               format="{time:HH:mm:ss} | {level: <7} | {message}")


def resolve_threads(threads: int = None) -> int:
    if threads is None:
        threads = int(os.environ.get("JEQ_THREADS", 1))
    if threads < 1:
        raise ConfigInvalid(
            f"thread count must be >= 1, got {threads}", field="threads"
        )
    return threads


def config_hash(config: dict) -> str:
    text = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:10]


def make_run_dir(out, config: dict) -> Path:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    base = Path(out) / f"{stamp}-{config_hash(config)}"
    run_dir, k = base, 0
    while run_dir.exists():
        k += 1
        run_dir = base.with_name(f"{base.name}.{k}")
    run_dir.mkdir(parents=True)
    return run_dir


@contextmanager
def _stage(stages: dict, name: str):
    start = time.perf_counter()
    try:
        yield
    finally:
        stages[name] = round(time.perf_counter() - start, 6)


def _to_json(value):
    if isinstance(value, dict):
        return {k: _to_json(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_json(v) for v in value]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if np.isfinite(value) else str(value)
    if isinstance(value, (np.integer, np.bool_)):
        return value.item()
    return value


# tasks ------------------------------------------------------------------------

def solve_torus(scenario: sc.Scenario, run_dir: Path, stages: dict) -> dict:
    with _stage(stages, "setup"):
        grid = sc.build_grid(scenario.grid)
        omega, chi = sc.build_metrics(scenario, grid)
        C = None
        if scenario.path.normalize:
            omega, chi, C = normalize_pair(omega, chi)
        config = sc.path_config(scenario.path)
    with _stage(stages, "march"):
        result = march_path(omega, chi, config)
    with _stage(stages, "write"):
        rows = [r.row() for r in result.records]
        write_table(run_dir / "trace.csv", TRACE_COLUMNS, rows)
        write_field(run_dir / "phi.jeqf", result.final.phi)
        write_field(run_dir / "phi_extrapolated.jeqf", result.extrapolated)
        export_csv(run_dir / "phi.csv", result.final.phi)
    return {"converged": True, "pairing_constant": C,
            "residual_sup": result.final.residual_sup,
            "extrapolation_order": result.extrapolation_order,
            "eps_levels": result.eps_levels, "delta0_ok": result.delta0_ok,
            "c2_ok": result.c2_ok, "c2_fit": list(result.c2_fit)}


def check_subsolution(scenario: sc.Scenario, run_dir: Path, stages: dict) -> dict:
    section = scenario.subsolution
    with _stage(stages, "setup"):
        grid = sc.build_grid(scenario.grid)
        omega, chi = sc.build_metrics(scenario, grid)
    with _stage(stages, "check"):
        report = subsolution_slack(omega, chi)
        profile = slack_profile(omega, chi, section.ts)
        point = report.worst_point
        form_slack = form_positivity_slack(omega.values[point], chi.values[point],
                                           step=section.form_step)
        flags = {"delta_max": report.delta_max, "worst_point": list(point),
                 "strict": report.strict, "form_scan_delta": form_slack}
        deviation = np.nan
        if section.rho is not None:
            rho = sc.build_potential(section.rho, grid, "subsolution.rho")
            deviation = asymptotic_deviation(omega, chi, rho, section.eta)
            flags["asymptotic_deviation"] = deviation
    with _stage(stages, "write"):
        index = [f"i{a + 1}" for a in range(len(point))]
        write_table(run_dir / "subsolution.csv",
                    ["delta_max"] + index + ["asymptotic_deviation"],
                    [[report.delta_max, *point, deviation]])
        write_table(run_dir / "slack_profile.csv", ["t", "delta_max"],
                    np.column_stack([section.ts, profile]))
        with open(run_dir / "subsolution.json", "w") as fh:
            json.dump(_to_json(flags), fh, indent=2, sort_keys=True)
    return flags


def solve_cusp(scenario: sc.Scenario, run_dir: Path, stages: dict) -> dict:
    with _stage(stages, "setup"):
        geometry, boundary = sc.build_cusp(scenario.cusp)
    with _stage(stages, "solve"):
        profile = solve_cusp_bvp(geometry, boundary, tol=scenario.cusp.tol)
    flags = {"product_limit": profile.product_limit, "c_gap": profile.c_gap,
             "newton_iters": profile.newton_iters,
             "fit_degenerate": profile.fit.degenerate,
             "fit_converged": profile.fit.converged}
    with _stage(stages, "analysis"):
        try:
            translation = translation_sequence_test(profile)
            flags.update(translation_monotone=translation.monotone,
                         translation_decays=translation.decays)
            translation_rows = np.column_stack(
                [translation.centers, translation.differences])
        except WindowTooShort as err:
            logger.warning(f"translation test skipped: {err}")
            flags["translation_decays"] = None
            translation_rows = np.empty((0, 2))
        if geometry.is_flat_torus:
            decay = decay_improvement(profile)
            flags.update(eta_mean=decay.eta_mean, eta_perp=decay.eta_perp,
                         decay_improved=decay.improved)
    with _stage(stages, "write"):
        write_table(run_dir / "profile.csv", CuspProfile.HEADER, profile.table_rows())
        write_table(run_dir / "fit.csv", AsymptoticFit.HEADER, [profile.fit.row()])
        write_table(run_dir / "translation.csv", ["center", "difference"],
                    translation_rows)
    return flags


def classes(scenario: sc.Scenario, run_dir: Path, stages: dict) -> dict:
    with _stage(stages, "pipeline"):
        data = sc.build_classes(scenario.classes)
        report = report_json(class_pipeline(data, to_exact(scenario.classes.a)))
    with _stage(stages, "write"):
        with open(run_dir / "classes.json", "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
    return {"verdict": report["verdict"], "round_trip": report["round_trip"]}


def energies(scenario: sc.Scenario, run_dir: Path, stages: dict) -> dict:
    section = scenario.energies
    with _stage(stages, "setup"):
        grid = sc.build_grid(scenario.grid)
        omega, _ = sc.build_metrics(scenario, grid)
        T = None if section.T is None else sc.build_form(section.T, grid, "energies.T")
    rows = []
    with _stage(stages, "energies"):
        for k, state in enumerate(section.states):
            phi = sc.build_potential(state, grid, f"energies.states.{k}")
            report: EnergyReport = k_energy(phi, omega, T)
            rows.append([k] + report.row())
    with _stage(stages, "write"):
        header = ["state"] + list(EnergyReport.HEADER)
        write_table(run_dir / "energies.csv", header, rows)
    return {"states": len(rows), "H_nonnegative": all(r[3] >= 0 for r in rows)}


TASKS = {
    "solve-torus": solve_torus,
    "check-subsolution": check_subsolution,
    "solve-cusp": solve_cusp,
    "classes": classes,
    "energies": energies,
}


# runner -----------------------------------------------------------------------

def _execute(scenario: sc.Scenario, run_dir: Path, threads: int) -> int:
    """Run one validated scenario inside an existing run directory."""
    config = scenario.model_dump(mode="json")
    manifest = {"task": scenario.task, "version": __version__, "config": config,
                "stages": {}, "status": "running", "error": None, "flags": {}}
    code = EXIT_OK
    try:
        if scenario.task == "sweep":
            manifest["flags"] = sweep(scenario, run_dir, manifest["stages"], threads)
        else:
            task = TASKS[scenario.task]
            manifest["flags"] = task(scenario, run_dir, manifest["stages"])
        manifest["status"] = "ok"
    except ConfigInvalid as err:
        error = {"type": type(err).__name__, "message": str(err), "field": err.field}
        manifest.update(status="invalid", error=error)
        logger.error(f"invalid scenario: {err}")
        code = EXIT_INVALID
    except JeqError as err:
        failure = SolverFailed(f"{type(err).__name__}: {err}")
        failure.__cause__ = err
        manifest.update(status="failed", error={"type": type(err).__name__,
                                                "message": str(err)})
        logger.error(f"solver failure: {failure}")
        code = EXIT_FAILED
    finally:
        with open(run_dir / "manifest.json", "w") as fh:
            json.dump(_to_json(manifest), fh, indent=2, sort_keys=True)
    return code


def _run_member(raw: dict, member_dir: str, threads: int) -> int:
    scenario = sc.validate_scenario(raw)
    member_dir = Path(member_dir)
    member_dir.mkdir(parents=True, exist_ok=True)
    return _execute(scenario, member_dir, threads)


def sweep(scenario: sc.Scenario, run_dir: Path, stages: dict, threads: int) -> dict:
    """Run one member scenario per value of the swept parameter, `threads` at a time."""
    base = scenario.model_dump(mode="json", exclude_none=True)
    base.pop("sweep")
    base["task"] = scenario.sweep.task
    members = []
    for k, value in enumerate(scenario.sweep.values):
        raw = copy.deepcopy(base)
        sc.set_dotted(raw, scenario.sweep.parameter, value)
        sc.validate_scenario(raw)
        members.append((raw, str(run_dir / f"member-{k}"), 1))
    with _stage(stages, "members"):
        n_jobs = min(threads, len(members))
        with mpire.WorkerPool(n_jobs=n_jobs, start_method="spawn") as pool:
            codes = pool.map(_run_member, members)
    flags = {"parameter": scenario.sweep.parameter, "values": scenario.sweep.values,
             "member_codes": list(codes)}
    if scenario.sweep.task == "solve-torus" and all(c == EXIT_OK for c in codes):
        finals = [read_field(Path(m[1]) / "phi.jeqf").values for m in members]
        flags["member_max_difference"] = max(float(np.max(np.abs(f - finals[0])))
                                             for f in finals)
    if any(c != EXIT_OK for c in codes):
        raise SolverFailed(f"sweep members failed with codes {codes}")
    return flags


def run(scenario_path, out="runs", threads: int = None, task: str = None) -> int:
    """Validate a scenario, run its task and write the run directory.

    Returns the exit code: 0 success, 2 invalid scenario, 3 solver failure.
    """
    try:
        threads = resolve_threads(threads)
        scenario, _ = sc.load_scenario(scenario_path)
        if task is not None and task != scenario.task:
            raise ConfigInvalid(f"scenario task {scenario.task!r} does not match "
                                f"subcommand {task!r}", field="task")
    except ConfigInvalid as err:
        where = "" if err.line is None else f" (line {err.line})"
        logger.error(f"invalid scenario{where}: {err}")
        return EXIT_INVALID
    run_dir = make_run_dir(out, scenario.model_dump(mode="json"))
    logger.info(f"run directory {run_dir}")
    return _execute(scenario, run_dir, threads)


def parse_args(args):
    parser = argparse.ArgumentParser(
        prog="jeq", description="J-equation numerical workbench")
    parser.add_argument("--version", action="version", version=f"jeq {__version__}")
    subparsers = parser.add_subparsers(dest="task", required=True)
    for name in sc.TASKS:
        sub = subparsers.add_parser(name, help=f"run a {name} scenario")
        sub.add_argument("--scenario", required=True,
                         help="scenario file (JSON or YAML)")
        sub.add_argument("--out", default="runs", help="parent of the run directory")
        sub.add_argument("--threads", type=int, default=None,
                         help="worker count for sweeps (default: $JEQ_THREADS or 1)")
        sub.add_argument("--log-level", default="INFO",
                         choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return parser.parse_args(args)


def main(args) -> int:
    args = parse_args(args)
    setup_logging(args.log_level)
    return run(args.scenario, out=args.out, threads=args.threads, task=args.task)


def run_cli():
    """Console script entry point."""
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    run_cli()
