import logging
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import yaml
from pydantic import ValidationError
from tqdm import tqdm

from config.settings import settings
from src.exceptions import ConfigError, DinsysError, StepFailure
from src.models.config import RunConfig
from src.models.records import ConvergenceTable, Trajectory
from src.services.diagnostics_service import diagnostics_service
from src.services.problem_service import problem_service
from src.services.stepper_service import stepper_service
from src.storage.report_writer import ReportWriter

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_RUN_FAILED = 2
EXIT_USAGE = 64


def _validation_message(error: ValidationError) -> str:
    first = error.errors()[0]
    path = ".".join(str(part) for part in first["loc"])
    message = first["msg"]
    if message.startswith("Value error, "):
        message = message[len("Value error, "):]
    return f"{path} {message}" if path else message


def parse_config(path: str) -> RunConfig:
    """Load and validate a YAML run configuration"""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as e:
        line = e.problem_mark.line + 1 if e.problem_mark is not None else None
        raise ConfigError(f"malformed config: {e.problem or e}", line=line) from e
    except yaml.YAMLError as e:
        raise ConfigError(f"malformed config: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping of sections")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigError(_validation_message(e), field=".".join(str(p) for p in first["loc"])) from e


def _config_echo(config: RunConfig) -> List[str]:
    dumped = yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False, default_flow_style=True)
    return [f"config: {line}" for line in dumped.strip().splitlines()]


def _prepare(config: RunConfig):
    system = problem_service.build(config.problem)
    u0, v0 = problem_service.initial_data(config.problem, system)
    return system, u0, v0


def cmd_run(config: RunConfig, out: Optional[str] = None, strict: bool = False) -> int:
    """Run one trajectory and write trajectory.csv, edi.csv, apriori.csv and audit.txt"""
    writer = ReportWriter(out or config.output.directory)
    lines = _config_echo(config)
    try:
        system, u0, v0 = _prepare(config)
    except DinsysError as e:
        logger.error(f"cannot build {config.problem.id}: {e}")
        writer.write_audit(lines + [f"error: {e}"])
        return EXIT_RUN_FAILED

    tau_star = stepper_service.estimate_tau_star(system)
    lines.append(f"tau = {config.solver.tau!r}, tau* = {tau_star!r}, lambda = {system.convexity_defect!r}")
    warnings = [f"warning: {note}" for note in system.notes]

    try:
        trajectory = stepper_service.run(system, u0, v0, config.solver)
    except StepFailure as e:
        logger.error(f"run failed: {e}")
        if e.trajectory is not None:
            writer.write_trajectory(e.trajectory)
            warnings += [f"warning: {w}" for w in e.trajectory.warnings]
        writer.write_audit(lines + warnings + [f"error: {e}"])
        return EXIT_RUN_FAILED
    except DinsysError as e:
        logger.error(f"run failed: {e}")
        writer.write_audit(lines + warnings + [f"error: {e}"])
        return EXIT_RUN_FAILED

    warnings += [f"warning: {w}" for w in trajectory.warnings]
    writer.write_trajectory(trajectory)
    recs = trajectory.records[1:]
    lines.append(f"steps: {trajectory.N}, effective tau = {trajectory.tau!r}")
    lines.append(f"max optimality residual: {max(r.optimality_residual for r in recs)!r}")
    lines.append(f"max xi residual: {max(r.xi_residual for r in recs)!r}")
    lines.append(f"max Fenchel-Young gap: {max(abs(r.fy_gap) for r in recs)!r}")

    failed = False
    edi = audit = None
    try:
        if config.output.edi:
            edi = diagnostics_service.edi_check(trajectory)
            writer.write_edi(edi)
            failed |= not edi.passed
        if config.output.apriori:
            report = diagnostics_service.apriori_report(trajectory)
            extra = [(f"shift_gap_V(h={h!r})", diagnostics_service.shift_gap(trajectory, h, "V"))
                     for h in config.output.shift_gap_h if h < trajectory.T]
            writer.write_apriori(report, extra)
        if config.output.audit:
            audit = problem_service.assumption_audit(system, config.output.audit_samples, T=config.solver.T,
                                                     seed=config.output.seed)
            failed |= not audit.passed
    except DinsysError as e:
        logger.error(f"diagnostics failed: {e}")
        writer.write_audit(lines + warnings + [f"error: {e}"], audit=audit, edi=edi)
        return EXIT_RUN_FAILED

    if strict and warnings:
        failed = True
        lines.append("strict: warnings count as failures")
    writer.write_audit(lines + warnings, audit=audit, edi=edi)
    logger.info(f"run {'failed checks' if failed else 'passed'}")
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def _sweep_worker(payload: Dict, tau: float) -> Tuple[float, Optional[Trajectory], Optional[str]]:
    """Rebuild the system from the validated config and run one step size"""
    config = RunConfig.model_validate(payload)
    try:
        system, u0, v0 = _prepare(config)
        trajectory = stepper_service.run(system, u0, v0, config.solver.model_copy(update={"tau": tau}))
    except DinsysError as e:
        return tau, None, str(e)
    return tau, trajectory, None


def _run_all(payload: Dict, taus: List[float], jobs: int) -> Dict[float, Tuple[Optional[Trajectory], Optional[str]]]:
    results = {}
    if jobs == 1:
        iterator = (_sweep_worker(payload, tau) for tau in taus)
        if settings.progress:
            iterator = tqdm(iterator, total=len(taus), desc="sweep")
        for tau, trajectory, error in iterator:
            results[tau] = (trajectory, error)
        return results

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_sweep_worker, payload, tau) for tau in taus]
        completed = as_completed(futures)
        if settings.progress:
            completed = tqdm(completed, total=len(futures), desc="sweep")
        for future in completed:
            tau, trajectory, error = future.result()
            results[tau] = (trajectory, error)
    return results


def cmd_sweep(config: RunConfig, out: Optional[str] = None, jobs: Optional[int] = None,
              strict: bool = False) -> int:
    """Convergence sweep over the configured step sizes, written to convergence.csv"""
    if config.sweep is None:
        raise ConfigError("sweep section is required", field="sweep")
    writer = ReportWriter(out or config.output.directory)
    try:
        system, u0, v0 = _prepare(config)
    except DinsysError as e:
        logger.error(f"cannot build {config.problem.id}: {e}")
        return EXIT_RUN_FAILED

    exact = problem_service.exact_solution(config.problem, u0, v0) if config.sweep.exact else None
    if exact is None and config.sweep.reference_tau is None:
        raise ConfigError("sweep.reference_tau is required without a closed-form solution",
                          field="sweep.reference_tau")

    jobs = jobs or settings.jobs or os.cpu_count() or 1
    taus = list(config.sweep.taus)
    all_taus = taus if exact is not None else taus + [config.sweep.reference_tau]
    logger.info(f"sweep over {len(taus)} step sizes with {jobs} workers, reference "
                f"{'closed form' if exact is not None else repr(config.sweep.reference_tau)}")
    results = _run_all(config.model_dump(mode="json"), all_taus, min(jobs, len(all_taus)))

    reference = exact
    if exact is None:
        reference, error = results[config.sweep.reference_tau]
        if reference is None:
            logger.error(f"reference run failed: {error}")
            writer.write_convergence(ConvergenceTable(rows=[], failure=error))
            return EXIT_RUN_FAILED

    trajectories, failure = [], None
    for tau in taus:
        trajectory, error = results[tau]
        if trajectory is None:
            failure = error
            break
        trajectories.append(trajectory)
    table = diagnostics_service.convergence_table(trajectories, reference) if trajectories \
        else ConvergenceTable(rows=[])
    table.failure = failure
    writer.write_convergence(table)
    if failure is not None:
        logger.error(f"sweep aborted: {failure}")
        return EXIT_RUN_FAILED

    warnings = [w for trajectory in trajectories for w in trajectory.warnings] + list(system.notes)
    for row in table.rows:
        logger.info(f"tau={row.tau!r} err_CH={row.err_CH:.3e} order={row.order_estimate}")
    if strict and warnings:
        logger.warning(f"strict: {len(warnings)} warnings count as failures")
        return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_audit(config: RunConfig, out: Optional[str] = None, strict: bool = False) -> int:
    """Assumption audit of the configured system, written to audit.txt"""
    writer = ReportWriter(out or config.output.directory)
    lines = _config_echo(config)
    try:
        system = problem_service.build(config.problem)
        audit = problem_service.assumption_audit(system, config.output.audit_samples, T=config.solver.T,
                                                 seed=config.output.seed)
        embeddings = system.norms.embedding_report()
    except DinsysError as e:
        logger.error(f"audit failed: {e}")
        writer.write_audit(lines + [f"error: {e}"])
        return EXIT_RUN_FAILED

    lines.append(f"tau* = {stepper_service.estimate_tau_star(system)!r}, lambda = {system.convexity_defect!r}")
    lines += [f"embedding {name}: {value!r}" for name, value in embeddings.items()
              if np.isfinite(value)]
    warnings = [f"warning: {note}" for note in system.notes]
    failed = not audit.passed or (strict and bool(warnings))
    writer.write_audit(lines + warnings, audit=audit)
    return EXIT_CHECK_FAILED if failed else EXIT_OK
