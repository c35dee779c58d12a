"""Job service logic: parse job documents, dispatch to the library, build reports."""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable

import yaml
from pydantic import BaseModel, ValidationError
from pydantic_yaml import parse_yaml_raw_as, to_yaml_str

from .closecompact import FIPProblem, fip_check, fip_solve
from .codec import BitLevelFamily, decode, encode_b1plus, h_p
from .config import Settings
from .constants import EXIT_FAILURE, EXIT_INPUT_ERROR, EXIT_OK, Command, ReportStatus, WitnessMode
from .core import FiniteSupportVector, two_to_minus
from .errors import ParseError, UnsatisfiableError, WitnessError
from .models import ErrorInfo, Job, Report
from .streams import FPS, BlackBoxStream, fps_validate
from .verify import check_convergence, cross_check, cross_check_batch, mentioned_coordinates
from .witnesses import extract

logger = logging.getLogger(__name__)


def load_job(text: str) -> Job:
    """Parse a YAML (or JSON) job document."""
    try:
        return parse_yaml_raw_as(Job, text)
    except (ValidationError, yaml.YAMLError, ValueError) as e:
        raise ParseError(f"invalid job document: {e}") from e


def dump_report(report: Report) -> str:
    return to_yaml_str(report)


def _document(value: Any) -> Any:
    if isinstance(value, BaseModel):
        return value.model_dump(mode="json", by_alias=True)
    return value


def _parse(model: type, data: Any, what: str) -> Any:
    try:
        return model.model_validate(data)
    except ValidationError as e:
        raise ParseError(f"invalid {what}: {e.errors()[0]['msg']}") from e


def _ok(job: Job, result: Any, passed: bool = True) -> Report:
    return Report(
        command=job.command,
        status=ReportStatus.OK if passed else ReportStatus.FAIL,
        exit_code=EXIT_OK if passed else EXIT_FAILURE,
        result=_document(result),
    )


def _validate(job: Job, settings: Settings) -> Report:
    s = _parse(FPS, job.input, "stream")
    report = fps_validate(s, job.parameters.precision or settings.config.precision.bits)
    return _ok(job, report, passed=report.ok)


def _extract(job: Job, settings: Settings) -> Report:
    s = _parse(FPS, job.input, "stream")
    params = job.parameters
    if params.mode == WitnessMode.EMPIRICAL:
        empirical = settings.config.empirical
        horizon = params.horizon if params.horizon is not None else empirical.horizon
        witness = extract(
            BlackBoxStream.from_fps(s),
            WitnessMode.EMPIRICAL,
            horizon=horizon,
            tolerance=two_to_minus(empirical.tolerance_bits),
        )
    else:
        witness = extract(s)
    return _ok(job, witness)


def _encode(job: Job, settings: Settings) -> Report:
    v = _parse(FiniteSupportVector, job.input, "vector")
    return _ok(job, encode_b1plus(v))


def _decode(job: Job, settings: Settings) -> Report:
    family = _parse(BitLevelFamily, job.input, "level family")
    return _ok(job, decode(family, job.parameters.up_to))


def _hp_map(job: Job, settings: Settings) -> Report:
    if job.parameters.p is None:
        raise ParseError("hp-map needs the parameter p")
    v = _parse(FiniteSupportVector, job.input, "vector")
    precision = job.parameters.precision or settings.config.precision.bits
    return _ok(job, h_p(v, job.parameters.p, precision))


def _fip_check(job: Job, settings: Settings) -> Report:
    result = fip_check(_parse(FIPProblem, job.input, "FIP problem"))
    return _ok(job, result, passed=result.satisfiable)


def _fip_solve(job: Job, settings: Settings) -> Report:
    return _ok(job, fip_solve(_parse(FIPProblem, job.input, "FIP problem")))


def _verify(job: Job, settings: Settings) -> Report:
    s = _parse(FPS, job.input, "stream")
    params, defaults = job.parameters, settings.config.verify
    epsilon = params.epsilon or two_to_minus(defaults.epsilon_bits)
    coords = params.coords or mentioned_coordinates(s, defaults.fresh_probe)
    witness = extract(s)
    report = check_convergence(s, witness, coords, epsilon, params.depth or defaults.depth)
    return _ok(
        job,
        {"witness": _document(witness), "convergence": _document(report)},
        passed=report.passed,
    )


def _cross_check(job: Job, settings: Settings) -> Report:
    if job.input is None:
        params, defaults = job.parameters, settings.config.batch
        seed = params.seed if params.seed is not None else defaults.seed
        count = params.count if params.count is not None else defaults.count
        batch = cross_check_batch(seed, count, params.signed)
        return _ok(job, batch, passed=batch.agreed == batch.count)
    report = cross_check(_parse(FPS, job.input, "stream"))
    return _ok(job, report, passed=report.agree)


def _batch(job: Job, settings: Settings) -> Report:
    workers = settings.config.batch.workers
    with ThreadPoolExecutor(max_workers=workers) as executor:
        reports = list(executor.map(lambda child: run_job(child, settings), job.jobs))
    exit_code = max((report.exit_code for report in reports), default=EXIT_OK)
    return Report(
        command=job.command,
        status=ReportStatus.OK if exit_code == EXIT_OK else ReportStatus.FAIL,
        exit_code=exit_code,
        reports=reports,
    )


HANDLERS: dict[Command, Callable[[Job, Settings], Report]] = {
    Command.VALIDATE: _validate,
    Command.EXTRACT: _extract,
    Command.ENCODE: _encode,
    Command.DECODE: _decode,
    Command.HP_MAP: _hp_map,
    Command.FIP_CHECK: _fip_check,
    Command.FIP_SOLVE: _fip_solve,
    Command.VERIFY: _verify,
    Command.CROSS_CHECK: _cross_check,
    Command.BATCH: _batch,
}


def run_job(job: Job, settings: Settings) -> Report:
    """Run one job; library errors become structured report entries."""
    try:
        return HANDLERS[job.command](job, settings)
    except UnsatisfiableError as e:
        logger.info(f"[INFO] {job.command.value}: unsatisfiable")
        certificate = [_document(item) for item in (e.certificate or [])]
        return Report(
            command=job.command,
            status=ReportStatus.FAIL,
            exit_code=e.exit_code,
            result={"certificate": certificate},
            error=ErrorInfo(code=e.code, message=str(e)),
        )
    except WitnessError as e:
        logger.error(f"[ERROR] {job.command.value} failed: {e.code}: {e}")
        return Report(
            command=job.command,
            status=ReportStatus.ERROR,
            exit_code=e.exit_code,
            error=ErrorInfo(code=e.code, message=str(e)),
        )
    except Exception:
        logger.exception(f"{job.command.value} failed with an unexpected error")
        raise


def run_job_file(path: Path, settings: Settings, canonical: bool = False) -> Report:
    """Load and run a job file; a document that does not parse yields an error report."""
    started = time.perf_counter()
    try:
        job = load_job(Path(path).read_text(encoding="utf-8"))
    except ParseError as e:
        logger.error(f"[ERROR] {e}")
        return Report(
            status=ReportStatus.ERROR,
            exit_code=EXIT_INPUT_ERROR,
            error=ErrorInfo(code=e.code, message=str(e)),
        )
    report = run_job(job, settings)
    if not canonical:
        logger.info(f"[INFO] {job.command.value} finished in {time.perf_counter() - started:.3f}s")
    return report
