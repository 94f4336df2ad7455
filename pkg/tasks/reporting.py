import logging
import time
from datetime import datetime
from pathlib import Path

from pydantic import ValidationError

from config import settings
from database import record_run
from errors import ConfigInvalid, HslagError, TaskFailed
from geometry.lagrangian import save_snapshot
from schemas import ErrorInfo, ExperimentConfig, RunReport
from tasks.builders import overrides, read_structured
from tasks.router import dispatch
from utils.export import emit_plot_data, plain, write_json
from utils.hashing import report_hash, sha256_of

logger = logging.getLogger(__name__)


def parse_config(raw: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        first = exc.errors()[0]
        key = ".".join(str(part) for part in first["loc"])
        if first["type"] == "missing":
            message = f"missing key '{key}'"
        elif first["type"] == "extra_forbidden":
            message = f"unknown key '{key}'"
        else:
            message = f"invalid value at '{key}': {first['msg']}"
        raise ConfigInvalid(message, key=key, errors=len(exc.errors())) from exc


def output_directory(config: ExperimentConfig | None, config_hash: str, out_dir: Path | None) -> Path:
    if out_dir is not None:
        return Path(out_dir)
    if config is not None and config.output.directory:
        return Path(config.output.directory)
    task = config.task.value if config is not None else "invalid"
    return Path(settings.output_root) / f"{task}-{config_hash[:12]}"


def run(config_path: Path, out_dir: Path | None = None) -> tuple[RunReport, int]:
    """Validate, dispatch and record one experiment; returns the report and exit status."""
    started = datetime.utcnow()
    clock = time.perf_counter()
    raw: dict = {}
    config = None
    outcome = None
    error: HslagError | None = None
    try:
        raw = read_structured(Path(config_path))
        config = parse_config(raw)
        with overrides(config):
            outcome = dispatch(config)
    except HslagError as exc:
        error = exc
    except Exception as exc:
        logger.exception("task crashed")
        error = TaskFailed(f"{type(exc).__name__}: {exc}")
    config_hash = sha256_of(raw)
    if error is not None:
        logger.error("%s: %s", error.code, error.detail)
        exit_status = error.exit_code
    else:
        exit_status = 0 if outcome.verdict else 2
    results = plain(outcome.results) if outcome else {}
    tables = plain(outcome.tables) if outcome else {}
    report = RunReport(
        task=config.task.value if config else str(raw.get("task", "")),
        config=config.model_dump(mode="json") if config else plain(raw),
        config_hash=config_hash,
        tool_version=settings.tool_version,
        started_at=started,
        elapsed_seconds=time.perf_counter() - clock,
        verdict=outcome.verdict if outcome else None,
        exit_status=exit_status,
        results=results,
        tables=tables,
        error=ErrorInfo(**error.to_dict()) if error else None,
    )
    directory = output_directory(config, config_hash, out_dir)
    path = write_json({**report.model_dump(mode="json"), "report_hash": report_hash(results, tables)}, directory / "report.json")
    if outcome is not None:
        if config.output.csv:
            emit_plot_data(tables, directory)
        if config.output.snapshot:
            for name, immersion in outcome.immersions.items():
                save_snapshot(immersion, directory / "snapshots" / name)
    record_run(
        task=report.task or "unknown",
        config_hash=config_hash,
        report_hash=report_hash(results, tables),
        exit_status=exit_status,
        error_code=error.code if error else None,
        elapsed_seconds=report.elapsed_seconds,
        report_path=str(path.parent),
    )
    return report, exit_status
