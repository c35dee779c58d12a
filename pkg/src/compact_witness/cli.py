"""Command-line interface for compact-witness."""

import logging
import sys
from pathlib import Path
from typing import Optional

import click
import yaml

from . import __version__
from .config import LOG_LEVELS, get_settings
from .job_service import dump_report, run_job_file
from .models import Job

logger = logging.getLogger(__name__)


def setup_logging(level: str):
    """Configure logging for the application; logs go to stderr, reports to stdout."""
    # Include module name only in DEBUG mode for cleaner logs
    log_level = getattr(logging, level)
    if log_level == logging.DEBUG:
        format_str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    else:
        format_str = "%(asctime)s - %(levelname)s - %(message)s"

    logging.basicConfig(
        level=log_level,
        format=format_str,
        handlers=[
            logging.StreamHandler(sys.stderr),
        ],
        force=True,
    )


@click.group()
@click.version_option(version=__version__)
def main():
    """Sequential and closed compactness witnesses over exact dyadic arithmetic."""
    pass


@main.command()
@click.option(
    "--job",
    "job_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    required=True,
    help="Job document (YAML or JSON)",
)
@click.option(
    "--out",
    "out_path",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="Write the report here instead of stdout",
)
@click.option(
    "--canonical",
    is_flag=True,
    help="Suppress side channels such as timing",
)
@click.option(
    "--log-level",
    type=click.Choice(LOG_LEVELS, case_sensitive=False),
    default=None,
    help="Logging level (default: from config)",
)
def run(job_path: Path, out_path: Optional[Path], canonical: bool, log_level: Optional[str]):
    """
    Run a job document and emit its report.

    Exit status: 0 on success, 1 on a mathematical failure
    (unsatisfiable, convergence failure, disagreement), 2 on input errors.
    """
    settings = get_settings()
    setup_logging((log_level or settings.log_level).upper())

    report = run_job_file(job_path, settings, canonical=canonical)
    text = dump_report(report)
    if out_path:
        out_path.write_text(text, encoding="utf-8")
        logger.info(f"[OK] Report written to {out_path}")
    else:
        click.echo(text, nl=False)
    sys.exit(report.exit_code)


@main.command()
def schema():
    """Print the JSON schema of the job document (as YAML)."""
    click.echo(yaml.safe_dump(Job.model_json_schema(), sort_keys=True), nl=False)


if __name__ == "__main__":
    main()
