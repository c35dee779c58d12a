"""Job and report documents."""

from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field

from .constants import Command, ReportStatus, WitnessMode
from .core import DyadicRational


class JobParameters(BaseModel):
    """Optional knobs; unset values fall back to the configuration."""

    model_config = ConfigDict(extra="forbid")

    precision: Optional[int] = Field(None, ge=1)  # bits
    depth: Optional[int] = Field(None, ge=1)
    epsilon: Optional[DyadicRational] = None
    coords: Optional[list[str]] = None
    horizon: Optional[int] = Field(None, ge=0)
    seed: Optional[int] = None
    count: Optional[int] = Field(None, ge=0)
    p: Optional[str] = None
    up_to: Optional[int] = Field(None, ge=0)
    mode: WitnessMode = WitnessMode.CERTIFIED
    signed: bool = False


class Job(BaseModel):
    """A single self-describing job; `batch` jobs carry their children in `jobs`."""

    model_config = ConfigDict(extra="forbid")

    command: Command
    input: Any = None
    parameters: JobParameters = Field(default_factory=JobParameters)
    jobs: list["Job"] = Field(default_factory=list)


class ErrorInfo(BaseModel):
    code: str
    message: str


class Report(BaseModel):
    """Result of running a job."""

    command: Optional[Command] = None  # unset when the document does not parse
    status: ReportStatus
    exit_code: int = 0
    result: Any = None
    error: Optional[ErrorInfo] = None
    reports: list["Report"] = Field(default_factory=list)
