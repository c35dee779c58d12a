"""Constants used throughout the application."""

from enum import Enum


class Command(str, Enum):
    """Job commands."""

    VALIDATE = "validate"
    EXTRACT = "extract"
    ENCODE = "encode"
    DECODE = "decode"
    HP_MAP = "hp-map"
    FIP_CHECK = "fip-check"
    FIP_SOLVE = "fip-solve"
    VERIFY = "verify"
    CROSS_CHECK = "cross-check"
    BATCH = "batch"


class WitnessMode(str, Enum):
    """How a witness result was obtained."""

    CERTIFIED = "certified"
    EMPIRICAL = "empirical"


class ReportStatus(str, Enum):
    """Outcome of a job."""

    OK = "ok"
    FAIL = "fail"
    ERROR = "error"


# Exit codes
EXIT_OK = 0
EXIT_FAILURE = 1  # unsatisfiable, convergence fail, disagreement
EXIT_INPUT_ERROR = 2

# Text encodings
INFINITY_TEXT = "inf"
FRESH_SEPARATOR = "#"
PATH_SEPARATOR = ":"

# Default values
DEFAULT_PRECISION_BITS = 24
DEFAULT_EPSILON_BITS = 10
DEFAULT_DEPTH = 100
DEFAULT_FRESH_PROBE = 20
DEFAULT_HORIZON = 50
DEFAULT_TOLERANCE_BITS = 10
DEFAULT_BATCH_WORKERS = 4
DEFAULT_BATCH_COUNT = 100
DEFAULT_GROUND = "X"
