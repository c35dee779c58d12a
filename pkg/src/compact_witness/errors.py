"""Exceptions raised by the library, each with a stable report code."""

from typing import Any, Optional

from .constants import EXIT_FAILURE, EXIT_INPUT_ERROR


class WitnessError(Exception):
    """Base class for all library errors."""

    code = "WitnessError"
    exit_code = EXIT_INPUT_ERROR


class EmptySetError(WitnessError):
    code = "EmptySet"


class IncompatibleModulusError(WitnessError):
    code = "IncompatibleModulus"


class GroundMismatchError(WitnessError):
    code = "GroundMismatch"


class OutOfRangeError(WitnessError):
    code = "OutOfRange"


class NotInBallError(WitnessError):
    code = "NotInBall"


class InvalidExponentError(WitnessError):
    code = "InvalidExponent"


class NotAnFPSError(WitnessError):
    code = "NotAnFPS"


class SpaceViolationError(WitnessError):
    code = "SpaceViolation"


class UnregisteredFactorError(WitnessError):
    code = "UnregisteredFactor"


class HorizonTooSmallError(WitnessError):
    code = "HorizonTooSmall"


class InvalidSelectionError(WitnessError):
    code = "InvalidSelection"


class ParseError(WitnessError):
    code = "ParseError"


class UnsatisfiableError(WitnessError):
    """The constraint system has empty intersection."""

    code = "Unsatisfiable"
    exit_code = EXIT_FAILURE

    def __init__(self, message: str, certificate: Optional[Any] = None):
        super().__init__(message)
        self.certificate = certificate
