"""Exception hierarchy shared by every pipeline stage."""
from typing import Optional


class AcceleratorError(Exception):
    """Base class for all errors raised by search_accelerator."""


class MalformedRecord(AcceleratorError, ValueError):
    """An event log line could not be turned into a valid RawEvent."""

    def __init__(self, message, reason="invalid"):
        super().__init__(message)
        self.reason = reason


class EmptyAfterNormalization(AcceleratorError, ValueError):
    pass


class InvalidConfig(AcceleratorError, ValueError):
    pass


class EmptyProfile(AcceleratorError, ValueError):
    pass


class NotConverted(AcceleratorError, ValueError):
    pass


class EmptyJourney(AcceleratorError, ValueError):
    pass


class LLMTimeout(AcceleratorError, TimeoutError):
    """The LLM endpoint did not answer within the request deadline."""


class TransportError(AcceleratorError, ConnectionError):
    """The LLM endpoint stayed unreachable after all retries."""


class NonRetryableStatus(AcceleratorError):
    def __init__(self, status_code, body=""):
        super().__init__(f"LLM endpoint returned status {status_code}: {body[:200]}")
        self.status_code = status_code
        self.body = body


class UnparseableResponse(AcceleratorError, ValueError):
    pass


class SchemaViolation(AcceleratorError, ValueError):
    pass


class AllFiltered(AcceleratorError, ValueError):
    """No alternate survived the non-repetition constraints."""


class InvariantViolation(AcceleratorError, ValueError):
    pass


class CorruptSnapshot(AcceleratorError, ValueError):
    def __init__(self, line_number, message=""):
        super().__init__(f"corrupt snapshot line {line_number}: {message}")
        self.line_number = line_number


class ZeroBaseline(AcceleratorError, ZeroDivisionError):
    pass


class ConfigError(AcceleratorError):
    pass


class StageError(AcceleratorError):
    def __init__(self, stage, cause: Optional[BaseException] = None):
        message = f"stage '{stage}' failed"
        if cause is not None:
            message += f": {cause}"
        super().__init__(message)
        self.stage = stage
        self.cause = cause
