"""Exception types shared across the package."""


class EngageOptError(Exception):
    """Base class for all package errors."""


class ParseError(EngageOptError):
    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class ValidationError(EngageOptError):
    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class ZeroBaselineCtr(EngageOptError):
    """Rule-based arm has zero CTR; lift ratio is undefined."""


class MissingArm(EngageOptError):
    """Aggregate lacks a rule or generated arm."""


class EmptyCandidate(EngageOptError):
    """Candidate subject is empty (or empty after postprocessing)."""


class EmptyPost(EngageOptError):
    """Post text is empty or whitespace-only."""


class SchemaMismatch(EngageOptError):
    """Model params were trained under a different feature schema version."""


class EmptyTrainingSet(EngageOptError):
    pass


class EmptyEvalSet(EngageOptError):
    pass


class EmptyCandidateSet(EngageOptError):
    pass


class NumericalError(EngageOptError):
    """Training produced a non-finite loss or gradient."""


class RemoteRejected(EngageOptError):
    """Remote endpoint returned a non-retryable client error."""

    def __init__(self, status: int, message: str = ""):
        super().__init__(f"remote rejected request with status {status}: {message}")
        self.status = status


class RetriesExhausted(EngageOptError):
    """All retry attempts against the remote endpoint failed."""

    def __init__(self, attempts: int, last_error: Exception | None = None):
        super().__init__(f"remote call failed after {attempts} attempts: {last_error}")
        self.attempts = attempts
        self.last_error = last_error


class AllCandidatesFailed(EngageOptError):
    """Every candidate generation attempt for a post failed."""
