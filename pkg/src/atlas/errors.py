"""Shared error types. Every error carries one of the API error codes so the
service layer and the CLI can map failures uniformly."""

from __future__ import annotations

# code -> CLI exit code
EXIT_CODES = {
    "refused": 2,
    "not-found": 3,
    "backend-failure": 4,
    "bad-request": 5,
    "conflict": 6,
}


class AtlasError(Exception):
    code = "bad-request"

    def __init__(self, message: str, stage: str | None = None):
        super().__init__(message)
        self.message = message
        self.stage = stage

    def to_document(self) -> dict:
        doc = {"code": self.code, "message": self.message}
        if self.stage is not None:
            doc["stage"] = self.stage
        return doc


class RefusedError(AtlasError):
    """Query rejected by the anti-profiling screen; message is the reason."""

    code = "refused"


class NotFoundError(AtlasError):
    code = "not-found"


class BackendError(AtlasError):
    """Remote model call failed after retries. ``stage`` names the pipeline
    stage, ``attempts`` how many tries were made."""

    code = "backend-failure"

    def __init__(self, message: str, stage: str | None = None, attempts: int = 1):
        super().__init__(message, stage=stage)
        self.attempts = attempts


class BadRequestError(AtlasError):
    code = "bad-request"


class ConflictError(AtlasError):
    code = "conflict"
