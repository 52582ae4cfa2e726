"""Error types shared by every service in the sandbox.

Each error carries a stable machine-readable ``code`` plus the HTTP status
the bindings translate it to. In-process callers match on ``code``.
"""
from __future__ import annotations


class ServiceError(Exception):
    """Base class for all domain errors."""

    def __init__(self, code: str, message: str, http_status: int = 400):
        super().__init__(message)
        self.code = code
        self.http_status = http_status

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"{type(self).__name__}({self.code!r}, {str(self)!r}, {self.http_status})"


class ValidationError(ServiceError):
    """Bad input values. 400 by default, 422 for semantic API errors."""

    def __init__(self, code: str, message: str, http_status: int = 400):
        super().__init__(code, message, http_status)


class AuthError(ServiceError):
    """Missing or bad credentials (401) or an out-of-scope token (403)."""

    def __init__(self, code: str, message: str, http_status: int = 401):
        super().__init__(code, message, http_status)


class NotFoundError(ServiceError):
    """A referenced entity does not exist."""

    def __init__(self, code: str, message: str, http_status: int = 404):
        super().__init__(code, message, http_status)


class ConflictError(ServiceError):
    """State conflicts: duplicates, exhausted budgets, repeated selections."""

    def __init__(self, code: str, message: str, http_status: int = 409):
        super().__init__(code, message, http_status)
