"""Exception hierarchy shared across the package."""

from __future__ import annotations


class DebateBenchError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(DebateBenchError, ValueError):
    """Invalid configuration, topic file, roster or template set."""


# prompt kit

class TemplateError(ConfigError):
    pass


class IncompatibleStage(DebateBenchError, ValueError):
    pass


class PerspectiveMismatch(DebateBenchError, ValueError):
    pass


class IncompleteTranscript(DebateBenchError, ValueError):
    pass


# gateway

class GatewayError(DebateBenchError):
    """A completion request failed. ``kind`` names the retry class."""

    kind = "error"


class GatewayTimeout(GatewayError):
    kind = "timeout"


class RateLimited(GatewayError):
    kind = "rate_limit"


class EndpointError(GatewayError):
    def __init__(self, message: str, status: int | None = None, kind: str | None = None):
        super().__init__(message)
        self.status = status
        if kind is not None:
            self.kind = kind
        elif status is not None and status >= 500:
            self.kind = "server_error"
        elif status is not None:
            self.kind = "client_error"


class EmptyCompletion(GatewayError):
    kind = "empty"


class ScriptMiss(GatewayError):
    kind = "script_miss"


class DuplicateFingerprint(DebateBenchError, ValueError):
    pass


class UnknownModel(ConfigError):
    pass


# debate engine

class TurnFailed(DebateBenchError):
    def __init__(self, index: int, cause: BaseException):
        super().__init__(f"turn {index} failed: {type(cause).__name__}: {cause}")
        self.index = index
        self.cause = cause


# judge

class StrictParseError(DebateBenchError, ValueError):
    def __init__(self, reason: str, position: int | None = None):
        where = f" at offset {position}" if position is not None else ""
        super().__init__(f"{reason}{where}")
        self.reason = reason
        self.position = position


class LenientParseError(DebateBenchError, ValueError):
    pass


class JudgeCallFailed(DebateBenchError):
    def __init__(self, cause: BaseException):
        super().__init__(f"judge call failed: {type(cause).__name__}: {cause}")
        self.cause = cause


class VerdictUnrecoverable(DebateBenchError):
    def __init__(self, raw_reply: str, reason: str = "no verdict found"):
        super().__init__(reason)
        self.raw_reply = raw_reply
        self.reason = reason


# tournament

class EmptyRoster(ConfigError):
    pass


class EmptyTopics(ConfigError):
    pass


class MissingVerdict(DebateBenchError, ValueError):
    pass


class DuplicateTopic(DebateBenchError, ValueError):
    pass


class MissingTopic(DebateBenchError, ValueError):
    pass


class IncompleteSeriesSet(DebateBenchError, ValueError):
    pass


class DuplicateSeries(DebateBenchError, ValueError):
    pass


# run store

class StorageFailure(DebateBenchError, OSError):
    pass


class DuplicateId(DebateBenchError, ValueError):
    pass


class ManifestMismatch(DebateBenchError):
    pass
