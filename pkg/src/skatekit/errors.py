"""Exception hierarchy shared by every stage.

Everything deriving from :class:`SkateKitError` is a validation failure
(CLI exit code 1). I/O problems are left as ``OSError`` (exit code 2).
"""

from __future__ import annotations


class SkateKitError(Exception):
    """Base class for all validation and configuration failures."""

    def to_dict(self) -> dict:
        return {"type": type(self).__name__, "message": str(self)}


class ParseError(SkateKitError):
    def __init__(self, message: str, line_number: int | None = None, source: str | None = None):
        self.line_number = line_number
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}"
        if line_number is not None:
            where += f":{line_number}" if where else f"line {line_number}"
        super().__init__(f"{where}: {message}" if where else message)

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["line"] = self.line_number
        return d


class RecordValidationError(SkateKitError):
    """A single well-formed record whose values break an invariant."""

    def __init__(self, message: str, line_number: int | None = None, video_id: str | None = None):
        self.line_number = line_number
        self.video_id = video_id
        prefix = f"line {line_number}: " if line_number is not None else ""
        super().__init__(prefix + message)

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["line"] = self.line_number
        d["video_id"] = self.video_id
        return d


class ConfigurationError(SkateKitError):
    pass


class UnsupportedConfiguration(ConfigurationError):
    pass


class NoDetections(SkateKitError):
    def __init__(self, video_id: str, message: str | None = None):
        self.video_id = video_id
        super().__init__(message or f"no usable detections for video {video_id!r}")

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["video_id"] = self.video_id
        return d


class InvalidFrame(SkateKitError):
    pass


class EmptyVideo(SkateKitError):
    pass


class FusionInputError(SkateKitError):
    """Missing or duplicated logits; ``problems`` holds one dict per offending entry."""

    def __init__(self, message: str, problems: list[dict] | None = None):
        self.problems = problems or []
        super().__init__(message)

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["problems"] = self.problems
        return d


class EvaluationError(SkateKitError):
    def __init__(self, message: str, video_ids: list[str] | None = None):
        self.video_ids = video_ids or []
        super().__init__(message)

    def to_dict(self) -> dict:
        d = super().to_dict()
        if self.video_ids:
            d["video_ids"] = self.video_ids
        return d
