"""Exception and warning types shared across the engine."""

from __future__ import annotations


class ToolMatchError(Exception):
    """Base class for all engine errors."""


class DegenerateDimension(UserWarning):
    """A dimension row has no tool with a positive score."""


class DimensionMismatch(ToolMatchError, ValueError):
    pass


class UnknownPeer(ToolMatchError, KeyError):
    pass


class DuplicateTool(ToolMatchError, ValueError):
    pass


class UnknownTool(ToolMatchError, KeyError):
    pass


class ParseError(ToolMatchError, ValueError):
    """Registry or config file could not be parsed.

    ``location`` names the offending line or field, e.g. ``"line 4"`` or
    ``"tools[2].scores"``.
    """

    def __init__(self, message: str, location: str | None = None):
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)


class SchemaMismatch(ToolMatchError, ValueError):
    pass


class WeightSumViolation(ToolMatchError, ValueError):
    pass


class RankingMismatch(ToolMatchError, ValueError):
    pass


class ArityMismatch(ToolMatchError, ValueError):
    pass


class NoSignal(ToolMatchError):
    """All candidate evaluations are equal, so no preference pair exists."""


class CandidateNotInSet(ToolMatchError, ValueError):
    pass


class InvalidSpec(ToolMatchError, ValueError):
    pass


class ShapeMismatch(ToolMatchError, ValueError):
    pass


class IoError(ToolMatchError, OSError):
    pass
