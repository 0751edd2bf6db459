"""Exception types shared across the package.

Every error carries a stable machine-readable ``code`` so the CLI and the
annotation service can emit structured diagnostics without string matching.
"""

from __future__ import annotations


class ReflectError(Exception):
    """Base class for all package errors."""

    code = "error"

    def __init__(self, message: str, **context):
        super().__init__(message)
        self.message = message
        self.context = context

    def to_json(self) -> dict:
        out = {"code": self.code, "message": self.message}
        if self.context:
            out["context"] = {k: v for k, v in self.context.items()}
        return out


# frame store ---------------------------------------------------------------

class NoFilesMatchedError(ReflectError):
    code = "no-files-matched"


class DimensionMismatchError(ReflectError):
    code = "dimension-mismatch"


class UndecodableFileError(ReflectError):
    code = "undecodable-file"


class IoFailureError(ReflectError):
    code = "io-failure"


# image ops -----------------------------------------------------------------

class InvalidThresholdsError(ReflectError):
    code = "invalid-thresholds"


class SingularHomographyError(ReflectError):
    code = "singular-homography"


class TooManyLevelsError(ReflectError):
    code = "too-many-levels"


# tracking ------------------------------------------------------------------

class TrackImmediatelyLostError(ReflectError):
    code = "track-immediately-lost"


# hint propagation ----------------------------------------------------------

class InsufficientTracksError(ReflectError):
    code = "insufficient-tracks"


class MissingLabelSeedsError(ReflectError):
    code = "missing-label-seeds"


class DisconnectedComponentError(ReflectError):
    code = "disconnected-unseeded-component"


class ConflictingScribblesError(ReflectError):
    code = "conflicting-scribbles"


class UnlabelableTrackError(ReflectError):
    code = "unlabelable-track"


# motion model --------------------------------------------------------------

class DegenerateConfigurationError(ReflectError):
    code = "degenerate-configuration"


class InsufficientCorrespondencesError(ReflectError):
    code = "insufficient-correspondences"


class MissingWarpError(ReflectError):
    code = "missing-warp"


# energy optimizer ----------------------------------------------------------

class DivergedError(ReflectError):
    code = "diverged"


# synthesis -----------------------------------------------------------------

class BaseTooSmallError(ReflectError):
    code = "base-too-small"


class FrameSmallerThanWindowError(ReflectError):
    code = "frame-smaller-than-window"


# generic validation --------------------------------------------------------

class InvalidArgumentError(ReflectError):
    code = "invalid-argument"
