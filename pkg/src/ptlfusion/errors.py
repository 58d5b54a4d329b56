"""Exception hierarchy shared across the package.

Grouping matters for the CLI's exit codes: ``UsageError`` maps to exit 1,
``DataError`` (and every file/format problem under it) to exit 2, anything
else escaping to exit 3.
"""


class PtlError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(PtlError):
    """Invalid arguments or option combinations."""


class ConfigError(PtlError, ValueError):
    """A configuration object violates its invariants."""


class DataError(PtlError):
    """Problems with input data: files, formats, datasets."""


class FormatError(DataError):
    """Malformed file content.

    ``where`` names the byte offset or line number of the defect so the
    message always points at a concrete location.
    """

    def __init__(self, path, message, where=None):
        self.path = path
        self.where = where
        loc = f" ({where})" if where else ""
        super().__init__(f"{path}: {message}{loc}")


class ModelFormatError(FormatError):
    """Serialized model payload is corrupt or truncated."""


class ModelVersionError(FormatError):
    """Serialized model uses an unsupported format version."""


class ClipTooShortError(DataError):
    """Audio clip shorter than the configured analysis window."""


class DatasetError(DataError):
    """Dataset-level inconsistency (missing labels, empty sets, bad split)."""


class CalibrationError(DataError):
    """Hue calibration produced unusable (overlapping or empty) ranges."""


class MissingDetectionError(DataError):
    """External detections file has no record for the requested frame id."""
