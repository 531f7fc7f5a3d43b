"""Exception types shared across the pipeline.

Binary container parsing raises one of the FormatError subclasses so callers
(and the CLI exit-code mapping) can tell a malformed file apart from a missing
one. In-memory shape/precondition violations use plain ValueError.
"""


class SentiboostError(Exception):
    """Base class for recoverable pipeline errors."""


class FormatError(SentiboostError):
    """A byte stream or document does not conform to its declared format."""


class BadMagicError(FormatError):
    """Container does not start with the expected magic bytes."""


class UnsupportedVersionError(FormatError):
    """Container version is not one this build understands."""


class TruncatedPayloadError(FormatError):
    """Container ended before the declared payload was complete."""


class DuplicateNameError(FormatError):
    """Container declares the same entry name twice."""


class ArchitectureError(SentiboostError):
    """Weight store failed strict validation against the architecture manifest."""

    def __init__(self, report):
        self.report = report
        super().__init__(f"weight store failed architecture validation: {report.summary()}")
