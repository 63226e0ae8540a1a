"""Exception hierarchy shared by all toolkit modules."""


class ToolkitError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(ToolkitError):
    """Invalid or inconsistent run configuration."""


class ValidationError(ToolkitError, ValueError):
    """An input value violates a documented precondition or invariant."""


class FormatError(ToolkitError, ValueError):
    """A file does not conform to its declared format.

    ``location`` names where the problem was detected: a byte offset for
    binary files, a line number for JSON-lines files, or a JSON path.
    """

    def __init__(self, message: str, location: str | int | None = None):
        if location is not None:
            message = f"{message} (at {location})"
        super().__init__(message)
        self.location = location


class BackendError(ToolkitError, RuntimeError):
    """An embedding backend failed (missing model file, inference error)."""


class StageError(ToolkitError, RuntimeError):
    """A pipeline stage failed; carries the stage name and image context."""

    def __init__(self, stage: str, message: str, image_id: str | None = None):
        ctx = f"stage '{stage}'" + (f", image '{image_id}'" if image_id else "")
        super().__init__(f"{ctx}: {message}")
        self.stage = stage
        self.image_id = image_id
