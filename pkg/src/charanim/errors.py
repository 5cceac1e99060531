"""Exception types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for all charanim errors."""


class DimensionError(ToolkitError):
    """Mismatched or zero-sized image/grid dimensions."""


class ParameterError(ToolkitError):
    """Out-of-contract parameter value (bad thresholds, radii, ...)."""


class DegenerateMaskError(ToolkitError):
    """Mask has no usable foreground/background split."""


class EmptyMeshError(ToolkitError):
    """Operation requires a non-empty mesh."""


class SingularSystemError(ToolkitError):
    """Linear system has no unique solution (e.g. handle-free component)."""


class SeedingError(ToolkitError):
    """A mesh component lacks the seed data an operation needs."""


class KeypointError(ToolkitError):
    """A keypoint is missing or its view ray misses the mesh."""


class BvhParseError(ToolkitError):
    """Malformed BVH text. Carries the 1-based line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class StageError(ToolkitError):
    """Pipeline stage failure; names the stage and wraps the cause."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
