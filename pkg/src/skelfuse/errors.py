"""Exception types shared across the package."""


class SkelfuseError(Exception):
    """Base class for all package errors."""


class TopologyError(SkelfuseError):
    """Unknown joint/limb/segment or an inconsistent skeleton definition."""


class DegenerateLimbError(SkelfuseError):
    """A geometric operation hit a zero-length limb vector."""


class ConfigError(SkelfuseError):
    """Invalid or unparseable configuration."""


class StreamFormatError(SkelfuseError):
    """A landmark stream record violates the format contract."""

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class ScriptError(SkelfuseError):
    """A synthetic motion script produced an invalid configuration."""


class FrameError(SkelfuseError):
    """A frame could not be processed and has no usable fallback."""
