"""Exception hierarchy shared across the simulator."""


class GroundSimError(Exception):
    """Base class for all simulator errors."""


class DegenerateGeometry(GroundSimError):
    """Geometric input is rank-deficient (collinear points, flat hull)."""


class UnsupportedLayout(GroundSimError):
    """Wheel layout cannot carry the chassis (load would be negative)."""


class SteerLimit(GroundSimError):
    """Commanded twist needs a steer angle beyond the vehicle limit."""


class IoFailure(GroundSimError):
    """A log sink or file write failed."""


class WorldFileError(GroundSimError):
    """Base for world-file problems. Carries file and line when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        super().__init__(message)

    def __str__(self):
        msg = super().__str__()
        if self.path is not None and self.line is not None:
            return f"{self.path}:{self.line}: {msg}"
        if self.path is not None:
            return f"{self.path}: {msg}"
        return msg


class IncludeCycle(WorldFileError):
    """Include depth exceeded or a file included itself transitively."""


class UndefinedVariable(WorldFileError):
    """${VAR} had no value in the environment and no default."""


class ExpressionError(WorldFileError):
    """$(expr) failed to parse or evaluate."""


class SchemaError(WorldFileError):
    """World XML violates the schema (element path in the message)."""


class ProtocolError(GroundSimError):
    """Malformed wire frame; the offending connection is closed."""


class BindFailure(GroundSimError):
    """Server could not bind its TCP or WebSocket port."""


class NotAdvertised(GroundSimError):
    """Publish on a topic this client never advertised."""


class NoSuchService(GroundSimError):
    """Service call to a name nobody registered."""


class CallTimeout(GroundSimError):
    """Service call got no reply within the deadline."""
