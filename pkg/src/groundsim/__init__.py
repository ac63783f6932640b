"""Multi-vehicle 2.5D ground robot simulator.

Rigid chassis bodies move in the plane; each wheel gets its own
friction resolution against the motor torque every tick, so slip,
odometry drift, and terrain attitude come out of the dynamics instead
of being scripted.  A socket broker exposes topics and services for
external tools.
"""

__version__ = "0.1.0"

from .errors import GroundSimError, WorldFileError  # noqa: F401
from .geometry import Pose2, Pose3, wrap_pi  # noqa: F401
