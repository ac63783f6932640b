"""Planar range scanner.

Rays are cast against polygon edges in the world plane.  A miss is
reported as max_range + 1, never clamped to the horizon, so consumers
can tell "wall at the limit" from "nothing there".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose2
from .rng import Rng

_EPS = 1e-12


@dataclass(frozen=True)
class LidarConfig:
    name: str
    x: float = 0.0            # mount pose in the vehicle frame
    y: float = 0.0
    yaw: float = 0.0
    fov: float = math.pi
    n_rays: int = 181
    max_range: float = 10.0
    rate_hz: float = 10.0
    noise_sigma: float = 0.0  # gaussian range noise, 0 disables
    topic: str = ""

    def __post_init__(self):
        if self.n_rays < 2:
            raise ValueError("n_rays must be >= 2")
        if not 0.0 < self.fov <= 2.0 * math.pi + 1e-12:
            raise ValueError("fov must be in (0, 2*pi]")
        if self.max_range <= 0.0:
            raise ValueError("max_range must be > 0")
        if self.rate_hz <= 0.0:
            raise ValueError("rate_hz must be > 0")

    @property
    def angle_min(self) -> float:
        return -0.5 * self.fov

    @property
    def angle_max(self) -> float:
        return 0.5 * self.fov

    @property
    def angle_increment(self) -> float:
        return self.fov / (self.n_rays - 1)


@dataclass
class LaserScan:
    stamp: float              # simulated seconds at capture
    pose: Pose2               # sensor pose in the world at capture
    angle_min: float
    angle_max: float
    max_range: float
    ranges: list = field(default_factory=list)

    @property
    def miss_value(self) -> float:
        return self.max_range + 1.0

    def to_dict(self) -> dict:
        return {
            "stamp": self.stamp,
            "pose": {"x": self.pose.x, "y": self.pose.y, "yaw": self.pose.yaw},
            "angle_min": self.angle_min,
            "angle_max": self.angle_max,
            "ranges": list(self.ranges),
        }


def polygon_segments(vertices):
    """Closed edge loop of a polygon as (start, end) pairs."""
    n = len(vertices)
    return [(vertices[i], vertices[(i + 1) % n]) for i in range(n)]


def raycast(origin, direction, segments, max_range: float):
    """Distance along one unit ray to the nearest edge, or None.

    Scalar reference path; scans use the vectorized sweep below.
    """
    ox, oy = origin
    dx, dy = direction
    best = None
    for (ax, ay), (bx, by) in segments:
        ex, ey = bx - ax, by - ay
        denom = dx * ey - dy * ex
        if abs(denom) < _EPS:
            continue
        rx, ry = ax - ox, ay - oy
        t = (rx * ey - ry * ex) / denom
        u = (rx * dy - ry * dx) / denom
        if t >= 0.0 and 0.0 <= u <= 1.0 and t <= max_range:
            if best is None or t < best:
                best = t
    return best


def sweep(origin, yaw0: float, config: LidarConfig, segments) -> np.ndarray:
    """All ray ranges for one scan pose, misses as max_range + 1."""
    n = config.n_rays
    angles = yaw0 + config.angle_min + config.angle_increment * np.arange(n)
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)   # (n, 2)
    out = np.full(n, config.max_range + 1.0)
    if len(segments) == 0:
        return out
    seg = np.asarray(segments, dtype=float)                     # (s, 2, 2)
    a = seg[:, 0, :]
    e = seg[:, 1, :] - a
    r = a - np.asarray(origin, dtype=float)                     # (s, 2)
    denom = dirs[:, 0:1] * e[:, 1] - dirs[:, 1:2] * e[:, 0]     # (n, s)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (r[:, 0] * e[:, 1] - r[:, 1] * e[:, 0]) / denom
        u = (r[:, 0] * dirs[:, 1:2] - r[:, 1] * dirs[:, 0:1]) / denom
    hit = (np.abs(denom) > _EPS) & (t >= 0.0) & (u >= 0.0) & (u <= 1.0) \
        & (t <= config.max_range)
    t = np.where(hit, t, np.inf)
    nearest = t.min(axis=1)
    return np.where(np.isfinite(nearest), nearest, out)


class LidarSensor:
    """Scan scheduling, pose handling, and noise for one mounted unit."""

    def __init__(self, config: LidarConfig, world_seed: int):
        self.config = config
        self.rng = Rng.for_sensor(world_seed, config.name)
        self.next_due = 0.0

    def due(self, t: float) -> bool:
        return t + 1e-12 >= self.next_due

    def sample(self, t: float, vehicle_pose: Pose2, segments) -> LaserScan:
        """Capture one scan and advance the schedule."""
        cfg = self.config
        ox, oy = vehicle_pose.transform((cfg.x, cfg.y))
        yaw0 = vehicle_pose.yaw + cfg.yaw
        ranges = sweep((ox, oy), yaw0, cfg, segments)
        if cfg.noise_sigma > 0.0:
            # one draw per ray regardless of hits keeps the stream
            # position independent of scene content
            noise = np.array([self.rng.gaussian(0.0, cfg.noise_sigma)
                              for _ in range(cfg.n_rays)])
            hit = ranges <= cfg.max_range
            noisy = np.clip(ranges + noise, _EPS, cfg.max_range)
            ranges = np.where(hit, noisy, ranges)
        self.next_due += 1.0 / cfg.rate_hz
        return LaserScan(stamp=t, pose=Pose2(ox, oy, yaw0),
                         angle_min=cfg.angle_min, angle_max=cfg.angle_max,
                         max_range=cfg.max_range,
                         ranges=[float(r) for r in ranges])
