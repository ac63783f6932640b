"""Per-wheel friction force resolution and chassis weight distribution.

The friction solver works one wheel at a time in the wheel's local
frame (x forward along the rolling direction, y lateral).  It follows
the two-step saturation scheme: solve the no-slip equilibrium first,
then clamp to the dry-friction bound F_max = mu * load and re-solve the
spin acceleration if the bound was hit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedLayout


@dataclass
class RollingParams:
    """Smoothed Coulomb plus viscous rolling-resistance coefficients."""

    r1: float = 0.01      # dimensionless, tanh-smoothed Coulomb term
    r2: float = 0.001     # s/m, viscous term
    v_alpha: float = 0.1  # m/s, tanh transition speed

    def __post_init__(self):
        if self.r1 < 0.0 or self.r2 < 0.0:
            raise ValueError("rolling coefficients must be >= 0")
        if self.v_alpha <= 0.0:
            raise ValueError("v_alpha must be > 0")


@dataclass
class FrictionParams:
    mu: float = 1.0               # dry friction coefficient
    c_damping: float = 0.0        # N*m*s/rad, spin-proportional torque loss
    rolling: RollingParams | None = None

    def __post_init__(self):
        if self.mu < 0.0:
            raise ValueError("mu must be >= 0")
        if self.c_damping < 0.0:
            raise ValueError("c_damping must be >= 0")


@dataclass
class FrictionOutcome:
    """Forces on the chassis (wheel frame) and the wheel spin response."""

    fx: float
    fy: float
    omega_dot: float
    slipped_long: bool
    slipped_lat: bool


def rolling_resistance(v_x: float, load: float, p: RollingParams) -> float:
    """Longitudinal rolling drag, odd in v_x, opposing motion."""
    return -load * (p.r1 * math.tanh(v_x / p.v_alpha) + p.r2 * v_x)


def friction_step(v_local, wheel, load: float, params: FrictionParams,
                  dt: float, g: float) -> FrictionOutcome:
    """Resolve one wheel's ground reaction for one time step.

    v_local is the wheel-frame velocity of the wheel center; wheel
    supplies radius, spin inertia, spin rate and motor torque; load is
    the vertical force carried by this wheel.

    Lateral: the force that would null v_y in one step, clamped to
    +-F_max.  Longitudinal: the torque/force equilibrium about the
    wheel axis under rolling-without-sliding, clamped to +-F_max with
    the spin acceleration re-solved when the clamp engages.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if load < 0.0:
        raise ValueError("load must be >= 0")

    v_x, v_y = v_local
    r = wheel.radius
    f_max = params.mu * load

    fy_raw = -(v_y / dt) * (load / g)
    fy = max(-f_max, min(f_max, fy_raw))
    slipped_lat = fy != fy_raw

    tau = wheel.tau_m - params.c_damping * wheel.omega
    f_roll = rolling_resistance(v_x, load, params.rolling) if params.rolling else 0.0

    omega_target = v_x / r
    omega_dot_free = (omega_target - wheel.omega) / dt
    fx_raw = (tau - omega_dot_free * wheel.iy + r * f_roll) / r

    if fx_raw > f_max or fx_raw < -f_max:
        fx = f_max if fx_raw > f_max else -f_max
        omega_dot = (tau + r * f_roll - r * fx) / wheel.iy
        slipped_long = True
    else:
        fx = fx_raw
        omega_dot = omega_dot_free
        slipped_long = False

    return FrictionOutcome(fx, fy, omega_dot, slipped_long, slipped_lat)


def distribute_loads(com, wheel_positions, chassis_weight: float):
    """Chassis weight per wheel: minimum-norm solution of the force and
    two moment balances about the center of mass.

    Positions and com are in the vehicle frame.  Two wheels get the
    lever rule along their axle; the perpendicular moment is carried by
    an implicit caster.  Raises UnsupportedLayout when any wheel would
    be unloaded below zero.
    """
    n = len(wheel_positions)
    if n < 2:
        raise UnsupportedLayout("need at least 2 wheels")

    if n == 2:
        (x1, y1), (x2, y2) = wheel_positions
        dx, dy = x2 - x1, y2 - y1
        span2 = dx * dx + dy * dy
        if span2 == 0.0:
            raise UnsupportedLayout("coincident wheel positions")
        alpha = ((com[0] - x1) * dx + (com[1] - y1) * dy) / span2
        loads = [(1.0 - alpha) * chassis_weight, alpha * chassis_weight]
    else:
        a = np.ones((3, n))
        for i, (x, y) in enumerate(wheel_positions):
            a[1, i] = x - com[0]
            a[2, i] = y - com[1]
        b = np.array([chassis_weight, 0.0, 0.0])
        loads = (np.linalg.pinv(a) @ b).tolist()

    if min(loads) < -1e-9 * max(chassis_weight, 1.0):
        raise UnsupportedLayout(
            "center of mass lies outside the wheel support polygon")
    return [max(w, 0.0) for w in loads]


def weight_on_wheels(vehicle, g: float):
    """Vertical load per wheel: the chassis share from the moment
    balance plus each wheel's own weight."""
    positions = [(w.x, w.y) for w in vehicle.wheels]
    com = vehicle.body.com_local
    chassis_weight = vehicle.body.mass * g
    loads = distribute_loads(com, positions, chassis_weight)
    return [load + w.mass * g for load, w in zip(loads, vehicle.wheels)]
