"""Wheel-speed PID control and twist-to-wheel kinematics."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import SteerLimit


@dataclass
class PidParams:
    kp: float = 0.0
    ki: float = 0.0
    kd: float = 0.0
    i_clamp: float = 10.0   # N*m bound on the integral contribution source
    tau_max: float = 10.0   # N*m output bound

    def __post_init__(self):
        if min(self.kp, self.ki, self.kd) < 0.0:
            raise ValueError("gains must be >= 0")
        if self.tau_max <= 0.0:
            raise ValueError("tau_max must be > 0")


@dataclass(frozen=True)
class PidState:
    integral: float = 0.0
    prev_measured: float = 0.0
    primed: bool = False  # derivative undefined until one sample seen


def pid_step(state: PidState, setpoint: float, measured: float, dt: float,
             p: PidParams) -> tuple[float, PidState]:
    """One controller update.  Derivative acts on the measurement so
    setpoint steps do not kick the output; the integral freezes while
    the output is saturated in the direction of the error."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    error = setpoint - measured
    d_meas = (measured - state.prev_measured) / dt if state.primed else 0.0

    integral = state.integral + error * dt
    integral = max(-p.i_clamp, min(p.i_clamp, integral))
    tau_raw = p.kp * error + p.ki * integral - p.kd * d_meas
    tau = max(-p.tau_max, min(p.tau_max, tau_raw))
    if tau != tau_raw and error * tau_raw > 0.0:
        # anti-windup: keep the old integral, recompute the output
        integral = state.integral
        tau_raw = p.kp * error + p.ki * integral - p.kd * d_meas
        tau = max(-p.tau_max, min(p.tau_max, tau_raw))

    return tau, PidState(integral, measured, True)


@dataclass(frozen=True)
class Differential:
    """Left/right drive wheels on a common axle; left wheels at +y."""


@dataclass(frozen=True)
class Ackermann:
    """Car-like steering; the front (largest x) pair steers, all wheels
    drive.  The commanded twist refers to the rear axle midpoint."""

    wheelbase: float
    max_steer: float

    def __post_init__(self):
        if self.wheelbase <= 0.0:
            raise ValueError("wheelbase must be > 0")
        if not 0.0 < self.max_steer < math.pi / 2:
            raise ValueError("max_steer must be in (0, pi/2)")


def track_width(wheels) -> float:
    ys = [w.y for w in wheels]
    return max(ys) - min(ys)


def twist_to_setpoints(kinematics, v: float, omega: float, wheels):
    """Per-wheel (spin setpoint rad/s, steer angle rad) for a chassis
    twist.  Differential splits v/omega across the track; Ackermann
    uses the shared-turn-center geometry, scaling drive setpoints by
    each wheel's distance from the turn center."""
    if isinstance(kinematics, Differential):
        b = track_width(wheels)
        out = []
        for w in wheels:
            side = 1.0 if w.y > 0.0 else -1.0  # +y is the left side
            wheel_v = v - side * omega * b / 2.0
            out.append((wheel_v / w.radius, 0.0))
        return out

    if isinstance(kinematics, Ackermann):
        return _ackermann_setpoints(kinematics, v, omega, wheels)

    raise TypeError(f"unknown kinematics {type(kinematics).__name__}")


def _ackermann_setpoints(kin: Ackermann, v: float, omega: float, wheels):
    xs = [w.x for w in wheels]
    x_front = max(xs)
    x_rear = min(xs)
    wheelbase = x_front - x_rear

    if omega == 0.0:
        return [(v / w.radius, 0.0) for w in wheels]

    radius = v / omega  # signed distance from the rear axle line to the ICC
    out = []
    for w in wheels:
        is_front = abs(w.x - x_front) < abs(w.x - x_rear)
        lever = radius - w.y
        if is_front:
            if lever == 0.0:
                raise SteerLimit("turn center coincides with a steered wheel")
            steer = math.atan(wheelbase / lever)
            if abs(steer) > kin.max_steer:
                raise SteerLimit(
                    f"steer {steer:.3f} rad exceeds limit {kin.max_steer:.3f} rad")
        else:
            steer = 0.0
        # wheel-center velocity about the ICC, projected on the wheel axis
        arm_x = w.x - x_rear
        v_vec = (omega * lever, omega * arm_x)
        fwd = (math.cos(steer), math.sin(steer))
        wheel_v = v_vec[0] * fwd[0] + v_vec[1] * fwd[1]
        out.append((wheel_v / w.radius, steer))
    return out


__all__ = [
    "PidParams", "PidState", "pid_step",
    "Differential", "Ackermann", "twist_to_setpoints", "track_width",
]
