"""Vehicle assembly and the per-tick hooks around the physics step.

pre-step: weight distribution, motor control from odometric wheel
rates, per-wheel friction resolution, force application to the chassis.
post-step: sensor processing, wheel spin integration, dead-reckoned
odometry (so slip corrupts it), terrain attitude, CSV logging.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .control import (Ackermann, Differential, PidParams, PidState, pid_step,
                      track_width, twist_to_setpoints)
from .errors import IoFailure
from .friction import FrictionParams, friction_step, weight_on_wheels
from .geometry import Pose2, euler_zyx, horn_fit, rotate_z, wrap_pi
from .physics2d import RigidBody2D


def wheel_center_velocity(v, omega: float, mount_xy):
    """Velocity of a wheel center from the chassis twist: the planar
    form of v + omega x r, all in one consistent frame."""
    return (v[0] - omega * mount_xy[1], v[1] + omega * mount_xy[0])


@dataclass
class Wheel:
    """One wheel: mount pose in the vehicle frame plus spin state."""

    x: float = 0.0
    y: float = 0.0
    steer: float = 0.0        # rad, set by the controller for steered wheels
    radius: float = 0.2
    width: float = 0.05
    mass: float = 1.0
    iy: float = 0.02          # kg*m^2 about the spin axis
    phi: float = 0.0          # rad, spin angle, wrapped to (-pi, pi]
    omega: float = 0.0        # rad/s spin rate
    tau_m: float = 0.0        # N*m motor torque, written each tick

    # last friction outcome, for logging and spin integration
    omega_dot: float = 0.0
    fx: float = 0.0
    fy: float = 0.0
    load: float = 0.0
    slipped_lat: bool = False
    slipped_long: bool = False

    def __post_init__(self):
        if self.radius <= 0.0:
            raise ValueError("wheel radius must be > 0")
        if self.iy <= 0.0:
            raise ValueError("wheel spin inertia must be > 0")
        self.phi = wrap_pi(self.phi)


class VehicleModel:
    """Chassis body, wheels, controller, and estimator state."""

    def __init__(self, name: str, body: RigidBody2D, wheels, kinematics,
                 controller: PidParams, friction: FrictionParams,
                 logger: "CsvLogger | None" = None):
        if len(wheels) < 2:
            raise ValueError("a vehicle needs at least 2 wheels")
        if isinstance(kinematics, Differential):
            if not any(w.y > 0.0 for w in wheels) or not any(w.y < 0.0 for w in wheels):
                raise ValueError("differential drive needs wheels on both sides")
        elif isinstance(kinematics, Ackermann):
            if len(wheels) < 4:
                raise ValueError("ackermann needs at least 4 wheels")
        self.name = name
        self.body = body
        self.wheels = list(wheels)
        self.kinematics = kinematics
        self.controller = controller
        self.friction = friction
        self.logger = logger
        self.pid_states = [PidState() for _ in self.wheels]
        self.target_v = 0.0
        self.target_omega = 0.0
        self.odom = Pose2()
        self.attitude = (0.0, 0.0, 0.0)  # z, pitch, roll
        self._loads = None

    def set_twist(self, v: float, omega: float) -> None:
        self.target_v = v
        self.target_omega = omega

    def teleport(self, x: float, y: float, yaw: float) -> None:
        self.body.pose = Pose2(x, y, yaw)
        self.body.vx = self.body.vy = self.body.omega = 0.0
        for w in self.wheels:
            w.omega = 0.0

    def loads(self, g: float):
        # layout and masses are fixed, so the distribution is too
        if self._loads is None:
            self._loads = weight_on_wheels(self, g)
        return self._loads

    def odometry_wheels(self):
        """(left, right) wheel groups used for dead reckoning: all
        wheels for differential, the rear axle for ackermann."""
        wheels = self.wheels
        if isinstance(self.kinematics, Ackermann):
            x_rear = min(w.x for w in wheels)
            wheels = [w for w in wheels if abs(w.x - x_rear) < 1e-9]
        left = [w for w in wheels if w.y > 0.0]
        right = [w for w in wheels if w.y <= 0.0]
        return left, right

    def forward_speed(self) -> float:
        v_local = rotate_z((self.body.vx, self.body.vy), -self.body.pose.yaw)
        return v_local[0]


def invoke_motor_controllers(vehicle: VehicleModel, dt: float):
    """Wheel torques for the current twist setpoint.  The measured rate
    fed back is each wheel's own spin from the previous tick, the same
    odometric quantity the estimator sees."""
    setpoints = twist_to_setpoints(vehicle.kinematics, vehicle.target_v,
                                   vehicle.target_omega, vehicle.wheels)
    torques = []
    for i, (w, (spin_sp, steer)) in enumerate(zip(vehicle.wheels, setpoints)):
        w.steer = steer
        tau, vehicle.pid_states[i] = pid_step(
            vehicle.pid_states[i], spin_sp, w.omega, dt, vehicle.controller)
        w.tau_m = tau
        torques.append(tau)
    return torques


def pre_timestep(world, dt: float) -> None:
    """Wheel friction forces onto every chassis, before the physics step."""
    g = world.gravity
    for vehicle in world.vehicles:
        loads = vehicle.loads(g)
        invoke_motor_controllers(vehicle, dt)
        body = vehicle.body
        v_veh = rotate_z((body.vx, body.vy), -body.pose.yaw)
        for wheel, load in zip(vehicle.wheels, loads):
            v_w = wheel_center_velocity(v_veh, body.omega, (wheel.x, wheel.y))
            v_local = rotate_z(v_w, -wheel.steer)
            out = friction_step(v_local, wheel, load, vehicle.friction, dt, g)
            force_veh = rotate_z((out.fx, out.fy), wheel.steer)
            body.apply_force_at(force_veh, (wheel.x, wheel.y))
            wheel.omega_dot = out.omega_dot
            wheel.fx = out.fx
            wheel.fy = out.fy
            wheel.load = load
            wheel.slipped_lat = out.slipped_lat
            wheel.slipped_long = out.slipped_long


def post_timestep(world, dt: float) -> None:
    """Sensors, wheel spin integration, odometry, attitude, logging."""
    process_sensors = getattr(world, "process_sensors", None)
    elevation_fn = getattr(world, "elevation_fn", None)
    t = getattr(world, "t", 0.0)
    for vehicle in world.vehicles:
        if process_sensors is not None:
            process_sensors(vehicle)
        increments = {}
        for w in vehicle.wheels:
            w.omega += w.omega_dot * dt
            d_phi = w.omega * dt
            w.phi = wrap_pi(w.phi + d_phi)
            increments[id(w)] = d_phi
        _update_odometry(vehicle, increments)
        if elevation_fn is not None and len(vehicle.wheels) >= 3:
            _update_attitude(vehicle, elevation_fn)
        if vehicle.logger is not None:
            vehicle.logger.log(vehicle, t)


def _update_odometry(vehicle: VehicleModel, increments) -> None:
    left, right = vehicle.odometry_wheels()
    if not left or not right:
        return
    ds_l = sum(w.radius * increments[id(w)] for w in left) / len(left)
    ds_r = sum(w.radius * increments[id(w)] for w in right) / len(right)
    base = track_width(left + right)
    if base <= 0.0:
        return
    ds = 0.5 * (ds_l + ds_r)
    # left wheels sit at +y, so a faster right side turns the nose left
    d_yaw = (ds_r - ds_l) / base
    odom = vehicle.odom
    mid = odom.yaw + 0.5 * d_yaw
    odom.x += ds * math.cos(mid)
    odom.y += ds * math.sin(mid)
    odom.yaw = wrap_pi(odom.yaw + d_yaw)


def _update_attitude(vehicle: VehicleModel, elevation_fn) -> None:
    pose = vehicle.body.pose
    pairs = []
    for w in vehicle.wheels:
        wx, wy = pose.transform((w.x, w.y))
        pairs.append(((w.x, w.y, 0.0), (wx, wy, elevation_fn(wx, wy))))
    fit, _residual = horn_fit(pairs)
    _yaw, pitch, roll = euler_zyx(fit.q)
    vehicle.attitude = (fit.t[2], pitch, roll)


# --- CSV physics logging ----------------------------------------------------

_WHEEL_FIELDS = ("omega", "phi", "tau", "fx", "fy", "load", "slip_lat", "slip_long")


def csv_header(n_wheels: int) -> str:
    cols = ["t", "x", "y", "yaw", "z", "pitch", "roll", "v", "omega"]
    for i in range(n_wheels):
        cols.extend(f"w{i}_{name}" for name in _WHEEL_FIELDS)
    return ",".join(cols)


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def csv_log_row(vehicle: VehicleModel, t: float) -> str:
    """One log row: time, pose, attitude, twist, then per-wheel state."""
    body = vehicle.body
    z, pitch, roll = vehicle.attitude
    cols = [_fmt(t), _fmt(body.pose.x), _fmt(body.pose.y), _fmt(body.pose.yaw),
            _fmt(z), _fmt(pitch), _fmt(roll),
            _fmt(vehicle.forward_speed()), _fmt(body.omega)]
    for w in vehicle.wheels:
        cols.extend((_fmt(w.omega), _fmt(w.phi), _fmt(w.tau_m), _fmt(w.fx),
                     _fmt(w.fy), _fmt(w.load),
                     "1" if w.slipped_lat else "0",
                     "1" if w.slipped_long else "0"))
    return ",".join(cols)


class CsvLogger:
    """Buffered CSV sink, header written before the first row."""

    def __init__(self, path):
        self.path = path
        self._fh = None

    def log(self, vehicle: VehicleModel, t: float) -> None:
        try:
            if self._fh is None:
                self._fh = open(self.path, "w", encoding="utf-8", newline="")
                self._fh.write(csv_header(len(vehicle.wheels)) + "\n")
            self._fh.write(csv_log_row(vehicle, t) + "\n")
        except OSError as exc:
            raise IoFailure(f"cannot write physics log {self.path}: {exc}") from exc

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None
