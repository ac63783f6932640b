"""Fixed-step simulation loop wired to the comms layer.

Tick order: drain service commands, wheel forces, collision detect and
resolve, integrate, advance the clock, sensors and estimators, logs,
topic publishing.  All mutation happens on the loop's thread; service
handlers hand work over through a command queue and wait.
"""

from __future__ import annotations

import json
import os
import threading
import time
from collections import deque
from dataclasses import replace
from functools import partial

import numpy as np

from .control import Ackermann, Differential
from .errors import GroundSimError
from .lidar import LidarSensor, polygon_segments
from .physics2d import RigidBody2D, detect, resolve, step
from .vehicle import CsvLogger, VehicleModel, post_timestep, pre_timestep
from .worldfile.schema import WorldDefinition, elevation_at

CLOCK_TOPIC = "clock"
CLOCK_RATE_HZ = 10.0
POSE_RATE_HZ = 50.0
_QUEUE_CAP_PER_TOPIC = 16


class SimPublisher:
    """Bounded handoff from the simulation thread to the broker.

    Appends never block; when a topic's backlog is full the oldest
    message of that topic is dropped and counted.  Payload encoding
    happens on the drain thread.
    """

    def __init__(self, local_client):
        self.local = local_client
        self._queue = deque()
        self._per_topic = {}
        self._cond = threading.Condition()
        self.drops = {}
        self._running = True
        self._thread = threading.Thread(target=self._drain, daemon=True)
        self._thread.start()

    def advertise(self, topic: str, type_name: str = "json") -> None:
        self.local.advertise(topic, type_name)

    def subscriber_count(self, topic: str) -> int:
        return self.local.subscriber_count(topic)

    def publish(self, topic: str, payload) -> None:
        with self._cond:
            if self._per_topic.get(topic, 0) >= _QUEUE_CAP_PER_TOPIC:
                for index, (queued_topic, _p) in enumerate(self._queue):
                    if queued_topic == topic:
                        del self._queue[index]
                        self._per_topic[topic] -= 1
                        self.drops[topic] = self.drops.get(topic, 0) + 1
                        break
            self._queue.append((topic, payload))
            self._per_topic[topic] = self._per_topic.get(topic, 0) + 1
            self._cond.notify()

    def _drain(self) -> None:
        while True:
            with self._cond:
                while self._running and not self._queue:
                    self._cond.wait()
                if not self._running and not self._queue:
                    return
                topic, payload = self._queue.popleft()
                self._per_topic[topic] -= 1
            body = json.dumps(
                {"op": "PUBLISH", "seq": self.local.next_seq(),
                 "topic": topic, "payload": payload},
                separators=(",", ":")).encode("utf-8")
            try:
                self.local.publish(topic, body)
            except GroundSimError:
                pass

    def flush(self, timeout: float = 2.0) -> None:
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            with self._cond:
                if not self._queue:
                    return
            time.sleep(0.001)

    def close(self) -> None:
        with self._cond:
            self._running = False
            self._cond.notify()
        self._thread.join(timeout=2.0)


def build_vehicle(spec, log_dir=None) -> VehicleModel:
    """Instantiate one vehicle from its parsed description."""
    body = RigidBody2D(pose=spec.pose.copy(), mass=spec.chassis_mass,
                       izz=spec.chassis_izz, com_local=spec.com,
                       shape=spec.chassis_shape,
                       friction=spec.chassis_friction, name=spec.name)
    wheels = [replace(w) for w in spec.wheels]
    if spec.kinematics == "ackermann":
        xs = [w.x for w in wheels]
        kinematics = Ackermann(wheelbase=max(xs) - min(xs),
                               max_steer=spec.max_steer)
    else:
        kinematics = Differential()
    logger = None
    if log_dir is not None:
        logger = CsvLogger(os.path.join(log_dir, f"{spec.name}.csv"))
    return VehicleModel(spec.name, body, wheels, kinematics,
                        spec.controller, spec.friction, logger=logger)


class Simulation:
    """World state plus the loop that advances it."""

    def __init__(self, definition: WorldDefinition, rtf=None, seed=None,
                 log_dir=None):
        self.definition = definition
        self.dt = definition.dt
        self.gravity = definition.gravity
        self.realtime_factor = definition.realtime_factor if rtf is None \
            else rtf
        self.seed = definition.seed if seed is None else seed
        self.t = 0.0
        self.tick_count = 0
        self.paused = False
        self._step_requests = 0
        self._commands = []
        self._cmd_lock = threading.Lock()
        self.publisher: SimPublisher | None = None

        if log_dir is None:
            log_dir = definition.log_dir
        if log_dir is not None:
            os.makedirs(log_dir, exist_ok=True)
        self.log_dir = log_dir

        self.vehicles = [build_vehicle(spec, log_dir)
                         for spec in definition.vehicles]
        self.block_bodies = []
        for block in definition.blocks:
            self.block_bodies.append(RigidBody2D(
                pose=block.pose.copy(), mass=block.mass, izz=block.izz,
                com_local=(0.0, 0.0), shape=block.shape,
                is_static=block.static, friction=block.friction,
                name=block.name))
        self.bodies = [v.body for v in self.vehicles] + self.block_bodies

        self.sensors = {
            v.name: [LidarSensor(cfg, self.seed)
                     for cfg in spec.lidars]
            for v, spec in zip(self.vehicles, definition.vehicles)}
        self._vehicle_index = {v.name: v for v in self.vehicles}

        if definition.elevation is not None:
            self.elevation_fn = partial(elevation_at, definition.elevation)
        else:
            self.elevation_fn = None

        self._static_segments = self._collect_static_segments()
        self._tick_geometry = None
        self._clock_interval = max(1, round(1.0 / (CLOCK_RATE_HZ * self.dt)))
        self._pose_interval = max(1, round(1.0 / (POSE_RATE_HZ * self.dt)))

    # -- comms wiring --------------------------------------------------

    def attach(self, broker) -> None:
        """Advertise topics and register services on a running broker."""
        self.publisher = SimPublisher(broker.local_client("sim"))
        self.publisher.advertise(CLOCK_TOPIC, "clock")
        for vehicle in self.vehicles:
            self.publisher.advertise(f"{vehicle.name}/pose", "pose")
        for sensors in self.sensors.values():
            for sensor in sensors:
                self.publisher.advertise(sensor.config.topic, "laser_scan")
        broker.register_service("world/pause", self._service(self._svc_pause))
        broker.register_service("world/resume",
                                self._service(self._svc_resume))
        broker.register_service("world/step_once",
                                self._service(self._svc_step_once))
        broker.register_service("world/info", self._service(self._svc_info))
        broker.register_service("vehicle/set_twist",
                                self._service(self._svc_set_twist))
        broker.register_service("vehicle/teleport",
                                self._service(self._svc_teleport))

    def _service(self, fn):
        def handler(request: dict) -> dict:
            box = {"event": threading.Event(), "result": None}
            with self._cmd_lock:
                self._commands.append((fn, request, box))
            if not box["event"].wait(timeout=1.5):
                raise RuntimeError("simulation loop not responding")
            return box["result"]
        return handler

    def _drain_commands(self) -> None:
        with self._cmd_lock:
            commands, self._commands = self._commands, []
        for fn, request, box in commands:
            try:
                box["result"] = fn(request)
            except Exception as exc:   # noqa: BLE001 - reply, don't die
                box["result"] = {"ok": False, "error": str(exc)}
            box["event"].set()

    # -- services ------------------------------------------------------

    def _svc_pause(self, _request) -> dict:
        self.paused = True
        return {"ok": True, "paused": True, "t": self.t}

    def _svc_resume(self, _request) -> dict:
        self.paused = False
        return {"ok": True, "paused": False, "t": self.t}

    def _svc_step_once(self, _request) -> dict:
        self._step_requests += 1
        return {"ok": True, "t": self.t + self.dt}

    def _svc_set_twist(self, request) -> dict:
        vehicle = self._vehicle_index.get(request.get("name"))
        if vehicle is None:
            return {"ok": False, "error": f"no vehicle "
                                          f"{request.get('name')!r}"}
        vehicle.set_twist(float(request.get("v", 0.0)),
                          float(request.get("omega", 0.0)))
        return {"ok": True}

    def _svc_teleport(self, request) -> dict:
        vehicle = self._vehicle_index.get(request.get("name"))
        if vehicle is None:
            return {"ok": False, "error": f"no vehicle "
                                          f"{request.get('name')!r}"}
        vehicle.teleport(float(request.get("x", 0.0)),
                         float(request.get("y", 0.0)),
                         float(request.get("yaw", 0.0)))
        return {"ok": True}

    def _svc_info(self, _request) -> dict:
        vehicles = []
        for vehicle in self.vehicles:
            pose = vehicle.body.pose
            vehicles.append({
                "name": vehicle.name,
                "kinematics": "ackermann"
                              if isinstance(vehicle.kinematics, Ackermann)
                              else "differential",
                "chassis": [list(p) for p in vehicle.body.shape.vertices],
                "wheels": [{"x": w.x, "y": w.y, "radius": w.radius,
                            "width": w.width} for w in vehicle.wheels],
                "pose": {"x": pose.x, "y": pose.y, "yaw": pose.yaw},
            })
        blocks = []
        for body in self.block_bodies:
            pose = body.pose
            blocks.append({
                "name": body.name,
                "static": body.is_static,
                "vertices": [list(p) for p in body.shape.vertices],
                "pose": {"x": pose.x, "y": pose.y, "yaw": pose.yaw},
            })
        elevation = None
        if self.definition.elevation is not None:
            grid = self.definition.elevation
            elevation = {"x0": grid.x0, "y0": grid.y0,
                         "resolution": grid.resolution,
                         "rows": len(grid.heights),
                         "cols": len(grid.heights[0])}
        return {"ok": True, "dt": self.dt, "gravity": self.gravity,
                "realtime_factor": self.realtime_factor, "t": self.t,
                "vehicles": vehicles, "blocks": blocks,
                "elevation": elevation}

    # -- sensor geometry -----------------------------------------------

    def _collect_static_segments(self):
        segments = []
        for body in self.block_bodies:
            if body.is_static:
                segments.extend(polygon_segments(body.world_vertices()))
        return np.asarray(segments, dtype=float) if segments \
            else np.empty((0, 2, 2))

    def _geometry_for_tick(self):
        if self._tick_geometry is not None:
            return self._tick_geometry
        chassis = {}
        for vehicle in self.vehicles:
            chassis[vehicle.name] = np.asarray(
                polygon_segments(vehicle.body.world_vertices()), dtype=float)
        dynamic_blocks = [
            np.asarray(polygon_segments(body.world_vertices()), dtype=float)
            for body in self.block_bodies if not body.is_static]
        self._tick_geometry = (chassis, dynamic_blocks)
        return self._tick_geometry

    def segments_excluding(self, vehicle_name: str):
        chassis, dynamic_blocks = self._geometry_for_tick()
        parts = [self._static_segments]
        parts.extend(arr for name, arr in chassis.items()
                     if name != vehicle_name)
        parts.extend(dynamic_blocks)
        return np.concatenate(parts) if len(parts) > 1 \
            else self._static_segments

    def process_sensors(self, vehicle: VehicleModel) -> None:
        for sensor in self.sensors.get(vehicle.name, ()):
            if not sensor.due(self.t):
                continue
            scan = sensor.sample(self.t, vehicle.body.pose,
                                 self.segments_excluding(vehicle.name))
            if self.publisher is not None and \
                    self.publisher.subscriber_count(sensor.config.topic) > 0:
                self.publisher.publish(sensor.config.topic, scan.to_dict())

    # -- stepping ------------------------------------------------------

    def tick(self) -> None:
        """One fixed step: physics plus everything hung off it."""
        self._drain_commands()
        if self.paused:
            if self._step_requests <= 0:
                return
            self._step_requests -= 1
        self._tick_geometry = None
        pre_timestep(self, self.dt)
        contacts = detect(self.bodies)
        if contacts:
            resolve(contacts, self.bodies, self.dt)
        step(self.bodies, self.dt)
        self.t += self.dt
        self.tick_count += 1
        post_timestep(self, self.dt)
        self._publish_tick()

    def _publish_tick(self) -> None:
        if self.publisher is None:
            return
        if self.tick_count % self._clock_interval == 0:
            self.publisher.publish(CLOCK_TOPIC, {"t": self.t})
        if self.tick_count % self._pose_interval == 0:
            for vehicle in self.vehicles:
                topic = f"{vehicle.name}/pose"
                if self.publisher.subscriber_count(topic) == 0:
                    continue
                pose = vehicle.body.pose
                z, pitch, roll = vehicle.attitude
                self.publisher.publish(topic, {
                    "t": self.t, "x": pose.x, "y": pose.y, "yaw": pose.yaw,
                    "z": z, "pitch": pitch, "roll": roll,
                    "v": vehicle.forward_speed(),
                    "omega": vehicle.body.omega})

    def run(self, duration=None, stop_event: threading.Event | None = None):
        """Advance until duration simulated seconds have elapsed (or
        stop_event fires), throttled by the realtime factor."""
        target_ticks = None
        if duration is not None:
            target_ticks = self.tick_count + round(duration / self.dt)
        rtf = self.realtime_factor
        next_deadline = time.monotonic()
        while stop_event is None or not stop_event.is_set():
            if target_ticks is not None and self.tick_count >= target_ticks:
                break
            if rtf > 0.0:
                next_deadline += self.dt / rtf
                delay = next_deadline - time.monotonic()
                if delay > 0.0:
                    time.sleep(delay)
                elif delay < -1.0:
                    next_deadline = time.monotonic()  # fell far behind
            was_paused = self.paused and self._step_requests <= 0
            self.tick()
            if was_paused and rtf == 0.0:
                time.sleep(0.001)       # don't spin while frozen

    def close(self) -> None:
        for vehicle in self.vehicles:
            if vehicle.logger is not None:
                vehicle.logger.close()
        if self.publisher is not None:
            self.publisher.flush()
            self.publisher.close()
