"""World XML validation: expanded text in, WorldDefinition out.

The walker is strict: unknown elements and attributes are rejected,
and every complaint carries the element path and source line.
"""

from __future__ import annotations

import math
import os
import xml.etree.ElementTree as ET
import xml.parsers.expat
from dataclasses import dataclass, field

from ..control import PidParams
from ..errors import DegenerateGeometry, SchemaError, WorldFileError
from ..friction import FrictionParams, RollingParams
from ..geometry import Pose2
from ..lidar import LidarConfig
from ..physics2d import ConvexPolygon, collision_polygon_from_mesh
from ..vehicle import Wheel

DEFAULT_CHASSIS_SHAPE = (0.4, 0.3)  # half-extents when <shape> is omitted


@dataclass(frozen=True)
class ElevationGrid:
    x0: float
    y0: float
    resolution: float
    heights: tuple  # row-major tuple of row tuples, rows along +y

    def __post_init__(self):
        if self.resolution <= 0.0:
            raise ValueError("elevation resolution must be > 0")
        if len(self.heights) < 2 or any(len(r) != len(self.heights[0])
                                        for r in self.heights):
            raise ValueError("elevation matrix must be rectangular, >= 2x2")
        if len(self.heights[0]) < 2:
            raise ValueError("elevation matrix must be >= 2x2")


def elevation_at(grid: ElevationGrid, x: float, y: float) -> float:
    """Bilinear height; queries beyond the grid clamp to its edge."""
    rows = len(grid.heights)
    cols = len(grid.heights[0])
    u = (x - grid.x0) / grid.resolution
    v = (y - grid.y0) / grid.resolution
    u = min(max(u, 0.0), cols - 1.0)
    v = min(max(v, 0.0), rows - 1.0)
    c0 = min(int(math.floor(u)), cols - 2)
    r0 = min(int(math.floor(v)), rows - 2)
    fu = u - c0
    fv = v - r0
    h = grid.heights
    return ((1.0 - fv) * ((1.0 - fu) * h[r0][c0] + fu * h[r0][c0 + 1])
            + fv * ((1.0 - fu) * h[r0 + 1][c0] + fu * h[r0 + 1][c0 + 1]))


@dataclass
class BlockSpec:
    name: str
    shape: ConvexPolygon
    pose: Pose2
    static: bool = True
    mass: float = 0.0
    izz: float = 0.0
    friction: float = 0.5


@dataclass
class VehicleSpec:
    name: str
    pose: Pose2
    chassis_mass: float
    chassis_izz: float
    chassis_shape: ConvexPolygon
    chassis_friction: float
    com: tuple
    wheels: list
    kinematics: str          # "differential" | "ackermann"
    max_steer: float
    controller: PidParams
    friction: FrictionParams
    lidars: list = field(default_factory=list)


@dataclass
class WorldDefinition:
    dt: float
    realtime_factor: float = 1.0
    gravity: float = 9.81
    seed: int = 1
    blocks: list = field(default_factory=list)
    vehicles: list = field(default_factory=list)
    elevation: ElevationGrid | None = None
    log_dir: str | None = None

    @property
    def sensors(self):
        return {v.name: list(v.lidars) for v in self.vehicles}


# --- XML plumbing -----------------------------------------------------------

def _parse_xml(text: str, source_name: str):
    """ElementTree build that remembers each element's line number."""
    parser = xml.parsers.expat.ParserCreate()
    root = None
    stack = []
    lines = {}

    def start(tag, attrs):
        nonlocal root
        elem = ET.Element(tag, attrs)
        lines[id(elem)] = parser.CurrentLineNumber
        if stack:
            stack[-1].append(elem)
        else:
            root = elem
        stack.append(elem)

    def end(_tag):
        stack.pop()

    def chardata(data):
        if not stack:
            return
        parent = stack[-1]
        if len(parent):
            parent[-1].tail = (parent[-1].tail or "") + data
        else:
            parent.text = (parent.text or "") + data

    parser.StartElementHandler = start
    parser.EndElementHandler = end
    parser.CharacterDataHandler = chardata
    try:
        parser.Parse(text, True)
    except xml.parsers.expat.ExpatError as exc:
        raise WorldFileError(f"XML syntax error: "
                             f"{xml.parsers.expat.errors.messages[exc.code]}",
                             path=source_name, line=exc.lineno)
    if root is None:
        raise WorldFileError("empty document", path=source_name)
    return root, lines


class _Walker:
    def __init__(self, source_name: str, lines, base_dir: str):
        self.source = source_name
        self.lines = lines
        self.base_dir = base_dir

    def fail(self, elem, elem_path: str, message: str):
        raise SchemaError(f"{elem_path}: {message}", path=self.source,
                          line=self.lines.get(id(elem)))

    def check_attrs(self, elem, elem_path, allowed, required=()):
        for name in elem.attrib:
            if name not in allowed:
                self.fail(elem, elem_path, f"unknown attribute {name!r}")
        for name in required:
            if name not in elem.attrib:
                self.fail(elem, elem_path, f"missing attribute {name!r}")

    def check_no_text(self, elem, elem_path):
        if elem.text and elem.text.strip():
            self.fail(elem, elem_path, "unexpected text content")
        for child in elem:
            if child.tail and child.tail.strip():
                self.fail(elem, elem_path, "unexpected text content")

    def number(self, elem, elem_path, name, default=None):
        raw = elem.get(name)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            self.fail(elem, elem_path, f"attribute {name!r}: "
                      f"{raw!r} is not a number")

    def integer(self, elem, elem_path, name, default=None):
        value = self.number(elem, elem_path, name, default)
        if value is None:
            return None
        if value != int(value):
            self.fail(elem, elem_path,
                      f"attribute {name!r} must be an integer")
        return int(value)

    def boolean(self, elem, elem_path, name, default):
        raw = elem.get(name)
        if raw is None:
            return default
        lowered = raw.strip().lower()
        if lowered in ("true", "1"):
            return True
        if lowered in ("false", "0"):
            return False
        self.fail(elem, elem_path, f"attribute {name!r}: {raw!r} is not "
                  "a boolean (true/false)")


def parse_world(text: str, base_dir: str = ".",
                source_name: str = "<world>") -> WorldDefinition:
    """Validate an already-preprocessed document."""
    root, lines = _parse_xml(text, source_name)
    w = _Walker(source_name, lines, base_dir)
    if root.tag != "world":
        w.fail(root, root.tag, "root element must be <world>")
    path = "world"
    w.check_attrs(root, path, {"dt", "realtime_factor", "gravity", "seed"},
                  required=("dt",))
    w.check_no_text(root, path)
    dt = w.number(root, path, "dt")
    if dt is None or dt <= 0.0:
        w.fail(root, path, "dt must be > 0")
    rtf = w.number(root, path, "realtime_factor", 1.0)
    if rtf < 0.0:
        w.fail(root, path, "realtime_factor must be >= 0")
    gravity = w.number(root, path, "gravity", 9.81)
    if gravity <= 0.0:
        w.fail(root, path, "gravity must be > 0")
    seed = w.integer(root, path, "seed", 1)
    if seed < 0:
        w.fail(root, path, "seed must be >= 0")

    world = WorldDefinition(dt=dt, realtime_factor=rtf, gravity=gravity,
                            seed=seed)
    names = set()
    counters = {}
    for child in root:
        index = counters.get(child.tag, 0) + 1
        counters[child.tag] = index
        child_path = f"{path}/{child.tag}[{index}]"
        if child.tag == "block":
            block = _parse_block(w, child, child_path)
            if block.name in names:
                w.fail(child, child_path, f"duplicate name {block.name!r}")
            names.add(block.name)
            world.blocks.append(block)
        elif child.tag == "vehicle":
            vehicle = _parse_vehicle(w, child, child_path)
            if vehicle.name in names:
                w.fail(child, child_path, f"duplicate name {vehicle.name!r}")
            names.add(vehicle.name)
            world.vehicles.append(vehicle)
        elif child.tag == "elevation":
            if world.elevation is not None:
                w.fail(child, child_path, "more than one <elevation>")
            world.elevation = _parse_elevation(w, child, child_path)
        elif child.tag == "log":
            if world.log_dir is not None:
                w.fail(child, child_path, "more than one <log>")
            w.check_attrs(child, child_path, {"dir"})
            w.check_no_text(child, child_path)
            world.log_dir = child.get("dir", ".")
        else:
            w.fail(child, child_path, f"unknown element <{child.tag}>")

    topics = set()
    for vehicle in world.vehicles:
        for lidar in vehicle.lidars:
            if lidar.topic in topics:
                raise SchemaError(f"world: duplicate sensor topic "
                                  f"{lidar.topic!r}", path=source_name)
            topics.add(lidar.topic)
    return world


def load_world(path: str, env=None) -> WorldDefinition:
    """Preprocess and validate a world file on disk."""
    from .preprocess import preprocess_file
    expanded = preprocess_file(path, env)
    return parse_world(expanded, base_dir=os.path.dirname(str(path)) or ".",
                       source_name=str(path))


# --- element parsers --------------------------------------------------------

def _parse_pose(w, elem, elem_path) -> Pose2:
    w.check_attrs(elem, elem_path, {"x", "y", "yaw"})
    w.check_no_text(elem, elem_path)
    for child in elem:
        w.fail(child, elem_path, f"unexpected child <{child.tag}>")
    return Pose2(w.number(elem, elem_path, "x", 0.0),
                 w.number(elem, elem_path, "y", 0.0),
                 w.number(elem, elem_path, "yaw", 0.0))


def _parse_shape(w, elem, elem_path) -> ConvexPolygon:
    w.check_attrs(elem, elem_path, set())
    w.check_no_text(elem, elem_path)
    children = list(elem)
    if len(children) == 1 and children[0].tag == "box":
        box = children[0]
        box_path = f"{elem_path}/box"
        w.check_attrs(box, box_path, {"hx", "hy"}, required=("hx", "hy"))
        hx = w.number(box, box_path, "hx")
        hy = w.number(box, box_path, "hy")
        if hx <= 0.0 or hy <= 0.0:
            w.fail(box, box_path, "box half-extents must be > 0")
        return ConvexPolygon.box(hx, hy)
    if len(children) == 1 and children[0].tag == "mesh":
        return _parse_mesh(w, children[0], f"{elem_path}/mesh")
    vertices = []
    for child in children:
        if child.tag != "vertex":
            w.fail(child, elem_path, f"unknown element <{child.tag}>")
        v_path = f"{elem_path}/vertex[{len(vertices) + 1}]"
        w.check_attrs(child, v_path, {"x", "y"}, required=("x", "y"))
        vertices.append((w.number(child, v_path, "x"),
                         w.number(child, v_path, "y")))
    if len(vertices) < 3:
        w.fail(elem, elem_path,
               "shape needs a <box>, a <mesh>, or >= 3 <vertex> children")
    try:
        return ConvexPolygon(vertices)
    except (DegenerateGeometry, ValueError) as exc:
        w.fail(elem, elem_path, f"bad polygon: {exc}")


def _parse_mesh(w, elem, elem_path) -> ConvexPolygon:
    w.check_attrs(elem, elem_path, {"z_min", "z_max"},
                  required=("z_min", "z_max"))
    w.check_no_text(elem, elem_path)
    z_min = w.number(elem, elem_path, "z_min")
    z_max = w.number(elem, elem_path, "z_max")
    vertices = []
    for child in elem:
        if child.tag != "vertex":
            w.fail(child, elem_path, f"unknown element <{child.tag}>")
        v_path = f"{elem_path}/vertex[{len(vertices) + 1}]"
        w.check_attrs(child, v_path, {"x", "y", "z"},
                      required=("x", "y", "z"))
        vertices.append((w.number(child, v_path, "x"),
                         w.number(child, v_path, "y"),
                         w.number(child, v_path, "z")))
    try:
        return collision_polygon_from_mesh(vertices, z_min, z_max)
    except (DegenerateGeometry, ValueError) as exc:
        w.fail(elem, elem_path, f"bad mesh: {exc}")


def _parse_block(w, elem, elem_path) -> BlockSpec:
    w.check_attrs(elem, elem_path,
                  {"name", "static", "friction", "mass", "izz"},
                  required=("name",))
    w.check_no_text(elem, elem_path)
    static = w.boolean(elem, elem_path, "static", True)
    mass = w.number(elem, elem_path, "mass", 0.0)
    izz = w.number(elem, elem_path, "izz", 0.0)
    friction = w.number(elem, elem_path, "friction", 0.5)
    if not static and (mass <= 0.0 or izz <= 0.0):
        w.fail(elem, elem_path, "dynamic block needs mass and izz > 0")
    if friction < 0.0:
        w.fail(elem, elem_path, "friction must be >= 0")
    pose = Pose2()
    shape = None
    for child in elem:
        child_path = f"{elem_path}/{child.tag}"
        if child.tag == "pose":
            pose = _parse_pose(w, child, child_path)
        elif child.tag == "shape":
            if shape is not None:
                w.fail(child, child_path, "more than one <shape>")
            shape = _parse_shape(w, child, child_path)
        else:
            w.fail(child, elem_path, f"unknown element <{child.tag}>")
    if shape is None:
        w.fail(elem, elem_path, "block needs a <shape>")
    return BlockSpec(name=elem.get("name"), shape=shape, pose=pose,
                     static=static, mass=mass, izz=izz, friction=friction)


def _parse_wheel(w, elem, elem_path) -> Wheel:
    w.check_attrs(elem, elem_path,
                  {"x", "y", "radius", "width", "mass", "iy"},
                  required=("x", "y"))
    w.check_no_text(elem, elem_path)
    for child in elem:
        w.fail(child, elem_path, f"unexpected child <{child.tag}>")
    radius = w.number(elem, elem_path, "radius", 0.2)
    iy = w.number(elem, elem_path, "iy", 0.02)
    mass = w.number(elem, elem_path, "mass", 1.0)
    width = w.number(elem, elem_path, "width", 0.05)
    if radius <= 0.0:
        w.fail(elem, elem_path, "radius must be > 0")
    if iy <= 0.0:
        w.fail(elem, elem_path, "iy must be > 0")
    if mass < 0.0:
        w.fail(elem, elem_path, "mass must be >= 0")
    return Wheel(x=w.number(elem, elem_path, "x"),
                 y=w.number(elem, elem_path, "y"),
                 radius=radius, width=width, mass=mass, iy=iy)


def _parse_controller(w, elem, elem_path) -> PidParams:
    w.check_attrs(elem, elem_path, {"kp", "ki", "kd", "i_clamp", "tau_max"})
    w.check_no_text(elem, elem_path)
    for child in elem:
        w.fail(child, elem_path, f"unexpected child <{child.tag}>")
    try:
        return PidParams(kp=w.number(elem, elem_path, "kp", 2.0),
                         ki=w.number(elem, elem_path, "ki", 5.0),
                         kd=w.number(elem, elem_path, "kd", 0.0),
                         i_clamp=w.number(elem, elem_path, "i_clamp", 10.0),
                         tau_max=w.number(elem, elem_path, "tau_max", 10.0))
    except ValueError as exc:
        w.fail(elem, elem_path, str(exc))


def _parse_friction(w, elem, elem_path) -> FrictionParams:
    w.check_attrs(elem, elem_path, {"mu", "c_damping"})
    w.check_no_text(elem, elem_path)
    rolling = None
    for child in elem:
        child_path = f"{elem_path}/{child.tag}"
        if child.tag != "rolling":
            w.fail(child, elem_path, f"unknown element <{child.tag}>")
        if rolling is not None:
            w.fail(child, child_path, "more than one <rolling>")
        w.check_attrs(child, child_path, {"r1", "r2", "v_alpha"})
        w.check_no_text(child, child_path)
        try:
            rolling = RollingParams(
                r1=w.number(child, child_path, "r1", 0.01),
                r2=w.number(child, child_path, "r2", 0.001),
                v_alpha=w.number(child, child_path, "v_alpha", 0.1))
        except ValueError as exc:
            w.fail(child, child_path, str(exc))
    try:
        return FrictionParams(mu=w.number(elem, elem_path, "mu", 1.0),
                              c_damping=w.number(elem, elem_path,
                                                 "c_damping", 0.0),
                              rolling=rolling)
    except ValueError as exc:
        w.fail(elem, elem_path, str(exc))


def _parse_lidar(w, elem, elem_path, vehicle_name) -> LidarConfig:
    w.check_attrs(elem, elem_path,
                  {"name", "x", "y", "yaw", "fov", "n_rays", "max_range",
                   "rate", "sigma", "topic"}, required=("name",))
    w.check_no_text(elem, elem_path)
    for child in elem:
        w.fail(child, elem_path, f"unexpected child <{child.tag}>")
    name = elem.get("name")
    topic = elem.get("topic") or f"{vehicle_name}/{name}"
    try:
        return LidarConfig(
            name=f"{vehicle_name}/{name}",
            x=w.number(elem, elem_path, "x", 0.0),
            y=w.number(elem, elem_path, "y", 0.0),
            yaw=w.number(elem, elem_path, "yaw", 0.0),
            fov=w.number(elem, elem_path, "fov", math.pi),
            n_rays=w.integer(elem, elem_path, "n_rays", 181),
            max_range=w.number(elem, elem_path, "max_range", 10.0),
            rate_hz=w.number(elem, elem_path, "rate", 10.0),
            noise_sigma=w.number(elem, elem_path, "sigma", 0.0),
            topic=topic)
    except ValueError as exc:
        w.fail(elem, elem_path, str(exc))


def _parse_vehicle(w, elem, elem_path) -> VehicleSpec:
    w.check_attrs(elem, elem_path, {"name", "kinematics", "max_steer"},
                  required=("name",))
    w.check_no_text(elem, elem_path)
    kinematics = elem.get("kinematics", "differential")
    if kinematics not in ("differential", "ackermann"):
        w.fail(elem, elem_path, f"unknown kinematics {kinematics!r}")
    max_steer = w.number(elem, elem_path, "max_steer", 0.7)
    if max_steer <= 0.0:
        w.fail(elem, elem_path, "max_steer must be > 0")
    name = elem.get("name")

    pose = Pose2()
    chassis = None
    wheels = []
    controller = None
    friction = None
    lidars = []
    sensor_names = set()
    for child in elem:
        child_path = f"{elem_path}/{child.tag}"
        if child.tag == "pose":
            pose = _parse_pose(w, child, child_path)
        elif child.tag == "chassis":
            if chassis is not None:
                w.fail(child, child_path, "more than one <chassis>")
            chassis = _parse_chassis(w, child, child_path)
        elif child.tag == "wheel":
            wheels.append(_parse_wheel(
                w, child, f"{child_path}[{len(wheels) + 1}]"))
        elif child.tag == "controller":
            if controller is not None:
                w.fail(child, child_path, "more than one <controller>")
            controller = _parse_controller(w, child, child_path)
        elif child.tag == "friction":
            if friction is not None:
                w.fail(child, child_path, "more than one <friction>")
            friction = _parse_friction(w, child, child_path)
        elif child.tag == "lidar":
            lidar = _parse_lidar(
                w, child, f"{child_path}[{len(lidars) + 1}]", name)
            if lidar.name in sensor_names:
                w.fail(child, child_path,
                       f"duplicate sensor name {child.get('name')!r}")
            sensor_names.add(lidar.name)
            lidars.append(lidar)
        else:
            w.fail(child, elem_path, f"unknown element <{child.tag}>")
    if chassis is None:
        w.fail(elem, elem_path, "vehicle needs a <chassis>")
    if len(wheels) < 2:
        w.fail(elem, elem_path, "vehicle needs at least 2 <wheel> children")
    if kinematics == "ackermann" and len(wheels) < 4:
        w.fail(elem, elem_path, "ackermann needs at least 4 wheels")
    mass, izz, chassis_friction, shape, com = chassis
    return VehicleSpec(name=name, pose=pose, chassis_mass=mass,
                       chassis_izz=izz, chassis_shape=shape,
                       chassis_friction=chassis_friction, com=com,
                       wheels=wheels, kinematics=kinematics,
                       max_steer=max_steer,
                       controller=controller or PidParams(kp=2.0, ki=5.0,
                                                          kd=0.0),
                       friction=friction or FrictionParams(),
                       lidars=lidars)


def _parse_chassis(w, elem, elem_path):
    w.check_attrs(elem, elem_path, {"mass", "izz", "friction"},
                  required=("mass", "izz"))
    w.check_no_text(elem, elem_path)
    mass = w.number(elem, elem_path, "mass")
    izz = w.number(elem, elem_path, "izz")
    friction = w.number(elem, elem_path, "friction", 0.5)
    if mass <= 0.0 or izz <= 0.0:
        w.fail(elem, elem_path, "chassis mass and izz must be > 0")
    if friction < 0.0:
        w.fail(elem, elem_path, "friction must be >= 0")
    shape = None
    com = (0.0, 0.0)
    for child in elem:
        child_path = f"{elem_path}/{child.tag}"
        if child.tag == "shape":
            if shape is not None:
                w.fail(child, child_path, "more than one <shape>")
            shape = _parse_shape(w, child, child_path)
        elif child.tag == "com":
            w.check_attrs(child, child_path, {"x", "y"})
            com = (w.number(child, child_path, "x", 0.0),
                   w.number(child, child_path, "y", 0.0))
        else:
            w.fail(child, elem_path, f"unknown element <{child.tag}>")
    if shape is None:
        shape = ConvexPolygon.box(*DEFAULT_CHASSIS_SHAPE)
    return mass, izz, friction, shape, com


def _parse_elevation(w, elem, elem_path) -> ElevationGrid:
    w.check_attrs(elem, elem_path, {"file", "x0", "y0", "resolution"},
                  required=("file", "resolution"))
    w.check_no_text(elem, elem_path)
    for child in elem:
        w.fail(child, elem_path, f"unexpected child <{child.tag}>")
    resolution = w.number(elem, elem_path, "resolution")
    if resolution <= 0.0:
        w.fail(elem, elem_path, "resolution must be > 0")
    rel = elem.get("file")
    path = os.path.normpath(os.path.join(w.base_dir, rel))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            rows = []
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                rows.append(tuple(float(tok) for tok in line.split()))
    except OSError as exc:
        w.fail(elem, elem_path, f"cannot read elevation file: {exc}")
    except ValueError as exc:
        w.fail(elem, elem_path, f"bad elevation file {rel!r}: {exc}")
    try:
        return ElevationGrid(x0=w.number(elem, elem_path, "x0", 0.0),
                             y0=w.number(elem, elem_path, "y0", 0.0),
                             resolution=resolution, heights=tuple(rows))
    except ValueError as exc:
        w.fail(elem, elem_path, str(exc))
