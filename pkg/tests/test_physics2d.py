"""Convex shapes, SAT contacts, and the impulse solver."""

import math
import random

import pytest

from groundsim.geometry import Pose2
from groundsim.errors import DegenerateGeometry
from groundsim.physics2d import (CONTACT_SLOP, ConvexPolygon, RigidBody2D,
                                 collision_polygon_from_mesh, convex_hull,
                                 detect, resolve, step)


def _ray_cast_inside(verts, p):
    """Even-odd point-in-polygon, independent of the half-plane test."""
    inside = False
    n = len(verts)
    for i in range(n):
        (x1, y1), (x2, y2) = verts[i], verts[(i + 1) % n]
        if (y1 > p[1]) != (y2 > p[1]):
            x_at = x1 + (p[1] - y1) / (y2 - y1) * (x2 - x1)
            if x_at > p[0]:
                inside = not inside
    return inside


def _clip_area(subject, clip):
    """Intersection area of two convex polygons (Sutherland-Hodgman)."""
    output = list(subject)
    n = len(clip)
    for i in range(n):
        cx1, cy1 = clip[i]
        cx2, cy2 = clip[(i + 1) % n]
        if not output:
            return 0.0
        polygon, output = output, []
        ex, ey = cx2 - cx1, cy2 - cy1

        def side(p):
            return ex * (p[1] - cy1) - ey * (p[0] - cx1)

        for j, cur in enumerate(polygon):
            prev = polygon[j - 1]
            cur_in = side(cur) >= 0.0
            prev_in = side(prev) >= 0.0
            if cur_in != prev_in:
                t = side(prev) / (side(prev) - side(cur))
                output.append((prev[0] + t * (cur[0] - prev[0]),
                               prev[1] + t * (cur[1] - prev[1])))
            if cur_in:
                output.append(cur)
    area = 0.0
    for j in range(len(output)):
        x1, y1 = output[j]
        x2, y2 = output[(j + 1) % len(output)]
        area += x1 * y2 - x2 * y1
    return abs(area) / 2.0


def _random_convex(rng, scale=1.0):
    pts = [(rng.uniform(-scale, scale), rng.uniform(-scale, scale))
           for _ in range(rng.randint(5, 12))]
    try:
        return ConvexPolygon(convex_hull(pts))
    except (DegenerateGeometry, ValueError):
        return ConvexPolygon.box(scale / 2, scale / 2)


def test_polygon_rejects_bad_winding():
    with pytest.raises(ValueError):
        ConvexPolygon([(0, 0), (0, 1), (1, 1), (1, 0)])    # clockwise
    with pytest.raises(ValueError):
        ConvexPolygon([(0, 0), (1, 0), (2, 0), (1, 1)])    # collinear edge
    with pytest.raises(ValueError):
        ConvexPolygon([(0, 0), (1, 0)])


def test_box_layout():
    box = ConvexPolygon.box(2.0, 1.0)
    assert box.vertices == [(-2, -1), (2, -1), (2, 1), (-2, 1)]
    assert box.centroid() == (0.0, 0.0)


def test_contains_matches_ray_cast():
    rng = random.Random(41)
    for _ in range(40):
        poly = _random_convex(rng, 2.0)
        for _ in range(50):
            p = (rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5))
            # skip points hugging an edge where the oracles may differ
            margin = min(abs((b[0] - a[0]) * (p[1] - a[1])
                             - (b[1] - a[1]) * (p[0] - a[0]))
                         / math.hypot(b[0] - a[0], b[1] - a[1])
                         for a, b in zip(poly.vertices,
                                         poly.vertices[1:]
                                         + poly.vertices[:1]))
            if margin < 1e-6:
                continue
            assert poly.contains(p) == _ray_cast_inside(poly.vertices, p)


def test_convex_hull_square_with_interior_points():
    pts = [(0, 0), (4, 0), (4, 4), (0, 4), (2, 2), (1, 3), (3, 1)]
    hull = convex_hull(pts)
    assert sorted(hull) == [(0, 0), (0, 4), (4, 0), (4, 4)]
    # counter-clockwise: positive signed area
    area = sum(hull[i][0] * hull[(i + 1) % 4][1]
               - hull[(i + 1) % 4][0] * hull[i][1] for i in range(4))
    assert area > 0.0


def test_convex_hull_contains_all_inputs():
    rng = random.Random(43)
    for _ in range(30):
        pts = [(rng.uniform(-3, 3), rng.uniform(-3, 3)) for _ in range(30)]
        hull = ConvexPolygon(convex_hull(pts))
        assert all(p in pts for p in hull.vertices)
        for p in pts:
            assert hull.contains((p[0], p[1])) or any(
                math.hypot(p[0] - v[0], p[1] - v[1]) < 1e-9
                for v in hull.vertices)


def test_mesh_band_projection():
    cube = [(x, y, z) for x in (-1, 1) for y in (-1, 1) for z in (0, 2)]
    spire = [(0.0, 0.0, 5.0), (0.2, 0.0, 5.0), (0.0, 0.2, 5.0)]
    poly = collision_polygon_from_mesh(cube + spire, 0.0, 2.0)
    assert sorted(poly.vertices) == [(-1, -1), (-1, 1), (1, -1), (1, 1)]
    with pytest.raises(DegenerateGeometry):
        collision_polygon_from_mesh(spire, 0.0, 2.0)


def test_transformed_applies_pose():
    box = ConvexPolygon.box(1.0, 0.5)
    verts = box.transformed(Pose2(10.0, 0.0, math.pi / 2.0))
    assert verts[0][0] == pytest.approx(10.5)
    assert verts[0][1] == pytest.approx(-1.0)


def test_detect_known_overlap():
    a = RigidBody2D(pose=Pose2(0, 0), shape=ConvexPolygon.box(0.5, 0.5))
    b = RigidBody2D(pose=Pose2(0.7, 0), shape=ConvexPolygon.box(0.5, 0.5))
    contacts = detect([a, b])
    assert len(contacts) == 1
    c = contacts[0]
    assert c.depth == pytest.approx(0.3, abs=1e-12)
    assert c.normal[0] == pytest.approx(1.0)
    assert c.normal[1] == pytest.approx(0.0, abs=1e-12)

    b.pose.x = 1.2
    assert detect([a, b]) == []

    # touching within the slop band produces no contact
    b.pose.x = 1.0 - CONTACT_SLOP / 2.0
    assert detect([a, b]) == []


def test_detect_skips_static_pairs():
    a = RigidBody2D(is_static=True, shape=ConvexPolygon.box(1, 1))
    b = RigidBody2D(pose=Pose2(0.5, 0), is_static=True,
                    shape=ConvexPolygon.box(1, 1))
    assert detect([a, b]) == []


def test_detect_agrees_with_polygon_clipping():
    rng = random.Random(47)
    checked_hits = 0
    checked_misses = 0
    for _ in range(300):
        a = RigidBody2D(pose=Pose2(rng.uniform(-1, 1), rng.uniform(-1, 1),
                                   rng.uniform(-3, 3)),
                        shape=_random_convex(rng))
        b = RigidBody2D(pose=Pose2(rng.uniform(-1, 1), rng.uniform(-1, 1),
                                   rng.uniform(-3, 3)),
                        shape=_random_convex(rng))
        area = _clip_area(a.world_vertices(), b.world_vertices())
        contacts = detect([a, b])
        if area == 0.0:
            assert contacts == []
            checked_misses += 1
        elif area > 1e-3:
            assert len(contacts) == 1
            checked_hits += 1
    assert checked_hits > 20 and checked_misses > 20


def test_step_semi_implicit_order():
    body = RigidBody2D(mass=2.0, izz=1.0)
    body.fx_acc = 4.0
    step([body], 0.5)
    # velocity updates first, the new velocity moves the pose
    assert body.vx == pytest.approx(1.0)
    assert body.pose.x == pytest.approx(0.5)
    assert body.fx_acc == 0.0


def test_apply_force_at_accumulates_torque():
    body = RigidBody2D(pose=Pose2(1.0, 2.0, math.pi / 2.0), com_local=(0.1, 0.0))
    body.apply_force_at((1.0, 0.0), (0.5, 0.2))
    # body +x force points along world +y at this yaw
    assert body.fx_acc == pytest.approx(0.0, abs=1e-12)
    assert body.fy_acc == pytest.approx(1.0)
    # lever arm from com (0.1, 0) to (0.5, 0.2) is (0.4, 0.2) in the body
    # frame; torque r x F is frame-invariant
    assert body.torque_acc == pytest.approx(0.4 * 0.0 - 0.2 * 1.0)


def test_velocity_at_includes_spin():
    body = RigidBody2D(pose=Pose2(0, 0, 0), omega=2.0, vx=1.0)
    v = body.velocity_at((0.0, 1.0))
    assert v[0] == pytest.approx(1.0 - 2.0)
    assert v[1] == pytest.approx(0.0)


def test_resolve_head_on_conserves_momentum():
    a = RigidBody2D(pose=Pose2(-0.45, 0), vx=1.0, mass=2.0,
                    shape=ConvexPolygon.box(0.5, 0.5), friction=0.0)
    b = RigidBody2D(pose=Pose2(0.45, 0), vx=-1.0, mass=2.0,
                    shape=ConvexPolygon.box(0.5, 0.5), friction=0.0)
    contacts = detect([a, b])
    assert contacts
    p_before = a.mass * a.vx + b.mass * b.vx
    resolve(contacts, [a, b], 0.01)
    assert a.mass * a.vx + b.mass * b.vx == pytest.approx(p_before,
                                                          abs=1e-12)
    # zero restitution: no rebound, closing velocity killed
    rel = b.vx - a.vx
    assert -1e-9 <= rel < 1e-6


def test_resolve_static_wall_stops_approach():
    wall = RigidBody2D(pose=Pose2(1.0, 0), is_static=True,
                       shape=ConvexPolygon.box(0.2, 2.0))
    box = RigidBody2D(pose=Pose2(0.05, 0), vx=2.0, mass=1.0,
                      shape=ConvexPolygon.box(0.8, 0.4))
    contacts = detect([wall, box])
    assert contacts
    resolve(contacts, [wall, box], 0.01)
    assert box.vx <= 1e-9
    assert wall.pose.x == 1.0     # static bodies never move


def test_resolve_never_adds_kinetic_energy():
    rng = random.Random(53)
    for _ in range(100):
        a = RigidBody2D(pose=Pose2(rng.uniform(-0.5, 0.5),
                                   rng.uniform(-0.5, 0.5),
                                   rng.uniform(-3, 3)),
                        vx=rng.uniform(-2, 2), vy=rng.uniform(-2, 2),
                        omega=rng.uniform(-3, 3), mass=rng.uniform(0.5, 5),
                        izz=rng.uniform(0.1, 2), shape=_random_convex(rng),
                        friction=rng.uniform(0, 1))
        b = RigidBody2D(pose=Pose2(rng.uniform(-0.5, 0.5),
                                   rng.uniform(-0.5, 0.5),
                                   rng.uniform(-3, 3)),
                        vx=rng.uniform(-2, 2), vy=rng.uniform(-2, 2),
                        omega=rng.uniform(-3, 3), mass=rng.uniform(0.5, 5),
                        izz=rng.uniform(0.1, 2), shape=_random_convex(rng),
                        friction=rng.uniform(0, 1))
        contacts = detect([a, b])
        if not contacts:
            continue

        def energy():
            return sum(0.5 * c.mass * (c.vx ** 2 + c.vy ** 2)
                       + 0.5 * c.izz * c.omega ** 2 for c in (a, b))

        before = energy()
        resolve(contacts, [a, b], 0.01)
        assert energy() <= before + 1e-9


def test_positional_correction_reduces_overlap():
    a = RigidBody2D(pose=Pose2(0, 0), shape=ConvexPolygon.box(0.5, 0.5))
    b = RigidBody2D(pose=Pose2(0.8, 0), shape=ConvexPolygon.box(0.5, 0.5))
    for _ in range(200):
        contacts = detect([a, b])
        if not contacts:
            break
        resolve(contacts, [a, b], 0.01)
        step([a, b], 0.01)
    gap = b.pose.x - a.pose.x
    assert gap >= 1.0 - CONTACT_SLOP * 2.0
