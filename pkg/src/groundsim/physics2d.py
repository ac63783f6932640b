"""2D rigid bodies, convex collision, and impulse resolution.

Bodies are convex polygons moving in the plane.  Collision detection is
a bounding-box sweep plus a separating-axis narrow phase; resolution is
sequential impulses with zero restitution, Coulomb contact friction,
and a positional correction pass.  Wheels are not collision shapes;
only chassis and block polygons collide.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import DegenerateGeometry
from .geometry import Pose2, Vec2, rotate_z, wrap_pi

CONTACT_SLOP = 1e-4        # m of penetration tolerated before a contact exists
POSITION_CORRECTION = 0.2  # fraction of remaining penetration removed per step
SOLVER_ITERATIONS = 8


def cross2(a: Vec2, b: Vec2) -> float:
    return a[0] * b[1] - a[1] * b[0]


def dot2(a: Vec2, b: Vec2) -> float:
    return a[0] * b[0] + a[1] * b[1]


class ConvexPolygon:
    """Counter-clockwise, strictly convex vertex loop."""

    __slots__ = ("vertices",)

    def __init__(self, vertices):
        verts = [(float(x), float(y)) for x, y in vertices]
        if len(verts) < 3:
            raise ValueError("polygon needs at least 3 vertices")
        scale = max(max(abs(x), abs(y)) for x, y in verts)
        eps = 1e-12 * max(scale * scale, 1.0)
        n = len(verts)
        for i in range(n):
            a, b, c = verts[i], verts[(i + 1) % n], verts[(i + 2) % n]
            turn = cross2((b[0] - a[0], b[1] - a[1]), (c[0] - b[0], c[1] - b[1]))
            if turn <= eps:
                raise ValueError(
                    "vertices must wind counter-clockwise and be strictly convex")
        self.vertices = verts

    @staticmethod
    def box(half_x: float, half_y: float) -> "ConvexPolygon":
        return ConvexPolygon([(-half_x, -half_y), (half_x, -half_y),
                              (half_x, half_y), (-half_x, half_y)])

    def centroid(self) -> Vec2:
        sx = sum(v[0] for v in self.vertices)
        sy = sum(v[1] for v in self.vertices)
        n = len(self.vertices)
        return (sx / n, sy / n)

    def transformed(self, pose: Pose2) -> list[Vec2]:
        c = math.cos(pose.yaw)
        s = math.sin(pose.yaw)
        return [(pose.x + c * x - s * y, pose.y + s * x + c * y)
                for x, y in self.vertices]

    def contains(self, p: Vec2) -> bool:
        verts = self.vertices
        n = len(verts)
        for i in range(n):
            a = verts[i]
            b = verts[(i + 1) % n]
            if cross2((b[0] - a[0], b[1] - a[1]), (p[0] - a[0], p[1] - a[1])) < 0.0:
                return False
        return True


def convex_hull(points) -> list[Vec2]:
    """2D convex hull, counter-clockwise (Andrew's monotone chain)."""
    pts = sorted(set((float(x), float(y)) for x, y in points))
    if len(pts) < 3:
        raise DegenerateGeometry("hull needs at least 3 distinct points")

    def build(seq):
        out = []
        for p in seq:
            while len(out) >= 2 and cross2(
                    (out[-1][0] - out[-2][0], out[-1][1] - out[-2][1]),
                    (p[0] - out[-1][0], p[1] - out[-1][1])) <= 0.0:
                out.pop()
            out.append(p)
        return out

    lower = build(pts)
    upper = build(reversed(pts))
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateGeometry("projected points are collinear")
    return hull


def collision_polygon_from_mesh(vertices3d, z_min: float, z_max: float) -> ConvexPolygon:
    """Planar collision footprint of a 3D vertex cloud.

    Keeps vertices with z in [z_min, z_max], projects to the xy plane,
    and hulls the result.
    """
    band = [(v[0], v[1]) for v in vertices3d if z_min <= v[2] <= z_max]
    if len(band) < 3:
        raise DegenerateGeometry("fewer than 3 vertices inside the z band")
    return ConvexPolygon(convex_hull(band))


@dataclass
class RigidBody2D:
    """Chassis or block state advanced by the fixed-step integrator."""

    pose: Pose2 = field(default_factory=Pose2)
    vx: float = 0.0
    vy: float = 0.0
    omega: float = 0.0
    mass: float = 1.0
    izz: float = 1.0
    com_local: Vec2 = (0.0, 0.0)
    shape: ConvexPolygon = field(default_factory=lambda: ConvexPolygon.box(0.5, 0.5))
    is_static: bool = False
    friction: float = 0.5
    name: str = ""
    fx_acc: float = 0.0
    fy_acc: float = 0.0
    torque_acc: float = 0.0

    def __post_init__(self):
        if not self.is_static:
            if self.mass <= 0.0:
                raise ValueError("dynamic body needs mass > 0")
            if self.izz <= 0.0:
                raise ValueError("dynamic body needs izz > 0")

    @property
    def inv_mass(self) -> float:
        return 0.0 if self.is_static else 1.0 / self.mass

    @property
    def inv_izz(self) -> float:
        return 0.0 if self.is_static else 1.0 / self.izz

    def com_world(self) -> Vec2:
        return self.pose.transform(self.com_local)

    def world_vertices(self) -> list[Vec2]:
        return self.shape.transformed(self.pose)

    def aabb(self):
        verts = self.world_vertices()
        xs = [v[0] for v in verts]
        ys = [v[1] for v in verts]
        return (min(xs), min(ys), max(xs), max(ys))

    def apply_force_at(self, force: Vec2, point_local: Vec2) -> None:
        """Accumulate a body-frame force acting at a body-frame point."""
        fw = rotate_z(force, self.pose.yaw)
        pw = self.pose.transform(point_local)
        cw = self.com_world()
        self.fx_acc += fw[0]
        self.fy_acc += fw[1]
        self.torque_acc += cross2((pw[0] - cw[0], pw[1] - cw[1]), fw)

    def velocity_at(self, point_world: Vec2) -> Vec2:
        cw = self.com_world()
        rx = point_world[0] - cw[0]
        ry = point_world[1] - cw[1]
        return (self.vx - self.omega * ry, self.vy + self.omega * rx)


def apply_force_at(body: RigidBody2D, force: Vec2, point_local: Vec2) -> RigidBody2D:
    body.apply_force_at(force, point_local)
    return body


def step(bodies, dt: float):
    """Semi-implicit Euler: velocities first, then poses; accumulators
    cleared; yaw re-wrapped."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    for b in bodies:
        if not b.is_static:
            b.vx += b.fx_acc * b.inv_mass * dt
            b.vy += b.fy_acc * b.inv_mass * dt
            b.omega += b.torque_acc * b.inv_izz * dt
            b.pose.x += b.vx * dt
            b.pose.y += b.vy * dt
            b.pose.yaw = wrap_pi(b.pose.yaw + b.omega * dt)
        b.fx_acc = 0.0
        b.fy_acc = 0.0
        b.torque_acc = 0.0
    return bodies


@dataclass
class Contact:
    body_a: int
    body_b: int
    point: Vec2
    normal: Vec2      # unit, from a toward b
    depth: float


def _project(verts, axis) -> tuple[float, float]:
    lo = hi = dot2(verts[0], axis)
    for v in verts[1:]:
        d = dot2(v, axis)
        if d < lo:
            lo = d
        elif d > hi:
            hi = d
    return lo, hi


def _sat_contact(verts_a, verts_b):
    """Minimum-penetration axis over both polygons' edge normals.

    Returns (normal a->b, depth, owner) or None when separated; owner
    is 0 when the reference face belongs to a, 1 when to b.
    """
    best_depth = math.inf
    best_axis = None
    best_owner = 0
    for owner, verts in ((0, verts_a), (1, verts_b)):
        n = len(verts)
        for i in range(n):
            ax, ay = verts[i]
            bx, by = verts[(i + 1) % n]
            ex, ey = bx - ax, by - ay
            ln = math.hypot(ex, ey)
            if ln == 0.0:
                continue
            axis = (ey / ln, -ex / ln)  # outward normal of a CCW edge
            lo_a, hi_a = _project(verts_a, axis)
            lo_b, hi_b = _project(verts_b, axis)
            overlap = min(hi_a, hi_b) - max(lo_a, lo_b)
            if overlap < 0.0:
                return None
            if overlap < best_depth:
                best_depth = overlap
                best_axis = axis
                best_owner = owner
    return best_axis, best_depth, best_owner


def _face_index(verts, normal) -> int:
    """Edge whose outward normal lines up best with `normal`."""
    n = len(verts)
    best = 0
    best_dot = -math.inf
    for i in range(n):
        ax, ay = verts[i]
        bx, by = verts[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        ln = math.hypot(ex, ey)
        if ln == 0.0:
            continue
        d = (ey * normal[0] - ex * normal[1]) / ln
        if d > best_dot:
            best_dot = d
            best = i
    return best


def _clip_below(points, normal, offset):
    """Part of a segment with dot(p, normal) <= offset."""
    out = []
    d = [dot2(p, normal) - offset for p in points]
    for i, p in enumerate(points):
        if d[i] <= 0.0:
            out.append(p)
    if len(points) == 2 and d[0] * d[1] < 0.0:
        t = d[0] / (d[0] - d[1])
        p1, p2 = points
        out.append((p1[0] + t * (p2[0] - p1[0]), p1[1] + t * (p2[1] - p1[1])))
    return out


def _contact_point(ref_verts, inc_verts, ref_normal) -> Vec2:
    """One representative contact location: the incident face clipped to
    the reference face's extent, averaged over the penetrating part.

    Averaging keeps a flat face-on-face hit centered so it transfers no
    spurious spin; a corner hit collapses to the corner.
    """
    i = _face_index(ref_verts, ref_normal)
    r1 = ref_verts[i]
    r2 = ref_verts[(i + 1) % len(ref_verts)]
    j = _face_index(inc_verts, (-ref_normal[0], -ref_normal[1]))
    points = [inc_verts[j], inc_verts[(j + 1) % len(inc_verts)]]

    tx, ty = r2[0] - r1[0], r2[1] - r1[1]
    ln = math.hypot(tx, ty)
    if ln > 0.0:
        tangent = (tx / ln, ty / ln)
        clipped = _clip_below(points, (-tangent[0], -tangent[1]),
                              -dot2(r1, tangent))
        if clipped:
            points = clipped
        clipped = _clip_below(points, tangent, dot2(r2, tangent))
        if clipped:
            points = clipped

    face_offset = dot2(r1, ref_normal)
    behind = [p for p in points
              if dot2(p, ref_normal) - face_offset <= 1e-9]
    if behind:
        points = behind
    n = len(points)
    return (sum(p[0] for p in points) / n, sum(p[1] for p in points) / n)


def detect(bodies) -> list[Contact]:
    """One contact per overlapping dynamic pair, deepest-point manifold.

    Pairs of static bodies are skipped, and touching shapes within the
    contact slop produce no contact.
    """
    boxes = []
    for i, b in enumerate(bodies):
        boxes.append((b.aabb(), i))
    boxes.sort(key=lambda e: e[0][0])

    contacts = []
    n = len(boxes)
    for i in range(n):
        (ax0, ay0, ax1, ay1), ia = boxes[i]
        for j in range(i + 1, n):
            (bx0, by0, bx1, by1), ib = boxes[j]
            if bx0 > ax1:
                break
            if by0 > ay1 or ay0 > by1:
                continue
            a = bodies[ia]
            b = bodies[ib]
            if a.is_static and b.is_static:
                continue
            verts_a = a.world_vertices()
            verts_b = b.world_vertices()
            hit = _sat_contact(verts_a, verts_b)
            if hit is None:
                continue
            axis, depth, owner = hit
            if depth <= CONTACT_SLOP:
                continue
            ca = a.com_world()
            cb = b.com_world()
            if dot2(axis, (cb[0] - ca[0], cb[1] - ca[1])) < 0.0:
                axis = (-axis[0], -axis[1])
            if owner == 0:
                point = _contact_point(verts_a, verts_b, axis)
            else:
                point = _contact_point(verts_b, verts_a,
                                       (-axis[0], -axis[1]))
            contacts.append(Contact(ia, ib, point, axis, depth))
    return contacts


def resolve(contacts, bodies, dt: float):
    """Sequential impulses, restitution 0, Coulomb friction, then a
    positional pass removing a fraction of the remaining penetration."""
    if not contacts:
        return bodies

    work = []
    for c in contacts:
        a = bodies[c.body_a]
        b = bodies[c.body_b]
        ca = a.com_world()
        cb = b.com_world()
        ra = (c.point[0] - ca[0], c.point[1] - ca[1])
        rb = (c.point[0] - cb[0], c.point[1] - cb[1])
        nrm = c.normal
        tan = (-nrm[1], nrm[0])
        ran = cross2(ra, nrm)
        rbn = cross2(rb, nrm)
        k_n = a.inv_mass + b.inv_mass + ran * ran * a.inv_izz + rbn * rbn * b.inv_izz
        rat = cross2(ra, tan)
        rbt = cross2(rb, tan)
        k_t = a.inv_mass + b.inv_mass + rat * rat * a.inv_izz + rbt * rbt * b.inv_izz
        mu = math.sqrt(a.friction * b.friction)
        work.append([c, a, b, ra, rb, nrm, tan, k_n, k_t, mu, 0.0, 0.0])

    for _ in range(SOLVER_ITERATIONS):
        for w in work:
            c, a, b, ra, rb, nrm, tan, k_n, k_t, mu = w[:10]
            rel = (b.vx - rb[1] * b.omega - (a.vx - ra[1] * a.omega),
                   b.vy + rb[0] * b.omega - (a.vy + ra[0] * a.omega))
            vn = dot2(rel, nrm)
            if k_n > 0.0:
                dj = -vn / k_n
                j_new = max(w[10] + dj, 0.0)
                dj = j_new - w[10]
                w[10] = j_new
                _apply_impulse(a, b, ra, rb, (nrm[0] * dj, nrm[1] * dj))

            rel = (b.vx - rb[1] * b.omega - (a.vx - ra[1] * a.omega),
                   b.vy + rb[0] * b.omega - (a.vy + ra[0] * a.omega))
            vt = dot2(rel, tan)
            if k_t > 0.0:
                djt = -vt / k_t
                max_f = mu * w[10]
                jt_new = max(-max_f, min(max_f, w[11] + djt))
                djt = jt_new - w[11]
                w[11] = jt_new
                _apply_impulse(a, b, ra, rb, (tan[0] * djt, tan[1] * djt))

    for w in work:
        c, a, b = w[0], w[1], w[2]
        nrm = w[5]
        inv_sum = a.inv_mass + b.inv_mass
        if inv_sum == 0.0:
            continue
        corr = POSITION_CORRECTION * max(c.depth - CONTACT_SLOP, 0.0) / inv_sum
        a.pose.x -= corr * a.inv_mass * nrm[0]
        a.pose.y -= corr * a.inv_mass * nrm[1]
        b.pose.x += corr * b.inv_mass * nrm[0]
        b.pose.y += corr * b.inv_mass * nrm[1]
    return bodies


def _apply_impulse(a, b, ra, rb, impulse):
    a.vx -= impulse[0] * a.inv_mass
    a.vy -= impulse[1] * a.inv_mass
    a.omega -= cross2(ra, impulse) * a.inv_izz
    b.vx += impulse[0] * b.inv_mass
    b.vy += impulse[1] * b.inv_mass
    b.omega += cross2(rb, impulse) * b.inv_izz
