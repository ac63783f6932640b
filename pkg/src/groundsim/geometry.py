"""Poses, planar rotations, and rigid point-set alignment.

Conventions: world +x right, +y up, +z up; yaw counter-clockwise,
wrapped to (-pi, pi].  Quaternions are (w, x, y, z) with unit norm and
w >= 0 so equal rotations compare bitwise-equal.  Pitch is nose-up
positive, roll is right-side-down positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import DegenerateGeometry

TWO_PI = 2.0 * math.pi

Vec2 = tuple[float, float]
Vec3 = tuple[float, float, float]
Quat = tuple[float, float, float, float]


def wrap_pi(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    r = math.fmod(angle + math.pi, TWO_PI)
    if r <= 0.0:
        r += TWO_PI
    return r - math.pi


def rotate_z(v: Vec2, theta: float) -> Vec2:
    """Rotate a planar vector counter-clockwise by theta."""
    c = math.cos(theta)
    s = math.sin(theta)
    return (c * v[0] - s * v[1], s * v[0] + c * v[1])


@dataclass
class Pose2:
    """Planar rigid transform: position plus heading."""

    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        self.yaw = wrap_pi(self.yaw)

    def transform(self, p: Vec2) -> Vec2:
        """Map a point from this frame into the parent frame."""
        px, py = rotate_z(p, self.yaw)
        return (self.x + px, self.y + py)

    def inverse_transform(self, p: Vec2) -> Vec2:
        """Map a parent-frame point into this frame."""
        return rotate_z((p[0] - self.x, p[1] - self.y), -self.yaw)

    def copy(self) -> "Pose2":
        return Pose2(self.x, self.y, self.yaw)


# --- quaternion helpers -----------------------------------------------------

def quat_normalize(q: Quat) -> Quat:
    """Unit-normalize and canonicalize sign (w >= 0)."""
    n = math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    if n == 0.0:
        raise DegenerateGeometry("zero quaternion")
    s = 1.0 / n
    if q[0] < 0.0:
        s = -s
    return (q[0] * s, q[1] * s, q[2] * s, q[3] * s)


def quat_multiply(a: Quat, b: Quat) -> Quat:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def quat_conjugate(q: Quat) -> Quat:
    return (q[0], -q[1], -q[2], -q[3])


def quat_from_axis_angle(axis: Vec3, angle: float) -> Quat:
    n = math.sqrt(axis[0] ** 2 + axis[1] ** 2 + axis[2] ** 2)
    if n == 0.0:
        raise DegenerateGeometry("zero rotation axis")
    h = 0.5 * angle
    s = math.sin(h) / n
    return quat_normalize((math.cos(h), axis[0] * s, axis[1] * s, axis[2] * s))


def quat_from_yaw(yaw: float) -> Quat:
    return quat_from_axis_angle((0.0, 0.0, 1.0), yaw)


def quat_to_matrix(q: Quat) -> list[list[float]]:
    """3x3 rotation matrix (row-major) for a unit quaternion."""
    w, x, y, z = q
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    return [
        [1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)],
        [2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)],
        [2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)],
    ]


def quat_from_matrix(m) -> Quat:
    """Quaternion for a proper rotation matrix (Shepperd's method)."""
    tr = m[0][0] + m[1][1] + m[2][2]
    if tr > 0.0:
        s = math.sqrt(tr + 1.0) * 2.0
        q = (0.25 * s, (m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s,
             (m[1][0] - m[0][1]) / s)
    elif m[0][0] > m[1][1] and m[0][0] > m[2][2]:
        s = math.sqrt(1.0 + m[0][0] - m[1][1] - m[2][2]) * 2.0
        q = ((m[2][1] - m[1][2]) / s, 0.25 * s, (m[0][1] + m[1][0]) / s,
             (m[0][2] + m[2][0]) / s)
    elif m[1][1] > m[2][2]:
        s = math.sqrt(1.0 + m[1][1] - m[0][0] - m[2][2]) * 2.0
        q = ((m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, 0.25 * s,
             (m[1][2] + m[2][1]) / s)
    else:
        s = math.sqrt(1.0 + m[2][2] - m[0][0] - m[1][1]) * 2.0
        q = ((m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s,
             (m[1][2] + m[2][1]) / s, 0.25 * s)
    return quat_normalize(q)


def quat_rotate(q: Quat, v: Vec3) -> Vec3:
    m = quat_to_matrix(q)
    return (
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    )


def euler_zyx(q: Quat) -> Vec3:
    """(yaw, pitch, roll) with pitch nose-up positive, z-up world."""
    m = quat_to_matrix(q)
    yaw = math.atan2(m[1][0], m[0][0])
    pitch = math.asin(max(-1.0, min(1.0, m[2][0])))
    roll = atan2_or_zero(m[2][1], m[2][2])
    return (yaw, pitch, roll)


def atan2_or_zero(y: float, x: float) -> float:
    if y == 0.0 and x == 0.0:
        return 0.0
    return math.atan2(y, x)


@dataclass(frozen=True)
class Pose3:
    """Rigid transform in 3D: translation plus unit quaternion."""

    t: Vec3 = (0.0, 0.0, 0.0)
    q: Quat = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        n = math.sqrt(sum(c * c for c in self.q))
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"quaternion norm {n} departs from 1 by more than 1e-9")
        object.__setattr__(self, "q", quat_normalize(self.q))
        object.__setattr__(self, "t", tuple(float(c) for c in self.t))

    @staticmethod
    def identity() -> "Pose3":
        return Pose3()

    def transform(self, p: Vec3) -> Vec3:
        r = quat_rotate(self.q, p)
        return (r[0] + self.t[0], r[1] + self.t[1], r[2] + self.t[2])


def compose(a: Pose3, b: Pose3) -> Pose3:
    """Transform that applies b first, then a."""
    bt = quat_rotate(a.q, b.t)
    return Pose3(
        (a.t[0] + bt[0], a.t[1] + bt[1], a.t[2] + bt[2]),
        quat_multiply(a.q, b.q),
    )


def inverse(p: Pose3) -> Pose3:
    qc = quat_conjugate(p.q)
    ti = quat_rotate(qc, p.t)
    return Pose3((-ti[0], -ti[1], -ti[2]), quat_normalize(qc))


# --- symmetric eigen solver -------------------------------------------------

def jacobi_eigen_symmetric(a: list[list[float]], tol: float = 1e-12,
                           max_sweeps: int = 100):
    """Eigen-decomposition of a small symmetric matrix by cyclic Jacobi.

    Returns (eigenvalues, eigenvectors) with eigenvectors[k] the unit
    vector for eigenvalues[k], unsorted.  Convergence: off-diagonal
    Frobenius norm below tol relative to the matrix norm, capped at
    max_sweeps sweeps.
    """
    n = len(a)
    m = [row[:] for row in a]
    v = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    scale = max(math.sqrt(sum(m[i][j] ** 2 for i in range(n) for j in range(n))), 1e-300)

    for _ in range(max_sweeps):
        off = math.sqrt(sum(m[i][j] ** 2 for i in range(n) for j in range(n) if i != j))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if m[p][q] == 0.0:
                    continue
                theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    mkp, mkq = m[k][p], m[k][q]
                    m[k][p] = c * mkp - s * mkq
                    m[k][q] = s * mkp + c * mkq
                for k in range(n):
                    mpk, mqk = m[p][k], m[q][k]
                    m[p][k] = c * mpk - s * mqk
                    m[q][k] = s * mpk + c * mqk
                for k in range(n):
                    vkp, vkq = v[k][p], v[k][q]
                    v[k][p] = c * vkp - s * vkq
                    v[k][q] = s * vkp + c * vkq

    eigenvalues = [m[i][i] for i in range(n)]
    eigenvectors = [[v[i][k] for i in range(n)] for k in range(n)]
    return eigenvalues, eigenvectors


# --- absolute orientation ---------------------------------------------------

@dataclass(frozen=True)
class PointPairSet:
    """Correspondences (local point, world point) for a rigid fit."""

    pairs: tuple = field(default_factory=tuple)

    def __post_init__(self):
        pairs = tuple((tuple(map(float, l)), tuple(map(float, w)))
                      for l, w in self.pairs)
        if len(pairs) < 3:
            raise DegenerateGeometry("need at least 3 point pairs")
        object.__setattr__(self, "pairs", pairs)


def _check_not_collinear(locals_centered):
    # Collinear local points leave the attitude underdetermined: the
    # second singular value of the centered local matrix vanishes.
    n = len(locals_centered)
    scatter = [[sum(locals_centered[k][i] * locals_centered[k][j] for k in range(n))
                for j in range(3)] for i in range(3)]
    eigenvalues, _ = jacobi_eigen_symmetric(scatter)
    sv = sorted((math.sqrt(max(e, 0.0)) for e in eigenvalues), reverse=True)
    if sv[1] < 1e-9 * sv[0]:
        raise DegenerateGeometry("local points are collinear; fit is underdetermined")


def horn_fit(pairs) -> tuple[Pose3, float]:
    """Least-squares rigid transform local -> world via the quaternion
    eigenproblem.

    Accepts a PointPairSet or an iterable of (local, world) 3-vectors.
    Returns (pose, rms_residual) where pose minimizes
    sum ||world_i - (R local_i + t)||^2.

    Raises DegenerateGeometry when the local points are collinear.
    """
    if not isinstance(pairs, PointPairSet):
        pairs = PointPairSet(tuple(pairs))
    pts = pairs.pairs
    n = len(pts)

    lc = [sum(p[0][i] for p in pts) / n for i in range(3)]
    wc = [sum(p[1][i] for p in pts) / n for i in range(3)]
    lcs = [tuple(p[0][i] - lc[i] for i in range(3)) for p in pts]
    wcs = [tuple(p[1][i] - wc[i] for i in range(3)) for p in pts]

    _check_not_collinear(lcs)

    # Cross-covariance S[i][j] = sum local_i * world_j.
    s = [[sum(lcs[k][i] * wcs[k][j] for k in range(n)) for j in range(3)]
         for i in range(3)]
    sxx, sxy, sxz = s[0]
    syx, syy, syz = s[1]
    szx, szy, szz = s[2]
    nmat = [
        [sxx + syy + szz, syz - szy, szx - sxz, sxy - syx],
        [syz - szy, sxx - syy - szz, sxy + syx, szx + sxz],
        [szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy],
        [sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz],
    ]

    eigenvalues, eigenvectors = jacobi_eigen_symmetric(nmat)
    best = max(range(4), key=lambda k: eigenvalues[k])
    q = quat_normalize(tuple(eigenvectors[best]))

    rot = quat_to_matrix(q)
    t = tuple(wc[i] - sum(rot[i][j] * lc[j] for j in range(3)) for i in range(3))
    pose = Pose3(t, q)

    sq_sum = 0.0
    for l, w in pts:
        f = pose.transform(l)
        sq_sum += (w[0] - f[0]) ** 2 + (w[1] - f[1]) ** 2 + (w[2] - f[2]) ** 2
    return pose, math.sqrt(sq_sum / n)
