"""Pose algebra, quaternions, eigen solver, and rigid point-set fits."""

import math
import random

import numpy as np
import pytest

from groundsim.errors import DegenerateGeometry
from groundsim.geometry import (Pose2, Pose3, compose, euler_zyx, horn_fit,
                                inverse, jacobi_eigen_symmetric,
                                quat_from_axis_angle, quat_from_matrix,
                                quat_from_yaw, quat_multiply, quat_normalize,
                                quat_rotate, quat_to_matrix, rotate_z, wrap_pi)


def test_wrap_pi_half_open_interval():
    assert wrap_pi(math.pi) == pytest.approx(math.pi)
    assert wrap_pi(-math.pi) == pytest.approx(math.pi)
    assert wrap_pi(3.0 * math.pi / 2.0) == pytest.approx(-math.pi / 2.0)
    assert wrap_pi(0.0) == 0.0

    rng = random.Random(11)
    for _ in range(2000):
        a = rng.uniform(-50.0, 50.0)
        w = wrap_pi(a)
        assert -math.pi < w <= math.pi
        # wrapping preserves the direction the angle points at
        assert math.cos(w) == pytest.approx(math.cos(a), abs=1e-9)
        assert math.sin(w) == pytest.approx(math.sin(a), abs=1e-9)


def test_rotate_z_matches_rotation_matrix():
    rng = random.Random(5)
    for _ in range(500):
        theta = rng.uniform(-7.0, 7.0)
        v = (rng.uniform(-3, 3), rng.uniform(-3, 3))
        c, s = math.cos(theta), math.sin(theta)
        expect = (c * v[0] - s * v[1], s * v[0] + c * v[1])
        got = rotate_z(v, theta)
        assert got[0] == pytest.approx(expect[0], abs=1e-12)
        assert got[1] == pytest.approx(expect[1], abs=1e-12)


def test_pose2_transform_and_inverse():
    p = Pose2(1.0, 2.0, math.pi / 2.0)
    fx, fy = p.transform((1.0, 0.0))
    assert fx == pytest.approx(1.0)
    assert fy == pytest.approx(3.0)

    rng = random.Random(3)
    for _ in range(300):
        pose = Pose2(rng.uniform(-5, 5), rng.uniform(-5, 5),
                     rng.uniform(-9, 9))
        pt = (rng.uniform(-5, 5), rng.uniform(-5, 5))
        back = pose.inverse_transform(pose.transform(pt))
        assert back[0] == pytest.approx(pt[0], abs=1e-12)
        assert back[1] == pytest.approx(pt[1], abs=1e-12)


def test_pose2_wraps_yaw():
    assert Pose2(0, 0, 3.0 * math.pi).yaw == pytest.approx(math.pi)


def test_quat_canonical_sign():
    q = quat_normalize((-1.0, 0.0, 0.0, 0.0))
    assert q[0] == 1.0
    with pytest.raises(DegenerateGeometry):
        quat_normalize((0.0, 0.0, 0.0, 0.0))


def test_quat_rotation_basics():
    q = quat_from_axis_angle((0.0, 0.0, 1.0), math.pi / 2.0)
    v = quat_rotate(q, (1.0, 0.0, 0.0))
    assert v[0] == pytest.approx(0.0, abs=1e-12)
    assert v[1] == pytest.approx(1.0, abs=1e-12)
    assert v[2] == pytest.approx(0.0, abs=1e-12)


def _random_quat(rng):
    axis = (rng.gauss(0, 1), rng.gauss(0, 1), rng.gauss(0, 1))
    if max(abs(c) for c in axis) < 1e-6:
        axis = (1.0, 0.0, 0.0)
    return quat_from_axis_angle(axis, rng.uniform(-3.0, 3.0))


def test_quat_rotate_matches_rodrigues():
    # independent oracle: v' = v cos + (k x v) sin + k (k.v)(1 - cos)
    rng = random.Random(7)
    for _ in range(300):
        k = np.array([rng.gauss(0, 1) for _ in range(3)])
        k /= np.linalg.norm(k)
        angle = rng.uniform(-3.0, 3.0)
        v = np.array([rng.uniform(-2, 2) for _ in range(3)])
        expect = (v * math.cos(angle) + np.cross(k, v) * math.sin(angle)
                  + k * np.dot(k, v) * (1.0 - math.cos(angle)))
        got = quat_rotate(quat_from_axis_angle(tuple(k), angle), tuple(v))
        assert np.allclose(got, expect, atol=1e-12)


def test_quat_multiply_composes_rotations():
    rng = random.Random(13)
    for _ in range(200):
        qa = _random_quat(rng)
        qb = _random_quat(rng)
        v = (rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2))
        once = quat_rotate(quat_multiply(qa, qb), v)
        twice = quat_rotate(qa, quat_rotate(qb, v))
        assert np.allclose(once, twice, atol=1e-12)


def test_quat_matrix_round_trip():
    rng = random.Random(17)
    for _ in range(300):
        q = _random_quat(rng)
        back = quat_from_matrix(quat_to_matrix(q))
        assert np.allclose(back, q, atol=1e-9)


def test_euler_zyx_round_trip():
    rng = random.Random(19)
    for _ in range(300):
        yaw = rng.uniform(-3.0, 3.0)
        pitch = rng.uniform(-1.3, 1.3)
        roll = rng.uniform(-1.5, 1.5)
        # nose-up pitch is a negative rotation about +y
        q = quat_multiply(quat_from_yaw(yaw), quat_multiply(
            quat_from_axis_angle((0.0, 1.0, 0.0), -pitch),
            quat_from_axis_angle((1.0, 0.0, 0.0), roll)))
        got = euler_zyx(q)
        assert got[0] == pytest.approx(yaw, abs=1e-9)
        assert got[1] == pytest.approx(pitch, abs=1e-9)
        assert got[2] == pytest.approx(roll, abs=1e-9)


def test_euler_pitch_sign_is_nose_up():
    # body x axis tilted upward by 0.3 rad
    q = quat_from_axis_angle((0.0, 1.0, 0.0), -0.3)
    _yaw, pitch, _roll = euler_zyx(q)
    assert pitch == pytest.approx(0.3, abs=1e-12)
    x_axis = quat_rotate(q, (1.0, 0.0, 0.0))
    assert x_axis[2] > 0.0


def test_compose_and_inverse():
    rng = random.Random(23)
    for _ in range(200):
        a = Pose3((rng.uniform(-2, 2),) * 3, _random_quat(rng))
        b = Pose3((rng.uniform(-2, 2), rng.uniform(-2, 2),
                   rng.uniform(-2, 2)), _random_quat(rng))
        p = (rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2))
        assert np.allclose(compose(a, b).transform(p),
                           a.transform(b.transform(p)), atol=1e-12)
        ident = compose(a, inverse(a))
        assert np.allclose(ident.t, (0.0, 0.0, 0.0), atol=1e-12)
        assert np.allclose(ident.transform(p), p, atol=1e-12)


def test_pose3_rejects_unnormalized_quaternion():
    with pytest.raises(ValueError):
        Pose3((0, 0, 0), (2.0, 0.0, 0.0, 0.0))


def test_jacobi_matches_numpy_eigh():
    rng = np.random.default_rng(29)
    for n in (3, 4):
        for _ in range(100):
            m = rng.uniform(-5, 5, size=(n, n))
            sym = (m + m.T) / 2.0
            values, vectors = jacobi_eigen_symmetric(sym.tolist())
            assert np.allclose(sorted(values), np.linalg.eigvalsh(sym),
                               atol=1e-9)
            for lam, vec in zip(values, vectors):
                v = np.array(vec)
                assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-9)
                assert np.allclose(sym @ v, lam * v, atol=1e-8)


def _kabsch(local_pts, world_pts):
    """SVD-based rigid fit, the independent reference."""
    l_arr = np.asarray(local_pts, dtype=float)
    w_arr = np.asarray(world_pts, dtype=float)
    lc = l_arr.mean(axis=0)
    wc = w_arr.mean(axis=0)
    h = (l_arr - lc).T @ (w_arr - wc)
    u, _s, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return rot, wc - rot @ lc


def test_horn_fit_recovers_exact_transform():
    rng = random.Random(31)
    for _ in range(100):
        q = _random_quat(rng)
        t = (rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3))
        pose = Pose3(t, q)
        local_pts = [(rng.uniform(-2, 2), rng.uniform(-2, 2),
                      rng.uniform(-2, 2)) for _ in range(6)]
        pairs = [(p, pose.transform(p)) for p in local_pts]
        fit, rms = horn_fit(pairs)
        assert rms < 1e-9
        assert np.allclose(fit.t, t, atol=1e-8)
        assert np.allclose(quat_to_matrix(fit.q), quat_to_matrix(q),
                           atol=1e-8)


def test_horn_fit_matches_svd_reference_under_noise():
    rng = random.Random(37)
    for _ in range(50):
        q = _random_quat(rng)
        t = (rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2))
        pose = Pose3(t, q)
        local_pts = [(rng.uniform(-2, 2), rng.uniform(-2, 2),
                      rng.uniform(-2, 2)) for _ in range(8)]
        world_pts = []
        for p in local_pts:
            w = pose.transform(p)
            world_pts.append((w[0] + rng.gauss(0, 0.01),
                              w[1] + rng.gauss(0, 0.01),
                              w[2] + rng.gauss(0, 0.01)))
        fit, rms = horn_fit(zip(local_pts, world_pts))
        rot_ref, t_ref = _kabsch(local_pts, world_pts)
        assert np.allclose(quat_to_matrix(fit.q), rot_ref, atol=1e-6)
        assert np.allclose(fit.t, t_ref, atol=1e-6)
        resid = [np.asarray(w) - (rot_ref @ np.asarray(p) + t_ref)
                 for p, w in zip(local_pts, world_pts)]
        rms_ref = math.sqrt(sum(float(r @ r) for r in resid) / len(resid))
        assert rms == pytest.approx(rms_ref, abs=1e-9)


def test_horn_fit_rejects_collinear_points():
    pairs = [((float(i), 0.0, 0.0), (float(i), 1.0, 0.0)) for i in range(5)]
    with pytest.raises(DegenerateGeometry):
        horn_fit(pairs)


def test_horn_fit_needs_three_pairs():
    with pytest.raises(DegenerateGeometry):
        horn_fit([((0, 0, 0), (0, 0, 0)), ((1, 0, 0), (1, 0, 0))])
