"""Quaternion and pose algebra, checked against scipy's Rotation as an
independent implementation."""

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.spatial.transform import Rotation

from teleop.geometry import (Pose, matrix_to_quat, orientation_error,
                             quat_conjugate, quat_from_axis_angle,
                             quat_from_yaw, quat_multiply, quat_rotate,
                             quat_to_matrix, quat_yaw, rotation_vector)


def random_quat(rng):
    q = rng.normal(size=4)
    return q / np.linalg.norm(q)


def scipy_rot(q):
    # scipy uses (x, y, z, w)
    return Rotation.from_quat([q[1], q[2], q[3], q[0]])


unit_quats = st.builds(
    lambda seed: random_quat(np.random.default_rng(seed)),
    st.integers(min_value=0, max_value=2**32 - 1))
vectors = st.builds(
    lambda seed: np.random.default_rng(seed).uniform(-2, 2, 3),
    st.integers(min_value=0, max_value=2**32 - 1))


@given(unit_quats, unit_quats)
def test_quat_multiply_matches_scipy(a, b):
    got = quat_multiply(a, b)
    want = scipy_rot(a) * scipy_rot(b)
    np.testing.assert_allclose(quat_to_matrix(got), want.as_matrix(), atol=1e-12)


@given(unit_quats, vectors)
def test_quat_rotate_matches_scipy(q, v):
    np.testing.assert_allclose(quat_rotate(q, v), scipy_rot(q).apply(v), atol=1e-12)


@given(unit_quats)
def test_quat_to_matrix_matches_scipy(q):
    np.testing.assert_allclose(quat_to_matrix(q), scipy_rot(q).as_matrix(), atol=1e-12)


@given(unit_quats)
def test_conjugate_inverts_rotation(q):
    v = np.array([0.3, -0.7, 1.1])
    np.testing.assert_allclose(quat_rotate(quat_conjugate(q), quat_rotate(q, v)),
                               v, atol=1e-12)


@given(unit_quats)
def test_matrix_quat_round_trip(q):
    back = matrix_to_quat(quat_to_matrix(q))
    # q and -q are the same rotation
    if np.dot(back, q) < 0:
        back = -back
    np.testing.assert_allclose(back, q, atol=1e-9)


@given(unit_quats)
def test_rotation_vector_matches_scipy(q):
    np.testing.assert_allclose(rotation_vector(q), scipy_rot(q).as_rotvec(),
                               atol=1e-9)


def test_axis_angle_basics():
    q = quat_from_axis_angle([0, 0, 1], np.pi / 2)
    np.testing.assert_allclose(quat_rotate(q, [1, 0, 0]), [0, 1, 0], atol=1e-12)
    np.testing.assert_allclose(quat_from_yaw(np.pi / 2), q, atol=1e-12)


@given(st.floats(min_value=-np.pi + 1e-6, max_value=np.pi - 1e-6))
def test_yaw_round_trip(yaw):
    assert quat_yaw(quat_from_yaw(yaw)) == pytest.approx(yaw, abs=1e-12)


@given(unit_quats, unit_quats)
def test_orientation_error_is_relative_rotvec(qc, qt):
    err = orientation_error(qc, qt)
    angle = np.linalg.norm(err)
    if angle < 1e-12:
        np.testing.assert_allclose(quat_to_matrix(qc), quat_to_matrix(qt), atol=1e-9)
        return
    # applying the error rotation to current should give target
    fixed = quat_multiply(quat_from_axis_angle(err / angle, angle), qc)
    np.testing.assert_allclose(quat_to_matrix(fixed), quat_to_matrix(qt), atol=1e-9)


def test_pose_normalizes_quaternion():
    p = Pose([0, 0, 0], [2.0, 0, 0, 0])
    assert abs(np.linalg.norm(p.orientation) - 1.0) < 1e-9


def test_pose_zero_quaternion_rejected():
    with pytest.raises(ValueError):
        Pose([0, 0, 0], [0, 0, 0, 0])


def test_pose_nonfinite_position_rejected():
    with pytest.raises(ValueError):
        Pose([np.nan, 0, 0], [1, 0, 0, 0])


@given(unit_quats, vectors)
def test_pose_list_round_trip(q, v):
    p = Pose(v, q)
    back = Pose.from_list(p.to_list())
    np.testing.assert_array_equal(back.position, p.position)
    np.testing.assert_allclose(back.orientation, p.orientation, atol=1e-12)


def test_pose_from_list_length_checked():
    with pytest.raises(ValueError):
        Pose.from_list([1, 2, 3])


@given(unit_quats, vectors, unit_quats, vectors)
def test_compose_matches_matrix_product(qa, va, qb, vb):
    a, b = Pose(va, qa), Pose(vb, qb)
    c = a.compose(b)
    Ra, Rb = quat_to_matrix(qa), quat_to_matrix(qb)
    np.testing.assert_allclose(quat_to_matrix(c.orientation), Ra @ Rb, atol=1e-12)
    np.testing.assert_allclose(c.position, va + Ra @ vb, atol=1e-12)


@given(unit_quats, vectors)
def test_inverse_composes_to_identity(q, v):
    p = Pose(v, q)
    ident = p.compose(p.inverse())
    np.testing.assert_allclose(ident.position, [0, 0, 0], atol=1e-9)
    np.testing.assert_allclose(np.abs(ident.orientation[0]), 1.0, atol=1e-9)


@given(unit_quats, vectors, vectors)
def test_transform_point_matches_compose(q, v, pt):
    p = Pose(v, q)
    np.testing.assert_allclose(p.transform_point(pt),
                               quat_to_matrix(q) @ pt + v, atol=1e-12)
