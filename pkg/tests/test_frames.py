import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fwaccel.frames import (AeroAngles, EulerAngles, FrameError, FrameVector, body_x_axis,
                            elementary_rotation, rot_body_to_velocity, rot_inertial_to_body,
                            rot_inertial_to_v2, rot_v2_to_body, to_frame, wrap_angle)

angle = st.floats(-math.pi, math.pi, exclude_min=True, exclude_max=True)
pitch = st.floats(-1.4, 1.4, allow_nan=False)
small = st.floats(-0.26, 0.26, allow_nan=False)
vec3 = st.lists(st.floats(-100, 100, allow_nan=False), min_size=3, max_size=3)


def assert_rotation(R):
    np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-9)
    assert abs(np.linalg.det(R) - 1.0) < 1e-9


def test_zero_angle_is_identity():
    for axis in "xyz":
        np.testing.assert_array_equal(elementary_rotation(axis, 0.0), np.eye(3))
    e = EulerAngles()
    for R in (rot_inertial_to_v2(e), rot_v2_to_body(e), rot_body_to_velocity(AeroAngles())):
        np.testing.assert_allclose(R, np.eye(3), atol=0)


def test_quarter_turn_about_x_carries_y_axis_to_z():
    # matrices re-express coordinates; the rotated frame's y-axis points along old z
    R = elementary_rotation("x", math.pi / 2)
    np.testing.assert_allclose(R.T @ [0, 1, 0], [0, 0, 1], atol=1e-15)
    np.testing.assert_allclose(R @ [0, 0, 1], [0, 1, 0], atol=1e-15)


def test_inertial_to_v2_matches_trig_expansion():
    th, psi = 0.1, 0.2
    ct, stt, cp, sp = math.cos(th), math.sin(th), math.cos(psi), math.sin(psi)
    expected = np.array([
        [ct * cp, ct * sp, -stt],
        [-sp, cp, 0.0],
        [stt * cp, stt * sp, ct],
    ])
    R = rot_inertial_to_v2(EulerAngles(0.0, th, psi))
    np.testing.assert_allclose(R, expected, atol=1e-15)
    np.testing.assert_allclose(elementary_rotation("y", th) @ elementary_rotation("z", psi), expected,
                               atol=1e-15)


def test_pure_yaw_east():
    R = rot_inertial_to_v2(EulerAngles(0.0, 0.0, math.pi / 2))
    # the v2 x-axis (nose direction) points east
    np.testing.assert_allclose(R.T @ [1, 0, 0], [0, 1, 0], atol=1e-15)
    # east in inertial coordinates reads as straight ahead in v2
    np.testing.assert_allclose(R @ [0, 1, 0], [1, 0, 0], atol=1e-15)


def test_roll_30_deg_down_axis():
    R = rot_v2_to_body(EulerAngles(math.pi / 6, 0.0, 0.0))
    np.testing.assert_allclose(R.T @ [0, 0, 1], [0, -0.5, math.sqrt(3) / 2], atol=1e-12)
    # body coordinates of the v2 down axis after a right roll
    np.testing.assert_allclose(R @ [0, 0, 1], [0, 0.5, math.sqrt(3) / 2], atol=1e-12)


def test_body_to_velocity_alpha_rotates_about_y():
    a = 0.05
    R = rot_body_to_velocity(AeroAngles(alpha=a))
    # velocity lies below the nose by alpha: in body axes (cos a, 0, sin a)
    np.testing.assert_allclose(R.T @ [1, 0, 0], [math.cos(a), 0.0, math.sin(a)], atol=1e-15)
    np.testing.assert_allclose(R @ [math.cos(a), 0.0, math.sin(a)], [1, 0, 0], atol=1e-15)


def test_nonfinite_angle_rejected():
    with pytest.raises(ValueError):
        elementary_rotation("x", float("nan"))
    with pytest.raises(FrameError):
        elementary_rotation("w", 0.1)


def test_pitch_singularity_rejected():
    with pytest.raises(FrameError):
        rot_inertial_to_v2(EulerAngles(0.0, math.radians(85.0), 0.0))


@given(axis=st.sampled_from("xyz"), a=angle)
def test_elementary_rotation_orthonormal(axis, a):
    assert_rotation(elementary_rotation(axis, a))


@given(r=angle, p=pitch, y=angle, al=small, be=small)
def test_chain_orthonormal(r, p, y, al, be):
    e = EulerAngles(r, p, y)
    R = rot_body_to_velocity(AeroAngles(al, be)) @ rot_inertial_to_body(e)
    for M in (rot_inertial_to_v2(e), rot_v2_to_body(e), R):
        assert_rotation(M)
    np.testing.assert_allclose(np.linalg.inv(rot_v2_to_body(e)), rot_v2_to_body(e).T, atol=1e-12)


@given(r=angle, p=pitch, y=angle, v=vec3, frame=st.sampled_from(["v2", "body", "velocity"]))
def test_round_trip(r, p, y, v, frame):
    e = EulerAngles(r, p, y)
    aero = AeroAngles(0.03, -0.02)
    fv = FrameVector(v, "inertial")
    back = to_frame(to_frame(fv, frame, e, aero), "inertial", e, aero)
    np.testing.assert_allclose(back.vec, v, atol=1e-9)


@given(p=pitch, y=angle, r=angle)
def test_body_x_axis_matches_rotation(p, y, r):
    R = rot_inertial_to_body(EulerAngles(r, p, y))
    np.testing.assert_allclose(R[0], body_x_axis(p, y), atol=1e-12)


def test_frame_tag_mismatch_rejected():
    a = FrameVector([1, 0, 0], "inertial")
    b = FrameVector([1, 0, 0], "body")
    with pytest.raises(FrameError):
        a + b
    with pytest.raises(FrameError):
        a.dot(b)
    with pytest.raises(FrameError):
        b.expect("inertial")
    with pytest.raises(FrameError):
        FrameVector([0, 0, 0], "wind")
    assert (a + a).vec.tolist() == [2, 0, 0]


@given(st.floats(-50, 50, allow_nan=False))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)
