"""
Coordinate frames and elementary rotations.

Frames used throughout the package:

    inertial  North-East-Down, +z down, gravity (0, 0, +g)
    v2        inertial rotated by yaw then pitch
    body      v2 rotated by roll
    velocity  body rotated by angle of attack and sideslip

Matrices act on column vectors. ``R_a_to_b @ x_a`` gives the coordinates of
the same physical vector in frame ``b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

GRAVITY = 9.81
MAX_PITCH = math.radians(85.0)

Frame = Literal["inertial", "v2", "body", "velocity"]
FRAMES: tuple[str, ...] = ("inertial", "v2", "body", "velocity")


class FrameError(ValueError):
    """Invalid angle input or a frame-tag mismatch."""


def _finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise FrameError(f"non-finite angle: {v!r}")


def wrap_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    w = math.fmod(a + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


@dataclass(frozen=True)
class EulerAngles:
    """Roll, pitch, yaw in radians (3-2-1 sequence)."""

    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0

    def __post_init__(self) -> None:
        _finite(self.roll, self.pitch, self.yaw)

    def validate(self) -> "EulerAngles":
        """Reject attitudes near the pitch singularity."""
        if abs(self.pitch) >= MAX_PITCH:
            raise FrameError(f"pitch {math.degrees(self.pitch):.1f} deg outside +-85 deg")
        if abs(self.roll) >= math.pi:
            raise FrameError(f"roll {self.roll!r} outside (-pi, pi)")
        return self

    def as_array(self) -> np.ndarray:
        return np.array([self.roll, self.pitch, self.yaw])


@dataclass(frozen=True)
class AeroAngles:
    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self) -> None:
        _finite(self.alpha, self.beta)


@dataclass(frozen=True, eq=False)
class FrameVector:
    """A 3-vector tagged with the frame its components are expressed in.

    Arithmetic between vectors in different frames raises ``FrameError``
    instead of silently mixing coordinates.
    """

    vec: np.ndarray
    frame: str

    def __post_init__(self) -> None:
        if self.frame not in FRAMES:
            raise FrameError(f"unknown frame {self.frame!r}")
        v = np.asarray(self.vec, dtype=float).reshape(3)
        object.__setattr__(self, "vec", v)

    def _check(self, other: "FrameVector") -> None:
        if not isinstance(other, FrameVector):
            raise TypeError(f"expected FrameVector, got {type(other).__name__}")
        if other.frame != self.frame:
            raise FrameError(f"frame mismatch: {self.frame} vs {other.frame}")

    def expect(self, frame: str) -> "FrameVector":
        if self.frame != frame:
            raise FrameError(f"expected a vector in {frame} frame, got {self.frame}")
        return self

    def __add__(self, other: "FrameVector") -> "FrameVector":
        self._check(other)
        return FrameVector(self.vec + other.vec, self.frame)

    def __sub__(self, other: "FrameVector") -> "FrameVector":
        self._check(other)
        return FrameVector(self.vec - other.vec, self.frame)

    def __neg__(self) -> "FrameVector":
        return FrameVector(-self.vec, self.frame)

    def __mul__(self, k: float) -> "FrameVector":
        return FrameVector(self.vec * float(k), self.frame)

    __rmul__ = __mul__

    def dot(self, other: "FrameVector") -> float:
        self._check(other)
        return float(self.vec @ other.vec)

    def norm(self) -> float:
        return float(np.linalg.norm(self.vec))

    def rotated(self, R: np.ndarray, frame: str) -> "FrameVector":
        """Re-express this vector in ``frame`` using ``R`` (self.frame -> frame)."""
        return FrameVector(R @ self.vec, frame)

    @property
    def x(self) -> float:
        return float(self.vec[0])

    @property
    def y(self) -> float:
        return float(self.vec[1])

    @property
    def z(self) -> float:
        return float(self.vec[2])

    def __repr__(self) -> str:
        return f"FrameVector({self.vec.tolist()}, {self.frame!r})"


def elementary_rotation(axis: str, angle: float) -> np.ndarray:
    """Frame (passive) rotation matrix about a coordinate axis.

    ``elementary_rotation(axis, a) @ x`` gives the coordinates of ``x`` in a
    frame rotated by ``a`` about ``axis``. The transpose is the active
    rotation: its columns are the rotated frame's axes in the old frame,
    e.g. ``elementary_rotation("x", pi/2).T @ (0, 1, 0) == (0, 0, 1)``.
    """
    _finite(angle)
    c, s = math.cos(angle), math.sin(angle)
    if axis == "x":
        return np.array([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])
    if axis == "y":
        return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])
    if axis == "z":
        return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
    raise FrameError(f"axis must be one of x, y, z, got {axis!r}")


def rot_inertial_to_v2(angles: EulerAngles) -> np.ndarray:
    angles.validate()
    return elementary_rotation("y", angles.pitch) @ elementary_rotation("z", angles.yaw)


def rot_v2_to_body(angles: EulerAngles) -> np.ndarray:
    angles.validate()
    return elementary_rotation("x", angles.roll)


def rot_inertial_to_body(angles: EulerAngles) -> np.ndarray:
    return rot_v2_to_body(angles) @ rot_inertial_to_v2(angles)


def rot_body_to_velocity(aero: AeroAngles) -> np.ndarray:
    return elementary_rotation("y", -aero.alpha) @ elementary_rotation("z", aero.beta)


def to_frame(v: FrameVector, frame: str, angles: EulerAngles,
             aero: AeroAngles | None = None) -> FrameVector:
    """Re-express ``v`` in ``frame`` along the inertial -> v2 -> body -> velocity chain."""
    order = {"inertial": 0, "v2": 1, "body": 2, "velocity": 3}
    aero = aero or AeroAngles()
    steps = [rot_inertial_to_v2(angles), rot_v2_to_body(angles), rot_body_to_velocity(aero)]
    i, j = order[v.frame], order[frame]
    R = np.eye(3)
    if j >= i:
        for M in steps[i:j]:
            R = M @ R
    else:
        for M in reversed(steps[j:i]):
            R = M.T @ R
    return FrameVector(R @ v.vec, frame)


def body_x_axis(pitch: float, yaw: float) -> np.ndarray:
    """Inertial components of the body x-axis (independent of roll)."""
    cp = math.cos(pitch)
    return np.array([cp * math.cos(yaw), cp * math.sin(yaw), -math.sin(pitch)])


def gravity_vector(g: float = GRAVITY) -> FrameVector:
    return FrameVector(np.array([0.0, 0.0, g]), "inertial")
