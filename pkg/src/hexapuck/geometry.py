"""Rigid Stewart-platform kinematics and the servo transmission model.

The platform is commanded in the end-effector frame: a (roll, pitch) pair at a
fixed hover height is converted to six strut lengths by rigid inverse
kinematics, and each length to a servo angle through an affine transmission.
Yaw and in-plane translation are never commanded, which reduces the control
dimensionality from six to two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometryError, InvalidInputError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class HsaParams:
    """Affine angle-to-length transmission of one motorized strut.

    ``length = nominal_length + extension_rate * angle`` with the servo angle
    limited to ``[min_angle, max_angle]``.
    """

    nominal_length: float = 0.136    # m, freshly printed actuator
    extension_rate: float = 0.0123   # m per radian of servo rotation
    min_angle: float = -TWO_PI
    max_angle: float = TWO_PI

    def __post_init__(self):
        if not (self.extension_rate > 0.0):
            raise InvalidInputError("extension_rate must be positive")
        if not (self.min_angle < self.max_angle):
            raise InvalidInputError("min_angle must be below max_angle")
        if self.min_length <= 0.0:
            raise InvalidInputError("reachable length interval must be positive")

    @property
    def min_length(self) -> float:
        return self.nominal_length + self.extension_rate * self.min_angle

    @property
    def max_length(self) -> float:
        return self.nominal_length + self.extension_rate * self.max_angle


@dataclass(frozen=True)
class PlatformPose:
    """Top-plate pose relative to the base: intrinsic x-y-z Euler angles plus translation."""

    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class PlatformGeometry:
    """Anchor coordinates of the six struts plus plate dimensions.

    ``top_anchors`` and ``base_anchors`` are 3x6 matrices, one column per
    strut, expressed in the top-plate and base frames respectively.
    """

    top_anchors: np.ndarray
    base_anchors: np.ndarray
    nominal_height: float = 0.13
    plate_inradius: float = 0.24 * math.sqrt(3.0) / 2.0  # hexagon side 0.24 m

    def __post_init__(self):
        top = np.asarray(self.top_anchors, dtype=float)
        base = np.asarray(self.base_anchors, dtype=float)
        if top.shape != (3, 6) or base.shape != (3, 6):
            raise InvalidInputError("anchor matrices must be 3x6 (one column per strut)")
        if not (np.isfinite(top).all() and np.isfinite(base).all()):
            raise InvalidInputError("anchor coordinates must be finite")
        if not (self.nominal_height > 0.0 and self.plate_inradius > 0.0):
            raise InvalidInputError("nominal_height and plate_inradius must be positive")
        object.__setattr__(self, "top_anchors", top)
        object.__setattr__(self, "base_anchors", base)
        lengths = inverse_kinematics(self.nominal_pose(), self)
        if not (np.isfinite(lengths).all() and (lengths > 0.0).all()):
            raise DegenerateGeometryError("nominal pose yields degenerate strut lengths")

    def nominal_pose(self) -> PlatformPose:
        return PlatformPose(translation=(0.0, 0.0, self.nominal_height))


def pair_angles(separation: float, phase: float) -> np.ndarray:
    """Six anchor azimuths: pairs straddling three axes 120 degrees apart."""
    centers = phase + TWO_PI / 3.0 * np.arange(3)
    return np.repeat(centers, 2) + np.tile([-0.5 * separation, 0.5 * separation], 3)


def hexapod_geometry(
    base_radius: float = 0.12,
    top_radius: float = 0.12,
    base_pairing: float = 0.6,
    top_pairing: float = 0.3,
    phase: float = 0.0,
    nominal_height: float = 0.13,
    plate_side: float = 0.24,
) -> PlatformGeometry:
    """Symmetric 6-6 anchor layout on two circles.

    Anchor pairs sit on three axes 120 degrees apart with configurable pair
    separations; the layout is mirror-symmetric about the x axis, which the
    kinematics tests rely on.
    """
    def ring(radius, separation):
        az = pair_angles(separation, phase)
        return np.vstack([radius * np.cos(az), radius * np.sin(az), np.zeros(6)])

    return PlatformGeometry(
        top_anchors=ring(top_radius, top_pairing),
        base_anchors=ring(base_radius, base_pairing),
        nominal_height=nominal_height,
        plate_inradius=plate_side * math.sqrt(3.0) / 2.0,
    )


MIRROR_PERMUTATION = np.array([1, 0, 5, 4, 3, 2])
"""Strut relabeling under the y -> -y reflection of `hexapod_geometry` layouts."""


def rotation_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Intrinsic x-y-z Euler rotation: R = Rx(roll) @ Ry(pitch) @ Rz(yaw)."""
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    return rx @ ry @ rz


def inverse_kinematics(pose: PlatformPose, geo: PlatformGeometry) -> np.ndarray:
    """Strut lengths realizing a top-plate pose.

    Each length is the Euclidean norm of ``R @ p_i + t - b_i`` where ``p_i``
    and ``b_i`` are the top and base anchors of strut i.
    """
    components = (pose.roll, pose.pitch, pose.yaw, *pose.translation)
    if not all(math.isfinite(c) for c in components):
        raise InvalidInputError(f"non-finite pose components: {components}")
    r = rotation_matrix(pose.roll, pose.pitch, pose.yaw)
    t = np.asarray(pose.translation, dtype=float)
    diff = r @ geo.top_anchors + t[:, None] - geo.base_anchors
    lengths = np.linalg.norm(diff, axis=0)
    if (lengths < 1e-12).any():
        raise DegenerateGeometryError("zero-length strut: pose collapses an anchor pair")
    return lengths


def length_to_angle(length: float, hsa: HsaParams) -> tuple[float, bool]:
    """Servo angle realizing a strut length, clamped to the servo limits.

    Returns ``(angle, saturated)``; ``saturated`` is True when the requested
    length fell outside the reachable interval and the angle was clamped.
    """
    angle = (length - hsa.nominal_length) / hsa.extension_rate
    clamped = min(max(angle, hsa.min_angle), hsa.max_angle)
    return clamped, clamped != angle


def angle_to_length(angle: float, hsa: HsaParams) -> float:
    """Inverse of `length_to_angle` on the reachable interval."""
    clamped = min(max(angle, hsa.min_angle), hsa.max_angle)
    return hsa.nominal_length + hsa.extension_rate * clamped


@dataclass(frozen=True)
class StrutCommands:
    angles: np.ndarray            # (6,) servo angles, radians
    saturated: np.ndarray = field(default_factory=lambda: np.zeros(6, dtype=bool))


def tilt_to_strut_commands(
    roll: float,
    pitch: float,
    geo: PlatformGeometry,
    hsas: tuple[HsaParams, ...],
) -> StrutCommands:
    """Two-DoF command: (roll, pitch) at the hover height to six servo angles.

    Yaw is held at zero and the translation at ``(0, 0, nominal_height)``;
    this is the reduced command interface the learning agents act through.
    """
    pose = PlatformPose(roll=roll, pitch=pitch, translation=(0.0, 0.0, geo.nominal_height))
    lengths = inverse_kinematics(pose, geo)
    angles = np.empty(6)
    saturated = np.empty(6, dtype=bool)
    for i in range(6):
        angles[i], saturated[i] = length_to_angle(lengths[i], hsas[i])
    return StrutCommands(angles=angles, saturated=saturated)
