"""Fulcrum-constrained instrument kinematics.

The trainee never commands the tip directly: the control space is the five
trocar joint coordinates (pitch, yaw, roll, insertion, jaw), so the shaft
passes through the port by construction and the motion inversion at the
fulcrum falls out of the geometry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .geometry import Capsule, Pose, Quat, Vec3
from .scene import Trocar

# joint ranges
PITCH_YAW_LIMIT = 1.2          # rad
INSERTION_MIN = 0.01           # m
INSERTION_MAX = 0.30           # m

# per-tick command clamps; chosen so a misjudged move stays recoverable at 60 Hz
RATE_ANGLE = 0.05              # rad/tick on pitch, yaw, roll
RATE_INSERTION = 0.005         # m/tick
RATE_JAW = 0.1                 # jaw fraction/tick

SHAFT_RADIUS = 0.003           # m
TIP_RADIUS = 0.003             # m
JAW_LENGTH = 0.01              # m
JAW_RADIUS = 0.002             # m
JAW_HALF_ANGLE = 0.25          # rad per side at jaw = 1


class UnknownTrocar(KeyError):
    pass


class NoNeedle(Exception):
    pass


@dataclass(frozen=True)
class Needle:
    radius: float
    arc_span: float = math.pi
    frame: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("needle radius must be positive")
        if not (0 < self.arc_span < 2 * math.pi):
            raise ValueError("needle arc_span must lie in (0, 2*pi)")


@dataclass(frozen=True)
class ControlDelta:
    d_pitch: float = 0.0
    d_yaw: float = 0.0
    d_roll: float = 0.0
    d_insertion: float = 0.0
    d_jaw: float = 0.0

    def __add__(self, other: "ControlDelta") -> "ControlDelta":
        return ControlDelta(
            self.d_pitch + other.d_pitch,
            self.d_yaw + other.d_yaw,
            self.d_roll + other.d_roll,
            self.d_insertion + other.d_insertion,
            self.d_jaw + other.d_jaw,
        )


@dataclass(frozen=True)
class ToolState:
    id: str
    instrument_class: str
    trocar_id: str
    pitch: float = 0.0
    yaw: float = 0.0
    roll: float = 0.0
    insertion: float = INSERTION_MIN
    jaw: float = 0.0
    held_needle: Needle | None = None


def _clamp(v: float, lo: float, hi: float) -> float:
    return lo if v < lo else hi if v > hi else v


def apply_control(state: ToolState, delta: ControlDelta) -> ToolState:
    """One control step: rate-limit the requested deltas, integrate, clamp
    to joint ranges. Never rejects; out-of-range requests saturate."""
    dp = _clamp(delta.d_pitch, -RATE_ANGLE, RATE_ANGLE)
    dy = _clamp(delta.d_yaw, -RATE_ANGLE, RATE_ANGLE)
    dr = _clamp(delta.d_roll, -RATE_ANGLE, RATE_ANGLE)
    di = _clamp(delta.d_insertion, -RATE_INSERTION, RATE_INSERTION)
    dj = _clamp(delta.d_jaw, -RATE_JAW, RATE_JAW)
    return replace(
        state,
        pitch=_clamp(state.pitch + dp, -PITCH_YAW_LIMIT, PITCH_YAW_LIMIT),
        yaw=_clamp(state.yaw + dy, -PITCH_YAW_LIMIT, PITCH_YAW_LIMIT),
        roll=state.roll + dr,
        insertion=_clamp(state.insertion + di, INSERTION_MIN, INSERTION_MAX),
        jaw=_clamp(state.jaw + dj, 0.0, 1.0),
    )


def joint_axes(rest_axis: Vec3) -> tuple[Vec3, Vec3]:
    """(pitch_axis, yaw_axis): the two world-fixed axes orthogonal to the
    rest shaft direction that pitch and yaw rotate about."""
    ref = Vec3(1.0, 0.0, 0.0)
    if abs(rest_axis.dot(ref)) > 0.99:
        ref = Vec3(0.0, 1.0, 0.0)
    pitch_axis = ref.cross(rest_axis).normalized()
    yaw_axis = rest_axis.cross(pitch_axis)
    return pitch_axis, yaw_axis


@dataclass(frozen=True)
class ToolGeometry:
    shaft: Capsule
    tip: Vec3
    tip_pose: Pose
    jaw_left: Capsule
    jaw_right: Capsule


def tool_geometry(state: ToolState, trocar: Trocar) -> ToolGeometry:
    """Derive shaft/tip/jaw geometry from the joint state.

    Shaft direction is rest_axis rotated first by pitch, then by yaw, each
    about a fixed world axis; the tip sits `insertion` along it from the
    port. Exterior handle motion therefore maps to opposite-signed tip
    motion through the fixed fulcrum.
    """
    if trocar.id != state.trocar_id:
        raise UnknownTrocar(f"tool {state.id} mounted on {state.trocar_id}, got {trocar.id}")
    pitch_axis, yaw_axis = joint_axes(trocar.rest_axis)
    q_pitch = Quat.from_axis_angle(pitch_axis, state.pitch)
    q_yaw = Quat.from_axis_angle(yaw_axis, state.yaw)
    q_roll = Quat.from_axis_angle(trocar.rest_axis, state.roll)
    orient = q_yaw * q_pitch * q_roll
    direction = (q_yaw * q_pitch).rotate(trocar.rest_axis)

    tip = trocar.point + direction * state.insertion
    shaft = Capsule(trocar.point, tip, SHAFT_RADIUS)

    hinge = orient.rotate(pitch_axis)
    half = state.jaw * JAW_HALF_ANGLE
    jaws = []
    for sign in (1.0, -1.0):
        jd = Quat.from_axis_angle(hinge, sign * half).rotate(direction)
        jaws.append(Capsule(tip, tip + jd * JAW_LENGTH, JAW_RADIUS))

    return ToolGeometry(shaft=shaft, tip=tip, tip_pose=Pose(tip, orient),
                        jaw_left=jaws[0], jaw_right=jaws[1])


@dataclass(frozen=True)
class NeedleCircle:
    """World-frame circle the held needle lies on."""
    center: Vec3
    e1: Vec3               # in-plane basis, arc parameter zero
    e2: Vec3
    plane_normal: Vec3
    radius: float
    arc_span: float

    def point_at(self, theta: float) -> Vec3:
        return (self.center + self.e1 * (self.radius * math.cos(theta))
                + self.e2 * (self.radius * math.sin(theta)))


def needle_world_circle(state: ToolState, trocar: Trocar) -> NeedleCircle:
    if state.held_needle is None:
        raise NoNeedle(f"tool {state.id} holds no needle")
    needle = state.held_needle
    frame = tool_geometry(state, trocar).tip_pose.compose(needle.frame)
    return NeedleCircle(
        center=frame.position,
        e1=frame.orientation.rotate(Vec3(1, 0, 0)),
        e2=frame.orientation.rotate(Vec3(0, 1, 0)),
        plane_normal=frame.orientation.rotate(Vec3(0, 0, 1)),
        radius=needle.radius,
        arc_span=needle.arc_span,
    )


def needle_tip_curve(state: ToolState, trocar: Trocar, samples: int) -> list[Vec3]:
    """Uniform-by-angle polyline along the held needle's arc, world frame.
    The arc spans [-arc_span/2, +arc_span/2] around the needle frame's +X."""
    if samples < 2:
        raise ValueError("need at least 2 samples")
    circle = needle_world_circle(state, trocar)
    half = 0.5 * circle.arc_span
    return [circle.point_at(-half + circle.arc_span * i / (samples - 1))
            for i in range(samples)]
