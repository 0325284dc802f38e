"""Visual feedback: color writes, screen texts and 3D guidance overlays.

`evaluate_rules` is the pure per-tick rule table; `FeedbackEngine` wraps it
with the stateful parts (edge-triggered emission, color restoration after a
contact ends, trajectory trails, text lifetimes). Guidance overlays encode
the per-task corrective geometry: view cones, corridors, cutting planes,
needle arcs and markers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .annotations import TaskAnnotation
from .contact import UNSAFE_DEPTH
from .geometry import Vec3
from .instrument import ToolState, tool_geometry
from .interaction import InteractionTuple
from .scene import RGB, Scene, set_object_color

MSG_CORRECT = "Correct move"
MSG_CORRECT_OP = "Correct operation"
MSG_WRONG = "Wrong for touching {cls}!"
MSG_UNSAFE = "Unsafe depth"
MESSAGE_SET = frozenset({MSG_CORRECT, MSG_CORRECT_OP, MSG_UNSAFE}) | frozenset(
    MSG_WRONG.format(cls=c) for c in
    ("gallbladder", "cystic_artery", "stomach", "liver", "peg", "block", "generic"))

RED: RGB = (1.0, 0.0, 0.0)
GREEN: RGB = (0.0, 1.0, 0.0)

# actions that count as doing the task's job on its intended target
VALID_ACTIONS = {
    "navigation": {"touch"},
    "manipulation": {"touch", "grasp", "pull"},
    "transfer": {"touch", "grasp", "release"},
    "cutting": {"touch", "cut"},
    "suturing": {"touch", "pierce"},
}

TRAIL_MAX_POINTS = 600       # 10 s at 60 Hz
TRAIL_DEDUP = 1e-5           # m
RESTORE_TICKS = 5


class InfeasibleArc(ValueError):
    """Entry/exit further apart than the needle diameter."""


# ---------------------------------------------------------------------------
# overlay geometry


@dataclass(frozen=True)
class ViewCone:
    apex: Vec3
    axis: Vec3
    half_angle: float


@dataclass(frozen=True)
class Corridor:
    start: Vec3
    end: Vec3
    radius: float


@dataclass(frozen=True)
class CuttingPlane:
    point: Vec3
    normal: Vec3
    extent: float


@dataclass(frozen=True)
class Arc:
    """Circular arc: p(t) = center + r*(cos(t)*e1 + sin(t)*e2) for t from
    start_angle to end_angle, where (e1, e2) = plane_basis(normal)."""
    center: Vec3
    normal: Vec3
    radius: float
    start_angle: float
    end_angle: float


@dataclass(frozen=True)
class Marker:
    position: Vec3
    label: str


@dataclass(frozen=True)
class Arrow:
    start: Vec3
    end: Vec3


OverlayGeometry = ViewCone | Corridor | CuttingPlane | Arc | Marker | Arrow


def plane_basis(normal: Vec3) -> tuple[Vec3, Vec3]:
    """Canonical right-handed in-plane basis, a pure function of the normal,
    so serialized arcs are reconstructible from their fields alone."""
    ref = Vec3(0, 0, 1) if abs(normal.z) < 0.9 else Vec3(1, 0, 0)
    e1 = normal.cross(ref).normalized()
    return e1, normal.cross(e1)


def arc_point(arc: Arc, theta: float) -> Vec3:
    e1, e2 = plane_basis(arc.normal)
    return (arc.center + e1 * (arc.radius * math.cos(theta))
            + e2 * (arc.radius * math.sin(theta)))


def solve_bite_arc(entry: Vec3, exit: Vec3, radius: float,
                   tissue_normal: Vec3) -> Arc:
    """Needle-radius circle through entry and exit whose sweep dives below
    the tissue surface.

    Of the two circle centers the one on the tissue-normal side is taken,
    and of the two arcs the one containing the circle's deepest point.
    """
    chord = exit - entry
    c = chord.norm()
    if c > 2.0 * radius:
        raise InfeasibleArc(
            f"entry/exit span {c:.6g} m exceeds needle diameter {2 * radius:.6g} m")
    if c < 1e-12:
        raise ValueError("entry and exit coincide; bite plane undefined")
    c_hat = chord * (1.0 / c)
    normal_in_plane = tissue_normal - c_hat * c_hat.dot(tissue_normal)
    if normal_in_plane.norm() < 1e-9:
        raise ValueError("tissue normal parallel to the entry-exit chord")
    w_hat = normal_in_plane.normalized()
    m_hat = c_hat.cross(w_hat)           # bite plane normal

    mid = (entry + exit) * 0.5
    h = math.sqrt(max(radius * radius - 0.25 * c * c, 0.0))
    center = mid + w_hat * h

    e1, e2 = plane_basis(m_hat)

    def angle_of(p: Vec3) -> float:
        rel = p - center
        return math.atan2(rel.dot(e2), rel.dot(e1))

    theta_entry = angle_of(entry)
    theta_exit = angle_of(exit)
    deep = center - w_hat * radius
    theta_deep = angle_of(deep)

    ccw_span = (theta_exit - theta_entry) % (2.0 * math.pi)
    deep_off = (theta_deep - theta_entry) % (2.0 * math.pi)
    if deep_off <= ccw_span:
        end = theta_entry + ccw_span
    else:
        end = theta_entry - ((2.0 * math.pi) - ccw_span)
    return Arc(center=center, normal=m_hat, radius=radius,
               start_angle=theta_entry, end_angle=end)


# ---------------------------------------------------------------------------
# feedback actions


@dataclass(frozen=True)
class FeedbackAction:
    kind: str                              # color_write | screen_text | trajectory_line | overlay
    tick: int
    target_object: str | None = None
    color: RGB | None = None
    text: str | None = None
    overlay: OverlayGeometry | None = None
    points: tuple | None = None            # trajectory polyline

    def __post_init__(self):
        if self.kind == "color_write" and (self.target_object is None or self.color is None):
            raise ValueError("color_write needs target_object and color")
        if self.kind == "screen_text" and self.text is None:
            raise ValueError("screen_text needs text")
        if self.kind == "overlay" and self.overlay is None:
            raise ValueError("overlay action needs geometry")


def evaluate_rules(tup: InteractionTuple, task_ctx: TaskAnnotation | None,
                   depth_class: str | None, scene: Scene,
                   tick: int) -> list[FeedbackAction]:
    """Per-tick rule table, fixed priority: hazard/wrong-target red, then
    intended-target green, then the depth warning. All matching actions are
    emitted; no contact means no color action."""
    actions: list[FeedbackAction] = []
    obj_id = tup.tissue_object_id
    if task_ctx is not None and obj_id is not None and scene.has_object(obj_id):
        role = scene.object(obj_id).role
        is_hazard = obj_id in task_ctx.hazard_ids or role == "hazard"
        is_intended = obj_id in task_ctx.target_ids
        wrong_target = role == "target" and not is_intended
        if is_hazard or wrong_target:
            actions.append(FeedbackAction(
                kind="color_write", tick=tick, target_object=obj_id, color=RED))
            actions.append(FeedbackAction(
                kind="screen_text", tick=tick,
                text=MSG_WRONG.format(cls=tup.tissue_class)))
        elif is_intended and tup.action in VALID_ACTIONS[task_ctx.task]:
            actions.append(FeedbackAction(
                kind="color_write", tick=tick, target_object=obj_id, color=GREEN))
            actions.append(FeedbackAction(
                kind="screen_text", tick=tick, text=MSG_CORRECT))
    if depth_class == UNSAFE_DEPTH:
        actions.append(FeedbackAction(kind="screen_text", tick=tick, text=MSG_UNSAFE))
    return actions


def update_trajectory(trail: list[Vec3], tip: Vec3,
                      max_points: int = TRAIL_MAX_POINTS) -> list[Vec3]:
    """Append the tip to the trail ring: stationary tips dedup, the oldest
    point drops past the cap."""
    if max_points < 2:
        raise ValueError("max_points must be at least 2")
    if trail and trail[-1].distance_to(tip) < TRAIL_DEDUP:
        return trail
    out = trail + [tip]
    if len(out) > max_points:
        out = out[len(out) - max_points:]
    return out


def make_guidance(task_ctx: TaskAnnotation, scene: Scene,
                  tools: list[ToolState]) -> list[OverlayGeometry]:
    """Corrective 3D geometry for the active task."""
    overlays: list[OverlayGeometry] = []
    tips = [tool_geometry(t, scene.trocar(t.trocar_id)).tip
            for t in sorted(tools, key=lambda t: t.id)]

    if task_ctx.task == "navigation":
        spec = task_ctx.navigation
        target = scene.object(task_ctx.target_ids[0])
        center = target.pose.position
        apex = scene.camera.pose.position
        overlays.append(ViewCone(apex=apex, axis=(center - apex).normalized(),
                                 half_angle=spec.view_half_angle))
        for tip in tips:
            overlays.append(Arrow(start=tip, end=center))

    elif task_ctx.task == "manipulation":
        spec = task_ctx.manipulation
        overlays.append(Marker(position=spec.grasp_point, label="grasp"))
        overlays.append(Arrow(start=spec.grasp_point,
                              end=spec.grasp_point + spec.traction_dir * 0.03))

    elif task_ctx.task == "transfer":
        spec = task_ctx.transfer
        start = tips[0] if tips else spec.handoff_center
        overlays.append(Corridor(start=start, end=spec.receiver_pose.position,
                                 radius=spec.corridor_radius))
        overlays.append(Marker(position=spec.receiver_pose.position, label="ghost"))

    elif task_ctx.task == "cutting":
        spec = task_ctx.cutting
        reach = max((p.distance_to(spec.plane_point) for p in spec.path),
                    default=0.0)
        overlays.append(CuttingPlane(point=spec.plane_point, normal=spec.plane_normal,
                                     extent=reach + spec.corridor_radius))
        for a, b in zip(spec.path, spec.path[1:]):
            overlays.append(Corridor(start=a, end=b, radius=spec.corridor_radius))

    elif task_ctx.task == "suturing":
        spec = task_ctx.suturing
        overlays.append(Marker(position=spec.entry, label="entry"))
        overlays.append(Marker(position=spec.exit, label="exit"))
        overlays.append(solve_bite_arc(spec.entry, spec.exit, spec.needle_radius,
                                       spec.tissue_normal))
    return overlays


# ---------------------------------------------------------------------------
# stateful engine


@dataclass
class ActiveText:
    text: str
    expires: int


class FeedbackEngine:
    """Applies rule output to the scene with edge-triggered emission.

    A color write is emitted when an object's tint changes, and the base
    color is restored exactly once after the object goes unreferenced for
    `restore_ticks` ticks. Screen texts are emitted on their rising edge and
    stay active for `text_ttl` ticks. Trails accumulate per tool.
    """

    def __init__(self, scene: Scene, task_ctx: TaskAnnotation | None,
                 restore_ticks: int = RESTORE_TICKS, text_ttl: int = 60,
                 trail_max_points: int = TRAIL_MAX_POINTS):
        self.scene = scene
        self.task_ctx = task_ctx
        self.restore_ticks = restore_ticks
        self.text_ttl = text_ttl
        self.trail_max_points = trail_max_points
        self.trails: dict[str, list[Vec3]] = {}
        self._tint: dict[str, RGB] = {}
        self._last_ref: dict[str, int] = {}
        self._texts: dict[str, ActiveText] = {}

    def process(self, filtered: dict[str, InteractionTuple],
                depth_class: dict[str, str | None],
                tips: dict[str, Vec3], tick: int) -> list[FeedbackAction]:
        """One tick of feedback; returns the edge-triggered actions."""
        emitted: list[FeedbackAction] = []
        for tool_id in sorted(filtered):
            tup = filtered[tool_id]
            if tup.tissue_object_id is not None:
                self._last_ref[tup.tissue_object_id] = tick
            for action in evaluate_rules(tup, self.task_ctx,
                                         depth_class.get(tool_id), self.scene, tick):
                if action.kind == "color_write":
                    if self._tint.get(action.target_object) != action.color:
                        self._tint[action.target_object] = action.color
                        set_object_color(self.scene, action.target_object, action.color)
                        emitted.append(action)
                elif action.kind == "screen_text":
                    live = self._texts.get(action.text)
                    if live is None or live.expires < tick:
                        emitted.append(action)
                    self._texts[action.text] = ActiveText(action.text, tick + self.text_ttl)

        for obj_id in sorted(self._tint):
            if tick - self._last_ref.get(obj_id, tick) >= self.restore_ticks:
                base = self.scene.object(obj_id).base_color
                set_object_color(self.scene, obj_id, base)
                del self._tint[obj_id]
                emitted.append(FeedbackAction(
                    kind="color_write", tick=tick, target_object=obj_id, color=base))

        for tool_id in sorted(tips):
            trail = self.trails.get(tool_id, [])
            self.trails[tool_id] = update_trajectory(trail, tips[tool_id],
                                                     self.trail_max_points)
        return emitted

    def active_texts(self, tick: int) -> list[tuple[str, int]]:
        """(text, remaining ticks) for every live screen text."""
        out = []
        for live in self._texts.values():
            if live.expires >= tick:
                out.append((live.text, live.expires - tick))
        return sorted(out)


# ---------------------------------------------------------------------------
# serialization (wire + log payloads)


def overlay_to_dict(ov: OverlayGeometry) -> dict:
    def v(x: Vec3):
        return [x.x, x.y, x.z]

    if isinstance(ov, ViewCone):
        return {"type": "view_cone", "apex": v(ov.apex), "axis": v(ov.axis),
                "half_angle": ov.half_angle}
    if isinstance(ov, Corridor):
        return {"type": "corridor", "start": v(ov.start), "end": v(ov.end),
                "radius": ov.radius}
    if isinstance(ov, CuttingPlane):
        return {"type": "cutting_plane", "point": v(ov.point),
                "normal": v(ov.normal), "extent": ov.extent}
    if isinstance(ov, Arc):
        return {"type": "arc", "center": v(ov.center), "normal": v(ov.normal),
                "radius": ov.radius, "start_angle": ov.start_angle,
                "end_angle": ov.end_angle}
    if isinstance(ov, Marker):
        return {"type": "marker", "position": v(ov.position), "label": ov.label}
    if isinstance(ov, Arrow):
        return {"type": "arrow", "start": v(ov.start), "end": v(ov.end)}
    raise TypeError(f"unknown overlay {ov!r}")


def action_to_dict(action: FeedbackAction) -> dict:
    out: dict = {"kind": action.kind}
    if action.target_object is not None:
        out["object"] = action.target_object
    if action.color is not None:
        out["color"] = list(action.color)
    if action.text is not None:
        out["text"] = action.text
    if action.overlay is not None:
        out["overlay"] = overlay_to_dict(action.overlay)
    if action.points is not None:
        out["points"] = [[p.x, p.y, p.z] for p in action.points]
    return out
