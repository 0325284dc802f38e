"""Per-task target annotations attached to a scene.

Each annotation names the intended targets and hazards plus the numeric
bands the evaluators score against. All tolerances live here, in data, so a
scene file fully determines what counts as success.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .geometry import Pose, Quat, Vec3

TASKS = ("navigation", "manipulation", "transfer", "cutting", "suturing")


class AnnotationError(ValueError):
    """Annotation block fails validation; message names the field."""


@dataclass
class NavigationSpec:
    view_half_angle: float
    distance_band: tuple[float, float]
    pass_fraction: float = 0.5


@dataclass
class ManipulationSpec:
    grasp_point: Vec3
    traction_dir: Vec3
    max_angle_err: float = 0.35
    max_grasp_offset: float = 0.01


@dataclass
class TransferSpec:
    handoff_center: Vec3
    corridor_radius: float
    receiver_pose: Pose


@dataclass
class CuttingSpec:
    plane_point: Vec3
    plane_normal: Vec3
    path: list[Vec3]
    corridor_radius: float


@dataclass
class SuturingSpec:
    entry: Vec3
    exit: Vec3
    needle_radius: float
    tissue_normal: Vec3
    depth_band: tuple[float, float]
    max_angle_err: float = 0.35
    marker_tolerance: float = 0.003


@dataclass
class TaskAnnotation:
    task: str
    target_ids: list[str] = field(default_factory=list)
    hazard_ids: list[str] = field(default_factory=list)
    navigation: NavigationSpec | None = None
    manipulation: ManipulationSpec | None = None
    transfer: TransferSpec | None = None
    cutting: CuttingSpec | None = None
    suturing: SuturingSpec | None = None

    def variant(self):
        return getattr(self, self.task)


def _vec(raw, where) -> Vec3:
    if not (isinstance(raw, (list, tuple)) and len(raw) == 3):
        raise AnnotationError(f"{where}: expected [x, y, z]")
    return Vec3(float(raw[0]), float(raw[1]), float(raw[2]))


def _unit(raw, where) -> Vec3:
    v = _vec(raw, where)
    n = v.norm()
    if abs(n - 1.0) > 1e-6:
        raise AnnotationError(f"{where}: must be a unit vector (norm {n:.6g})")
    return v * (1.0 / n)


def _band(raw, where) -> tuple[float, float]:
    if not (isinstance(raw, (list, tuple)) and len(raw) == 2):
        raise AnnotationError(f"{where}: expected [lo, hi]")
    lo, hi = float(raw[0]), float(raw[1])
    if lo > hi:
        raise AnnotationError(f"{where}: band not ordered")
    return lo, hi


def annotation_to_dict(ann: TaskAnnotation) -> dict:
    """Canonical JSON form; parse_annotation(annotation_to_dict(a)) == a."""
    out: dict = {"task": ann.task, "target_ids": list(ann.target_ids),
                 "hazard_ids": list(ann.hazard_ids)}
    if ann.task == "navigation":
        s = ann.navigation
        out["navigation"] = {"view_half_angle": s.view_half_angle,
                             "distance_band": list(s.distance_band),
                             "pass_fraction": s.pass_fraction}
    elif ann.task == "manipulation":
        s = ann.manipulation
        out["manipulation"] = {"grasp_point": list(s.grasp_point.as_tuple()),
                               "traction_dir": list(s.traction_dir.as_tuple()),
                               "max_angle_err": s.max_angle_err,
                               "max_grasp_offset": s.max_grasp_offset}
    elif ann.task == "transfer":
        s = ann.transfer
        q = s.receiver_pose.orientation
        out["transfer"] = {"handoff_center": list(s.handoff_center.as_tuple()),
                           "corridor_radius": s.corridor_radius,
                           "receiver_pose": {
                               "pos": list(s.receiver_pose.position.as_tuple()),
                               "quat": [q.w, q.x, q.y, q.z]}}
    elif ann.task == "cutting":
        s = ann.cutting
        out["cutting"] = {"plane_point": list(s.plane_point.as_tuple()),
                          "plane_normal": list(s.plane_normal.as_tuple()),
                          "path": [list(p.as_tuple()) for p in s.path],
                          "corridor_radius": s.corridor_radius}
    elif ann.task == "suturing":
        s = ann.suturing
        out["suturing"] = {"entry": list(s.entry.as_tuple()),
                           "exit": list(s.exit.as_tuple()),
                           "needle_radius": s.needle_radius,
                           "tissue_normal": list(s.tissue_normal.as_tuple()),
                           "depth_band": list(s.depth_band),
                           "max_angle_err": s.max_angle_err,
                           "marker_tolerance": s.marker_tolerance}
    return out


def parse_annotation(name: str, raw: dict) -> TaskAnnotation:
    task = raw.get("task")
    if task not in TASKS:
        raise AnnotationError(f"annotations.{name}.task: unknown task {task!r}")
    ann = TaskAnnotation(
        task=task,
        target_ids=list(raw.get("target_ids", [])),
        hazard_ids=list(raw.get("hazard_ids", [])),
    )
    present = [t for t in TASKS if t in raw]
    if present != [task]:
        raise AnnotationError(
            f"annotations.{name}: exactly the {task!r} block must be present, found {present}")
    blk = raw[task]
    w = f"annotations.{name}.{task}"
    if task == "navigation":
        ann.navigation = NavigationSpec(
            view_half_angle=float(blk["view_half_angle"]),
            distance_band=_band(blk["distance_band"], f"{w}.distance_band"),
            pass_fraction=float(blk.get("pass_fraction", 0.5)),
        )
    elif task == "manipulation":
        ann.manipulation = ManipulationSpec(
            grasp_point=_vec(blk["grasp_point"], f"{w}.grasp_point"),
            traction_dir=_unit(blk["traction_dir"], f"{w}.traction_dir"),
            max_angle_err=float(blk.get("max_angle_err", 0.35)),
            max_grasp_offset=float(blk.get("max_grasp_offset", 0.01)),
        )
    elif task == "transfer":
        pose_raw = blk["receiver_pose"]
        ann.transfer = TransferSpec(
            handoff_center=_vec(blk["handoff_center"], f"{w}.handoff_center"),
            corridor_radius=float(blk["corridor_radius"]),
            receiver_pose=Pose(
                _vec(pose_raw["pos"], f"{w}.receiver_pose.pos"),
                Quat(*[float(c) for c in pose_raw["quat"]]).normalized(),
            ),
        )
    elif task == "cutting":
        path = [_vec(p, f"{w}.path[{i}]") for i, p in enumerate(blk["path"])]
        if len(path) < 1:
            raise AnnotationError(f"{w}.path: must have at least one point")
        ann.cutting = CuttingSpec(
            plane_point=_vec(blk["plane_point"], f"{w}.plane_point"),
            plane_normal=_unit(blk["plane_normal"], f"{w}.plane_normal"),
            path=path,
            corridor_radius=float(blk["corridor_radius"]),
        )
    elif task == "suturing":
        ann.suturing = SuturingSpec(
            entry=_vec(blk["entry"], f"{w}.entry"),
            exit=_vec(blk["exit"], f"{w}.exit"),
            needle_radius=float(blk["needle_radius"]),
            tissue_normal=_unit(blk["tissue_normal"], f"{w}.tissue_normal"),
            depth_band=_band(blk["depth_band"], f"{w}.depth_band"),
            max_angle_err=float(blk.get("max_angle_err", 0.35)),
            marker_tolerance=float(blk.get("marker_tolerance", 0.003)),
        )
        if ann.suturing.needle_radius <= 0:
            raise AnnotationError(f"{w}.needle_radius: must be positive")
    return ann
