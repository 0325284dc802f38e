"""Static training scene: tissue objects, trocar ports, the endoscope
camera, task annotations and per-scene config overrides.

A scene is immutable after load except for object display colors, which the
feedback pipeline writes and resets. Meshes are transformed to world space
once at load time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry
from .annotations import AnnotationError, TaskAnnotation, parse_annotation
from .geometry import Camera, Pose, Quat, TriMesh, Vec3, fnv1a64

TISSUE_CLASSES = (
    "gallbladder", "cystic_artery", "stomach", "liver", "peg", "block", "generic",
)
ROLES = ("target", "hazard", "neutral")
INSTRUMENT_CLASSES = ("grasper", "scissors", "needle_driver", "hook")

RGB = tuple[float, float, float]


class ParseError(ValueError):
    """Scene file is not valid JSON or is missing required structure."""


class ValidationError(ValueError):
    """Scene parsed but a field is out of contract; message names it."""


class UnknownObject(KeyError):
    pass


@dataclass
class TissueObject:
    id: str
    tissue_class: str
    role: str
    mesh: TriMesh                      # local frame
    pose: Pose
    base_color: RGB
    current_color: RGB
    world_mesh: TriMesh = field(init=False, repr=False)
    aabb_lo: np.ndarray = field(init=False, repr=False)
    aabb_hi: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.world_mesh = self.mesh.transformed(self.pose)
        self.aabb_lo, self.aabb_hi = self.world_mesh.aabb()


@dataclass
class Trocar:
    id: str
    point: Vec3
    rest_axis: Vec3


@dataclass
class ToolSpec:
    """Which instrument sits in which port; optional rigidly held needle."""
    id: str
    instrument_class: str
    trocar_id: str
    needle: dict | None = None


@dataclass
class Scene:
    objects: list[TissueObject]
    trocars: list[Trocar]
    camera: Camera
    annotations: dict[str, TaskAnnotation]
    tool_specs: list[ToolSpec]
    config: dict
    source_hash: int
    raw: dict = field(default_factory=dict, repr=False)   # source document

    def __post_init__(self):
        self._by_id = {o.id: o for o in self.objects}
        self._trocar_by_id = {t.id: t for t in self.trocars}

    def object(self, object_id: str) -> TissueObject:
        try:
            return self._by_id[object_id]
        except KeyError:
            raise UnknownObject(object_id) from None

    def trocar(self, trocar_id: str) -> Trocar:
        return self._trocar_by_id[trocar_id]

    def has_object(self, object_id: str) -> bool:
        return object_id in self._by_id


def set_object_color(scene: Scene, object_id: str, color: RGB) -> None:
    obj = scene.object(object_id)
    obj.current_color = (float(color[0]), float(color[1]), float(color[2]))


def reset_colors(scene: Scene) -> None:
    for obj in scene.objects:
        obj.current_color = obj.base_color


def _require(raw: dict, key: str, where: str):
    if key not in raw:
        raise ParseError(f"{where}: missing required key {key!r}")
    return raw[key]


def _vec(raw, where) -> Vec3:
    if not (isinstance(raw, (list, tuple)) and len(raw) == 3):
        raise ValidationError(f"{where}: expected [x, y, z]")
    return Vec3(float(raw[0]), float(raw[1]), float(raw[2]))


def _pose(raw, where) -> Pose:
    pos = _vec(_require(raw, "pos", where), f"{where}.pos")
    quat_raw = _require(raw, "quat", where)
    if len(quat_raw) != 4:
        raise ValidationError(f"{where}.quat: expected [w, x, y, z]")
    q = Quat(*[float(c) for c in quat_raw])
    if abs(q.norm() - 1.0) > 1e-6:
        raise ValidationError(f"{where}.quat: not unit norm")
    return Pose(pos, q.normalized())


def _mesh(raw: dict, where: str, base_dir: Path) -> TriMesh:
    if "obj" in raw:
        path = base_dir / raw["obj"]
        if not path.exists():
            raise ValidationError(f"{where}.obj: mesh file not found: {path}")
        return geometry.load_obj(path)
    if "sphere" in raw:
        r = float(_require(raw["sphere"], "r", f"{where}.sphere"))
        if r <= 0:
            raise ValidationError(f"{where}.sphere.r: must be positive")
        return geometry.make_icosphere(r, 3)
    if "box" in raw:
        he = _vec(_require(raw["box"], "half_extents", f"{where}.box"),
                  f"{where}.box.half_extents")
        if min(he.x, he.y, he.z) <= 0:
            raise ValidationError(f"{where}.box.half_extents: must be positive")
        return geometry.make_box(he)
    if "capsule" in raw:
        c = raw["capsule"]
        return geometry.make_capsule_mesh(
            _vec(_require(c, "a", f"{where}.capsule"), f"{where}.capsule.a"),
            _vec(_require(c, "b", f"{where}.capsule"), f"{where}.capsule.b"),
            float(_require(c, "r", f"{where}.capsule")))
    raise ValidationError(f"{where}: mesh must be one of obj/sphere/box/capsule")


def load_scene_dict(raw: dict, base_dir: Path | None = None) -> Scene:
    base_dir = base_dir or Path(".")
    if not isinstance(raw, dict):
        raise ParseError("scene root must be a JSON object")

    objects = []
    seen: set[str] = set()
    for i, entry in enumerate(_require(raw, "objects", "scene")):
        where = f"objects[{i}]"
        oid = str(_require(entry, "id", where))
        if oid in seen:
            raise ValidationError(f"{where}.id: duplicate object id {oid!r}")
        seen.add(oid)
        cls = _require(entry, "class", where)
        if cls not in TISSUE_CLASSES:
            raise ValidationError(f"{where}.class: unknown tissue class {cls!r}")
        role = _require(entry, "role", where)
        if role not in ROLES:
            raise ValidationError(f"{where}.role: unknown role {role!r}")
        color_raw = _require(entry, "color", where)
        if len(color_raw) != 3:
            raise ValidationError(f"{where}.color: expected [r, g, b]")
        color = tuple(float(c) for c in color_raw)
        mesh = _mesh(_require(entry, "mesh", where), f"{where}.mesh", base_dir)
        pose = _pose(_require(entry, "pose", where), f"{where}.pose")
        objects.append(TissueObject(
            id=oid, tissue_class=cls, role=role, mesh=mesh, pose=pose,
            base_color=color, current_color=color))

    trocars = []
    tseen: set[str] = set()
    for i, entry in enumerate(_require(raw, "trocars", "scene")):
        where = f"trocars[{i}]"
        tid = str(_require(entry, "id", where))
        if tid in tseen:
            raise ValidationError(f"{where}.id: duplicate trocar id {tid!r}")
        tseen.add(tid)
        point = _vec(_require(entry, "point", where), f"{where}.point")
        axis = _vec(_require(entry, "rest_axis", where), f"{where}.rest_axis")
        n = axis.norm()
        if not (n > 0) or abs(n - 1.0) > 1e-6:
            raise ValidationError(f"{where}.rest_axis: must be a unit vector")
        trocars.append(Trocar(id=tid, point=point, rest_axis=axis * (1.0 / n)))
    if not trocars:
        raise ValidationError("trocars: scene needs at least one trocar")

    cam_raw = _require(raw, "camera", "scene")
    try:
        camera = Camera(
            pose=Pose(_vec(_require(cam_raw, "pos", "camera"), "camera.pos"),
                      Quat(*[float(c) for c in _require(cam_raw, "quat", "camera")]).normalized()),
            fx=float(_require(cam_raw, "fx", "camera")),
            fy=float(_require(cam_raw, "fy", "camera")),
            cx=float(_require(cam_raw, "cx", "camera")),
            cy=float(_require(cam_raw, "cy", "camera")),
            width=int(_require(cam_raw, "width", "camera")),
            height=int(_require(cam_raw, "height", "camera")),
        )
    except ValueError as exc:
        raise ValidationError(f"camera: {exc}") from exc

    annotations: dict[str, TaskAnnotation] = {}
    for name, ann_raw in raw.get("annotations", {}).items():
        try:
            ann = parse_annotation(name, ann_raw)
        except (KeyError, AnnotationError) as exc:
            raise ValidationError(f"annotations.{name}: {exc}") from exc
        for oid in ann.target_ids + ann.hazard_ids:
            if oid not in seen:
                raise ValidationError(
                    f"annotations.{name}: references unknown object {oid!r}")
        annotations[name] = ann

    tool_specs = []
    for i, entry in enumerate(raw.get("tools", [])):
        where = f"tools[{i}]"
        cls = _require(entry, "class", where)
        if cls not in INSTRUMENT_CLASSES:
            raise ValidationError(f"{where}.class: unknown instrument class {cls!r}")
        trocar_id = str(_require(entry, "trocar", where))
        if trocar_id not in tseen:
            raise ValidationError(f"{where}.trocar: unknown trocar {trocar_id!r}")
        tool_specs.append(ToolSpec(
            id=str(_require(entry, "id", where)),
            instrument_class=cls,
            trocar_id=trocar_id,
            needle=entry.get("needle"),
        ))
    if not tool_specs:
        # default: one grasper per port
        tool_specs = [ToolSpec(id=f"tool-{t.id}", instrument_class="grasper",
                               trocar_id=t.id) for t in trocars]

    config = dict(raw.get("config", {}))

    return Scene(objects=objects, trocars=trocars, camera=camera,
                 annotations=annotations, tool_specs=tool_specs, config=config,
                 source_hash=scene_content_hash(raw), raw=raw)


def load_scene(path) -> Scene:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"cannot read scene file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    return load_scene_dict(raw, base_dir=path.parent)


def scene_content_hash(raw: dict) -> int:
    """Hash of the scene *source* (canonical JSON); ties a session log to the
    exact scene it was recorded against."""
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()
    return fnv1a64(blob)
