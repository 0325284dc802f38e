"""Simulated perception: tip heatmaps, heatmap localization, 2D/3D boxes
and per-pixel semantic labels rendered from the endoscope camera.

The heatmap pathway mirrors a keypoint network's output contract (fixed
128x128 grid, Gaussian bump of height 1 at the tip pixel) so that a learned
detector can replace `OracleTipDetector` behind the same interface.
"""

from __future__ import annotations

import base64
import math
import random
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .contact import tool_part_capsules
from .geometry import Camera, Vec3, ray_capsule_first_hit, ray_mesh_first_hit
from .instrument import ToolState, tool_geometry
from .scene import INSTRUMENT_CLASSES, TISSUE_CLASSES, Scene, TissueObject

HEATMAP_SIZE = 128
DETECTION_FLOOR = 0.05
DEFAULT_SIGMA = 5.0

# stable semantic ids: 0 is background, tissue classes then instrument classes
CLASS_IDS: dict[str, int] = {"background": 0}
for _i, _c in enumerate(TISSUE_CLASSES, start=1):
    CLASS_IDS[_c] = _i
for _i, _c in enumerate(INSTRUMENT_CLASSES, start=1 + len(TISSUE_CLASSES)):
    CLASS_IDS[_c] = _i


@dataclass
class Heatmap:
    values: np.ndarray      # (HEATMAP_SIZE, HEATMAP_SIZE) float64 in [0, 1]

    def __post_init__(self):
        if self.values.shape != (HEATMAP_SIZE, HEATMAP_SIZE):
            raise ValueError("heatmap must be 128x128")


@dataclass(frozen=True)
class Box2D:
    u_min: float
    v_min: float
    u_max: float
    v_max: float
    class_label: str

    def __post_init__(self):
        if self.u_min > self.u_max or self.v_min > self.v_max:
            raise ValueError("box corners out of order")


@dataclass(frozen=True)
class Box3D:
    center: Vec3
    half_extents: Vec3
    orientation: object     # Quat
    class_label: str


@dataclass
class LabelImage:
    width: int
    height: int
    labels: np.ndarray      # (height, width) uint16 class ids


def heatmap_center(camera: Camera, tip: Vec3):
    """Tip pixel in heatmap coordinates: project, scale into the 128 grid,
    snap to the nearest cell (the ground-truth keypoint convention)."""
    uv = camera.project(tip)
    if uv is None:
        return None
    u = math.floor(uv[0] * HEATMAP_SIZE / camera.width + 0.5)
    v = math.floor(uv[1] * HEATMAP_SIZE / camera.height + 0.5)
    return u, v


def render_tip_heatmap(camera: Camera, tip: Vec3, sigma: float = DEFAULT_SIGMA) -> Heatmap:
    """Gaussian bump of height 1.0 centered on the tip's heatmap cell;
    all zeros when the tip is behind the camera."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    center = heatmap_center(camera, tip)
    if center is None:
        return Heatmap(np.zeros((HEATMAP_SIZE, HEATMAP_SIZE)))
    u0, v0 = center
    us = np.arange(HEATMAP_SIZE, dtype=np.float64)
    du2 = (us - u0) ** 2
    dv2 = (us - v0) ** 2
    grid = np.exp(-(dv2[:, None] + du2[None, :]) / (2.0 * sigma * sigma))
    return Heatmap(grid)


def localize_tip(heatmap: Heatmap):
    """Peak cell of the heatmap as (u, v, confidence); None when the peak is
    below the detection floor. Ties resolve to the first cell in row-major
    scan order."""
    flat = int(np.argmax(heatmap.values))
    v, u = divmod(flat, HEATMAP_SIZE)
    peak = float(heatmap.values[v, u])
    if peak < DETECTION_FLOOR:
        return None
    return (u, v, peak)


def adaptive_sigma(camera: Camera, tool: ToolState, trocar) -> float:
    """Heatmap spread tied to the instrument's apparent size: 4% of the
    projected shaft length in heatmap pixels, floored at 2."""
    geo = tool_geometry(tool, trocar)
    ua = camera.project(geo.shaft.a)
    ub = camera.project(geo.shaft.b)
    if ua is None or ub is None:
        return DEFAULT_SIGMA
    du = (ub[0] - ua[0]) * HEATMAP_SIZE / camera.width
    dv = (ub[1] - ua[1]) * HEATMAP_SIZE / camera.height
    return max(2.0, 0.04 * math.hypot(du, dv))


def compute_box2d(camera: Camera, obj: TissueObject):
    """Image-space bounds of every mesh vertex with positive depth; None
    when nothing projects."""
    uv, _, ok = camera.project_array(obj.world_mesh.vertices)
    if not ok.any():
        return None
    pts = uv[ok]
    return Box2D(float(pts[:, 0].min()), float(pts[:, 1].min()),
                 float(pts[:, 0].max()), float(pts[:, 1].max()),
                 class_label=obj.tissue_class)


def capsule_outline_points(camera: Camera, capsules) -> np.ndarray | None:
    """Projected bound samples for a set of capsules: each endpoint plus its
    screen-space radius footprint. Used for instrument boxes."""
    rows = []
    for cap in capsules:
        for end in (cap.a, cap.b):
            rel = camera._world_to_cam_rot @ (end.to_array() - camera._cam_origin)
            z = rel[2]
            if z <= 1e-6:
                continue
            u = camera.cx + camera.fx * rel[0] / z
            v = camera.cy + camera.fy * rel[1] / z
            ru = cap.radius * camera.fx / z
            rv = cap.radius * camera.fy / z
            rows += [[u - ru, v], [u + ru, v], [u, v - rv], [u, v + rv]]
    if not rows:
        return None
    return np.array(rows)


def compute_instrument_box2d(camera: Camera, tool: ToolState, trocar):
    """2D bounds of the tool's collision capsules, label = instrument class."""
    capsules = [c for _, caps in tool_part_capsules(tool, trocar) for c in caps]
    pts = capsule_outline_points(camera, capsules)
    if pts is None:
        return None
    return Box2D(float(pts[:, 0].min()), float(pts[:, 1].min()),
                 float(pts[:, 0].max()), float(pts[:, 1].max()),
                 class_label=tool.instrument_class)


def compute_box3d(obj: TissueObject) -> Box3D:
    """Object-frame axis-aligned extents carried with the object's pose."""
    lo = obj.mesh.vertices.min(axis=0)
    hi = obj.mesh.vertices.max(axis=0)
    local_center = Vec3.from_array((lo + hi) * 0.5)
    half = Vec3.from_array((hi - lo) * 0.5)
    return Box3D(center=obj.pose.transform_point(local_center),
                 half_extents=half,
                 orientation=obj.pose.orientation,
                 class_label=obj.tissue_class)


def render_label_image(camera: Camera, scene: Scene,
                       tools: list[ToolState] | None = None) -> LabelImage:
    """Per-pixel semantic ids by nearest-hit ray casting at the camera's
    native resolution. Tools rasterize as their capsule proxies."""
    origins, dirs = camera.pixel_rays()
    n = origins.shape[0]
    best_t = np.full(n, np.inf)
    labels = np.zeros(n, dtype=np.uint16)
    for obj in scene.objects:
        t = ray_mesh_first_hit(origins, dirs, obj.world_mesh)
        closer = t < best_t
        labels[closer] = CLASS_IDS[obj.tissue_class]
        best_t = np.where(closer, t, best_t)
    for tool in tools or []:
        trocar = scene.trocar(tool.trocar_id)
        cid = CLASS_IDS[tool.instrument_class]
        for _, capsules in tool_part_capsules(tool, trocar):
            for cap in capsules:
                t = ray_capsule_first_hit(origins, dirs, cap)
                closer = t < best_t
                labels[closer] = cid
                best_t = np.where(closer, t, best_t)
    return LabelImage(camera.width, camera.height,
                      labels.reshape(camera.height, camera.width))


# ---------------------------------------------------------------------------
# detector interface


@dataclass(frozen=True)
class TipDetection:
    tool_id: str
    u: float                # heatmap coordinates
    v: float
    confidence: float


class TipDetector(Protocol):
    """Anything that can localize instrument tips for a frame. The simulation
    only depends on this surface, so a trained model can slot in."""

    def detect(self, camera: Camera, scene: Scene,
               tools: list[ToolState], tick: int) -> list[TipDetection]: ...


class OracleTipDetector:
    """Ground-truth-backed detector: renders the analytic heatmap and reads
    it back. Optional Gaussian pixel noise and dropout make it behave like an
    imperfect model; both draw from a private seeded stream so sessions
    replay identically."""

    def __init__(self, sigma: float | None = None, pixel_noise: float = 0.0,
                 dropout: float = 0.0, seed: int | None = None):
        self.sigma = sigma
        self.pixel_noise = pixel_noise
        self.dropout = dropout
        self._rng = random.Random(seed)

    def detect(self, camera: Camera, scene: Scene, tools: list[ToolState],
               tick: int) -> list[TipDetection]:
        out: list[TipDetection] = []
        for tool in sorted(tools, key=lambda t: t.id):
            trocar = scene.trocar(tool.trocar_id)
            if self.dropout > 0 and self._rng.random() < self.dropout:
                continue
            sigma = self.sigma
            if sigma is None:
                sigma = adaptive_sigma(camera, tool, trocar)
            tip = tool_geometry(tool, trocar).tip
            loc = localize_tip(render_tip_heatmap(camera, tip, sigma))
            if loc is None:
                continue
            u, v, conf = loc
            if self.pixel_noise > 0:
                u += self._rng.gauss(0.0, self.pixel_noise)
                v += self._rng.gauss(0.0, self.pixel_noise)
            out.append(TipDetection(tool_id=tool.id, u=u, v=v, confidence=conf))
        return out


# ---------------------------------------------------------------------------
# log serialization (only used behind --record-images)


def heatmap_to_b64(h: Heatmap) -> str:
    return base64.b64encode(h.values.astype("<f4").tobytes()).decode("ascii")


def heatmap_from_b64(blob: str) -> Heatmap:
    data = np.frombuffer(base64.b64decode(blob), dtype="<f4")
    return Heatmap(data.reshape(HEATMAP_SIZE, HEATMAP_SIZE).astype(np.float64))


def labels_to_b64(img: LabelImage) -> str:
    return base64.b64encode(img.labels.astype("<u2").tobytes()).decode("ascii")


def labels_from_b64(blob: str, width: int, height: int) -> LabelImage:
    data = np.frombuffer(base64.b64decode(blob), dtype="<u2")
    return LabelImage(width, height, data.reshape(height, width).copy())
