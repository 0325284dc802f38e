"""Math kernel: vectors, quaternions, poses, pinhole cameras, triangle meshes
and the distance queries everything else is built on.

Conventions (stated once, relied on everywhere): right-handed world frame,
meters, +Z up. Camera frame: +Z forward, +X right, +Y image-down. All reals
are IEEE double precision; results are bitwise reproducible across runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class EmptyMesh(Exception):
    """Distance query against a mesh with no triangles."""


# ---------------------------------------------------------------------------
# scalars / small fixed-size types


@dataclass(frozen=True)
class Vec3:
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __mul__(self, s: float) -> "Vec3":
        return Vec3(self.x * s, self.y * s, self.z * s)

    __rmul__ = __mul__

    def __neg__(self) -> "Vec3":
        return Vec3(-self.x, -self.y, -self.z)

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def cross(self, other: "Vec3") -> "Vec3":
        return Vec3(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )

    def norm(self) -> float:
        return math.sqrt(self.dot(self))

    def normalized(self) -> "Vec3":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize zero vector")
        return Vec3(self.x / n, self.y / n, self.z / n)

    def distance_to(self, other: "Vec3") -> float:
        return (self - other).norm()

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)

    @classmethod
    def from_array(cls, a) -> "Vec3":
        return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class Quat:
    """Unit quaternion (w, x, y, z). Every constructor and operation that
    returns a Quat renormalizes, so norm drift never accumulates."""

    w: float = 1.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    @classmethod
    def identity(cls) -> "Quat":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_axis_angle(cls, axis: Vec3, angle: float) -> "Quat":
        a = axis.normalized()
        h = 0.5 * angle
        s = math.sin(h)
        return cls(math.cos(h), a.x * s, a.y * s, a.z * s).normalized()

    @classmethod
    def from_matrix(cls, m) -> "Quat":
        """Shepperd's method; m is a 3x3 rotation matrix (rows indexable)."""
        t = m[0][0] + m[1][1] + m[2][2]
        if t > 0:
            s = math.sqrt(t + 1.0) * 2
            return cls(0.25 * s, (m[2][1] - m[1][2]) / s,
                       (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s).normalized()
        if m[0][0] > m[1][1] and m[0][0] > m[2][2]:
            s = math.sqrt(1.0 + m[0][0] - m[1][1] - m[2][2]) * 2
            return cls((m[2][1] - m[1][2]) / s, 0.25 * s,
                       (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s).normalized()
        if m[1][1] > m[2][2]:
            s = math.sqrt(1.0 + m[1][1] - m[0][0] - m[2][2]) * 2
            return cls((m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s,
                       0.25 * s, (m[1][2] + m[2][1]) / s).normalized()
        s = math.sqrt(1.0 + m[2][2] - m[0][0] - m[1][1]) * 2
        return cls((m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s,
                   (m[1][2] + m[2][1]) / s, 0.25 * s).normalized()

    def norm(self) -> float:
        return math.sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z)

    def normalized(self) -> "Quat":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize zero quaternion")
        return Quat(self.w / n, self.x / n, self.y / n, self.z / n)

    def __mul__(self, o: "Quat") -> "Quat":
        return Quat(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        ).normalized()

    def conjugate(self) -> "Quat":
        return Quat(self.w, -self.x, -self.y, -self.z)

    def rotate(self, v: Vec3) -> Vec3:
        # q v q* expanded; cheaper than building the matrix for single points
        tx = 2.0 * (self.y * v.z - self.z * v.y)
        ty = 2.0 * (self.z * v.x - self.x * v.z)
        tz = 2.0 * (self.x * v.y - self.y * v.x)
        return Vec3(
            v.x + self.w * tx + (self.y * tz - self.z * ty),
            v.y + self.w * ty + (self.z * tx - self.x * tz),
            v.z + self.w * tz + (self.x * ty - self.y * tx),
        )

    def to_matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class Pose:
    position: Vec3 = field(default_factory=Vec3)
    orientation: Quat = field(default_factory=Quat)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(Vec3(), Quat.identity())

    def compose(self, other: "Pose") -> "Pose":
        """self applied after other's frame: world_from_b = world_from_a * a_from_b."""
        return Pose(
            self.position + self.orientation.rotate(other.position),
            self.orientation * other.orientation,
        )

    def inverse(self) -> "Pose":
        inv = self.orientation.conjugate()
        return Pose(inv.rotate(-self.position), inv)

    def transform_point(self, p: Vec3) -> Vec3:
        return self.position + self.orientation.rotate(p)

    def transform_direction(self, d: Vec3) -> Vec3:
        return self.orientation.rotate(d)


# ---------------------------------------------------------------------------
# camera


@dataclass
class Camera:
    """Pinhole camera. `pose` places the camera in the world; the camera looks
    along its +Z axis with +Y pointing down in the image."""

    pose: Pose
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside image")
        self._world_to_cam_rot = self.pose.orientation.conjugate().to_matrix()
        self._cam_origin = self.pose.position.to_array()

    def project(self, p_world: Vec3):
        """Project a world point. Returns (u, v) in pixels, or None when the
        point is behind the camera (depth <= 1e-6)."""
        rel = self._world_to_cam_rot @ (p_world.to_array() - self._cam_origin)
        z = rel[2]
        if z <= 1e-6:
            return None
        return (self.cx + self.fx * rel[0] / z, self.cy + self.fy * rel[1] / z)

    def project_array(self, points: np.ndarray):
        """Vectorized projection of an (N, 3) array.

        Returns (uv (N, 2), depth (N,), in_front (N,) bool). uv rows for
        points behind the camera are NaN.
        """
        rel = (points - self._cam_origin) @ self._world_to_cam_rot.T
        z = rel[:, 2]
        ok = z > 1e-6
        uv = np.full((points.shape[0], 2), np.nan)
        zs = np.where(ok, z, 1.0)
        uv[:, 0] = np.where(ok, self.cx + self.fx * rel[:, 0] / zs, np.nan)
        uv[:, 1] = np.where(ok, self.cy + self.fy * rel[:, 1] / zs, np.nan)
        return uv, z, ok

    def unproject(self, u: float, v: float, depth: float) -> Vec3:
        """Inverse of project at a known camera-frame depth."""
        rel = Vec3((u - self.cx) * depth / self.fx, (v - self.cy) * depth / self.fy, depth)
        return self.pose.transform_point(rel)

    def pixel_rays(self) -> tuple[np.ndarray, np.ndarray]:
        """Origin and unit direction of the ray through every pixel,
        row-major, as ((H*W, 3), (H*W, 3))."""
        us, vs = np.meshgrid(np.arange(self.width), np.arange(self.height))
        d_cam = np.stack(
            [
                (us.ravel() - self.cx) / self.fx,
                (vs.ravel() - self.cy) / self.fy,
                np.ones(self.width * self.height),
            ],
            axis=1,
        )
        rot = self.pose.orientation.to_matrix()
        d_world = d_cam @ rot.T
        d_world /= np.linalg.norm(d_world, axis=1, keepdims=True)
        origins = np.broadcast_to(self._cam_origin, d_world.shape)
        return origins, d_world


def project_point(camera: Camera, p_world: Vec3):
    """Module-level alias; None means the point is behind the camera."""
    return camera.project(p_world)


# ---------------------------------------------------------------------------
# meshes


@dataclass(frozen=True)
class Capsule:
    a: Vec3
    b: Vec3
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("capsule radius must be positive")

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        pts = np.array([self.a.as_tuple(), self.b.as_tuple()])
        return pts.min(axis=0) - self.radius, pts.max(axis=0) + self.radius


class TriMesh:
    """Immutable triangle mesh stored as float64 vertex and int32 index arrays."""

    def __init__(self, vertices: np.ndarray, triangles: np.ndarray):
        self.vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(triangles, dtype=np.int32).reshape(-1, 3)
        self._validate()
        # per-triangle corner arrays, precomputed for the distance kernels
        self.tri_a = self.vertices[self.triangles[:, 0]]
        self.tri_b = self.vertices[self.triangles[:, 1]]
        self.tri_c = self.vertices[self.triangles[:, 2]]
        cross = np.cross(self.tri_b - self.tri_a, self.tri_c - self.tri_a)
        self.tri_normals = cross / np.linalg.norm(cross, axis=1, keepdims=True)

    def _validate(self):
        if not np.isfinite(self.vertices).all():
            raise ValueError("non-finite vertex coordinate")
        if self.triangles.size:
            if self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices):
                raise ValueError("triangle index out of range")
            a = self.vertices[self.triangles[:, 0]]
            b = self.vertices[self.triangles[:, 1]]
            c = self.vertices[self.triangles[:, 2]]
            areas = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
            if (areas <= 1e-12).any():
                raise ValueError("degenerate triangle (area <= 1e-12 m^2)")

    def __len__(self) -> int:
        return len(self.triangles)

    def transformed(self, pose: Pose) -> "TriMesh":
        rot = pose.orientation.to_matrix()
        verts = self.vertices @ rot.T + pose.position.to_array()
        return TriMesh(verts, self.triangles.copy())

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        if not len(self.vertices):
            raise EmptyMesh("mesh has no vertices")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def content_hash(self) -> int:
        """FNV-1a 64 over vertex and index bytes; used to prove geometry
        never changes under color writes."""
        h = fnv1a64(self.vertices.tobytes())
        return fnv1a64(self.triangles.tobytes(), h)


def fnv1a64(data: bytes, h: int = 0xCBF29CE484222325) -> int:
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def load_obj(path) -> TriMesh:
    """Load an ASCII OBJ. Only `v` and triangular `f` records are honored;
    anything else (normals, textures, groups) is skipped."""
    verts: list[list[float]] = []
    faces: list[list[int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise ValueError(f"{path}:{lineno}: vertex needs 3 coordinates")
                verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif parts[0] == "f":
                if len(parts) != 4:
                    raise ValueError(f"{path}:{lineno}: only triangular faces supported")
                idx = [int(p.split("/")[0]) for p in parts[1:]]
                faces.append([i - 1 if i > 0 else len(verts) + i for i in idx])
    return TriMesh(np.array(verts, dtype=np.float64).reshape(-1, 3),
                   np.array(faces, dtype=np.int32).reshape(-1, 3))


def make_icosphere(radius: float = 1.0, subdivisions: int = 3,
                   center: Vec3 = Vec3()) -> TriMesh:
    """Icosphere with a vertex on each pole (two polar vertices plus two
    pentagonal rings), subdivided by edge midpoint splitting."""
    lat = math.atan(0.5)
    verts = [(0.0, 0.0, 1.0)]
    for i in range(5):
        lon = 2.0 * math.pi * i / 5.0
        verts.append((math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon), math.sin(lat)))
    for i in range(5):
        lon = 2.0 * math.pi * (i + 0.5) / 5.0
        verts.append((math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon), -math.sin(lat)))
    verts.append((0.0, 0.0, -1.0))
    faces = []
    for i in range(5):
        j = (i + 1) % 5
        faces.append((0, 1 + i, 1 + j))                 # north cap
        faces.append((1 + i, 6 + i, 1 + j))             # upper band
        faces.append((1 + j, 6 + i, 6 + j))             # lower band
        faces.append((6 + i, 11, 6 + j))                # south cap
    verts = [list(v) for v in verts]

    for _ in range(subdivisions):
        midpoint: dict[tuple[int, int], int] = {}

        def midpt(i: int, j: int) -> int:
            key = (i, j) if i < j else (j, i)
            if key not in midpoint:
                vx = [(verts[i][k] + verts[j][k]) * 0.5 for k in range(3)]
                n = math.sqrt(sum(c * c for c in vx))
                verts.append([c / n for c in vx])
                midpoint[key] = len(verts) - 1
            return midpoint[key]

        new_faces = []
        for (a, b, c) in faces:
            ab, bc, ca = midpt(a, b), midpt(b, c), midpt(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces

    arr = np.array(verts, dtype=np.float64) * radius + center.to_array()
    return TriMesh(arr, np.array(faces, dtype=np.int32))


def make_box(half_extents: Vec3, center: Vec3 = Vec3()) -> TriMesh:
    """Axis-aligned box as 12 triangles with outward winding."""
    hx, hy, hz = half_extents.x, half_extents.y, half_extents.z
    c = center.to_array()
    verts = np.array(
        [
            [-hx, -hy, -hz], [hx, -hy, -hz], [hx, hy, -hz], [-hx, hy, -hz],
            [-hx, -hy, hz], [hx, -hy, hz], [hx, hy, hz], [-hx, hy, hz],
        ]
    ) + c
    faces = np.array(
        [
            [0, 2, 1], [0, 3, 2],      # bottom (-z)
            [4, 5, 6], [4, 6, 7],      # top (+z)
            [0, 1, 5], [0, 5, 4],      # -y
            [2, 3, 7], [2, 7, 6],      # +y
            [1, 2, 6], [1, 6, 5],      # +x
            [3, 0, 4], [3, 4, 7],      # -x
        ],
        dtype=np.int32,
    )
    return TriMesh(verts, faces)


def make_capsule_mesh(a: Vec3, b: Vec3, radius: float,
                      segments: int = 12, rings: int = 4) -> TriMesh:
    """Tessellated capsule: cylinder wall plus two hemisphere caps.
    Resolution is fixed by the caller's arguments and fully deterministic."""
    axis = b - a
    length = axis.norm()
    if length < 1e-12:
        return make_icosphere(radius, 2, a)
    az = axis.normalized()
    ref = Vec3(1.0, 0.0, 0.0) if abs(az.x) < 0.9 else Vec3(0.0, 1.0, 0.0)
    ax = az.cross(ref).normalized()
    ay = az.cross(ax)

    verts: list[tuple[float, float, float]] = []

    def ring(center: Vec3, r: float, zoff: float) -> list[int]:
        out = []
        for s in range(segments):
            t = 2.0 * math.pi * s / segments
            p = center + ax * (r * math.cos(t)) + ay * (r * math.sin(t)) + az * zoff
            out.append(len(verts))
            verts.append(p.as_tuple())
        return out

    rows: list[list[int]] = []
    # bottom pole
    bottom = len(verts)
    verts.append((a - az * radius).as_tuple())
    for k in range(1, rings + 1):
        ang = 0.5 * math.pi * k / rings
        rows.append(ring(a, radius * math.sin(ang), -radius * math.cos(ang)))
    rows.append(ring(b, radius, 0.0))
    for k in range(1, rings):
        ang = 0.5 * math.pi * k / rings
        rows.append(ring(b, radius * math.cos(ang), radius * math.sin(ang)))
    top = len(verts)
    verts.append((b + az * radius).as_tuple())

    faces: list[tuple[int, int, int]] = []
    first = rows[0]
    for s in range(segments):
        faces.append((bottom, first[(s + 1) % segments], first[s]))
    for r0, r1 in zip(rows[:-1], rows[1:]):
        for s in range(segments):
            s1 = (s + 1) % segments
            faces.append((r0[s], r0[s1], r1[s1]))
            faces.append((r0[s], r1[s1], r1[s]))
    last = rows[-1]
    for s in range(segments):
        faces.append((top, last[s], last[(s + 1) % segments]))
    return TriMesh(np.array(verts, dtype=np.float64), np.array(faces, dtype=np.int32))


# ---------------------------------------------------------------------------
# distance kernels (vectorized over all triangles of a mesh)


def _closest_on_triangles(p: np.ndarray, a: np.ndarray, b: np.ndarray,
                          c: np.ndarray) -> np.ndarray:
    """Closest point to p on each triangle (a, b, c all (M, 3)); Ericson's
    region walk, evaluated branch-free over the whole array."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    def safe_div(num, den):
        return num / np.where(np.abs(den) < 1e-300, 1.0, den)

    v_ab = np.clip(safe_div(d1, d1 - d3), 0.0, 1.0)
    w_ac = np.clip(safe_div(d2, d2 - d6), 0.0, 1.0)
    w_bc = np.clip(safe_div(d4 - d3, (d4 - d3) + (d5 - d6)), 0.0, 1.0)
    denom = safe_div(np.ones_like(va), va + vb + vc)
    v_in = vb * denom
    w_in = vc * denom

    closest = a + ab * v_in[:, None] + ac * w_in[:, None]
    m6 = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    closest = np.where(m6[:, None], b + (c - b) * w_bc[:, None], closest)
    m5 = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    closest = np.where(m5[:, None], a + ac * w_ac[:, None], closest)
    m4 = (d6 >= 0) & (d5 <= d6)
    closest = np.where(m4[:, None], c, closest)
    m3 = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    closest = np.where(m3[:, None], a + ab * v_ab[:, None], closest)
    m2 = (d3 >= 0) & (d4 <= d3)
    closest = np.where(m2[:, None], b, closest)
    m1 = (d1 <= 0) & (d2 <= 0)
    closest = np.where(m1[:, None], a, closest)
    return closest


def point_mesh_distance(p: Vec3, mesh: TriMesh) -> tuple[float, Vec3, Vec3]:
    """Minimum distance from p to the mesh surface.

    Returns (distance, closest surface point, outward normal of the winning
    triangle). Semantically identical to the exhaustive per-triangle scan.
    """
    if len(mesh) == 0:
        raise EmptyMesh("point_mesh_distance on empty mesh")
    pa = p.to_array()
    closest = _closest_on_triangles(pa, mesh.tri_a, mesh.tri_b, mesh.tri_c)
    d2 = np.einsum("ij,ij->i", closest - pa, closest - pa)
    i = int(np.argmin(d2))
    return (
        float(math.sqrt(d2[i])),
        Vec3.from_array(closest[i]),
        Vec3.from_array(mesh.tri_normals[i]),
    )


def _segment_triangles_closest(p: np.ndarray, q: np.ndarray, mesh: TriMesh):
    """Closest pair between segment pq and each triangle of the mesh.

    Returns (dist2 (M,), on_seg (M, 3), on_tri (M, 3)). Exact: candidates are
    the two endpoints against the face, the segment against the three edges,
    and a proper segment/triangle-interior crossing (distance zero).
    """
    a, b, c = mesh.tri_a, mesh.tri_b, mesh.tri_c
    m = len(mesh)
    seg = q - p
    seg_len2 = float(seg @ seg)

    best_d2 = np.full(m, np.inf)
    best_seg = np.zeros((m, 3))
    best_tri = np.zeros((m, 3))

    def consider(d2, on_seg, on_tri):
        nonlocal best_d2, best_seg, best_tri
        better = d2 < best_d2
        best_d2 = np.where(better, d2, best_d2)
        best_seg = np.where(better[:, None], on_seg, best_seg)
        best_tri = np.where(better[:, None], on_tri, best_tri)

    # endpoints vs faces
    for endpoint in (p, q):
        on_tri = _closest_on_triangles(endpoint, a, b, c)
        diff = on_tri - endpoint
        consider(np.einsum("ij,ij->i", diff, diff),
                 np.broadcast_to(endpoint, (m, 3)), on_tri)

    if seg_len2 > 1e-24:
        # segment vs each triangle edge
        for e0, e1 in ((a, b), (b, c), (c, a)):
            d2e = e1 - e0
            r = p - e0
            aa = seg_len2
            ee = np.einsum("ij,ij->i", d2e, d2e)
            bb = d2e @ seg
            cc = r @ seg
            ff = np.einsum("ij,ij->i", d2e, r)
            denom = aa * ee - bb * bb
            s = np.where(np.abs(denom) > 1e-300,
                         np.clip((bb * ff - cc * ee) / np.where(denom == 0, 1.0, denom), 0.0, 1.0),
                         0.0)
            t = (bb * s + ff) / np.where(ee == 0, 1.0, ee)
            t_cl = np.clip(t, 0.0, 1.0)
            s = np.where(t != t_cl,
                         np.clip((t_cl * bb - cc) / aa, 0.0, 1.0), s)
            on_seg = p + np.outer(s, seg)
            on_edge = e0 + d2e * t_cl[:, None]
            diff = on_edge - on_seg
            consider(np.einsum("ij,ij->i", diff, diff), on_seg, on_edge)

        # proper crossing through the triangle interior => distance 0
        e1v = b - a
        e2v = c - a
        h = np.cross(np.broadcast_to(seg, (m, 3)), e2v)
        det = np.einsum("ij,ij->i", e1v, h)
        ok = np.abs(det) > 1e-300
        inv = 1.0 / np.where(ok, det, 1.0)
        s_vec = p - a
        u = np.einsum("ij,ij->i", s_vec, h) * inv
        qv = np.cross(s_vec, e1v)
        v = (qv @ seg) * inv
        t_hit = np.einsum("ij,ij->i", e2v, qv) * inv
        hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t_hit >= 0.0) & (t_hit <= 1.0)
        if hit.any():
            pt = p + np.outer(t_hit, seg)
            consider(np.where(hit, 0.0, np.inf), pt, pt)

    return best_d2, best_seg, best_tri


def segment_mesh_closest(p: Vec3, q: Vec3, mesh: TriMesh):
    """Closest approach of segment pq to the mesh: (distance, point on
    segment, point on mesh, triangle index)."""
    if len(mesh) == 0:
        raise EmptyMesh("segment query on empty mesh")
    d2, on_seg, on_tri = _segment_triangles_closest(p.to_array(), q.to_array(), mesh)
    i = int(np.argmin(d2))
    return (float(math.sqrt(d2[i])), Vec3.from_array(on_seg[i]),
            Vec3.from_array(on_tri[i]), i)


def capsule_mesh_contact(cap: Capsule, mesh: TriMesh):
    """Deepest interference between a capsule and the mesh surface.

    Contact requires strict penetration (closest distance < radius);
    tangency reports nothing. Returns (depth, surface point, normal pointing
    from the mesh toward the capsule axis), or None.
    """
    dist, on_seg, on_tri, tri_idx = segment_mesh_closest(cap.a, cap.b, mesh)
    if dist >= cap.radius:
        return None
    depth = cap.radius - dist
    if dist > 1e-12:
        normal = (on_seg - on_tri) * (1.0 / dist)
    else:
        normal = Vec3.from_array(mesh.tri_normals[tri_idx])
        mid = (cap.a + cap.b) * 0.5
        if normal.dot(mid - on_tri) < 0:
            normal = -normal
    return depth, on_tri, normal


# ---------------------------------------------------------------------------
# ray casting (used by the semantic label renderer)


def ray_mesh_first_hit(origins: np.ndarray, dirs: np.ndarray, mesh: TriMesh,
                       chunk: int = 2048) -> np.ndarray:
    """First-hit parameter t for each ray against the mesh (inf = miss).
    Moller-Trumbore over ray x triangle blocks, chunked to bound memory."""
    if len(mesh) == 0:
        return np.full(len(origins), np.inf)
    a = mesh.tri_a
    e1 = mesh.tri_b - a
    e2 = mesh.tri_c - a
    out = np.full(len(origins), np.inf)
    for lo in range(0, len(origins), chunk):
        o = origins[lo:lo + chunk][:, None, :]
        d = dirs[lo:lo + chunk][:, None, :]
        h = np.cross(d, e2[None, :, :])
        det = np.einsum("rmk,mk->rm", h, e1)
        ok = np.abs(det) > 1e-12
        inv = 1.0 / np.where(ok, det, 1.0)
        s = o - a[None, :, :]
        u = np.einsum("rmk,rmk->rm", s, h) * inv
        qv = np.cross(s, e1[None, :, :])
        v = np.einsum("rmk,rmk->rm", qv, np.broadcast_to(d, qv.shape)) * inv
        t = np.einsum("rmk,mk->rm", qv, e2) * inv
        hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 1e-9)
        t = np.where(hit, t, np.inf)
        out[lo:lo + chunk] = t.min(axis=1)
    return out


def ray_capsule_first_hit(origins: np.ndarray, dirs: np.ndarray,
                          cap: Capsule) -> np.ndarray:
    """First-hit parameter t for each unit-direction ray against a capsule
    (inf = miss): infinite cylinder clipped to the segment, plus end spheres."""
    pa = cap.a.to_array()
    pb = cap.b.to_array()
    axis = pb - pa
    len2 = float(axis @ axis)
    r2 = cap.radius * cap.radius
    n = len(origins)
    best = np.full(n, np.inf)

    def sphere_hits(center):
        oc = origins - center
        b = np.einsum("ij,ij->i", oc, dirs)
        c = np.einsum("ij,ij->i", oc, oc) - r2
        disc = b * b - c
        ok = disc >= 0
        t = -b - np.sqrt(np.where(ok, disc, 0.0))
        return np.where(ok & (t > 1e-9), t, np.inf)

    best = np.minimum(best, sphere_hits(pa))
    best = np.minimum(best, sphere_hits(pb))

    if len2 > 1e-24:
        ao = origins - pa
        d_axis = dirs @ axis / len2
        ao_axis = ao @ axis / len2
        d_perp = dirs - np.outer(d_axis, axis)
        ao_perp = ao - np.outer(ao_axis, axis)
        a_c = np.einsum("ij,ij->i", d_perp, d_perp)
        b_c = np.einsum("ij,ij->i", ao_perp, d_perp)
        c_c = np.einsum("ij,ij->i", ao_perp, ao_perp) - r2
        ok = a_c > 1e-18
        disc = b_c * b_c - a_c * c_c
        ok &= disc >= 0
        t = (-b_c - np.sqrt(np.where(ok, disc, 0.0))) / np.where(ok, a_c, 1.0)
        s = ao_axis + t * d_axis          # axial coordinate of the hit
        ok &= (t > 1e-9) & (s >= 0.0) & (s <= 1.0)
        best = np.minimum(best, np.where(ok, t, np.inf))
    return best
