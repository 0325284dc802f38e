/** Minimal 3D math for the two viewports: vectors, quaternion rotation and
 *  pinhole projection matching the gateway's camera model (+Z forward,
 *  +Y image-down). */

export type Vec3 = [number, number, number];
export type QuatWXYZ = [number, number, number, number];

export function add(a: Vec3, b: Vec3): Vec3 {
  return [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
}

export function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

export function scale(a: Vec3, s: number): Vec3 {
  return [a[0] * s, a[1] * s, a[2] * s];
}

export function dot(a: Vec3, b: Vec3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

export function cross(a: Vec3, b: Vec3): Vec3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

export function norm(a: Vec3): number {
  return Math.sqrt(dot(a, a));
}

export function normalize(a: Vec3): Vec3 {
  const n = norm(a);
  return n > 0 ? scale(a, 1 / n) : [0, 0, 0];
}

export function rotate(q: QuatWXYZ, v: Vec3): Vec3 {
  const [w, x, y, z] = q;
  const t: Vec3 = [
    2 * (y * v[2] - z * v[1]),
    2 * (z * v[0] - x * v[2]),
    2 * (x * v[1] - y * v[0]),
  ];
  return [
    v[0] + w * t[0] + (y * t[2] - z * t[1]),
    v[1] + w * t[1] + (z * t[0] - x * t[2]),
    v[2] + w * t[2] + (x * t[1] - y * t[0]),
  ];
}

export function conjugate(q: QuatWXYZ): QuatWXYZ {
  return [q[0], -q[1], -q[2], -q[3]];
}

export interface CameraModel {
  pos: Vec3;
  quat: QuatWXYZ;
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  width: number;
  height: number;
}

/** World point to pixels; null when at or behind the image plane. */
export function project(cam: CameraModel, p: Vec3): [number, number] | null {
  const rel = rotate(conjugate(cam.quat), sub(p, cam.pos));
  if (rel[2] <= 1e-6) return null;
  return [cam.cx + (cam.fx * rel[0]) / rel[2], cam.cy + (cam.fy * rel[1]) / rel[2]];
}

/** Screen-space radius of a sphere of radius r at world point p. */
export function projectedRadius(cam: CameraModel, p: Vec3, r: number): number {
  const rel = rotate(conjugate(cam.quat), sub(p, cam.pos));
  if (rel[2] <= 1e-6) return 0;
  return (cam.fx * r) / rel[2];
}

/** Orbit camera: spherical eye around a center, looking at it, z-up. */
export function orbitCamera(
  center: Vec3, yaw: number, pitch: number, distance: number,
  width: number, height: number, focal: number,
): CameraModel {
  const eye: Vec3 = [
    center[0] + distance * Math.cos(pitch) * Math.cos(yaw),
    center[1] + distance * Math.cos(pitch) * Math.sin(yaw),
    center[2] + distance * Math.sin(pitch),
  ];
  const forward = normalize(sub(center, eye));
  let up: Vec3 = [0, 0, 1];
  if (Math.abs(dot(forward, up)) > 0.999) up = [0, 1, 0];
  const right = normalize(cross(forward, up));
  const down = cross(forward, right);
  // columns right/down/forward -> quaternion (Shepperd)
  const m = [
    [right[0], down[0], forward[0]],
    [right[1], down[1], forward[1]],
    [right[2], down[2], forward[2]],
  ];
  const t = m[0][0] + m[1][1] + m[2][2];
  let q: QuatWXYZ;
  if (t > 0) {
    const s = Math.sqrt(t + 1) * 2;
    q = [0.25 * s, (m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s];
  } else if (m[0][0] > m[1][1] && m[0][0] > m[2][2]) {
    const s = Math.sqrt(1 + m[0][0] - m[1][1] - m[2][2]) * 2;
    q = [(m[2][1] - m[1][2]) / s, 0.25 * s, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s];
  } else if (m[1][1] > m[2][2]) {
    const s = Math.sqrt(1 + m[1][1] - m[0][0] - m[2][2]) * 2;
    q = [(m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, 0.25 * s, (m[1][2] + m[2][1]) / s];
  } else {
    const s = Math.sqrt(1 + m[2][2] - m[0][0] - m[1][1]) * 2;
    q = [(m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, 0.25 * s];
  }
  return { pos: eye, quat: q, fx: focal, fy: focal, cx: width / 2, cy: height / 2, width, height };
}

/** Sample an arc overlay with the gateway's canonical in-plane basis. */
export function arcPoints(
  center: Vec3, normal: Vec3, radius: number,
  startAngle: number, endAngle: number, samples: number,
): Vec3[] {
  const ref: Vec3 = Math.abs(normal[2]) < 0.9 ? [0, 0, 1] : [1, 0, 0];
  const e1 = normalize(cross(normal, ref));
  const e2 = cross(normal, e1);
  const pts: Vec3[] = [];
  for (let i = 0; i < samples; i++) {
    const t = startAngle + ((endAngle - startAngle) * i) / (samples - 1);
    pts.push(add(center, add(scale(e1, radius * Math.cos(t)), scale(e2, radius * Math.sin(t)))));
  }
  return pts;
}
