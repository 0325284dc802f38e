/** Pane renderers produce flat draw lists so the drawing logic is testable
 *  without a DOM; the canvas layer just executes commands. Every list ends
 *  with a watermark carrying the tick it was rendered from. */

import {
  add,
  arcPoints,
  CameraModel,
  cross,
  normalize,
  project,
  projectedRadius,
  scale,
  sub,
  Vec3,
} from "./math.js";
import type { Overlay, SceneDescription, StateMessage } from "./protocol.js";
import type { ViewState } from "./viewstate.js";

export type DrawCommand =
  | { op: "clear"; color: string }
  | { op: "circle"; x: number; y: number; r: number; fill?: string; stroke?: string }
  | { op: "line"; x1: number; y1: number; x2: number; y2: number; color: string; width?: number }
  | { op: "poly"; points: [number, number][]; color: string; fill?: string }
  | { op: "text"; x: number; y: number; text: string; color: string; size?: number }
  | { op: "banner"; text: string; color: string }
  | { op: "watermark"; tick: number };

export interface DrawList {
  watermark: number;
  commands: DrawCommand[];
}

function cssColor(rgb: number[]): string {
  const [r, g, b] = rgb;
  return `rgb(${Math.round(r * 255)},${Math.round(g * 255)},${Math.round(b * 255)})`;
}

function colorOf(state: StateMessage, objectId: string, fallback: number[]): number[] {
  const obj = state.objects.find((o) => o.id === objectId);
  return obj ? obj.color : fallback;
}

function drawPolyline(cmds: DrawCommand[], cam: CameraModel, pts: Vec3[],
                      color: string, width = 1): void {
  for (let i = 0; i + 1 < pts.length; i++) {
    const a = project(cam, pts[i]);
    const b = project(cam, pts[i + 1]);
    if (a && b) {
      cmds.push({ op: "line", x1: a[0], y1: a[1], x2: b[0], y2: b[1], color, width });
    }
  }
}

function drawObjects(cmds: DrawCommand[], cam: CameraModel,
                     scene: SceneDescription, state: StateMessage): void {
  for (const obj of scene.objects) {
    const color = cssColor(colorOf(state, obj.id, obj.color));
    const pos = obj.pose.pos;
    if (obj.mesh.sphere) {
      const uv = project(cam, pos);
      if (uv) {
        cmds.push({ op: "circle", x: uv[0], y: uv[1],
                    r: projectedRadius(cam, pos, obj.mesh.sphere.r), fill: color });
      }
    } else if (obj.mesh.box) {
      const h = obj.mesh.box.half_extents;
      const corners: Vec3[] = [];
      for (const sx of [-1, 1]) for (const sy of [-1, 1]) for (const sz of [-1, 1]) {
        corners.push([pos[0] + sx * h[0], pos[1] + sy * h[1], pos[2] + sz * h[2]]);
      }
      const pts = corners.map((c) => project(cam, c)).filter((p) => p) as [number, number][];
      if (pts.length >= 3) {
        const hull = convexHull(pts);
        cmds.push({ op: "poly", points: hull, color, fill: color });
      }
    } else if (obj.mesh.capsule) {
      const { a, b, r } = obj.mesh.capsule;
      const pa = project(cam, add(pos, a));
      const pb = project(cam, add(pos, b));
      if (pa && pb) {
        cmds.push({ op: "circle", x: pa[0], y: pa[1],
                    r: projectedRadius(cam, add(pos, a), r), fill: color });
        cmds.push({ op: "circle", x: pb[0], y: pb[1],
                    r: projectedRadius(cam, add(pos, b), r), fill: color });
        cmds.push({ op: "line", x1: pa[0], y1: pa[1], x2: pb[0], y2: pb[1],
                    color, width: 2 * projectedRadius(cam, add(pos, a), r) });
      }
    } else {
      const uv = project(cam, pos);
      if (uv) cmds.push({ op: "circle", x: uv[0], y: uv[1], r: 4, stroke: color });
    }
  }
}

function drawTools(cmds: DrawCommand[], cam: CameraModel,
                   scene: SceneDescription, state: StateMessage,
                   toolPorts: Record<string, string>): void {
  for (const tool of state.tools) {
    const tipUv = project(cam, tool.tip);
    if (!tipUv) continue;
    const port = scene.trocars.find((t) => t.id === toolPorts[tool.id])
      ?? scene.trocars[0];
    if (port) {
      const portUv = project(cam, port.point);
      if (portUv) {
        cmds.push({ op: "line", x1: portUv[0], y1: portUv[1],
                    x2: tipUv[0], y2: tipUv[1], color: "#c8c8d0", width: 3 });
      }
    }
    cmds.push({ op: "circle", x: tipUv[0], y: tipUv[1], r: 3, fill: "#202030" });
  }
}

function convexHull(points: [number, number][]): [number, number][] {
  const pts = [...points].sort((a, b) => a[0] - b[0] || a[1] - b[1]);
  if (pts.length <= 2) return pts;
  const crossZ = (o: number[], a: number[], b: number[]) =>
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
  const lower: [number, number][] = [];
  for (const p of pts) {
    while (lower.length >= 2 && crossZ(lower[lower.length - 2], lower[lower.length - 1], p) <= 0) {
      lower.pop();
    }
    lower.push(p);
  }
  const upper: [number, number][] = [];
  for (const p of [...pts].reverse()) {
    while (upper.length >= 2 && crossZ(upper[upper.length - 2], upper[upper.length - 1], p) <= 0) {
      upper.pop();
    }
    upper.push(p);
  }
  return lower.slice(0, -1).concat(upper.slice(0, -1));
}

function drawBanners(cmds: DrawCommand[], state: StateMessage): void {
  for (const t of state.texts) {
    const wrong = t.text.startsWith("Wrong") || t.text === "Unsafe depth";
    cmds.push({ op: "banner", text: t.text, color: wrong ? "#d22" : "#2a2" });
  }
}

const OVERLAY_COLOR = "#3399ff";

function drawOverlay(cmds: DrawCommand[], cam: CameraModel, ov: Overlay): void {
  switch (ov.type) {
    case "view_cone": {
      const axis = normalize(ov.axis);
      const length = 0.12;
      const ringCenter = add(ov.apex, scale(axis, length));
      const r = length * Math.tan(ov.half_angle);
      let ref: Vec3 = Math.abs(axis[2]) < 0.9 ? [0, 0, 1] : [1, 0, 0];
      const e1 = normalize(cross(axis, ref));
      const e2 = cross(axis, e1);
      const ring: Vec3[] = [];
      for (let i = 0; i <= 12; i++) {
        const a = (2 * Math.PI * i) / 12;
        ring.push(add(ringCenter, add(scale(e1, r * Math.cos(a)), scale(e2, r * Math.sin(a)))));
      }
      drawPolyline(cmds, cam, ring, OVERLAY_COLOR);
      for (let i = 0; i < 12; i += 3) {
        drawPolyline(cmds, cam, [ov.apex, ring[i]], OVERLAY_COLOR);
      }
      break;
    }
    case "corridor": {
      drawPolyline(cmds, cam, [ov.start, ov.end], OVERLAY_COLOR, 2);
      for (const end of [ov.start, ov.end]) {
        const uv = project(cam, end);
        if (uv) {
          cmds.push({ op: "circle", x: uv[0], y: uv[1],
                      r: projectedRadius(cam, end, ov.radius), stroke: OVERLAY_COLOR });
        }
      }
      break;
    }
    case "cutting_plane": {
      const n = normalize(ov.normal);
      let ref: Vec3 = Math.abs(n[2]) < 0.9 ? [0, 0, 1] : [1, 0, 0];
      const e1 = normalize(cross(n, ref));
      const e2 = cross(n, e1);
      const c = ov.point;
      const ex = ov.extent;
      const quad: Vec3[] = [
        add(c, add(scale(e1, ex), scale(e2, ex))),
        add(c, add(scale(e1, -ex), scale(e2, ex))),
        add(c, add(scale(e1, -ex), scale(e2, -ex))),
        add(c, add(scale(e1, ex), scale(e2, -ex))),
        add(c, add(scale(e1, ex), scale(e2, ex))),
      ];
      drawPolyline(cmds, cam, quad, OVERLAY_COLOR);
      break;
    }
    case "arc": {
      const pts = arcPoints(ov.center, ov.normal, ov.radius,
                            ov.start_angle, ov.end_angle, 32);
      drawPolyline(cmds, cam, pts, OVERLAY_COLOR, 2);
      break;
    }
    case "marker": {
      const uv = project(cam, ov.position);
      if (uv) {
        cmds.push({ op: "line", x1: uv[0] - 5, y1: uv[1], x2: uv[0] + 5, y2: uv[1],
                    color: OVERLAY_COLOR, width: 2 });
        cmds.push({ op: "line", x1: uv[0], y1: uv[1] - 5, x2: uv[0], y2: uv[1] + 5,
                    color: OVERLAY_COLOR, width: 2 });
        cmds.push({ op: "text", x: uv[0] + 6, y: uv[1] - 6, text: ov.label,
                    color: OVERLAY_COLOR });
      }
      break;
    }
    case "arrow": {
      drawPolyline(cmds, cam, [ov.start, ov.end], "#ffaa00", 2);
      const uv = project(cam, ov.end);
      if (uv) cmds.push({ op: "circle", x: uv[0], y: uv[1], r: 3, fill: "#ffaa00" });
      break;
    }
    case "trajectory": {
      drawPolyline(cmds, cam, ov.points, "#66ddff", 1);
      break;
    }
  }
}

/** Left pane: the clinical 2D endoscopic view. No 3D guidance, only the
 *  scene as seen by the endoscope plus screen texts. */
export function render2d(view: ViewState, paneSize = 0): DrawList {
  const cmds: DrawCommand[] = [{ op: "clear", color: "#101014" }];
  const state = view.current;
  const scene = view.scene;
  if (state && scene) {
    const cam: CameraModel = { ...scene.camera };
    if (paneSize > 0 && cam.width > 0) {
      const s = paneSize / cam.width;
      cam.fx *= s;
      cam.fy *= s;
      cam.cx *= s;
      cam.cy *= s;
      cam.width = paneSize;
      cam.height = Math.round(cam.height * s);
    }
    drawObjects(cmds, cam, scene, state);
    drawTools(cmds, cam, scene, state, view.toolPorts);
    drawBanners(cmds, state);
  }
  const tick = state ? state.tick : -1;
  cmds.push({ op: "watermark", tick });
  return { watermark: tick, commands: cmds };
}

export interface OrbitState {
  yaw: number;
  pitch: number;
  distance: number;
  center: Vec3;
  width: number;
  height: number;
  focal: number;
}

export function defaultOrbit(): OrbitState {
  // three-quarter view over the workspace
  return { yaw: -2.2, pitch: 0.5, distance: 0.45,
           center: [0, 0, 0.04], width: 512, height: 512, focal: 600 };
}

/** Right pane: free-orbit 3D view with every guidance overlay. */
export function render3d(view: ViewState, orbit: OrbitState,
                         makeCamera: (o: OrbitState) => CameraModel): DrawList {
  const cmds: DrawCommand[] = [{ op: "clear", color: "#0a0a10" }];
  const state = view.current;
  const scene = view.scene;
  if (state && scene) {
    const cam = makeCamera(orbit);
    drawObjects(cmds, cam, scene, state);
    drawTools(cmds, cam, scene, state, view.toolPorts);
    for (const ov of state.overlays) {
      drawOverlay(cmds, cam, ov);
    }
    drawBanners(cmds, state);
  }
  const tick = state ? state.tick : -1;
  cmds.push({ op: "watermark", tick });
  return { watermark: tick, commands: cmds };
}
