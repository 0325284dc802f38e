/** Wire protocol types for the gateway's JSON-over-WebSocket messages. */

import type { QuatWXYZ, Vec3 } from "./math.js";

export interface ControlMessage {
  type: "control";
  seq: number;
  tool_id: string;
  d_pitch: number;
  d_yaw: number;
  d_roll: number;
  d_insertion: number;
  d_jaw: number;
}

export interface HelloMessage {
  type: "hello";
  role: "controller" | "observer";
  tick_rate: number;
  scene_hash: string;
  tools: string[];
  tool_specs: { id: string; class: string; trocar: string }[];
  scene: SceneDescription;
}

export interface SceneDescription {
  objects: SceneObject[];
  camera: WireCamera;
  trocars: { id: string; point: Vec3; rest_axis: Vec3 }[];
}

export interface SceneObject {
  id: string;
  class: string;
  color: number[];
  mesh: { sphere?: { r: number }; box?: { half_extents: Vec3 };
          capsule?: { a: Vec3; b: Vec3; r: number }; obj?: string };
  pose: { pos: Vec3; quat: QuatWXYZ };
}

export interface WireCamera {
  pos: Vec3;
  quat: QuatWXYZ;
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  width: number;
  height: number;
}

export interface StateTool {
  id: string;
  joints: { pitch: number; yaw: number; roll: number; insertion: number };
  tip: Vec3;
  jaw: number;
}

export interface StateObject {
  id: string;
  class: string;
  pose: { pos: Vec3; quat: QuatWXYZ };
  color: number[];
}

export type Overlay =
  | { type: "view_cone"; apex: Vec3; axis: Vec3; half_angle: number }
  | { type: "corridor"; start: Vec3; end: Vec3; radius: number }
  | { type: "cutting_plane"; point: Vec3; normal: Vec3; extent: number }
  | { type: "arc"; center: Vec3; normal: Vec3; radius: number;
      start_angle: number; end_angle: number }
  | { type: "marker"; position: Vec3; label: string }
  | { type: "arrow"; start: Vec3; end: Vec3 }
  | { type: "trajectory"; tool_id: string; points: Vec3[] };

export interface StateMessage {
  type: "state";
  tick: number;
  sim_time: number;
  tools: StateTool[];
  objects: StateObject[];
  overlays: Overlay[];
  texts: { text: string; ttl_ticks: number }[];
  tuples: unknown[];
  detections: { tool_id: string; u: number; v: number; confidence: number }[];
  boxes: unknown[];
  score_partial: Record<string, number>;
  state_hash: string;
}

export interface SessionEndMessage {
  type: "session_end";
  tick: number;
  state_hash: string;
}

export interface ErrorMessage {
  type: "error";
  message: string;
}

export type ServerMessage = HelloMessage | StateMessage | SessionEndMessage | ErrorMessage;

export function parseServerMessage(raw: string): ServerMessage {
  const msg = JSON.parse(raw);
  if (!msg || typeof msg.type !== "string") {
    throw new Error("malformed server message");
  }
  return msg as ServerMessage;
}
