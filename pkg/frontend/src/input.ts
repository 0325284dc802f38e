/** Keyboard/gamepad to control-message mapping.
 *
 * Bindings: W/S pitch, A/D yaw, R/F insertion, Q/E roll, space toggles the
 * jaw open/closed, Tab cycles the active tool. Held keys coalesce into at
 * most one message per animation frame with a strictly increasing seq.
 */

import type { ControlMessage } from "./protocol.js";

export const ANGLE_RATE = 0.02;       // rad per frame while held
export const INSERTION_RATE = 0.002;  // m per frame
export const JAW_RATE = 0.1;          // jaw fraction per frame toward target

export interface GamepadSample {
  axes: number[];        // [yaw, pitch] sticks in [-1, 1]
  buttons: boolean[];    // [0] insert, [1] withdraw, [2] jaw toggle
}

export class InputMapper {
  private held = new Set<string>();
  private seq = 0;
  private jawTarget = 0;
  private toolIndex = 0;

  constructor(public tools: string[]) {
    if (tools.length === 0) throw new Error("no tools to control");
  }

  get activeTool(): string {
    return this.tools[this.toolIndex];
  }

  keyDown(key: string): void {
    const k = key.toLowerCase();
    if (k === " " || k === "space") {
      this.jawTarget = this.jawTarget > 0.5 ? 0 : 1;
      return;
    }
    if (k === "tab") {
      this.toolIndex = (this.toolIndex + 1) % this.tools.length;
      return;
    }
    this.held.add(k);
  }

  keyUp(key: string): void {
    this.held.delete(key.toLowerCase());
  }

  /** Jaw position feedback so the toggle ramps stop when they arrive. */
  observeJaw(value: number): void {
    this.jaw = value;
  }

  private jaw = 0;

  /** One animation frame: coalesce everything held into a single message
   *  (or none when idle). */
  frame(pad?: GamepadSample): ControlMessage | null {
    let dPitch = 0;
    let dYaw = 0;
    let dRoll = 0;
    let dInsertion = 0;
    if (this.held.has("w")) dPitch += ANGLE_RATE;
    if (this.held.has("s")) dPitch -= ANGLE_RATE;
    if (this.held.has("d")) dYaw += ANGLE_RATE;
    if (this.held.has("a")) dYaw -= ANGLE_RATE;
    if (this.held.has("e")) dRoll += ANGLE_RATE;
    if (this.held.has("q")) dRoll -= ANGLE_RATE;
    if (this.held.has("r")) dInsertion += INSERTION_RATE;
    if (this.held.has("f")) dInsertion -= INSERTION_RATE;
    if (pad) {
      dYaw += (pad.axes[0] ?? 0) * ANGLE_RATE;
      dPitch += -(pad.axes[1] ?? 0) * ANGLE_RATE;
      if (pad.buttons[0]) dInsertion += INSERTION_RATE;
      if (pad.buttons[1]) dInsertion -= INSERTION_RATE;
    }
    let dJaw = 0;
    const jawErr = this.jawTarget - this.jaw;
    if (Math.abs(jawErr) > 1e-9) {
      dJaw = Math.max(-JAW_RATE, Math.min(JAW_RATE, jawErr));
      this.jaw += dJaw;   // optimistic; corrected by observeJaw on next state
    }
    if (dPitch === 0 && dYaw === 0 && dRoll === 0 && dInsertion === 0 && dJaw === 0) {
      return null;
    }
    this.seq += 1;
    return {
      type: "control",
      seq: this.seq,
      tool_id: this.activeTool,
      d_pitch: dPitch,
      d_yaw: dYaw,
      d_roll: dRoll,
      d_insertion: dInsertion,
      d_jaw: dJaw,
    };
  }
}
