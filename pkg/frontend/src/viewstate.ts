/** Client-side session state: latest-wins state mailbox with a monotone
 *  tick guarantee, so both panes always draw the same, never-regressing
 *  frame. */

import type { SceneDescription, StateMessage } from "./protocol.js";

export type Layout = "side_by_side" | "2d_only" | "3d_only";

export class ViewState {
  current: StateMessage | null = null;
  scene: SceneDescription | null = null;
  toolPorts: Record<string, string> = {};
  layout: Layout = "side_by_side";
  connected = false;
  finalHash: string | null = null;
  lastError: string | null = null;

  /** Accept a state message; stale ticks are dropped. Returns whether the
   *  frame advanced. */
  update(msg: StateMessage): boolean {
    if (this.current !== null && msg.tick < this.current.tick) {
      return false;
    }
    this.current = msg;
    return true;
  }

  cycleLayout(): Layout {
    const order: Layout[] = ["side_by_side", "2d_only", "3d_only"];
    this.layout = order[(order.indexOf(this.layout) + 1) % order.length];
    return this.layout;
  }
}
