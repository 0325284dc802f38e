/** Pane synchronization and feedback display (acceptance A10). */

import assert from "node:assert/strict";
import { test } from "node:test";

import { orbitCamera } from "../src/math.js";
import type { SceneDescription, StateMessage } from "../src/protocol.js";
import { defaultOrbit, render2d, render3d, DrawList } from "../src/render.js";
import { ViewState } from "../src/viewstate.js";

function demoScene(): SceneDescription {
  return {
    objects: [
      {
        id: "stomach", class: "stomach", color: [0.85, 0.6, 0.5],
        mesh: { sphere: { r: 0.025 } },
        pose: { pos: [0.045, 0.015, 0.025], quat: [1, 0, 0, 0] },
      },
      {
        id: "gallbladder", class: "gallbladder", color: [0.2, 0.7, 0.3],
        mesh: { sphere: { r: 0.015 } },
        pose: { pos: [-0.03, 0.01, 0.03], quat: [1, 0, 0, 0] },
      },
    ],
    camera: {
      pos: [0, -0.15, 0.1],
      quat: [0.5144957554275265, -0.8574929257125443, 0, 0],   // fixture endoscope
      fx: 128, fy: 128, cx: 64, cy: 64, width: 128, height: 128,
    },
    trocars: [{ id: "port-b", point: [-0.04, -0.1, 0.09], rest_axis: [0.3, 0.8, -0.5] }],
  };
}

function stateAt(tick: number, extras: Partial<StateMessage> = {}): StateMessage {
  return {
    type: "state",
    tick,
    sim_time: tick / 60,
    tools: [{
      id: "driver",
      joints: { pitch: 0, yaw: 0, roll: 0, insertion: 0.05 + 0.0001 * tick },
      tip: [0, -0.05, 0.05],
      jaw: 0,
    }],
    objects: [
      { id: "stomach", class: "stomach",
        pose: { pos: [0.045, 0.015, 0.025], quat: [1, 0, 0, 0] },
        color: [0.85, 0.6, 0.5] },
      { id: "gallbladder", class: "gallbladder",
        pose: { pos: [-0.03, 0.01, 0.03], quat: [1, 0, 0, 0] },
        color: [0.2, 0.7, 0.3] },
    ],
    overlays: [],
    texts: [],
    tuples: [],
    detections: [],
    boxes: [],
    score_partial: {},
    state_hash: "0",
    ...extras,
  };
}

function makeView(): ViewState {
  const view = new ViewState();
  view.scene = demoScene();
  view.toolPorts = { driver: "port-b" };
  return view;
}

const orbitCam = (o: ReturnType<typeof defaultOrbit>) =>
  orbitCamera(o.center, o.yaw, o.pitch, o.distance, o.width, o.height, o.focal);

test("A10: both panes render identical tick watermarks for 300 frames", () => {
  const view = makeView();
  const orbit = defaultOrbit();
  for (let frame = 0; frame < 300; frame++) {
    // state messages arrive at half the frame cadence; panes must stay in
    // lockstep with each other regardless
    if (frame % 2 === 0) {
      view.update(stateAt(frame));
    }
    const left = render2d(view, 512);
    const right = render3d(view, orbit, orbitCam);
    assert.equal(left.watermark, right.watermark, `frame ${frame}`);
    assert.ok(left.watermark >= 0);
    const lw = left.commands.at(-1);
    const rw = right.commands.at(-1);
    assert.deepEqual(lw, { op: "watermark", tick: left.watermark });
    assert.deepEqual(rw, { op: "watermark", tick: right.watermark });
  }
});

test("A10: rendered tick never goes backwards even if messages do", () => {
  const view = makeView();
  view.update(stateAt(50));
  assert.equal(view.update(stateAt(20)), false);
  const left = render2d(view, 512);
  assert.equal(left.watermark, 50);
});

function findRed(list: DrawList): boolean {
  return list.commands.some(
    (c) => (c.op === "circle" && c.fill === "rgb(255,0,0)")
        || (c.op === "poly" && c.fill === "rgb(255,0,0)"));
}

test("A10: wrong-contact payload shows red tint and warning banner in both panes", () => {
  const view = makeView();
  const msg = stateAt(7, {
    objects: [
      { id: "stomach", class: "stomach",
        pose: { pos: [0.045, 0.015, 0.025], quat: [1, 0, 0, 0] },
        color: [1, 0, 0] },          // red overlay written by the gateway
      { id: "gallbladder", class: "gallbladder",
        pose: { pos: [-0.03, 0.01, 0.03], quat: [1, 0, 0, 0] },
        color: [0.2, 0.7, 0.3] },
    ],
    texts: [{ text: "Wrong for touching stomach!", ttl_ticks: 55 }],
  });
  view.update(msg);
  const left = render2d(view, 512);
  const right = render3d(view, defaultOrbit(), orbitCam);
  assert.ok(findRed(left), "2D pane must tint the stomach red");
  assert.ok(findRed(right), "3D pane must tint the stomach red");
  for (const pane of [left, right]) {
    const banners = pane.commands.filter((c) => c.op === "banner");
    assert.deepEqual(banners.map((b: any) => b.text), ["Wrong for touching stomach!"]);
  }
});

test("3D pane draws guidance overlays, 2D pane never does", () => {
  const view = makeView();
  view.update(stateAt(3, {
    overlays: [
      { type: "arc", center: [0, 0, 0.003], normal: [0, -1, 0], radius: 0.006,
        start_angle: 0.5, end_angle: 3.6 },
      { type: "marker", position: [-0.005, 0, 0], label: "entry" },
    ],
  }));
  const right = render3d(view, defaultOrbit(), orbitCam);
  const left = render2d(view, 512);
  const rightBlue = right.commands.filter(
    (c) => (c.op === "line" || c.op === "poly") && (c as any).color === "#3399ff");
  assert.ok(rightBlue.length > 5, "arc + marker lines expected in 3D pane");
  const leftBlue = left.commands.filter(
    (c) => (c.op === "line" || c.op === "poly") && (c as any).color === "#3399ff");
  assert.equal(leftBlue.length, 0);
});

test("2d_only layout suppresses the 3D pane", () => {
  const view = makeView();
  assert.equal(view.layout, "side_by_side");
  view.cycleLayout();
  assert.equal(view.layout, "2d_only");
  view.cycleLayout();
  assert.equal(view.layout, "3d_only");
});
