/** Browser entry point: connects to the gateway, pumps input every
 *  animation frame and draws both panes from the same state message. */

import { execute } from "./canvas.js";
import { InputMapper } from "./input.js";
import { CameraModel, orbitCamera } from "./math.js";
import { parseServerMessage } from "./protocol.js";
import { defaultOrbit, render2d, render3d } from "./render.js";
import { ViewState } from "./viewstate.js";

function param(name: string, fallback: string): string {
  return new URLSearchParams(window.location.search).get(name) ?? fallback;
}

function statusLine(text: string): void {
  const el = document.getElementById("status");
  if (el) el.textContent = text;
}

export function start(): void {
  const host = param("host", "127.0.0.1");
  const port = param("port", "8765");
  const view = new ViewState();
  const orbit = defaultOrbit();
  let mapper: InputMapper | null = null;

  const left = document.getElementById("pane2d") as HTMLCanvasElement;
  const right = document.getElementById("pane3d") as HTMLCanvasElement;
  const leftCtx = left.getContext("2d")!;
  const rightCtx = right.getContext("2d")!;

  const socket = new WebSocket(`ws://${host}:${port}`);
  socket.onopen = () => {
    view.connected = true;
    statusLine(`connected to ${host}:${port}`);
  };
  socket.onclose = () => {
    view.connected = false;
    statusLine("disconnected - last frame frozen, reload to reconnect");
  };
  socket.onmessage = (event) => {
    const msg = parseServerMessage(String(event.data));
    if (msg.type === "hello") {
      view.scene = msg.scene;
      for (const spec of msg.tool_specs) view.toolPorts[spec.id] = spec.trocar;
      mapper = new InputMapper(msg.tools);
      statusLine(`connected as ${msg.role}; tools: ${msg.tools.join(", ")}`);
    } else if (msg.type === "state") {
      view.update(msg);
      if (mapper) {
        const me = msg.tools.find((t) => t.id === mapper!.activeTool);
        if (me) mapper.observeJaw(me.jaw);
      }
    } else if (msg.type === "session_end") {
      view.finalHash = msg.state_hash;
      statusLine(`session ended at tick ${msg.tick} (hash ${msg.state_hash})`);
    } else if (msg.type === "error") {
      view.lastError = msg.message;
      statusLine(`server error: ${msg.message}`);
    }
  };

  window.addEventListener("keydown", (e) => {
    if (e.key === "v") {
      view.cycleLayout();
      return;
    }
    if (e.key === "Tab") e.preventDefault();
    mapper?.keyDown(e.key);
  });
  window.addEventListener("keyup", (e) => mapper?.keyUp(e.key));

  // simple orbit control: drag to rotate, wheel to zoom
  let dragging = false;
  let lastX = 0;
  let lastY = 0;
  right.addEventListener("mousedown", (e) => {
    dragging = true;
    lastX = e.clientX;
    lastY = e.clientY;
  });
  window.addEventListener("mouseup", () => (dragging = false));
  window.addEventListener("mousemove", (e) => {
    if (!dragging) return;
    orbit.yaw -= (e.clientX - lastX) * 0.01;
    orbit.pitch = Math.max(-1.4, Math.min(1.4, orbit.pitch + (e.clientY - lastY) * 0.01));
    lastX = e.clientX;
    lastY = e.clientY;
  });
  right.addEventListener("wheel", (e) => {
    orbit.distance = Math.max(0.1, Math.min(2, orbit.distance * (e.deltaY > 0 ? 1.1 : 0.9)));
    e.preventDefault();
  });

  function pollGamepad() {
    const pads = navigator.getGamepads ? navigator.getGamepads() : [];
    const pad = pads && pads[0];
    if (!pad) return undefined;
    return {
      axes: [pad.axes[0] ?? 0, pad.axes[1] ?? 0],
      buttons: [pad.buttons[0]?.pressed ?? false, pad.buttons[1]?.pressed ?? false],
    };
  }

  const makeCamera = (o: typeof orbit): CameraModel =>
    orbitCamera(o.center, o.yaw, o.pitch, o.distance, o.width, o.height, o.focal);

  function frame(): void {
    if (mapper && socket.readyState === WebSocket.OPEN) {
      const msg = mapper.frame(pollGamepad());
      if (msg) socket.send(JSON.stringify(msg));
    }
    const show2d = view.layout !== "3d_only";
    const show3d = view.layout !== "2d_only";
    left.style.display = show2d ? "block" : "none";
    right.style.display = show3d ? "block" : "none";
    if (show2d) execute(leftCtx, render2d(view, left.width), left.width, left.height);
    if (show3d) execute(rightCtx, render3d(view, orbit, makeCamera), right.width, right.height);
    requestAnimationFrame(frame);
  }
  requestAnimationFrame(frame);
}

if (typeof window !== "undefined" && typeof document !== "undefined") {
  window.addEventListener("DOMContentLoaded", start);
}
