"""Wire gateway: authoritative fixed-rate simulation loop plus a WebSocket
endpoint for the trainer UI.

One logical simulation task owns all state; connection handlers only push
validated control messages onto an ordered inbox and read immutable state
snapshots from a latest-wins mailbox. A slow client therefore drops frames
instead of delaying the tick, and the first client to connect is the
controller while later ones observe.
"""

from __future__ import annotations

import asyncio
import json
from dataclasses import dataclass, field

from websockets.asyncio.server import serve

from ..scene import Scene
from ..session import SessionLog
from .engine import ControlInput, EngineConfig, SimulationEngine

CONTROL_FIELDS = {"type", "seq", "tool_id", "d_pitch", "d_yaw", "d_roll",
                  "d_insertion", "d_jaw"}


@dataclass
class ClientState:
    socket: object
    role: str
    last_seq: int | None = None
    mailbox: str | None = None
    wakeup: asyncio.Event = field(default_factory=asyncio.Event)


class GatewayServer:
    def __init__(self, scene: Scene, task: str | None, config: EngineConfig,
                 host: str = "127.0.0.1", port: int = 8765,
                 record_path=None, max_ticks: int | None = None,
                 realtime: bool = True):
        self.scene = scene
        self.config = config
        self.host = host
        self.port = port
        self.max_ticks = max_ticks
        self.realtime = realtime
        self._log = SessionLog(record_path) if record_path else None
        sink = self._log.append if self._log else None
        self.engine = SimulationEngine(scene, task, config, sink=sink)
        self._inbox: list[ControlInput] = []
        self._clients: list[ClientState] = []
        self._controller: ClientState | None = None
        self._stopped = asyncio.Event()
        self.final_hash: int | None = None
        self.bound_port: int | None = None

    # -- connection side ------------------------------------------------------

    async def _handle_client(self, socket) -> None:
        role = "controller" if self._controller is None else "observer"
        client = ClientState(socket=socket, role=role)
        self._clients.append(client)
        if role == "controller":
            self._controller = client
        sender = asyncio.create_task(self._sender(client))
        try:
            await socket.send(json.dumps({
                "type": "hello", "role": role,
                "tick_rate": self.config.tick_rate,
                "scene_hash": f"{self.scene.source_hash:016x}",
                "tools": sorted(self.engine.tools),
                "tool_specs": [{"id": s.id, "class": s.instrument_class,
                                "trocar": s.trocar_id}
                               for s in self.scene.tool_specs],
                "scene": {
                    "objects": self.scene.raw.get("objects", []),
                    "camera": self.scene.raw.get("camera", {}),
                    "trocars": self.scene.raw.get("trocars", []),
                },
            }))
            async for raw in socket:
                reply = self._on_message(client, raw)
                if reply is not None:
                    await socket.send(json.dumps(reply))
        except Exception:
            pass
        finally:
            sender.cancel()
            self._clients.remove(client)
            if self._controller is client:
                self._controller = next(
                    (c for c in self._clients if c.role != "observer"), None)
                if self._controller is None and self._clients:
                    self._clients[0].role = "controller"
                    self._controller = self._clients[0]

    def _on_message(self, client: ClientState, raw) -> dict | None:
        """Validate one inbound frame; malformed input gets a connection
        scoped error and never touches the simulation."""
        try:
            msg = json.loads(raw)
        except json.JSONDecodeError:
            return {"type": "error", "message": "not valid JSON"}
        if not isinstance(msg, dict) or msg.get("type") != "control":
            return {"type": "error", "message": "expected a control message"}
        unknown = set(msg) - CONTROL_FIELDS
        if unknown:
            return {"type": "error",
                    "message": f"unknown fields: {sorted(unknown)}"}
        if client.role != "controller":
            return {"type": "error", "message": "observer connections cannot send controls"}
        seq = msg.get("seq")
        if not isinstance(seq, int):
            return {"type": "error", "message": "seq must be an integer"}
        if client.last_seq is not None and seq <= client.last_seq:
            return {"type": "error",
                    "message": f"seq must increase (got {seq} after {client.last_seq})"}
        tool_id = msg.get("tool_id")
        if tool_id not in self.engine.tools:
            return {"type": "error", "message": f"unknown tool {tool_id!r}"}
        client.last_seq = seq
        try:
            self._inbox.append(ControlInput.from_payload({
                "tool_id": tool_id, "seq": seq,
                "d_pitch": msg.get("d_pitch", 0.0),
                "d_yaw": msg.get("d_yaw", 0.0),
                "d_roll": msg.get("d_roll", 0.0),
                "d_insertion": msg.get("d_insertion", 0.0),
                "d_jaw": msg.get("d_jaw", 0.0),
            }))
        except (TypeError, ValueError):
            return {"type": "error", "message": "control deltas must be numbers"}
        return None

    async def _sender(self, client: ClientState) -> None:
        while True:
            await client.wakeup.wait()
            client.wakeup.clear()
            frame = client.mailbox
            client.mailbox = None
            if frame is not None:
                try:
                    await client.socket.send(frame)
                except Exception:
                    return

    def _broadcast(self, frame: str) -> None:
        for client in self._clients:
            client.mailbox = frame       # latest wins; slow clients drop
            client.wakeup.set()

    # -- simulation side ------------------------------------------------------

    async def _tick_loop(self) -> None:
        loop = asyncio.get_running_loop()
        start = loop.time()
        dt = 1.0 / self.config.tick_rate
        while not self._stopped.is_set():
            controls = sorted(self._inbox, key=lambda c: (c.seq is None, c.seq))
            self._inbox = []
            self.engine.step(controls)
            if self.engine.tick % self.config.broadcast_interval == 0:
                self._broadcast(json.dumps(self.engine.state_message()))
            if self.max_ticks is not None and self.engine.tick >= self.max_ticks:
                break
            if self.realtime:
                target = start + self.engine.tick * dt
                delay = target - loop.time()
                if delay > 0:
                    await asyncio.sleep(delay)
                # behind schedule: keep stepping; sim time stays tick/rate
            else:
                await asyncio.sleep(0)
        self.final_hash = self.engine.finish()
        if self._log:
            self._log.close()
        self._broadcast(json.dumps({
            "type": "session_end",
            "tick": self.engine.tick,
            "state_hash": f"{self.final_hash:016x}",
        }))
        await asyncio.sleep(0.05)        # give senders a chance to flush
        self._stopped.set()

    async def run(self) -> None:
        async with serve(self._handle_client, self.host, self.port) as server:
            self.bound_port = server.sockets[0].getsockname()[1] if server.sockets else self.port
            print(f"listening on ws://{self.host}:{self.bound_port}", flush=True)
            ticker = asyncio.create_task(self._tick_loop())
            try:
                await ticker
            finally:
                if not ticker.done():
                    ticker.cancel()

    def stop(self) -> None:
        self._stopped.set()
