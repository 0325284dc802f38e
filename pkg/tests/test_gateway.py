import asyncio
import json
import math

import pytest

from lapaware.gateway.engine import ControlInput, EngineConfig, SimulationEngine
from lapaware.gateway.server import GatewayServer
from lapaware.instrument import ControlDelta
from lapaware.scene import load_scene_dict
from lapaware.session import read_log
from lapaware.fixtures import cholecystectomy_scene, minimal_scene


def make_engine(scene=None, task="navigation", sink=None, **cfg):
    scene = scene or load_scene_dict(minimal_scene())
    config = EngineConfig.for_scene(scene, **cfg)
    return SimulationEngine(scene, task, config, sink=sink)


class TestEngine:
    def test_headless_advance_without_clients(self):
        records = []
        eng = make_engine(sink=records.append)
        for _ in range(10):
            eng.step([])
        assert eng.tick == 10
        assert any(r.kind == "task_event" for r in records)

    def test_controls_coalesce_within_tick(self):
        eng = make_engine()
        eng.step([
            ControlInput("tool", ControlDelta(d_insertion=0.003), seq=5),
            ControlInput("tool", ControlDelta(d_insertion=0.004), seq=6),
        ])
        # summed then rate-clamped once: 0.007 -> 0.005
        assert eng.tools["tool"].insertion == pytest.approx(0.015, abs=1e-15)

    def test_unknown_tool_rejected(self):
        eng = make_engine()
        with pytest.raises(KeyError):
            eng.step([ControlInput("ghost", ControlDelta())])

    def test_same_controls_same_hash(self):
        def run():
            eng = make_engine()
            for t in range(50):
                eng.step([ControlInput("tool", ControlDelta(
                    d_pitch=0.01 * math.sin(t), d_insertion=0.002))])
            return eng.finish()
        assert run() == run()

    def test_state_message_shape(self):
        eng = make_engine(scene=load_scene_dict(cholecystectomy_scene()),
                          task="cutting")
        eng.step([])
        eng.step([])
        msg = eng.state_message()
        assert msg["type"] == "state"
        assert msg["tick"] == 1
        assert {t["id"] for t in msg["tools"]} == {"shears", "driver"}
        assert len(msg["objects"]) == 4
        assert any(o["type"] == "cutting_plane" for o in msg["overlays"])
        assert "state_hash" in msg
        assert "score_partial" in msg

    def test_record_images_adds_image_records(self):
        records = []
        eng = make_engine(sink=records.append, record_images=True)
        eng.step([])
        kinds = {r.kind for r in records}
        assert "image" in kinds
        img = next(r for r in records if r.kind == "image")
        assert "data" in img.payload

    def test_perception_cadence(self):
        records = []
        eng = make_engine(sink=records.append, record_images=True,
                          perception_interval=4)
        for _ in range(8):
            eng.step([])
        image_ticks = sorted({r.tick for r in records if r.kind == "image"})
        assert image_ticks == [0, 4]

    def test_config_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown config"):
            EngineConfig.from_dict({"tick_rte": 60})

    def test_scene_config_override(self):
        raw = minimal_scene()
        raw["config"] = {"unsafe_depth": 0.002, "snippet_k": 3}
        scene = load_scene_dict(raw)
        config = EngineConfig.for_scene(scene)
        assert config.unsafe_depth == 0.002
        assert config.snippet_k == 3


async def _connect(port):
    from websockets.asyncio.client import connect
    return await connect(f"ws://127.0.0.1:{port}")


async def _recv_type(socket, wanted, timeout=5.0):
    while True:
        raw = await asyncio.wait_for(socket.recv(), timeout)
        msg = json.loads(raw)
        if msg["type"] == wanted:
            return msg


class TestServer:
    def run_server_test(self, coro_factory, task="navigation", **kw):
        async def body():
            scene = load_scene_dict(minimal_scene())
            config = EngineConfig.for_scene(scene)
            server = GatewayServer(scene, task, config, port=0, **kw)
            run_task = asyncio.create_task(server.run())
            for _ in range(100):
                if server.bound_port is not None:
                    break
                await asyncio.sleep(0.01)
            try:
                await coro_factory(server)
            finally:
                server.stop()
                try:
                    await asyncio.wait_for(run_task, 5)
                except asyncio.TimeoutError:
                    run_task.cancel()
        asyncio.run(body())

    def test_hello_and_state_flow(self):
        async def scenario(server):
            ws = await _connect(server.bound_port)
            hello = json.loads(await ws.recv())
            assert hello["type"] == "hello"
            assert hello["role"] == "controller"
            assert hello["tools"] == ["tool"]
            state = await _recv_type(ws, "state")
            assert state["tick"] >= 0
            await ws.close()
        self.run_server_test(scenario)

    def test_control_applies_in_seq_order(self):
        async def scenario(server):
            ws = await _connect(server.bound_port)
            await ws.recv()
            await ws.send(json.dumps({"type": "control", "seq": 5,
                                      "tool_id": "tool", "d_insertion": 0.003}))
            await ws.send(json.dumps({"type": "control", "seq": 6,
                                      "tool_id": "tool", "d_insertion": 0.002}))
            for _ in range(40):
                state = await _recv_type(ws, "state")
                ins = next(t for t in state["tools"])["joints"]["insertion"]
                if ins > 0.0149:
                    break
            assert ins == pytest.approx(0.015, abs=1e-12)
            await ws.close()
        self.run_server_test(scenario)

    def test_unknown_tool_error_reply(self):
        async def scenario(server):
            ws = await _connect(server.bound_port)
            await ws.recv()
            await ws.send(json.dumps({"type": "control", "seq": 1,
                                      "tool_id": "ghost"}))
            err = await _recv_type(ws, "error")
            assert "unknown tool" in err["message"]
            await ws.close()
        self.run_server_test(scenario)

    def test_unknown_field_rejected(self):
        async def scenario(server):
            ws = await _connect(server.bound_port)
            await ws.recv()
            await ws.send(json.dumps({"type": "control", "seq": 1,
                                      "tool_id": "tool", "warp": 9}))
            err = await _recv_type(ws, "error")
            assert "unknown fields" in err["message"]
            await ws.close()
        self.run_server_test(scenario)

    def test_non_increasing_seq_rejected(self):
        async def scenario(server):
            ws = await _connect(server.bound_port)
            await ws.recv()
            await ws.send(json.dumps({"type": "control", "seq": 3,
                                      "tool_id": "tool", "d_jaw": 0.1}))
            await ws.send(json.dumps({"type": "control", "seq": 3,
                                      "tool_id": "tool", "d_jaw": 0.1}))
            err = await _recv_type(ws, "error")
            assert "seq must increase" in err["message"]
            await ws.close()
        self.run_server_test(scenario)

    def test_observer_cannot_drive(self):
        async def scenario(server):
            first = await _connect(server.bound_port)
            await first.recv()
            second = await _connect(server.bound_port)
            hello2 = json.loads(await second.recv())
            assert hello2["role"] == "observer"
            await second.send(json.dumps({"type": "control", "seq": 1,
                                          "tool_id": "tool", "d_jaw": 0.1}))
            err = await _recv_type(second, "error")
            assert "observer" in err["message"]
            await first.close()
            await second.close()
        self.run_server_test(scenario)

    def test_ticks_run_while_client_never_reads(self):
        # a stalled reader must not slow the loop: frames drop, ticks advance
        async def scenario(server):
            ws = await _connect(server.bound_port)
            await ws.recv()           # hello, then stop reading entirely
            start_tick = server.engine.tick
            await asyncio.sleep(0.5)
            assert server.engine.tick - start_tick >= 20
            await ws.close()
        self.run_server_test(scenario)

    def test_bounded_session_records_and_finishes(self, tmp_path):
        log_path = tmp_path / "live.lapslog"

        async def scenario(server):
            ws = await _connect(server.bound_port)
            await ws.recv()
            await ws.send(json.dumps({"type": "control", "seq": 1,
                                      "tool_id": "tool", "d_insertion": 0.005}))
            end = await _recv_type(ws, "session_end", timeout=10)
            assert end["tick"] == 30
            assert server.final_hash is not None
            assert end["state_hash"] == f"{server.final_hash:016x}"
            await ws.close()
        self.run_server_test(scenario, record_path=log_path, max_ticks=30)
        records = read_log(log_path)
        assert records[0].kind == "snapshot"
        assert records[-1].payload.get("final") is True
        assert any(r.kind == "control" for r in records)


class TestLiveReplayParity:
    def test_wire_session_replays_to_same_hash(self, tmp_path):
        """Drive a short session over the wire, then replay the log."""
        log_path = tmp_path / "wire.lapslog"
        scene_raw = minimal_scene()

        async def body():
            scene = load_scene_dict(scene_raw)
            config = EngineConfig.for_scene(scene)
            server = GatewayServer(scene, "navigation", config, port=0,
                                   record_path=log_path, max_ticks=40)
            run_task = asyncio.create_task(server.run())
            for _ in range(100):
                if server.bound_port is not None:
                    break
                await asyncio.sleep(0.01)
            ws = await _connect(server.bound_port)
            await ws.recv()
            for i in range(10):
                await ws.send(json.dumps({
                    "type": "control", "seq": i + 1, "tool_id": "tool",
                    "d_insertion": 0.004, "d_pitch": 0.01}))
                await asyncio.sleep(0.02)
            await _recv_type(ws, "session_end", timeout=15)
            await ws.close()
            await asyncio.wait_for(run_task, 10)
            return server.final_hash

        live_hash = asyncio.run(body())
        from lapaware.session import replay
        scene = load_scene_dict(scene_raw)
        assert replay(scene, read_log(log_path)) == live_hash
