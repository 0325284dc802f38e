"""Fixed-timestep simulation core.

One `step` is one tick: apply queued controls, detect contacts, run
perception at its cadence, classify and filter interactions, evaluate
feedback rules and the active task, and emit every record through the sink.
Simulation time is tick / tick_rate; nothing here reads a wall clock, so a
recorded control stream reproduces the run bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

from .. import perception
from ..annotations import annotation_to_dict
from ..contact import ContactEvent, classify_depth, detect_contacts
from ..feedback import (
    FeedbackAction,
    FeedbackEngine,
    action_to_dict,
    make_guidance,
    overlay_to_dict,
)
from ..geometry import Pose, Quat, Vec3, point_mesh_distance
from ..instrument import ControlDelta, Needle, ToolState, apply_control, tool_geometry
from ..interaction import InteractionTracker, InteractionTuple
from ..perception import OracleTipDetector
from ..scene import Scene
from ..session import FORMAT_VERSION, LogRecord, state_hash
from ..tasks import TaskAggregator, TaskEvaluator


@dataclass(frozen=True)
class ControlInput:
    tool_id: str
    delta: ControlDelta
    seq: int | None = None

    def to_payload(self) -> dict:
        out: dict = {"tool_id": self.tool_id}
        if self.seq is not None:
            out["seq"] = self.seq
        d = self.delta
        out.update({"d_pitch": d.d_pitch, "d_yaw": d.d_yaw, "d_roll": d.d_roll,
                    "d_insertion": d.d_insertion, "d_jaw": d.d_jaw})
        return out

    @classmethod
    def from_payload(cls, raw: dict) -> "ControlInput":
        return cls(
            tool_id=raw["tool_id"],
            seq=raw.get("seq"),
            delta=ControlDelta(
                d_pitch=float(raw.get("d_pitch", 0.0)),
                d_yaw=float(raw.get("d_yaw", 0.0)),
                d_roll=float(raw.get("d_roll", 0.0)),
                d_insertion=float(raw.get("d_insertion", 0.0)),
                d_jaw=float(raw.get("d_jaw", 0.0)),
            ))


@dataclass
class EngineConfig:
    tick_rate: int = 60
    perception_interval: int = 4
    broadcast_interval: int = 2
    snippet_k: int = 5
    unsafe_depth: float = 0.004
    approach_distance: float = 0.02
    pull_speed: float = 0.002
    trail_max_points: int = 600
    text_ttl: int = 60
    restore_ticks: int = 5
    heatmap_sigma: float = 5.0
    pixel_noise: float = 0.0
    dropout: float = 0.0
    seed: int | None = None
    record_images: bool = False
    snapshot_interval: int = 60

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, raw: dict) -> "EngineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    @classmethod
    def for_scene(cls, scene: Scene, **overrides) -> "EngineConfig":
        merged = dict(scene.config)
        merged.update(overrides)
        return cls.from_dict(merged)


@dataclass
class TickOutput:
    tick: int
    contacts: list[ContactEvent]
    raw_tuples: dict[str, InteractionTuple]
    filtered_tuples: dict[str, InteractionTuple]
    feedback: list[FeedbackAction]
    obs: dict | None
    errors: list[dict]


def _tool_from_spec(spec) -> ToolState:
    needle = None
    if spec.needle:
        frame = Pose.identity()
        if "frame" in spec.needle:
            raw = spec.needle["frame"]
            frame = Pose(Vec3(*raw["pos"]),
                         Quat(*[float(c) for c in raw["quat"]]).normalized())
        needle = Needle(radius=float(spec.needle["radius"]),
                        arc_span=float(spec.needle.get("arc_span", math.pi)),
                        frame=frame)
    return ToolState(id=spec.id, instrument_class=spec.instrument_class,
                     trocar_id=spec.trocar_id, held_needle=needle)


class SimulationEngine:
    """Owns all mutable simulation state; advanced only via step()."""

    def __init__(self, scene: Scene, task: str | None, config: EngineConfig,
                 sink=None, detector=None):
        self.scene = scene
        self.config = config
        self.task_name = task
        self.sink = sink or (lambda record: None)
        self.tick = 0
        self.tools: dict[str, ToolState] = {
            spec.id: _tool_from_spec(spec) for spec in scene.tool_specs}
        self.detector = detector or OracleTipDetector(
            sigma=config.heatmap_sigma, pixel_noise=config.pixel_noise,
            dropout=config.dropout, seed=config.seed)

        self.task_ctx = None
        self.evaluator = None
        self.aggregator = None
        if task is not None:
            if task not in scene.annotations:
                raise KeyError(f"scene has no annotation for task {task!r}")
            self.task_ctx = scene.annotations[task]
            self.evaluator = TaskEvaluator(self.task_ctx, scene,
                                           unsafe_depth=config.unsafe_depth)
            self.aggregator = TaskAggregator(self.task_ctx,
                                             tick_rate=config.tick_rate)

        self.trackers = {
            tool_id: InteractionTracker(
                tool_id, k=config.snippet_k,
                approach_distance=config.approach_distance,
                pull_speed=config.pull_speed)
            for tool_id in self.tools}
        self.feedback = FeedbackEngine(
            scene, self.task_ctx, restore_ticks=config.restore_ticks,
            text_ttl=config.text_ttl, trail_max_points=config.trail_max_points)

        self._targets = []
        if self.task_ctx is not None and self.task_ctx.target_ids:
            self._targets = [scene.object(oid) for oid in self.task_ctx.target_ids]
        else:
            self._targets = list(scene.objects)

        self._last_filtered: dict[str, InteractionTuple] = {}
        self._last_detections = []
        self._last_boxes: list[dict] = []
        self._finished = False

        self._emit(LogRecord(tick=0, kind="snapshot", payload={
            "format_version": FORMAT_VERSION,
            "scene_hash": f"{scene.source_hash:016x}",
            "task": task,
            "annotation": annotation_to_dict(self.task_ctx) if self.task_ctx else None,
            "config": config.to_dict(),
        }))
        if self.task_ctx is not None:
            for overlay in make_guidance(self.task_ctx, scene,
                                         list(self.tools.values())):
                action = FeedbackAction(kind="overlay", tick=0, overlay=overlay)
                self._emit(LogRecord(tick=0, kind="feedback",
                                     payload=action_to_dict(action)))

    # -- plumbing ------------------------------------------------------------

    def _emit(self, record: LogRecord) -> None:
        self.sink(record)

    def _nearest_target_distance(self, tip: Vec3) -> float:
        best = math.inf
        for obj in self._targets:
            d, _, _ = point_mesh_distance(tip, obj.world_mesh)
            best = min(best, d)
        return best

    # -- stepping ------------------------------------------------------------

    def step_from_payloads(self, payloads: list[dict]) -> TickOutput:
        return self.step([ControlInput.from_payload(p) for p in payloads])

    def step(self, controls: list[ControlInput] | None = None) -> TickOutput:
        """Advance exactly one tick."""
        if self._finished:
            raise RuntimeError("engine already finished")
        tick = self.tick
        controls = controls or []

        # controls: log each message, coalesce per tool, apply once so the
        # per-tick rate clamp holds regardless of message count
        summed: dict[str, ControlDelta] = {}
        for ci in controls:
            if ci.tool_id not in self.tools:
                raise KeyError(f"unknown tool {ci.tool_id!r}")
            self._emit(LogRecord(tick=tick, kind="control", payload=ci.to_payload()))
            summed[ci.tool_id] = summed.get(ci.tool_id, ControlDelta()) + ci.delta
        for tool_id in sorted(summed):
            self.tools[tool_id] = apply_control(self.tools[tool_id], summed[tool_id])

        contacts = detect_contacts(self.scene, list(self.tools.values()), tick)
        for ev in contacts:
            self._emit(LogRecord(tick=tick, kind="contact", payload={
                "tool_id": ev.tool_id, "part": ev.part, "object_id": ev.object_id,
                "point": [ev.point.x, ev.point.y, ev.point.z],
                "normal": [ev.normal.x, ev.normal.y, ev.normal.z],
                "depth": ev.depth,
            }))

        if tick % self.config.perception_interval == 0:
            self._run_perception(tick)

        by_tool: dict[str, list[ContactEvent]] = {}
        for ev in contacts:
            by_tool.setdefault(ev.tool_id, []).append(ev)

        raw_tuples: dict[str, InteractionTuple] = {}
        filtered: dict[str, InteractionTuple] = {}
        tips: dict[str, Vec3] = {}
        depth_class: dict[str, str | None] = {}
        for tool_id in sorted(self.tools):
            tool = self.tools[tool_id]
            geo = tool_geometry(tool, self.scene.trocar(tool.trocar_id))
            tips[tool_id] = geo.tip
            tool_contacts = by_tool.get(tool_id, [])
            raw, filt = self.trackers[tool_id].update(
                tool, self.scene, self.scene.camera, tool_contacts,
                self._nearest_target_distance(geo.tip), tick)
            raw_tuples[tool_id] = raw
            filtered[tool_id] = filt
            if tool_contacts:
                deepest = max(tool_contacts, key=lambda e: e.depth)
                depth_class[tool_id] = classify_depth(deepest, self.config.unsafe_depth)
            else:
                depth_class[tool_id] = None
            self._emit(LogRecord(tick=tick, kind="tuple", payload=self._tuple_payload(
                tool_id, raw, filt)))
        self._last_filtered = filtered

        actions = self.feedback.process(filtered, depth_class, tips, tick)
        for action in actions:
            self._emit(LogRecord(tick=tick, kind="feedback",
                                 payload=action_to_dict(action)))

        obs = None
        errors: list[dict] = []
        if self.evaluator is not None:
            obs, errors = self.evaluator.evaluate_tick(
                self.tools, raw_tuples, filtered, contacts, tick)
            self.aggregator.observe(tick, obs)
            self._emit(LogRecord(tick=tick, kind="task_event", payload={"obs": obs}))
            for err in errors:
                self.aggregator.record_error(err)
                self._emit(LogRecord(tick=tick, kind="task_event",
                                     payload={"error": err}))

        self.tick = tick + 1
        if (self.config.snapshot_interval > 0 and self.tick %
                self.config.snapshot_interval == 0):
            self._emit(LogRecord(tick=self.tick, kind="snapshot", payload={
                "state_hash": f"{self.state_hash_value():016x}"}))

        return TickOutput(tick=tick, contacts=contacts, raw_tuples=raw_tuples,
                          filtered_tuples=filtered, feedback=actions, obs=obs,
                          errors=errors)

    def _run_perception(self, tick: int) -> None:
        camera = self.scene.camera
        tools = list(self.tools.values())
        self._last_detections = self.detector.detect(camera, self.scene, tools, tick)
        boxes = []
        for obj in sorted(self.scene.objects, key=lambda o: o.id):
            b2 = perception.compute_box2d(camera, obj)
            b3 = perception.compute_box3d(obj)
            boxes.append({
                "object_id": obj.id,
                "class": obj.tissue_class,
                "box2d": None if b2 is None else [b2.u_min, b2.v_min, b2.u_max, b2.v_max],
                "box3d": {
                    "center": list(b3.center.as_tuple()),
                    "half_extents": list(b3.half_extents.as_tuple()),
                    "quat": [b3.orientation.w, b3.orientation.x,
                             b3.orientation.y, b3.orientation.z],
                },
            })
        self._last_boxes = boxes
        if self.config.record_images:
            for tool in sorted(tools, key=lambda t: t.id):
                trocar = self.scene.trocar(tool.trocar_id)
                tip = tool_geometry(tool, trocar).tip
                heatmap = perception.render_tip_heatmap(camera, tip,
                                                        self.config.heatmap_sigma)
                self._emit(LogRecord(tick=tick, kind="image", payload={
                    "tool_id": tool.id, "kind": "heatmap",
                    "sigma": self.config.heatmap_sigma,
                    "data": perception.heatmap_to_b64(heatmap)}))
            labels = perception.render_label_image(camera, self.scene, tools)
            self._emit(LogRecord(tick=tick, kind="image", payload={
                "kind": "labels", "width": labels.width, "height": labels.height,
                "data": perception.labels_to_b64(labels)}))

    def _tuple_payload(self, tool_id: str, raw: InteractionTuple,
                       filt: InteractionTuple) -> dict:
        def box(b):
            return None if b is None else [b.u_min, b.v_min, b.u_max, b.v_max]

        return {
            "tool_id": tool_id,
            "instrument_class": filt.instrument_class,
            "instrument_box": box(filt.instrument_box),
            "tissue_class": filt.tissue_class,
            "tissue_box": box(filt.tissue_box),
            "action": filt.action,
            "object_id": filt.tissue_object_id,
            "raw_action": raw.action,
        }

    # -- closing ------------------------------------------------------------

    def finish(self) -> int:
        """Flush end-of-session events and the closing snapshot; returns the
        final state hash."""
        if self._finished:
            raise RuntimeError("engine already finished")
        self._finished = True
        if self.evaluator is not None:
            for err in self.evaluator.finalize(self.tick):
                self.aggregator.record_error(err)
                self._emit(LogRecord(tick=self.tick, kind="task_event",
                                     payload={"error": err}))
        final = self.state_hash_value()
        self._emit(LogRecord(tick=self.tick, kind="snapshot", payload={
            "state_hash": f"{final:016x}", "final": True}))
        return final

    # -- views ------------------------------------------------------------

    def state_hash_value(self) -> int:
        colors = {o.id: o.current_color for o in self.scene.objects}
        trails = {tool_id: len(self.feedback.trails.get(tool_id, []))
                  for tool_id in self.tools}
        return state_hash(self.tick, self.tools, colors, trails)

    def result(self):
        return self.aggregator.result() if self.aggregator else None

    def state_message(self) -> dict:
        """Wire `state` payload for the last completed tick."""
        tick = self.tick - 1 if self.tick else 0
        tools_out = []
        overlays = []
        for tool_id in sorted(self.tools):
            tool = self.tools[tool_id]
            geo = tool_geometry(tool, self.scene.trocar(tool.trocar_id))
            tools_out.append({
                "id": tool_id,
                "joints": {"pitch": tool.pitch, "yaw": tool.yaw, "roll": tool.roll,
                           "insertion": tool.insertion},
                "tip": list(geo.tip.as_tuple()),
                "jaw": tool.jaw,
            })
            trail = self.feedback.trails.get(tool_id, [])
            if len(trail) >= 2:
                overlays.append({"type": "trajectory", "tool_id": tool_id,
                                 "points": [list(p.as_tuple()) for p in trail]})
        if self.task_ctx is not None:
            for ov in make_guidance(self.task_ctx, self.scene,
                                    list(self.tools.values())):
                overlays.append(overlay_to_dict(ov))
        objects_out = []
        for obj in sorted(self.scene.objects, key=lambda o: o.id):
            q = obj.pose.orientation
            objects_out.append({
                "id": obj.id,
                "class": obj.tissue_class,
                "pose": {"pos": list(obj.pose.position.as_tuple()),
                         "quat": [q.w, q.x, q.y, q.z]},
                "color": list(obj.current_color),
            })
        tuples_out = [self._tuple_payload(tool_id, self._last_filtered[tool_id],
                                          self._last_filtered[tool_id])
                      for tool_id in sorted(self._last_filtered)]
        for t in tuples_out:
            del t["raw_action"]
        detections = [{"tool_id": d.tool_id, "u": d.u, "v": d.v,
                       "confidence": d.confidence} for d in self._last_detections]
        metrics = self.aggregator.metrics() if self.aggregator else {}
        return {
            "type": "state",
            "tick": tick,
            "sim_time": tick / self.config.tick_rate,
            "tools": tools_out,
            "objects": objects_out,
            "overlays": overlays,
            "texts": [{"text": text, "ttl_ticks": ttl}
                      for text, ttl in self.feedback.active_texts(tick)],
            "tuples": tuples_out,
            "detections": detections,
            "boxes": self._last_boxes,
            "score_partial": {k: metrics[k] for k in sorted(metrics)},
            "state_hash": f"{self.state_hash_value():016x}",
        }
