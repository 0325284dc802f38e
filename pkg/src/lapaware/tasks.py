"""Task definitions, live evaluators and session scoring.

Five drill types share one pipeline: a stateful `TaskEvaluator` watches each
tick and emits observations plus error events; a `TaskAggregator` folds that
stream into metrics and a success verdict. The aggregator is fed live for
partial scores and again by `score_session`, so replayed logs score
identically to the live run by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .annotations import TaskAnnotation, parse_annotation
from .contact import ContactEvent, NEEDLE_SAMPLES
from .geometry import Vec3, point_mesh_distance
from .instrument import ToolState, needle_tip_curve, needle_world_circle, tool_geometry
from .interaction import InteractionTuple
from .scene import Scene

ERROR_KINDS = (
    "grasp_empty_space", "misaligned_cut", "unintended_clip", "cut_air",
    "wrong_tissue", "unsafe_depth", "off_corridor", "shallow_bite",
    "deep_bite", "bad_angle",
)

# events that invalidate a run, per task; unsafe_depth is a warning everywhere
DISQUALIFYING = {
    "navigation": {"wrong_tissue", "unintended_clip"},
    "manipulation": {"grasp_empty_space", "bad_angle", "wrong_tissue", "unintended_clip"},
    "transfer": {"off_corridor", "wrong_tissue", "unintended_clip"},
    "cutting": {"cut_air", "misaligned_cut", "wrong_tissue", "unintended_clip"},
    "suturing": {"shallow_bite", "deep_bite", "bad_angle", "wrong_tissue", "unintended_clip"},
}

TRACTION_MIN_TRAVEL = 0.003   # m of pull before the traction direction is judged
JAW_OPEN = 0.5


class IncompleteLog(ValueError):
    """Session log has no closing snapshot (or no records at all)."""


@dataclass
class TaskResult:
    task: str
    success: bool
    metrics: dict[str, float]
    error_events: list[dict]

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "success": self.success,
            "metrics": {k: self.metrics[k] for k in sorted(self.metrics)},
            "error_events": self.error_events,
        }


def _v(p: Vec3) -> list[float]:
    return [p.x, p.y, p.z]


def _point_segment_distance(p: Vec3, a: Vec3, b: Vec3) -> float:
    ab = b - a
    denom = ab.dot(ab)
    if denom < 1e-300:
        return p.distance_to(a)
    t = max(0.0, min(1.0, (p - a).dot(ab) / denom))
    return p.distance_to(a + ab * t)


def _polyline_distance(p: Vec3, path: list[Vec3]) -> float:
    if len(path) == 1:
        return p.distance_to(path[0])
    return min(_point_segment_distance(p, a, b) for a, b in zip(path, path[1:]))


class TaskEvaluator:
    """Per-tick error detection and observation stream for the active task."""

    def __init__(self, task_ctx: TaskAnnotation, scene: Scene,
                 unsafe_depth: float = 0.004):
        self.ctx = task_ctx
        self.scene = scene
        self.unsafe_depth = unsafe_depth
        self._prev_jaw: dict[str, float] = {}
        self._episodes: dict[tuple, bool] = {}      # rising-edge latches
        self._hold_anchor: dict[str, Vec3] = {}
        self._hold_judged: dict[str, bool] = {}
        self._grasp_logged: dict[str, bool] = {}
        # suturing episode state per tool
        self._pierce_active: dict[str, bool] = {}
        self._bite_max: dict[str, float] = {}
        self._pierce_angle_bad: dict[str, bool] = {}

    # -- helpers -----------------------------------------------------------

    def _edge(self, key: tuple, active: bool) -> bool:
        """True exactly when `key` flips inactive -> active."""
        was = self._episodes.get(key, False)
        self._episodes[key] = active
        return active and not was

    def _is_wrong(self, object_id: str) -> bool:
        obj = self.scene.object(object_id)
        if object_id in self.ctx.hazard_ids or obj.role == "hazard":
            return True
        return obj.role == "target" and object_id not in self.ctx.target_ids

    def _is_hazard(self, object_id: str) -> bool:
        return (object_id in self.ctx.hazard_ids
                or self.scene.object(object_id).role == "hazard")

    # -- main entry ----------------------------------------------------------

    def evaluate_tick(self, tools: dict[str, ToolState],
                      raw: dict[str, InteractionTuple],
                      filtered: dict[str, InteractionTuple],
                      contacts: list[ContactEvent],
                      tick: int) -> tuple[dict, list[dict]]:
        obs: dict = {"tips": {}}
        errors: list[dict] = []
        tips: dict[str, Vec3] = {}
        by_tool: dict[str, list[ContactEvent]] = {}
        for ev in contacts:
            by_tool.setdefault(ev.tool_id, []).append(ev)

        for tool_id in sorted(tools):
            tool = tools[tool_id]
            tip = tool_geometry(tool, self.scene.trocar(tool.trocar_id)).tip
            tips[tool_id] = tip
            obs["tips"][tool_id] = _v(tip)

        # task-agnostic: wrong tissue, unintended clip, unsafe depth
        for tool_id in sorted(filtered):
            tup = filtered[tool_id]
            oid = tup.tissue_object_id
            engaged = tup.action not in ("idle", "approach") and oid is not None
            wrong = engaged and self._is_wrong(oid)
            if self._edge(("wrong", tool_id, oid if wrong else None), wrong) and wrong:
                errors.append({"kind": "wrong_tissue", "tool": tool_id, "object": oid})
            clip = (engaged and tup.action in ("cut", "grasp")
                    and self._is_hazard(oid))
            if self._edge(("clip", tool_id, oid if clip else None), clip) and clip:
                errors.append({"kind": "unintended_clip", "tool": tool_id, "object": oid})
        for tool_id in sorted(tools):
            deep = [ev for ev in by_tool.get(tool_id, [])
                    if ev.depth > self.unsafe_depth]
            active = bool(deep)
            if self._edge(("unsafe", tool_id), active) and active:
                errors.append({"kind": "unsafe_depth", "tool": tool_id,
                               "object": deep[0].object_id,
                               "value": deep[0].depth})

        handler = getattr(self, f"_tick_{self.ctx.task}")
        handler(tools, raw, filtered, by_tool, tips, obs, errors, tick)

        for err in errors:
            err["tick"] = tick
        return obs, errors

    def finalize(self, tick: int) -> list[dict]:
        """Close any live episodes at end of session."""
        errors: list[dict] = []
        if self.ctx.task == "suturing":
            for tool_id, active in list(self._pierce_active.items()):
                if active:
                    errors += self._close_pierce(tool_id)
        for err in errors:
            err["tick"] = tick
        return errors

    # -- navigation ----------------------------------------------------------

    def _tick_navigation(self, tools, raw, filtered, by_tool, tips, obs, errors, tick):
        spec = self.ctx.navigation
        target = self.scene.object(self.ctx.target_ids[0])
        apex = self.scene.camera.pose.position
        axis = (target.pose.position - apex).normalized()
        in_cone = 0
        in_band = 0
        for tool_id, tip in tips.items():
            rel = tip - apex
            n = rel.norm()
            angle = math.acos(max(-1.0, min(1.0, rel.dot(axis) / n))) if n > 1e-12 else 0.0
            dist, _, _ = point_mesh_distance(tip, target.world_mesh)
            if angle <= spec.view_half_angle:
                in_cone = 1
            if spec.distance_band[0] <= dist <= spec.distance_band[1]:
                in_band = 1
        obs["in_cone"] = in_cone
        obs["in_band"] = in_band

    # -- manipulation ----------------------------------------------------------

    def _tick_manipulation(self, tools, raw, filtered, by_tool, tips, obs, errors, tick):
        spec = self.ctx.manipulation
        for tool_id in sorted(tools):
            tool = tools[tool_id]
            prev_jaw = self._prev_jaw.get(tool_id, tool.jaw)
            closed_now = prev_jaw >= JAW_OPEN and tool.jaw < JAW_OPEN
            if closed_now and not by_tool.get(tool_id):
                errors.append({"kind": "grasp_empty_space", "tool": tool_id})
            action = raw[tool_id].action if tool_id in raw else "idle"
            if action == "grasp" and not self._grasp_logged.get(tool_id):
                events = by_tool.get(tool_id, [])
                if events:
                    point = max(events, key=lambda e: e.depth).point
                    self._hold_anchor[tool_id] = point
                    self._hold_judged[tool_id] = False
                    self._grasp_logged[tool_id] = True
                    obs["grasp_offset"] = point.distance_to(spec.grasp_point)
            if action in ("grasp", "pull") and tool_id in self._hold_anchor \
                    and not self._hold_judged.get(tool_id, True):
                anchor = self._hold_anchor[tool_id]
                travel = tips[tool_id] - anchor
                if travel.norm() >= TRACTION_MIN_TRAVEL:
                    angle = math.acos(max(-1.0, min(
                        1.0, travel.normalized().dot(spec.traction_dir))))
                    obs["traction_angle"] = angle
                    self._hold_judged[tool_id] = True
                    if angle > spec.max_angle_err:
                        errors.append({"kind": "bad_angle", "tool": tool_id,
                                       "value": angle})
            if action in ("idle", "approach", "release"):
                self._grasp_logged[tool_id] = False
                self._hold_anchor.pop(tool_id, None)
            self._prev_jaw[tool_id] = tool.jaw

    # -- transfer ----------------------------------------------------------

    def _tick_transfer(self, tools, raw, filtered, by_tool, tips, obs, errors, tick):
        spec = self.ctx.transfer
        releasing = [t for t, tup in sorted(raw.items()) if tup.action == "release"]
        holding = [t for t, tup in sorted(raw.items()) if tup.action in ("grasp", "pull")]
        if releasing and holding:
            giver = releasing[0]
            receiver = holding[0]
            mid = (tips[giver] + tips[receiver]) * 0.5
            dist = mid.distance_to(spec.handoff_center)
            obs["handoff_dist"] = dist
            if dist > spec.corridor_radius:
                errors.append({"kind": "off_corridor", "tool": giver, "value": dist})

    # -- cutting ----------------------------------------------------------

    def _tick_cutting(self, tools, raw, filtered, by_tool, tips, obs, errors, tick):
        # a "cut" here is the scissor-closing gesture itself, so closing on
        # thin air is observable (the classifier only names contacted cuts)
        spec = self.ctx.cutting
        for tool_id in sorted(tools):
            tool = tools[tool_id]
            if tool.instrument_class != "scissors":
                continue
            prev_jaw = self._prev_jaw.get(tool_id, tool.jaw)
            self._prev_jaw[tool_id] = tool.jaw
            closing = (prev_jaw - tool.jaw) >= 0.01
            first = closing and not self._episodes.get(("cutting", tool_id), False)
            self._episodes[("cutting", tool_id)] = closing
            if not closing:
                continue
            events = by_tool.get(tool_id, [])
            if not events:
                if first:
                    errors.append({"kind": "cut_air", "tool": tool_id})
                continue
            blade = max(events, key=lambda e: e.depth)
            dev = abs((blade.point - spec.plane_point).dot(spec.plane_normal))
            obs["plane_dev"] = dev
            obs["path_dev"] = _polyline_distance(blade.point, spec.path)
            on_target = blade.object_id in self.ctx.target_ids
            obs["cut_on_target"] = 1 if on_target else 0
            if dev > spec.corridor_radius and first:
                errors.append({"kind": "misaligned_cut", "tool": tool_id, "value": dev})

    # -- suturing ----------------------------------------------------------

    def _close_pierce(self, tool_id: str) -> list[dict]:
        errors = []
        spec = self.ctx.suturing
        depth = self._bite_max.get(tool_id, 0.0)
        if depth < spec.depth_band[0]:
            errors.append({"kind": "shallow_bite", "tool": tool_id, "value": depth})
        elif depth > spec.depth_band[1]:
            errors.append({"kind": "deep_bite", "tool": tool_id, "value": depth})
        self._pierce_active[tool_id] = False
        self._bite_max[tool_id] = 0.0
        self._pierce_angle_bad[tool_id] = False
        return errors

    def _tick_suturing(self, tools, raw, filtered, by_tool, tips, obs, errors, tick):
        spec = self.ctx.suturing
        for tool_id in sorted(tools):
            tool = tools[tool_id]
            if tool.held_needle is None:
                continue
            engaged = any(ev.part == "needle" and ev.object_id in self.ctx.target_ids
                          for ev in by_tool.get(tool_id, []))
            was = self._pierce_active.get(tool_id, False)
            if engaged:
                trocar = self.scene.trocar(tool.trocar_id)
                circle = needle_world_circle(tool, trocar)
                samples = needle_tip_curve(tool, trocar, NEEDLE_SAMPLES)
                bite = max(((spec.entry - p).dot(spec.tissue_normal) for p in samples),
                           default=0.0)
                bite = max(0.0, bite)
                if not was:
                    self._pierce_active[tool_id] = True
                    self._bite_max[tool_id] = 0.0
                    self._pierce_angle_bad[tool_id] = False
                self._bite_max[tool_id] = max(self._bite_max[tool_id], bite)
                plane_err = abs(math.acos(max(-1.0, min(
                    1.0, abs(circle.plane_normal.dot(spec.tissue_normal))))) - 0.5 * math.pi)
                entry_d = min(p.distance_to(spec.entry) for p in samples)
                exit_d = min(p.distance_to(spec.exit) for p in samples)
                obs["bite_depth"] = self._bite_max[tool_id]
                obs["plane_err"] = plane_err
                obs["entry_dist"] = entry_d
                obs["exit_dist"] = exit_d
                if plane_err > spec.max_angle_err and not self._pierce_angle_bad[tool_id]:
                    self._pierce_angle_bad[tool_id] = True
                    errors.append({"kind": "bad_angle", "tool": tool_id,
                                   "value": plane_err})
            elif was:
                errors += self._close_pierce(tool_id)


# ---------------------------------------------------------------------------
# aggregation and scoring


class TaskAggregator:
    """Folds the observation/error stream into metrics and a verdict.

    Used identically by the live engine (for partial scores) and by
    `score_session`, so a replayed log cannot score differently.
    """

    def __init__(self, task_ctx: TaskAnnotation, tick_rate: int = 60):
        self.ctx = task_ctx
        self.tick_rate = tick_rate
        self.first_tick: int | None = None
        self.last_tick: int | None = None
        self.errors: list[dict] = []
        self._prev_tips: dict[str, Vec3] = {}
        self._path_length = 0.0
        self._counts: dict[str, int] = {}
        self._sums: dict[str, float] = {}
        self._mins: dict[str, float] = {}
        self._maxs: dict[str, float] = {}
        self._firsts: dict[str, float] = {}

    def observe(self, tick: int, obs: dict) -> None:
        if self.first_tick is None:
            self.first_tick = tick
        self.last_tick = tick
        for tool_id, xyz in obs.get("tips", {}).items():
            tip = Vec3(*xyz)
            if tool_id in self._prev_tips:
                self._path_length += tip.distance_to(self._prev_tips[tool_id])
            self._prev_tips[tool_id] = tip
        for key, value in obs.items():
            if key == "tips":
                continue
            self._counts[key] = self._counts.get(key, 0) + 1
            self._sums[key] = self._sums.get(key, 0.0) + float(value)
            self._mins[key] = min(self._mins.get(key, math.inf), float(value))
            self._maxs[key] = max(self._maxs.get(key, -math.inf), float(value))
            self._firsts.setdefault(key, float(value))

    def record_error(self, err: dict) -> None:
        self.errors.append(dict(err))

    def _fraction(self, key: str) -> float:
        ticks = (self.last_tick - self.first_tick + 1) if self.first_tick is not None else 0
        if ticks <= 0:
            return 0.0
        return self._sums.get(key, 0.0) / ticks

    def metrics(self) -> dict[str, float]:
        out: dict[str, float] = {}
        if self.first_tick is not None:
            out["task_time_s"] = (self.last_tick - self.first_tick + 1) / self.tick_rate
        out["path_length_m"] = self._path_length
        out["error_count"] = float(len(self.errors))
        task = self.ctx.task
        if task == "navigation":
            out["in_cone_fraction"] = self._fraction("in_cone")
            out["in_band_fraction"] = self._fraction("in_band")
        elif task == "manipulation":
            if "grasp_offset" in self._firsts:
                out["grasp_offset_m"] = self._firsts["grasp_offset"]
            if "traction_angle" in self._firsts:
                out["traction_angle_rad"] = self._firsts["traction_angle"]
            out["grasp_count"] = float(self._counts.get("grasp_offset", 0))
        elif task == "transfer":
            out["handoff_count"] = float(self._counts.get("handoff_dist", 0))
            if "handoff_dist" in self._mins:
                out["handoff_dist_m"] = self._mins["handoff_dist"]
        elif task == "cutting":
            out["cut_tick_count"] = float(self._counts.get("plane_dev", 0))
            out["target_cut_count"] = self._sums.get("cut_on_target", 0.0)
            if "plane_dev" in self._maxs:
                out["plane_dev_max_m"] = self._maxs["plane_dev"]
            if "path_dev" in self._maxs:
                out["path_dev_max_m"] = self._maxs["path_dev"]
        elif task == "suturing":
            if "bite_depth" in self._maxs:
                out["bite_depth_m"] = self._maxs["bite_depth"]
            if "entry_dist" in self._mins:
                out["entry_dist_m"] = self._mins["entry_dist"]
                out["exit_dist_m"] = self._mins["exit_dist"]
            if "plane_err" in self._maxs:
                out["plane_err_max_rad"] = self._maxs["plane_err"]
        return out

    def result(self) -> TaskResult:
        task = self.ctx.task
        metrics = self.metrics()
        kinds = {e["kind"] for e in self.errors}
        clean = not (kinds & DISQUALIFYING[task])
        if task == "navigation":
            spec = self.ctx.navigation
            done = (metrics.get("in_cone_fraction", 0.0) >= spec.pass_fraction
                    and metrics.get("in_band_fraction", 0.0) >= spec.pass_fraction)
        elif task == "manipulation":
            spec = self.ctx.manipulation
            done = (metrics.get("grasp_count", 0) >= 1
                    and metrics.get("grasp_offset_m", math.inf) <= spec.max_grasp_offset)
        elif task == "transfer":
            done = metrics.get("handoff_count", 0) >= 1
        elif task == "cutting":
            done = metrics.get("target_cut_count", 0) >= 1
        elif task == "suturing":
            spec = self.ctx.suturing
            done = (self._counts.get("bite_depth", 0) >= 1
                    and metrics.get("entry_dist_m", math.inf) <= spec.marker_tolerance
                    and metrics.get("exit_dist_m", math.inf) <= spec.marker_tolerance)
        else:
            done = False
        return TaskResult(task=task, success=bool(done and clean),
                          metrics=metrics, error_events=list(self.errors))


def score_session(records: list) -> TaskResult:
    """Aggregate a complete session log (list of session.LogRecord).

    Pure function of the log: the opening snapshot carries the task
    annotation and config; task_event records carry every observation and
    error the evaluator produced.
    """
    if not records:
        raise IncompleteLog("empty log")
    head = records[0]
    if head.kind != "snapshot" or "annotation" not in head.payload:
        raise IncompleteLog("log does not start with a session snapshot")
    tail = records[-1]
    if tail.kind != "snapshot" or not tail.payload.get("final"):
        raise IncompleteLog("log has no closing snapshot (session truncated?)")

    ctx = parse_annotation("session", head.payload["annotation"])
    tick_rate = int(head.payload.get("config", {}).get("tick_rate", 60))
    agg = TaskAggregator(ctx, tick_rate=tick_rate)
    for rec in records:
        if rec.kind != "task_event":
            continue
        if "obs" in rec.payload:
            agg.observe(rec.tick, rec.payload["obs"])
        if "error" in rec.payload:
            agg.record_error(rec.payload["error"])
    return agg.result()
