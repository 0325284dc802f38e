import math

import pytest

from lapaware.contact import ContactEvent
from lapaware.geometry import Vec3
from lapaware.instrument import ToolState
from lapaware.interaction import InteractionTuple
from lapaware.scene import load_scene_dict
from lapaware.session import LogRecord
from lapaware.tasks import (
    DISQUALIFYING,
    IncompleteLog,
    TaskEvaluator,
    score_session,
)
from lapaware.fixtures import (
    cholecystectomy_scene,
    suture_pad_scene,
    transfer_scene,
)


def tup(action, tissue=None, obj=None, cls="grasper", tick=0):
    return InteractionTuple(
        instrument_class=cls, instrument_box=None, tissue_class=tissue,
        tissue_box=None, action=action, tick=tick, tissue_object_id=obj)


def contact(tool="t", part="tip", obj="target", depth=0.002, point=Vec3()):
    return ContactEvent(tool, part, obj, point, Vec3(0, 0, 1), depth, 0)


class TestCuttingEvaluator:
    def setup_method(self):
        self.scene = load_scene_dict(cholecystectomy_scene())
        self.ctx = self.scene.annotations["cutting"]
        self.ev = TaskEvaluator(self.ctx, self.scene)

    def shears(self, jaw, insertion=0.05):
        return ToolState(id="shears", instrument_class="scissors",
                         trocar_id="port-a", jaw=jaw, insertion=insertion)

    def test_cut_air(self):
        # closing sequence with zero contacts
        tools = {"shears": self.shears(0.6)}
        self.ev.evaluate_tick(tools, {"shears": tup("idle", cls="scissors")},
                              {"shears": tup("idle", cls="scissors")}, [], 0)
        tools = {"shears": self.shears(0.4)}
        obs, errors = self.ev.evaluate_tick(
            tools, {"shears": tup("idle", cls="scissors")},
            {"shears": tup("idle", cls="scissors")}, [], 1)
        assert [e["kind"] for e in errors] == ["cut_air"]
        # continued closing does not duplicate the event
        tools = {"shears": self.shears(0.2)}
        _, errors = self.ev.evaluate_tick(
            tools, {"shears": tup("idle", cls="scissors")},
            {"shears": tup("idle", cls="scissors")}, [], 2)
        assert errors == []

    def test_contacted_cut_on_plane(self):
        spec = self.ctx.cutting
        ev_point = spec.plane_point
        self.ev.evaluate_tick({"shears": self.shears(0.6)},
                              {"shears": tup("touch", "cystic_artery",
                                             "cystic_artery", "scissors")},
                              {"shears": tup("touch", "cystic_artery",
                                             "cystic_artery", "scissors")},
                              [contact("shears", obj="cystic_artery", point=ev_point)], 0)
        obs, errors = self.ev.evaluate_tick(
            {"shears": self.shears(0.4)},
            {"shears": tup("cut", "cystic_artery", "cystic_artery", "scissors")},
            {"shears": tup("cut", "cystic_artery", "cystic_artery", "scissors")},
            [contact("shears", obj="cystic_artery", point=ev_point)], 1)
        assert errors == []
        assert obs["cut_on_target"] == 1
        assert obs["plane_dev"] == pytest.approx(0.0, abs=1e-12)

    def test_misaligned_cut(self):
        spec = self.ctx.cutting
        off_plane = spec.plane_point + spec.plane_normal * 0.02
        self.ev.evaluate_tick({"shears": self.shears(0.6)},
                              {"shears": tup("idle", cls="scissors")},
                              {"shears": tup("idle", cls="scissors")}, [], 0)
        _, errors = self.ev.evaluate_tick(
            {"shears": self.shears(0.4)},
            {"shears": tup("cut", "liver", "liver", "scissors")},
            {"shears": tup("cut", "liver", "liver", "scissors")},
            [contact("shears", obj="liver", point=off_plane)], 1)
        assert "misaligned_cut" in [e["kind"] for e in errors]


class TestManipulationEvaluator:
    def setup_method(self):
        self.scene = load_scene_dict(cholecystectomy_scene())
        self.ctx = self.scene.annotations["manipulation"]
        self.ev = TaskEvaluator(self.ctx, self.scene)

    def grasper(self, jaw):
        return ToolState(id="g", instrument_class="grasper",
                         trocar_id="port-b", jaw=jaw, insertion=0.05)

    def test_grasp_empty_space(self):
        self.ev.evaluate_tick({"g": self.grasper(0.8)}, {"g": tup("idle")},
                              {"g": tup("idle")}, [], 0)
        _, errors = self.ev.evaluate_tick({"g": self.grasper(0.2)},
                                          {"g": tup("idle")}, {"g": tup("idle")},
                                          [], 1)
        assert [e["kind"] for e in errors] == ["grasp_empty_space"]

    def test_grasp_offset_logged(self):
        spec = self.ctx.manipulation
        ev = contact("g", obj="gallbladder", point=spec.grasp_point)
        self.ev.evaluate_tick({"g": self.grasper(0.8)},
                              {"g": tup("touch", "gallbladder", "gallbladder")},
                              {"g": tup("touch", "gallbladder", "gallbladder")},
                              [ev], 0)
        obs, errors = self.ev.evaluate_tick(
            {"g": self.grasper(0.2)},
            {"g": tup("grasp", "gallbladder", "gallbladder")},
            {"g": tup("grasp", "gallbladder", "gallbladder")}, [ev], 1)
        assert obs["grasp_offset"] == pytest.approx(0.0, abs=1e-12)
        assert errors == []


class TestTransferEvaluator:
    def setup_method(self):
        self.scene = load_scene_dict(transfer_scene())
        self.ctx = self.scene.annotations["transfer"]
        self.ev = TaskEvaluator(self.ctx, self.scene)

    def tools(self):
        return {
            "grasper-l": ToolState(id="grasper-l", instrument_class="grasper",
                                   trocar_id="port-l", insertion=0.138),
            "grasper-r": ToolState(id="grasper-r", instrument_class="grasper",
                                   trocar_id="port-r", insertion=0.138),
        }

    def test_handoff_inside_corridor(self):
        raw = {"grasper-l": tup("release", "block", "block"),
               "grasper-r": tup("grasp", "block", "block")}
        obs, errors = self.ev.evaluate_tick(self.tools(), raw, raw, [], 0)
        assert "handoff_dist" in obs
        assert errors == []

    def test_no_handoff_without_receiver(self):
        raw = {"grasper-l": tup("release", "block", "block"),
               "grasper-r": tup("idle")}
        obs, errors = self.ev.evaluate_tick(self.tools(), raw, raw, [], 0)
        assert "handoff_dist" not in obs


class TestSuturingEvaluator:
    def setup_method(self):
        self.scene = load_scene_dict(suture_pad_scene())
        self.ctx = self.scene.annotations["suturing"]
        self.ev = TaskEvaluator(self.ctx, self.scene)
        spec = self.scene.tool_specs[0]
        from lapaware.gateway.engine import _tool_from_spec
        self.base_tool = _tool_from_spec(spec)

    def driver(self, insertion):
        from dataclasses import replace
        return replace(self.base_tool, insertion=insertion)

    def test_pierce_episode_and_depth(self):
        rise = math.sqrt(0.006 ** 2 - 0.005 ** 2)
        full = 0.15 - (rise + 0.004)
        ev = contact("driver", part="needle", obj="pad", depth=0.0004)
        obs, errors = self.ev.evaluate_tick({"driver": self.driver(full)},
                                            {"driver": tup("pierce", "generic", "pad")},
                                            {"driver": tup("pierce", "generic", "pad")},
                                            [ev], 0)
        assert errors == []
        assert obs["bite_depth"] == pytest.approx(0.006 - rise, abs=1e-9)
        assert obs["plane_err"] == pytest.approx(0.0, abs=1e-12)
        # withdrawing ends the episode; depth inside the band -> no events
        _, errors = self.ev.evaluate_tick({"driver": self.driver(0.1)},
                                          {"driver": tup("idle")},
                                          {"driver": tup("idle")}, [], 1)
        assert errors == []

    def test_shallow_bite(self):
        ev = contact("driver", part="needle", obj="pad", depth=0.0004)
        shallow = 0.15 - 0.0095   # needle bottom just below the surface
        self.ev.evaluate_tick({"driver": self.driver(shallow)},
                              {"driver": tup("pierce", "generic", "pad")},
                              {"driver": tup("pierce", "generic", "pad")}, [ev], 0)
        _, errors = self.ev.evaluate_tick({"driver": self.driver(0.1)},
                                          {"driver": tup("idle")},
                                          {"driver": tup("idle")}, [], 1)
        assert [e["kind"] for e in errors] == ["shallow_bite"]

    def test_deep_bite_on_finalize(self):
        ev = contact("driver", part="needle", obj="pad", depth=0.0004)
        deep = 0.15 - 0.0035      # bottom 6.5 mm under
        self.ev.evaluate_tick({"driver": self.driver(deep)},
                              {"driver": tup("pierce", "generic", "pad")},
                              {"driver": tup("pierce", "generic", "pad")}, [ev], 0)
        errors = self.ev.finalize(1)
        assert [e["kind"] for e in errors] == ["deep_bite"]

    def test_tilted_needle_bad_angle(self):
        # yaw swings the shaft sideways, tilting the bite plane off the
        # tissue normal (roll about a vertical shaft would not)
        from dataclasses import replace
        tool = replace(self.base_tool, insertion=0.143, yaw=0.6)
        ev = contact("driver", part="needle", obj="pad", depth=0.0004)
        _, errors = self.ev.evaluate_tick({"driver": tool},
                                          {"driver": tup("pierce", "generic", "pad")},
                                          {"driver": tup("pierce", "generic", "pad")},
                                          [ev], 0)
        assert "bad_angle" in [e["kind"] for e in errors]


class TestCommonEvents:
    def test_wrong_tissue_rising_edge_only(self):
        scene = load_scene_dict(cholecystectomy_scene())
        ev = TaskEvaluator(scene.annotations["navigation"], scene)
        tools = {"driver": ToolState(id="driver", instrument_class="needle_driver",
                                     trocar_id="port-b", insertion=0.05)}
        t = tup("touch", "stomach", "stomach")
        _, e0 = ev.evaluate_tick(tools, {"driver": t}, {"driver": t}, [], 0)
        _, e1 = ev.evaluate_tick(tools, {"driver": t}, {"driver": t}, [], 1)
        assert [e["kind"] for e in e0] == ["wrong_tissue"]
        assert e1 == []

    def test_unintended_clip_on_hazard_grasp(self):
        scene = load_scene_dict(cholecystectomy_scene())
        ev = TaskEvaluator(scene.annotations["navigation"], scene)
        tools = {"driver": ToolState(id="driver", instrument_class="needle_driver",
                                     trocar_id="port-b", insertion=0.05)}
        t = tup("grasp", "stomach", "stomach")
        _, errors = ev.evaluate_tick(tools, {"driver": t}, {"driver": t}, [], 0)
        kinds = {e["kind"] for e in errors}
        assert kinds == {"wrong_tissue", "unintended_clip"}

    def test_unsafe_depth_event(self):
        scene = load_scene_dict(cholecystectomy_scene())
        ev = TaskEvaluator(scene.annotations["navigation"], scene, unsafe_depth=0.004)
        tools = {"driver": ToolState(id="driver", instrument_class="needle_driver",
                                     trocar_id="port-b", insertion=0.05)}
        deep = contact("driver", obj="gallbladder", depth=0.006)
        t = tup("touch", "gallbladder", "gallbladder")
        _, errors = ev.evaluate_tick(tools, {"driver": t}, {"driver": t}, [deep], 0)
        assert [e["kind"] for e in errors] == ["unsafe_depth"]


class TestScoring:
    def records_for(self, scene_dict, task, events):
        from lapaware.annotations import annotation_to_dict
        from lapaware.scene import load_scene_dict as load
        scene = load(scene_dict)
        head = LogRecord(0, "snapshot", {
            "format_version": 1, "scene_hash": f"{scene.source_hash:016x}",
            "task": task,
            "annotation": annotation_to_dict(scene.annotations[task]),
            "config": {"tick_rate": 60}})
        tail = LogRecord(10, "snapshot", {"state_hash": "0" * 16, "final": True})
        return [head] + events + [tail]

    def test_empty_log(self):
        with pytest.raises(IncompleteLog):
            score_session([])

    def test_truncated_log(self):
        recs = self.records_for(transfer_scene(), "transfer", [])
        with pytest.raises(IncompleteLog):
            score_session(recs[:-1])

    def test_aggregates_metrics(self):
        events = []
        for t in range(5):
            events.append(LogRecord(t, "task_event", {
                "obs": {"tips": {"g": [0.0, 0.0, 0.01 * t]}, "handoff_dist": 0.01}}))
        events.append(LogRecord(4, "task_event",
                                {"error": {"kind": "off_corridor", "tool": "g",
                                           "tick": 4}}))
        result = score_session(self.records_for(transfer_scene(), "transfer", events))
        assert result.task == "transfer"
        assert result.metrics["path_length_m"] == pytest.approx(0.04, abs=1e-12)
        assert result.metrics["handoff_count"] == 5
        assert result.success is False     # off_corridor disqualifies

    def test_success_predicate_transfer(self):
        events = [LogRecord(0, "task_event",
                            {"obs": {"tips": {}, "handoff_dist": 0.005}})]
        result = score_session(self.records_for(transfer_scene(), "transfer", events))
        assert result.success is True

    def test_disqualifying_table_covers_all_tasks(self):
        for task, kinds in DISQUALIFYING.items():
            assert kinds, task
            assert "wrong_tissue" in kinds


class TestAggregatorParity:
    def test_live_and_scored_metrics_identical(self):
        from lapaware.scenarios import SCENARIOS, run_scenario_in_memory
        run = run_scenario_in_memory(SCENARIOS["suture-arc"]())
        scored = score_session(run.records)
        assert scored.to_dict() == run.result.to_dict()
