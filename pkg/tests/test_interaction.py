import itertools
import random

import pytest

from lapaware.contact import ContactEvent
from lapaware.geometry import Vec3
from lapaware.instrument import ToolState
from lapaware.interaction import (
    ACTIONS,
    TRANSITIONS,
    InteractionTuple,
    InteractionTracker,
    MissingContact,
    build_tuple,
    classify_action,
    temporal_filter,
)
from lapaware.scene import load_scene_dict
from lapaware.fixtures import cholecystectomy_scene, minimal_scene


def tool(cls="grasper", jaw=0.0, **kw):
    base = dict(id="t", instrument_class=cls, trocar_id="port", jaw=jaw)
    base.update(kw)
    return ToolState(**base)


def contact(part="tip", obj="target", depth=0.002):
    return ContactEvent("t", part, obj, Vec3(), Vec3(0, 0, 1), depth, 0)


class TestClassify:
    def test_idle_far(self):
        assert classify_action(tool(), [], "idle", 0.5) == "idle"

    def test_approach_near(self):
        assert classify_action(tool(), [], "idle", 0.015) == "approach"

    def test_touch_with_open_jaw(self):
        assert classify_action(tool(jaw=0.8), [contact()], "approach", 0.0,
                               prev_jaw=0.8) == "touch"

    def test_grasp_on_close_transition(self):
        assert classify_action(tool(jaw=0.2), [contact()], "touch", 0.0,
                               prev_jaw=0.8) == "grasp"

    def test_release_on_open(self):
        assert classify_action(tool(jaw=0.7), [contact()], "grasp", 0.0,
                               prev_jaw=0.2) == "release"

    def test_pull_on_retreat(self):
        got = classify_action(
            tool(jaw=0.1), [contact()], "grasp", 0.0, prev_jaw=0.1,
            tip=Vec3(0, 0, 0.010), prev_tip=Vec3(0, 0, 0.004),
            anchor=Vec3(0, 0, 0.0))
        assert got == "pull"

    def test_scissors_closing_cuts(self):
        assert classify_action(tool("scissors", jaw=0.2), [contact()], "touch",
                               0.0, prev_jaw=0.6) == "cut"

    def test_scissors_static_jaw_touches(self):
        assert classify_action(tool("scissors", jaw=0.6), [contact()], "touch",
                               0.0, prev_jaw=0.6) == "touch"

    def test_needle_contact_pierces(self):
        got = classify_action(tool("needle_driver"), [contact(part="needle")],
                              "approach", 0.0)
        assert got == "pierce"

    def test_hold_persists_off_surface(self):
        got = classify_action(
            tool(jaw=0.1), [], "grasp", 0.5, prev_jaw=0.1,
            tip=Vec3(0, 0, 0.005), prev_tip=Vec3(0, 0, 0.005),
            anchor=Vec3(0, 0, 0.0))
        assert got == "grasp"

    def test_scripted_scissors_trace(self):
        # hand-written transition table for a close-approach-cut-retreat story
        story = [
            # (contacts, jaw, distance) -> expected
            ([], 0.6, 0.5, "idle"),
            ([], 0.6, 0.015, "approach"),
            ([contact()], 0.6, 0.0, "touch"),
            ([contact()], 0.2, 0.0, "cut"),       # 0.6 -> 0.2 while touching
            ([contact()], 0.2, 0.0, "touch"),     # jaw static again
            ([], 0.2, 0.05, "idle"),
        ]
        prev = "idle"
        prev_jaw = 0.6
        for contacts, jaw, dist, expected in story:
            got = classify_action(tool("scissors", jaw=jaw), contacts, prev,
                                  dist, prev_jaw=prev_jaw)
            assert got == expected
            prev, prev_jaw = got, jaw


class TestTransitionsGraph:
    def test_fuzz_no_illegal_transition(self):
        rng = random.Random(31337)
        prev = "idle"
        prev_jaw = 0.0
        anchor = None
        tip = Vec3(0, 0, 0.01)
        for _ in range(100_000):
            jaw = rng.random()
            has_contact = rng.random() < 0.5
            parts = ["tip", "shaft", "jaw_left", "needle"]
            contacts = [contact(part=rng.choice(parts))] if has_contact else []
            dist = rng.uniform(0, 0.1)
            new_tip = Vec3(rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02),
                           rng.uniform(0, 0.04))
            cls = rng.choice(["grasper", "scissors", "needle_driver"])
            got = classify_action(
                tool(cls, jaw=jaw), contacts, prev, dist, prev_jaw=prev_jaw,
                tip=new_tip, prev_tip=tip, anchor=anchor)
            assert got in TRANSITIONS[prev], (prev, got)
            if got == "grasp" and prev not in ("grasp", "pull"):
                anchor = contacts[0].point if contacts else None
            if got in ("idle", "approach", "release"):
                anchor = None
            prev, prev_jaw, tip = got, jaw, new_tip

    def test_every_action_in_graph(self):
        assert set(TRANSITIONS) == set(ACTIONS)
        for targets in TRANSITIONS.values():
            assert targets <= set(ACTIONS)


class TestBuildTuple:
    def test_touch_tuple_fields(self):
        scene = load_scene_dict(cholecystectomy_scene())
        t = ToolState(id="driver", instrument_class="needle_driver",
                      trocar_id="port-b", insertion=0.1)
        ev = ContactEvent("driver", "tip", "gallbladder", Vec3(), Vec3(0, 0, 1),
                          0.001, 5)
        tup = build_tuple(t, scene, scene.camera, "touch", ev, 5)
        assert tup.instrument_class == "needle_driver"
        assert tup.tissue_class == "gallbladder"
        assert tup.tissue_object_id == "gallbladder"
        assert tup.action == "touch"
        assert tup.tick == 5
        assert tup.instrument_box is not None
        assert tup.tissue_box is not None

    def test_idle_tuple_empty_tissue(self):
        scene = load_scene_dict(minimal_scene())
        t = ToolState(id="tool", instrument_class="grasper", trocar_id="port")
        tup = build_tuple(t, scene, scene.camera, "idle", None, 0)
        assert tup.tissue_class is None
        assert tup.tissue_box is None
        assert tup.tissue_object_id is None

    def test_missing_contact_raises(self):
        scene = load_scene_dict(minimal_scene())
        t = ToolState(id="tool", instrument_class="grasper", trocar_id="port")
        with pytest.raises(MissingContact):
            build_tuple(t, scene, scene.camera, "touch", None, 0)

    def test_pierce_tuple(self):
        scene = load_scene_dict(minimal_scene())
        t = ToolState(id="tool", instrument_class="needle_driver", trocar_id="port")
        ev = ContactEvent("tool", "needle", "target", Vec3(), Vec3(0, 0, 1),
                          0.0004, 2)
        tup = build_tuple(t, scene, scene.camera, "pierce", ev, 2)
        assert tup.action == "pierce"
        assert tup.tissue_class == "generic"


def make_tuple(action, tissue=None, tick=0, obj=None):
    return InteractionTuple(
        instrument_class="grasper", instrument_box=None,
        tissue_class=tissue, tissue_box=None, action=action, tick=tick,
        tissue_object_id=obj or (tissue and f"{tissue}-0"))


class TestTemporalFilter:
    def test_majority_suppresses_dropout(self):
        window = [make_tuple("touch", "stomach", t) for t in range(5)]
        window[2] = make_tuple("idle", None, 2)
        got = temporal_filter(window)
        assert got.action == "touch"
        assert got.tissue_class == "stomach"

    def test_window_of_one_identity(self):
        window = [make_tuple("grasp", "gallbladder", 9)]
        got = temporal_filter(window)
        assert got.action == "grasp"
        assert got.tick == 9

    def test_tie_breaks_to_most_recent(self):
        window = [make_tuple("idle", None, 0), make_tuple("idle", None, 1),
                  make_tuple("touch", "stomach", 2), make_tuple("touch", "stomach", 3)]
        got = temporal_filter(window, k=4)
        assert got.action == "touch"

    def test_single_perturbation_never_flips_steady_window(self):
        for steady, spurious in itertools.permutations(
                ["touch", "idle", "grasp", "cut"], 2):
            tissue = "stomach" if steady not in ("idle", "approach") else None
            sp_tissue = "liver" if spurious not in ("idle", "approach") else None
            for pos in range(5):
                window = [make_tuple(steady, tissue, t) for t in range(5)]
                window[pos] = make_tuple(spurious, sp_tissue, pos)
                got = temporal_filter(window)
                assert got.action == steady
                assert got.tissue_class == tissue

    def test_boxes_from_newest_matching_frame(self):
        from lapaware.perception import Box2D
        box_old = Box2D(0, 0, 1, 1, "stomach")
        box_new = Box2D(2, 2, 3, 3, "stomach")
        window = [
            InteractionTuple("grasper", None, "stomach", box_old, "touch", 0, "stomach"),
            InteractionTuple("grasper", None, "stomach", box_new, "touch", 1, "stomach"),
            InteractionTuple("grasper", None, None, None, "idle", 2, None),
        ]
        got = temporal_filter(window, k=3)
        assert got.action == "touch"
        assert got.tissue_box == box_new

    def test_empty_window_rejected(self):
        with pytest.raises(ValueError):
            temporal_filter([])


class TestTracker:
    def test_tracker_grasp_cycle_on_scene(self):
        scene = load_scene_dict(minimal_scene())
        tracker = InteractionTracker("tool")
        camera = scene.camera

        def step(t, jaw, insertion, contacts, dist):
            st = ToolState(id="tool", instrument_class="grasper",
                           trocar_id="port", jaw=jaw, insertion=insertion)
            return tracker.update(st, scene, camera, contacts, dist, t)

        ev = ContactEvent("tool", "tip", "target", Vec3(0, 0, 0.04),
                          Vec3(0, 0, 1), 0.001, 0)
        raw, _ = step(0, 0.8, 0.14, [], 0.5)
        assert raw.action == "idle"
        raw, _ = step(1, 0.8, 0.155, [], 0.01)
        assert raw.action == "approach"
        raw, _ = step(2, 0.8, 0.158, [ev], 0.0)
        assert raw.action == "touch"
        raw, _ = step(3, 0.2, 0.158, [ev], 0.0)
        assert raw.action == "grasp"
        assert tracker.anchor is not None
        raw, _ = step(4, 0.2, 0.152, [], 0.006)   # retreating with closed jaw
        assert raw.action == "pull"
        raw, _ = step(5, 0.8, 0.152, [], 0.006)
        assert raw.action == "release"
        assert raw.tissue_object_id == "target"
        raw, _ = step(6, 0.8, 0.13, [], 0.03)
        assert raw.action == "idle"

    def test_filtered_lags_raw_by_majority(self):
        scene = load_scene_dict(minimal_scene())
        tracker = InteractionTracker("tool")
        ev = ContactEvent("tool", "tip", "target", Vec3(), Vec3(0, 0, 1), 0.001, 0)
        st = ToolState(id="tool", instrument_class="grasper", trocar_id="port",
                       jaw=0.8, insertion=0.158)
        outs = []
        for t in range(4):
            contacts = [ev] if t >= 2 else []
            raw, filt = tracker.update(st, scene, scene.camera, contacts, 0.01, t)
            outs.append((raw.action, filt.action))
        # two touch frames against two approach frames: tie goes to recent
        assert outs[-1][0] == "touch"
        assert outs[-1][1] == "touch"
