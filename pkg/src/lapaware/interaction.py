"""Instrument-tissue interaction tuples.

Per tick each tool gets an action classified from its contact set and jaw
motion, packaged with instrument/tissue classes and 2D boxes into a tuple,
then smoothed over a short snippet window so one-frame flickers never reach
the feedback rules. The classifier is a geometric stand-in with the same
module boundary as a learned detector: frames in, tuples out.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .contact import ContactEvent
from .geometry import Camera, Vec3
from .instrument import ToolState, tool_geometry
from .perception import Box2D, compute_box2d, compute_instrument_box2d
from .scene import Scene

ACTIONS = ("idle", "approach", "touch", "grasp", "pull", "cut", "pierce", "release")

# declared transition graph; pull and release are only reachable from a hold
_ANY_NEXT = {"idle", "approach", "touch", "grasp", "cut", "pierce"}
TRANSITIONS: dict[str, set[str]] = {
    "idle": set(_ANY_NEXT),
    "approach": set(_ANY_NEXT),
    "touch": set(_ANY_NEXT),
    "grasp": _ANY_NEXT | {"pull", "release"},
    "pull": _ANY_NEXT | {"pull", "release"},
    "cut": set(_ANY_NEXT),
    "pierce": set(_ANY_NEXT),
    "release": set(_ANY_NEXT),
}

APPROACH_DISTANCE = 0.02    # m; closer than this without contact = approach
PULL_SPEED = 0.002          # m/tick of tip retreat from the grasp anchor
JAW_OPEN = 0.5              # jaw fraction treated as "open"
JAW_CLOSE_EPS = 0.01        # minimum per-tick closing motion that counts
HOLD_DISTANCE = 0.03        # m; a closed jaw within this of its anchor keeps holding
SNIPPET_K = 5


class MissingContact(ValueError):
    """Tuple requested for a tissue-bearing action without a contact."""


@dataclass(frozen=True)
class InteractionTuple:
    instrument_class: str
    instrument_box: Box2D | None
    tissue_class: str | None
    tissue_box: Box2D | None
    action: str
    tick: int
    tissue_object_id: str | None = None   # plumbing: lets rules name the object


def classify_action(tool: ToolState, contacts: list[ContactEvent], prev: str,
                    nearest_target_distance: float, *,
                    prev_jaw: float | None = None,
                    tip: Vec3 | None = None,
                    prev_tip: Vec3 | None = None,
                    anchor: Vec3 | None = None,
                    approach_distance: float = APPROACH_DISTANCE,
                    pull_speed: float = PULL_SPEED) -> str:
    """Deterministic action rules, checked in fixed priority order.

    With contact: needle engagement wins, then scissors closing (cut), then
    the hold family (release on jaw opening, pull on tip retreat from the
    grasp anchor, grasp on an open-to-closed jaw transition), else touch.
    Without contact: a closed jaw near its anchor keeps holding (rigid
    objects cannot follow the jaws, so the hold persists geometrically);
    otherwise idle or approach by distance to the intended target.
    """
    jaw = tool.jaw
    prev_jaw = jaw if prev_jaw is None else prev_jaw
    holding = prev in ("grasp", "pull")

    retreating = False
    if anchor is not None and tip is not None and prev_tip is not None:
        retreating = (tip.distance_to(anchor) - prev_tip.distance_to(anchor)) > pull_speed

    if contacts:
        if any(c.part == "needle" for c in contacts):
            return "pierce"
        if tool.instrument_class == "scissors" and (prev_jaw - jaw) >= JAW_CLOSE_EPS:
            return "cut"
        if holding:
            if jaw >= JAW_OPEN:
                return "release"
            return "pull" if retreating else "grasp"
        if prev_jaw >= JAW_OPEN and jaw < JAW_OPEN:
            return "grasp"
        return "touch"

    if holding and jaw < JAW_OPEN and anchor is not None and tip is not None \
            and tip.distance_to(anchor) <= HOLD_DISTANCE:
        return "pull" if retreating else "grasp"
    if holding and jaw >= JAW_OPEN:
        return "release"
    return "idle" if nearest_target_distance > approach_distance else "approach"


def build_tuple(tool: ToolState, scene: Scene, camera: Camera, action: str,
                contact: ContactEvent | None, tick: int, *,
                tissue_object_id: str | None = None) -> InteractionTuple:
    """Assemble the five-field interaction record for one tool.

    Tissue fields are empty exactly for idle/approach; for every other
    action they come from the driving contact (or a remembered object id
    when a hold persists without surface contact)."""
    object_id = contact.object_id if contact is not None else tissue_object_id
    needs_tissue = action not in ("idle", "approach")
    if needs_tissue and object_id is None:
        raise MissingContact(f"action {action!r} needs a tissue contact")

    trocar = scene.trocar(tool.trocar_id)
    instrument_box = compute_instrument_box2d(camera, tool, trocar)

    tissue_class = None
    tissue_box = None
    if needs_tissue:
        obj = scene.object(object_id)
        tissue_class = obj.tissue_class
        tissue_box = compute_box2d(camera, obj)
    else:
        object_id = None

    return InteractionTuple(
        instrument_class=tool.instrument_class,
        instrument_box=instrument_box,
        tissue_class=tissue_class,
        tissue_box=tissue_box,
        action=action,
        tick=tick,
        tissue_object_id=object_id,
    )


def temporal_filter(window: list[InteractionTuple], k: int = SNIPPET_K) -> InteractionTuple:
    """Majority vote over the last k tuples.

    (tissue_class, action) is replaced by the window's most frequent pair,
    ties broken by recency. Boxes come from the newest tuple; the tissue box
    follows the newest frame that actually carries the majority tissue so
    the emptiness invariant survives filtering.
    """
    if not window:
        raise ValueError("temporal_filter needs a nonempty window")
    recent = list(window)[-k:]
    newest = recent[-1]

    counts: dict[tuple, int] = {}
    last_seen: dict[tuple, int] = {}
    for i, tup in enumerate(recent):
        key = (tup.tissue_class, tup.action)
        counts[key] = counts.get(key, 0) + 1
        last_seen[key] = i
    majority = max(counts, key=lambda key: (counts[key], last_seen[key]))
    tissue_class, action = majority

    tissue_box = None
    tissue_object_id = None
    if action not in ("idle", "approach"):
        for tup in reversed(recent):
            if tup.tissue_class == tissue_class and tup.tissue_object_id is not None:
                tissue_box = tup.tissue_box
                tissue_object_id = tup.tissue_object_id
                break

    return InteractionTuple(
        instrument_class=newest.instrument_class,
        instrument_box=newest.instrument_box,
        tissue_class=tissue_class if action not in ("idle", "approach") else None,
        tissue_box=tissue_box,
        action=action,
        tick=newest.tick,
        tissue_object_id=tissue_object_id,
    )


def _driving_contact(contacts: list[ContactEvent]) -> ContactEvent | None:
    """The contact that names the tissue: needle engagement first, then the
    deepest; earlier canonical order wins ties."""
    if not contacts:
        return None
    needle = [c for c in contacts if c.part == "needle"]
    pool = needle or contacts
    best = pool[0]
    for c in pool[1:]:
        if c.depth > best.depth:
            best = c
    return best


class InteractionTracker:
    """Per-tool classifier state: previous action, jaw, tip, grasp anchor and
    the snippet window. Advanced once per tick on the simulation thread."""

    def __init__(self, tool_id: str, k: int = SNIPPET_K,
                 approach_distance: float = APPROACH_DISTANCE,
                 pull_speed: float = PULL_SPEED):
        self.tool_id = tool_id
        self.k = k
        self.approach_distance = approach_distance
        self.pull_speed = pull_speed
        self.prev_action = "idle"
        self.prev_jaw: float | None = None
        self.prev_tip: Vec3 | None = None
        self.anchor: Vec3 | None = None
        self.anchor_object: str | None = None
        self.window: deque[InteractionTuple] = deque(maxlen=k)

    def update(self, tool: ToolState, scene: Scene, camera: Camera,
               contacts: list[ContactEvent], nearest_target_distance: float,
               tick: int) -> tuple[InteractionTuple, InteractionTuple]:
        """Classify this tick; returns (raw tuple, snippet-filtered tuple)."""
        tip = tool_geometry(tool, scene.trocar(tool.trocar_id)).tip
        action = classify_action(
            tool, contacts, self.prev_action, nearest_target_distance,
            prev_jaw=self.prev_jaw, tip=tip, prev_tip=self.prev_tip,
            anchor=self.anchor, approach_distance=self.approach_distance,
            pull_speed=self.pull_speed)

        contact = _driving_contact(contacts)
        if action == "grasp" and self.prev_action not in ("grasp", "pull"):
            if contact is not None:
                self.anchor = contact.point
                self.anchor_object = contact.object_id
        elif action in ("idle", "approach"):
            self.anchor = None
            self.anchor_object = None

        raw = build_tuple(tool, scene, camera, action, contact, tick,
                          tissue_object_id=self.anchor_object)
        self.window.append(raw)
        filtered = temporal_filter(list(self.window), self.k)

        self.prev_action = action
        self.prev_jaw = tool.jaw
        self.prev_tip = tip
        if action == "release":
            self.anchor = None
            self.anchor_object = None
        return raw, filtered
