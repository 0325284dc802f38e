"""Per-tick instrument-tissue contact detection.

Replaces a physics engine's contact event stream with a deterministic
capsule-vs-trimesh narrow phase: one event per penetrating (tool part,
object) pair carrying point, normal and depth. Discrete-time only; the
per-tick control rate limits bound how far a part can travel between
queries, which keeps tunneling out of reach at fixture scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Capsule, Vec3, capsule_mesh_contact
from .instrument import TIP_RADIUS, ToolState, needle_tip_curve, tool_geometry
from .scene import Scene

PART_ORDER = ("shaft", "tip", "jaw_left", "jaw_right", "needle")

NEEDLE_CHAIN_RADIUS = 0.0005   # m, thin capsules along the sampled arc
NEEDLE_SAMPLES = 33            # odd: the arc midpoint lands on a sample

SAFE_CONTACT = "safe_contact"
UNSAFE_DEPTH = "unsafe_depth"

DEFAULT_UNSAFE_DEPTH = 0.004   # m; concept from the feedback contract, value ours


@dataclass(frozen=True)
class ContactEvent:
    tool_id: str
    part: str
    object_id: str
    point: Vec3
    normal: Vec3
    depth: float
    tick: int


def tool_part_capsules(tool: ToolState, trocar) -> list[tuple[str, list[Capsule]]]:
    """Collision proxies for every instrument part, in canonical part order.
    The needle is a chain of thin capsules along its sampled arc."""
    geo = tool_geometry(tool, trocar)
    parts: list[tuple[str, list[Capsule]]] = [
        ("shaft", [geo.shaft]),
        ("tip", [Capsule(geo.tip, geo.tip, TIP_RADIUS)]),
        ("jaw_left", [geo.jaw_left]),
        ("jaw_right", [geo.jaw_right]),
    ]
    if tool.held_needle is not None:
        pts = needle_tip_curve(tool, trocar, NEEDLE_SAMPLES)
        chain = [Capsule(a, b, NEEDLE_CHAIN_RADIUS) for a, b in zip(pts, pts[1:])]
        parts.append(("needle", chain))
    return parts


def _aabb_overlaps(lo_a, hi_a, lo_b, hi_b) -> bool:
    return bool(np.all(lo_a <= hi_b) and np.all(lo_b <= hi_a))


def detect_contacts(scene: Scene, tools: list[ToolState], tick: int) -> list[ContactEvent]:
    """All penetrating (tool part, object) pairs this tick.

    Deterministic output order: tool id, then part order, then object id.
    For chained parts the single deepest interference is reported.
    """
    events: list[ContactEvent] = []
    objects = sorted(scene.objects, key=lambda o: o.id)
    for tool in sorted(tools, key=lambda t: t.id):
        trocar = scene.trocar(tool.trocar_id)
        for part, capsules in tool_part_capsules(tool, trocar):
            boxes = [c.aabb() for c in capsules]
            for obj in objects:
                best = None
                for cap, (lo, hi) in zip(capsules, boxes):
                    if not _aabb_overlaps(lo, hi, obj.aabb_lo, obj.aabb_hi):
                        continue
                    hit = capsule_mesh_contact(cap, obj.world_mesh)
                    if hit is not None and (best is None or hit[0] > best[0]):
                        best = hit
                if best is not None:
                    depth, point, normal = best
                    events.append(ContactEvent(
                        tool_id=tool.id, part=part, object_id=obj.id,
                        point=point, normal=normal, depth=depth, tick=tick))
    return events


def classify_depth(event: ContactEvent, unsafe_depth: float = DEFAULT_UNSAFE_DEPTH) -> str:
    """UNSAFE_DEPTH iff strictly deeper than the threshold."""
    if unsafe_depth <= 0:
        raise ValueError("unsafe_depth must be positive")
    return UNSAFE_DEPTH if event.depth > unsafe_depth else SAFE_CONTACT
