"""Deterministic session logs: append-only NDJSON records, a canonical
64-bit state hash, and byte-exact replay verification.

Controls are the only nondeterministic input, so a log that opens with a
scene snapshot and carries every control can regenerate all derived records
(contacts, tuples, feedback, task events). `replay` does exactly that and
fails loudly on the first byte that differs.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

from .geometry import fnv1a64
from .scene import Scene

FORMAT_VERSION = 1
RECORD_KINDS = ("control", "contact", "tuple", "feedback", "task_event",
                "snapshot", "image")


class SnapshotMismatch(ValueError):
    """Log was recorded against a different scene."""


class DivergenceAt(ValueError):
    def __init__(self, tick: int, detail: str = ""):
        self.tick = tick
        super().__init__(f"replay diverged at tick {tick}" + (f": {detail}" if detail else ""))


@dataclass(frozen=True)
class LogRecord:
    tick: int
    kind: str
    payload: dict

    def to_line(self) -> str:
        # canonical form: fixed top-level key order, payload keys in the
        # order the producer built them, shortest round-trip floats
        return json.dumps({"tick": self.tick, "kind": self.kind,
                           "payload": self.payload},
                          separators=(",", ":"), allow_nan=False)

    @classmethod
    def from_line(cls, line: str) -> "LogRecord":
        raw = json.loads(line)
        if raw.get("kind") not in RECORD_KINDS:
            raise ValueError(f"unknown record kind {raw.get('kind')!r}")
        return cls(tick=int(raw["tick"]), kind=raw["kind"], payload=raw["payload"])


class SessionLog:
    """Single-writer append-only log file (.lapslog)."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "w", encoding="utf-8")
        self.count = 0

    def append(self, record: LogRecord) -> None:
        self._fh.write(record.to_line() + "\n")
        self.count += 1

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.flush()
            self._fh.close()


def read_log(path) -> list[LogRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(LogRecord.from_line(line))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad record: {exc}") from exc
    last = -1
    for rec in records:
        if rec.tick < last:
            raise ValueError(f"{path}: ticks decrease at tick {rec.tick}")
        last = rec.tick
    return records


# ---------------------------------------------------------------------------
# state hashing


def state_hash(tick: int, tools: dict, colors: dict, trail_lengths: dict) -> int:
    """FNV-1a 64 over the canonical little-endian serialization of the
    mutable simulation state.

    Byte order: u64 tick; per tool sorted by id (u32 id length, utf-8 id,
    f64 pitch/yaw/roll/insertion/jaw, u8 needle flag, then f64 needle
    radius/arc_span/frame fields when held); per object sorted by id (u32 id
    length, utf-8 id, 3x f64 color); per tool sorted by id (u32 trail
    length). All integers and doubles little-endian.
    """
    buf = bytearray()
    buf += struct.pack("<Q", tick & 0xFFFFFFFFFFFFFFFF)
    for tool_id in sorted(tools):
        t = tools[tool_id]
        raw = tool_id.encode("utf-8")
        buf += struct.pack("<I", len(raw)) + raw
        buf += struct.pack("<5d", t.pitch, t.yaw, t.roll, t.insertion, t.jaw)
        if t.held_needle is None:
            buf += b"\x00"
        else:
            n = t.held_needle
            buf += b"\x01"
            buf += struct.pack("<2d", n.radius, n.arc_span)
            p = n.frame.position
            q = n.frame.orientation
            buf += struct.pack("<7d", p.x, p.y, p.z, q.w, q.x, q.y, q.z)
    for obj_id in sorted(colors):
        raw = obj_id.encode("utf-8")
        buf += struct.pack("<I", len(raw)) + raw
        buf += struct.pack("<3d", *colors[obj_id])
    for tool_id in sorted(trail_lengths):
        buf += struct.pack("<I", trail_lengths[tool_id])
    return fnv1a64(bytes(buf))


# ---------------------------------------------------------------------------
# replay


def replay(scene: Scene, records: list[LogRecord]) -> int:
    """Re-simulate from the log's controls and verify every derived record
    byte-for-byte. Returns the final 64-bit state hash.

    Raises SnapshotMismatch when the scene differs from the recorded one and
    DivergenceAt on the first regenerated record that does not match.
    """
    from .gateway.engine import EngineConfig, SimulationEngine

    if not records:
        raise SnapshotMismatch("empty log")
    head = records[0]
    if head.kind != "snapshot":
        raise SnapshotMismatch("log does not open with a snapshot record")
    if head.payload.get("format_version") != FORMAT_VERSION:
        raise SnapshotMismatch(
            f"unsupported log format {head.payload.get('format_version')!r}")
    recorded_hash = head.payload.get("scene_hash")
    if recorded_hash != f"{scene.source_hash:016x}":
        raise SnapshotMismatch(
            f"scene hash {scene.source_hash:016x} does not match recorded {recorded_hash}")

    expected = [r.to_line() for r in records]
    cursor = 0

    def sink(record: LogRecord) -> None:
        nonlocal cursor
        if cursor >= len(expected):
            raise DivergenceAt(record.tick, "extra regenerated record")
        if record.to_line() != expected[cursor]:
            raise DivergenceAt(records[cursor].tick,
                               f"record {cursor} differs")
        cursor += 1

    config = EngineConfig.from_dict(head.payload.get("config", {}))
    engine = SimulationEngine(scene, head.payload.get("task"), config, sink=sink)

    controls_by_tick: dict[int, list[dict]] = {}
    for rec in records:
        if rec.kind == "control":
            controls_by_tick.setdefault(rec.tick, []).append(rec.payload)

    total_ticks = records[-1].tick if records[-1].kind == "snapshot" else 0
    for tick in range(total_ticks):
        engine.step_from_payloads(controls_by_tick.get(tick, []))
    final_hash = engine.finish()

    if cursor != len(expected):
        raise DivergenceAt(records[cursor].tick, "log has records replay never produced")
    return final_hash
