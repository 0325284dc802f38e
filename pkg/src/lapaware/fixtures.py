"""Built-in scene builders.

Desk-scale schematic stand-ins: every object is an analytic primitive, so a
fixture is a single JSON document with no mesh assets. The builders return
plain dicts in the scene file schema; write them out with `export_fixture`
or feed them to `scene.load_scene_dict` directly.
"""

from __future__ import annotations

import json
from pathlib import Path

from .geometry import Quat, Vec3


def look_at_quat(position: Vec3, target: Vec3, up: Vec3 = Vec3(0, 0, 1)) -> Quat:
    """Camera orientation with +Z toward `target` and +Y image-down."""
    forward = (target - position).normalized()
    if abs(forward.dot(up)) > 0.999:
        up = Vec3(0, 1, 0)
    right = forward.cross(up).normalized()
    down = forward.cross(right)
    m = [[right.x, down.x, forward.x],
         [right.y, down.y, forward.y],
         [right.z, down.z, forward.z]]
    return Quat.from_matrix(m)


def _camera(pos: Vec3, target: Vec3, fx=128.0, fy=128.0, cx=64.0, cy=64.0,
            width=128, height=128) -> dict:
    q = look_at_quat(pos, target)
    return {
        "pos": [pos.x, pos.y, pos.z],
        "quat": [q.w, q.x, q.y, q.z],
        "fx": fx, "fy": fy, "cx": cx, "cy": cy,
        "width": width, "height": height,
    }


def _v(v: Vec3) -> list[float]:
    return [v.x, v.y, v.z]


IDENTITY_POSE = {"pos": [0.0, 0.0, 0.0], "quat": [1.0, 0.0, 0.0, 0.0]}


def _obj(oid, cls, role, color, mesh, pos=Vec3()) -> dict:
    return {
        "id": oid, "class": cls, "role": role, "color": list(color),
        "mesh": mesh,
        "pose": {"pos": _v(pos), "quat": [1.0, 0.0, 0.0, 0.0]},
    }


def minimal_scene() -> dict:
    """One spherical target straight below a vertical port."""
    return {
        "objects": [
            _obj("target", "generic", "target", (0.3, 0.8, 0.3),
                 {"sphere": {"r": 0.02}}, Vec3(0, 0, 0.02)),
        ],
        "trocars": [
            {"id": "port", "point": [0.0, 0.0, 0.2], "rest_axis": [0.0, 0.0, -1.0]},
        ],
        "camera": _camera(Vec3(0, -0.15, 0.1), Vec3(0, 0, 0.02)),
        "tools": [
            {"id": "tool", "class": "grasper", "trocar": "port"},
        ],
        "annotations": {
            "navigation": {
                "task": "navigation",
                "target_ids": ["target"],
                "hazard_ids": [],
                "navigation": {
                    "view_half_angle": 0.5,
                    "distance_band": [0.002, 0.12],
                    "pass_fraction": 0.25,
                },
            },
        },
    }


# Layout shared by the cholecystectomy drills: the endoscope looks at the
# cystic artery, and port-a sits exactly on that viewing ray so a pure
# insertion sweep is invisible in 2D. |artery - camera| = 0.17 exactly.
_CAM_POS = Vec3(0.0, -0.15, 0.10)
_ARTERY = Vec3(0.0, 0.0, 0.02)
_ARTERY_R = 0.008
_VIEW_DIR = Vec3(0.0, 15.0 / 17.0, -8.0 / 17.0)   # unit by construction
_PORT_A = _CAM_POS + _VIEW_DIR * 0.05
_PORT_B = Vec3(-0.04, -0.10, 0.09)
_GALLBLADDER = Vec3(-0.03, 0.01, 0.03)
_GALLBLADDER_R = 0.015
_STOMACH = Vec3(0.045, 0.015, 0.025)
_STOMACH_R = 0.025


def cholecystectomy_scene() -> dict:
    """Schematic clip-and-cut drill: two targets, one hazard, one neutral
    backdrop. Carries cutting, navigation and manipulation annotations."""
    artery_surface = _ARTERY - _VIEW_DIR * _ARTERY_R
    port_b_axis = (Vec3(0.0075, 0.0125, 0.0275) - _PORT_B).normalized()
    grasp_point = _GALLBLADDER + (_PORT_B - _GALLBLADDER).normalized() * _GALLBLADDER_R
    traction = (_PORT_B - _GALLBLADDER).normalized()
    return {
        "objects": [
            _obj("cystic_artery", "cystic_artery", "target", (0.8, 0.2, 0.2),
                 {"sphere": {"r": _ARTERY_R}}, _ARTERY),
            _obj("gallbladder", "gallbladder", "target", (0.2, 0.7, 0.3),
                 {"sphere": {"r": _GALLBLADDER_R}}, _GALLBLADDER),
            _obj("stomach", "stomach", "hazard", (0.85, 0.6, 0.5),
                 {"sphere": {"r": _STOMACH_R}}, _STOMACH),
            _obj("liver", "liver", "neutral", (0.45, 0.12, 0.1),
                 {"box": {"half_extents": [0.06, 0.02, 0.03]}}, Vec3(0, 0.05, 0.05)),
        ],
        "trocars": [
            {"id": "port-a", "point": _v(_PORT_A), "rest_axis": _v(_VIEW_DIR)},
            {"id": "port-b", "point": _v(_PORT_B), "rest_axis": _v(port_b_axis)},
        ],
        "camera": _camera(_CAM_POS, _ARTERY),
        "tools": [
            {"id": "shears", "class": "scissors", "trocar": "port-a"},
            {"id": "driver", "class": "needle_driver", "trocar": "port-b"},
        ],
        "annotations": {
            "cutting": {
                "task": "cutting",
                "target_ids": ["cystic_artery"],
                "hazard_ids": ["stomach"],
                "cutting": {
                    "plane_point": _v(artery_surface),
                    "plane_normal": _v(_VIEW_DIR),
                    "path": [
                        _v(artery_surface + Vec3(-0.01, 0, 0)),
                        _v(artery_surface + Vec3(0.01, 0, 0)),
                    ],
                    "corridor_radius": 0.01,
                },
            },
            "navigation": {
                "task": "navigation",
                "target_ids": ["gallbladder"],
                "hazard_ids": ["stomach"],
                "navigation": {
                    "view_half_angle": 0.5,
                    "distance_band": [0.002, 0.2],
                    "pass_fraction": 0.2,
                },
            },
            "manipulation": {
                "task": "manipulation",
                "target_ids": ["gallbladder"],
                "hazard_ids": ["stomach"],
                "manipulation": {
                    "grasp_point": _v(grasp_point),
                    "traction_dir": _v(traction),
                    "max_angle_err": 0.35,
                    "max_grasp_offset": 0.01,
                },
            },
        },
    }


def suture_pad_scene() -> dict:
    """Flat tissue pad with its top face on z = 0; a needle driver holds a
    semicircular needle whose bite plane is the world x-z plane."""
    # needle frame: local +X -> world -Z, +Y -> +X, +Z -> -Y; the circle
    # center sits 4 mm below the tool tip so the jaws stay clear of tissue
    needle_quat = [0.5, 0.5, 0.5, -0.5]
    return {
        "objects": [
            _obj("pad", "generic", "target", (0.9, 0.75, 0.7),
                 {"box": {"half_extents": [0.05, 0.05, 0.01]}}, Vec3(0, 0, -0.01)),
        ],
        "trocars": [
            {"id": "port", "point": [0.0, 0.0, 0.15], "rest_axis": [0.0, 0.0, -1.0]},
        ],
        "camera": _camera(Vec3(0, -0.18, 0.12), Vec3(0, 0, 0)),
        "tools": [
            {
                "id": "driver", "class": "needle_driver", "trocar": "port",
                "needle": {
                    "radius": 0.006,
                    "arc_span": 3.141592653589793,
                    "frame": {"pos": [0.0, 0.0, -0.004], "quat": needle_quat},
                },
            },
        ],
        "annotations": {
            "suturing": {
                "task": "suturing",
                "target_ids": ["pad"],
                "hazard_ids": [],
                "suturing": {
                    "entry": [-0.005, 0.0, 0.0],
                    "exit": [0.005, 0.0, 0.0],
                    "needle_radius": 0.006,
                    "tissue_normal": [0.0, 0.0, 1.0],
                    "depth_band": [0.0015, 0.005],
                    "max_angle_err": 0.35,
                    "marker_tolerance": 0.003,
                },
            },
        },
    }


def transfer_scene() -> dict:
    """Peg-transfer style block with two facing graspers."""
    block = Vec3(0, 0, 0.02)
    port_l = Vec3(-0.06, 0, 0.15)
    port_r = Vec3(0.06, 0, 0.15)
    handoff = Vec3(0, 0, 0.033)
    return {
        "objects": [
            _obj("block", "block", "target", (0.2, 0.4, 0.9),
                 {"box": {"half_extents": [0.01, 0.01, 0.01]}}, block),
        ],
        "trocars": [
            {"id": "port-l", "point": _v(port_l),
             "rest_axis": _v((block - port_l).normalized())},
            {"id": "port-r", "point": _v(port_r),
             "rest_axis": _v((block - port_r).normalized())},
        ],
        "camera": _camera(Vec3(0, -0.2, 0.1), block),
        "tools": [
            {"id": "grasper-l", "class": "grasper", "trocar": "port-l"},
            {"id": "grasper-r", "class": "grasper", "trocar": "port-r"},
        ],
        "annotations": {
            "transfer": {
                "task": "transfer",
                "target_ids": ["block"],
                "hazard_ids": [],
                "transfer": {
                    "handoff_center": _v(handoff),
                    "corridor_radius": 0.015,
                    "receiver_pose": {"pos": _v(handoff), "quat": [1, 0, 0, 0]},
                },
            },
        },
    }


FIXTURES = {
    "minimal": minimal_scene,
    "cholecystectomy": cholecystectomy_scene,
    "suture-pad": suture_pad_scene,
    "transfer": transfer_scene,
}


def export_fixture(name: str, directory) -> Path:
    path = Path(directory) / f"{name}.json"
    path.write_text(json.dumps(FIXTURES[name](), indent=2) + "\n", encoding="utf-8")
    return path
