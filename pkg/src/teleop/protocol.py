"""Length-prefixed frame protocol.

A frame is a 4-byte big-endian unsigned body length followed by a UTF-8
JSON body:

    {"kind": "topic"|"request"|"response"|"error",
     "name": <topic or service name>,
     "id": <correlation integer, requests/responses/errors only>,
     "payload": <message-specific object>}

Encoding is canonical (sorted keys, no whitespace) so identical structures
always produce identical bytes; docs/protocol.md specifies every payload.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

KINDS = ("topic", "request", "response", "error")
MAX_BODY = 16 * 1024 * 1024


class FrameError(Exception):
    pass


@dataclass
class Frame:
    kind: str
    name: str
    payload: dict
    id: int | None = None


def encode_body(frame: Frame) -> bytes:
    obj = {"kind": frame.kind, "name": frame.name, "payload": frame.payload}
    if frame.id is not None:
        obj["id"] = frame.id
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def encode_frame(frame: Frame) -> bytes:
    body = encode_body(frame)
    if len(body) > MAX_BODY:
        raise FrameError(f"frame body too large: {len(body)} bytes")
    return struct.pack(">I", len(body)) + body


def decode_body(body: bytes) -> Frame:
    try:
        obj = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FrameError(f"frame body is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise FrameError("frame body must be a JSON object")
    kind = obj.get("kind")
    if kind not in KINDS:
        raise FrameError(f"unknown frame kind: {kind!r}")
    name = obj.get("name")
    if not isinstance(name, str) or not name:
        raise FrameError("frame needs a non-empty string name")
    payload = obj.get("payload", {})
    if not isinstance(payload, dict):
        raise FrameError("frame payload must be an object")
    fid = obj.get("id")
    if fid is not None and not isinstance(fid, int):
        raise FrameError("frame id must be an integer")
    if kind in ("request", "response") and fid is None:
        raise FrameError(f"{kind} frames need a correlation id")
    return Frame(kind=kind, name=name, payload=payload, id=fid)


class FrameDecoder:
    """Incremental decoder for a byte stream of frames."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes):
        self._buf.extend(data)
        out = []
        while True:
            if len(self._buf) < 4:
                break
            (length,) = struct.unpack(">I", self._buf[:4])
            if length > MAX_BODY:
                raise FrameError(f"frame length {length} exceeds limit")
            if len(self._buf) < 4 + length:
                break
            body = bytes(self._buf[4:4 + length])
            del self._buf[:4 + length]
            out.append(decode_body(body))
        return out


def read_frame(sock) -> Frame | None:
    """Blocking read of one frame from a socket; None on clean EOF."""
    header = _read_exact(sock, 4)
    if header is None:
        return None
    (length,) = struct.unpack(">I", header)
    if length > MAX_BODY:
        raise FrameError(f"frame length {length} exceeds limit")
    body = _read_exact(sock, length)
    if body is None:
        raise FrameError("connection closed mid-frame")
    return decode_body(body)


def _read_exact(sock, n: int):
    chunks = bytearray()
    while len(chunks) < n:
        data = sock.recv(n - len(chunks))
        if not data:
            if chunks:
                raise FrameError("connection closed mid-read")
            return None
        chunks.extend(data)
    return bytes(chunks)


def write_frame(sock, frame: Frame) -> None:
    sock.sendall(encode_frame(frame))


# --------------------------------------------------------------- payloads

def pose_payload(pose) -> list:
    return pose.to_list()


def payload_pose(vals):
    from .geometry import Pose
    return Pose.from_list(vals)


def joint_states_payload(js) -> dict:
    return {"stamp": js.timestamp,
            "angles": [float(a) for a in js.angles],
            "velocities": [float(v) for v in js.velocities]}


def object_poses_payload(scene) -> dict:
    return {"stamp": scene.sim_time,
            "objects": [{"instance_id": o.instance_id,
                         "model_id": o.model.model_id,
                         "pose": o.actual_pose.to_list(),
                         "held": o.held,
                         "support": o.support}
                        for o in scene.objects]}


def scene_payload(scene) -> dict:
    return {
        "sim_time": scene.sim_time,
        "gripper_aperture": scene.gripper_aperture,
        "joints": joint_states_payload(scene.joints),
        "desktop": {
            "normal": [float(v) for v in scene.desktop.normal],
            "offset": float(scene.desktop.offset),
            "boundary": [[float(x), float(y)] for x, y in scene.desktop.boundary],
            "triangles": [list(t) for t in scene.desktop.triangles],
        },
        "catalog": [{"model_id": m.model_id,
                     "half_extents": [float(v) for v in m.half_extents],
                     "mass": m.mass, "grasp_width": m.grasp_width}
                    for m in scene.catalog.values()],
        "objects": _objects_full(scene),
    }


def _objects_full(scene) -> list:
    return [{"instance_id": o.instance_id,
             "model_id": o.model.model_id,
             "pose": o.actual_pose.to_list(),
             "ghost_pose": o.ghost_pose.to_list(),
             "held": o.held,
             "support": o.support}
            for o in scene.objects]


def task_request_payload(request) -> dict:
    return {"moves": [{"instance_id": m.instance_id,
                       "initial_pose": m.initial_pose.to_list(),
                       "target_pose": m.target_pose.to_list()}
                      for m in request.moves]}


def payload_task_request(payload):
    from .executor import Move, TaskRequest
    moves = []
    for m in payload.get("moves", []):
        moves.append(Move(m["instance_id"],
                          payload_pose(m["initial_pose"]),
                          payload_pose(m["target_pose"])))
    return TaskRequest(moves)


def settle_result_payload(result) -> dict:
    return {"final_pose": result.final_pose.to_list(),
            "support": result.support,
            "stable": result.stable,
            "trace": [[t, p.to_list()] for t, p in result.trace]}
