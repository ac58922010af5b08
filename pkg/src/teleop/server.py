"""TCP endpoint hosting the topic/service protocol.

One listening socket, one handler thread per connection. All scene
mutation funnels through a single lock around the executor, so the scene
has exactly one writer at a time; topic publications fan out to every
subscriber from whatever thread is advancing the clock.
"""

from __future__ import annotations

import json
import logging
import socket
import threading
from pathlib import Path

import numpy as np

from . import protocol as proto
from .arm import default_chain
from .clock import SimClock, WallClock
from .desktop import DesktopError, DetectParams, detect_desktop
from .executor import COLLISION, Executor, GripperConfig
from .fileformats import load_point_cloud
from .geometry import Pose
from .metrics import EE, HSI, MetricsError, SessionTracker, append_record
from .protocol import Frame
from .scene import SceneError, load_scene, reset_ghosts, set_ghost_pose
from .settle import SettleError, settle

log = logging.getLogger(__name__)

OBJECT_POSES_HZ = 10.0
JOINT_STATES_HZ = 50.0

TOPICS = ("object_poses", "joint_states", "target_pose", "l515_image_raw")


class _Connection:
    def __init__(self, sock, addr):
        self.sock = sock
        self.addr = addr
        self.send_lock = threading.Lock()
        self.topics = set()
        self.open = True

    def send(self, frame: Frame) -> None:
        data = proto.encode_frame(frame)
        try:
            with self.send_lock:
                self.sock.sendall(data)
        except OSError:
            self.open = False


class TeleopServer:
    def __init__(self, scene_path, cloud_path=None, port=0, host="127.0.0.1",
                 metrics_path=None, sim_clock=True, seed=0, chain=None,
                 gripper: GripperConfig | None = None, record_path=None):
        self.scene_path = scene_path
        self.cloud_path = cloud_path
        self.metrics_path = metrics_path
        self.record_path = record_path
        self.seed = seed
        self.sim = sim_clock
        self.clock = SimClock() if sim_clock else WallClock()
        self.scene = load_scene(scene_path)
        self.executor = Executor(self.scene, chain or default_chain(), self.clock,
                                 gripper=gripper, on_event=self._executor_event)
        self.session: SessionTracker | None = None
        self._conns: list[_Connection] = []
        self._conn_lock = threading.Lock()
        self._scene_lock = threading.RLock()
        self._record_lock = threading.Lock()
        self._running = False
        self._listener = None
        self._threads = []
        self.port = port
        self.host = host
        self.clock.register(1.0 / JOINT_STATES_HZ, self._publish_joint_states)
        self.clock.register(1.0 / OBJECT_POSES_HZ, self._publish_object_poses)

    # ------------------------------------------------------------ lifecycle

    def start(self):
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            self._listener.bind((self.host, self.port))
        except OSError as exc:
            raise RuntimeError(f"cannot bind {self.host}:{self.port}: {exc}") from exc
        self.port = self._listener.getsockname()[1]
        self._listener.listen()
        self._running = True
        t = threading.Thread(target=self._accept_loop, daemon=True, name="teleop-accept")
        t.start()
        self._threads.append(t)
        if not self.sim:
            pump = threading.Thread(target=self._pump_loop, daemon=True, name="teleop-pump")
            pump.start()
            self._threads.append(pump)
        log.info("listening on %s:%d", self.host, self.port)
        return self

    def stop(self):
        self._running = False
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
        with self._conn_lock:
            for conn in self._conns:
                try:
                    conn.sock.close()
                except OSError:
                    pass

    def _pump_loop(self):
        # wall mode only: keeps periodic topics flowing while idle
        while self._running:
            self.clock.sleep(1.0 / JOINT_STATES_HZ)

    def _accept_loop(self):
        while self._running:
            try:
                sock, addr = self._listener.accept()
            except OSError:
                break
            conn = _Connection(sock, addr)
            with self._conn_lock:
                self._conns.append(conn)
            t = threading.Thread(target=self._serve_connection, args=(conn,),
                                 daemon=True, name=f"teleop-conn-{addr}")
            t.start()
            self._threads.append(t)

    # ---------------------------------------------------------- publication

    def publish(self, topic: str, payload: dict) -> None:
        frame = Frame(kind="topic", name=topic, payload=payload)
        with self._conn_lock:
            conns = [c for c in self._conns if topic in c.topics and c.open]
        for conn in conns:
            conn.send(frame)

    def _publish_joint_states(self, _t):
        self.publish("joint_states", proto.joint_states_payload(self.scene.joints))

    def _publish_object_poses(self, _t):
        # ground-truth poses on the perception topic; a real pose-estimation
        # node could replace this publisher without changing the schema
        self.publish("object_poses", proto.object_poses_payload(self.scene))

    def _executor_event(self, event, t):
        if self.session is not None:
            self.session.note(event, t)

    # ---------------------------------------------------------- connections

    def _serve_connection(self, conn: _Connection):
        decoder = proto.FrameDecoder()
        try:
            while self._running and conn.open:
                data = conn.sock.recv(65536)
                if not data:
                    break
                try:
                    frames = decoder.feed(data)
                except proto.FrameError as exc:
                    conn.send(Frame("error", "malformed", {"error": str(exc)}))
                    break  # framing lost; cannot resync without the length prefix
                for frame in frames:
                    self._record(frame)
                    self._dispatch(conn, frame)
        except OSError:
            pass
        finally:
            conn.open = False
            with self._conn_lock:
                if conn in self._conns:
                    self._conns.remove(conn)
            try:
                conn.sock.close()
            except OSError:
                pass

    def _record(self, frame: Frame):
        if not self.record_path:
            return
        entry = {"t": self.clock.now(), "kind": frame.kind, "name": frame.name,
                 "id": frame.id, "payload": frame.payload}
        with self._record_lock, open(self.record_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")

    def _dispatch(self, conn: _Connection, frame: Frame):
        if frame.kind == "topic":
            self._handle_inbound_topic(frame)
            return
        if frame.kind != "request":
            conn.send(Frame("error", frame.name,
                            {"error": f"unexpected frame kind {frame.kind!r}"}, frame.id))
            return
        handler = getattr(self, "_svc_" + frame.name, None)
        if handler is None and frame.name not in ("subscribe", "unsubscribe"):
            conn.send(Frame("error", frame.name,
                            {"error": f"unknown service {frame.name!r}"}, frame.id))
            return
        try:
            if frame.name == "subscribe":
                payload = self._do_subscribe(conn, frame.payload)
            elif frame.name == "unsubscribe":
                conn.topics.discard(frame.payload.get("topic"))
                payload = {"ok": True}
            else:
                with self._scene_lock:
                    payload = handler(frame.payload)
            conn.send(Frame("response", frame.name, payload, frame.id))
        except (SceneError, SettleError, DesktopError, MetricsError,
                proto.FrameError, KeyError, ValueError, TypeError) as exc:
            detail = f"{type(exc).__name__}: {exc}" if not str(exc).strip() else str(exc)
            conn.send(Frame("error", frame.name, {"error": detail}, frame.id))

    def _handle_inbound_topic(self, frame: Frame):
        if frame.name == "target_pose":
            pose = proto.payload_pose(frame.payload["pose"])
            self.executor.ee_push_target(pose)
            if self.session is not None:
                self.session.note("target_pose", self.clock.now())
        elif frame.name == "interaction":
            if self.session is not None:
                self.session.note(frame.payload.get("event", "interaction"),
                                  self.clock.now())
        else:
            log.debug("ignoring inbound topic %s", frame.name)

    def _do_subscribe(self, conn: _Connection, payload):
        topic = payload.get("topic")
        if topic not in TOPICS:
            raise ValueError(f"unknown topic {topic!r}")
        conn.topics.add(topic)
        if topic == "l515_image_raw":
            # static placeholder for the camera screen
            conn.send(Frame("topic", "l515_image_raw",
                            {"format": "stub", "width": 0, "height": 0, "data": ""}))
        return {"ok": True, "topic": topic}

    # ------------------------------------------------------------- services

    def _svc_GetScene(self, payload):
        return proto.scene_payload(self.scene)

    def _svc_ResetScene(self, payload):
        self.scene = load_scene(self.scene_path)
        self.executor.scene = self.scene
        self.executor.grasp_transform = None
        self.executor.queue.pop_latest()
        self.scene.sim_time = self.clock.now()
        return {"ok": True}

    def _svc_SetGhostPose(self, payload):
        pose = proto.payload_pose(payload["pose"])
        set_ghost_pose(self.scene, payload["instance_id"], pose)
        return {"ok": True}

    def _svc_ResetGhosts(self, payload):
        reset_ghosts(self.scene)
        return {"ok": True}

    def _svc_DesktopDetection(self, payload):
        if self.cloud_path:
            cloud = load_point_cloud(self.cloud_path)
            params = DetectParams(seed=self.seed)
            self.scene.desktop = detect_desktop(cloud, params)
        mesh = self.scene.desktop
        return {"normal": [float(v) for v in mesh.normal],
                "offset": float(mesh.offset),
                "boundary": [[float(x), float(y)] for x, y in mesh.boundary],
                "triangles": [list(t) for t in mesh.triangles]}

    def _svc_SettlePreview(self, payload):
        pose = proto.payload_pose(payload["pose"])
        result = settle(self.scene.snapshot(), payload["instance_id"], pose)
        return proto.settle_result_payload(result)

    def _svc_ExecuteTask(self, payload):
        request = proto.payload_task_request(payload)
        if self.session is not None:
            self.session.note("execute_request", self.clock.now())
        report = self.executor.execute_task(request)
        if self.session is not None and not report.success:
            if any(m.outcome == COLLISION for m in report.moves):
                self.session.note("collision", self.clock.now())
            else:
                self.session.note("task_failed", self.clock.now())
        return report.to_payload()

    def _svc_GraspService(self, payload):
        grasped = self.executor.grasp_service()
        return {"success": grasped is not None,
                "instance_id": grasped.instance_id if grasped else None,
                "aperture": self.scene.gripper_aperture}

    def _svc_ReleaseService(self, payload):
        result = self.executor.release_service()
        out = {"aperture": self.scene.gripper_aperture}
        if result is not None:
            out["settle"] = proto.settle_result_payload(result)
        return out

    def _svc_BeginTask(self, payload):
        mode = payload.get("mode")
        if mode not in (HSI, EE):
            raise ValueError(f"mode must be '{HSI}' or '{EE}', got {mode!r}")
        self.session = SessionTracker(payload.get("task", "task"), mode)
        return {"ok": True}

    def _svc_EndTask(self, payload):
        if self.session is None:
            raise ValueError("no active task session")
        if self.session.mode == EE:
            self.session.note("task_complete", self.clock.now())
        record = self.session.finish(payload.get("outcome"))
        self.session = None
        if self.metrics_path:
            append_record(self.metrics_path, record)
        return {"task": record.task, "mode": record.mode,
                "completion_time": record.completion_time,
                "interaction_time": record.interaction_time,
                "outcome": record.outcome}

    def _svc_AdvanceClock(self, payload):
        if not self.sim:
            raise ValueError("AdvanceClock is only available under the simulated clock")
        dt = float(payload["dt"])
        if dt < 0:
            raise ValueError("dt must be non-negative")
        if self.session is not None and self.session.mode == EE:
            self.executor.ee_run(dt)
        else:
            self.clock.sleep(dt)
        self.scene.sim_time = self.clock.now()
        return {"now": self.clock.now()}


def replay_session(scene_path, log_path, **kwargs):
    """Re-run a recorded session's inbound frames against a fresh server."""
    server = TeleopServer(scene_path, sim_clock=True, **kwargs)

    class _NullConn:
        topics: set = set()
        open = True

        def send(self, frame):
            pass

    conn = _NullConn()
    for line in Path(log_path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        entry = json.loads(line)
        dt = entry["t"] - server.clock.now()
        if dt > 0:
            server._svc_AdvanceClock({"dt": dt})
        frame = Frame(kind=entry["kind"], name=entry["name"],
                      payload=entry["payload"], id=entry.get("id"))
        server._dispatch(conn, frame)
    return server
