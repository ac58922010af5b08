"""Blocking protocol client used by the eval harness and the tests.

A reader thread routes response/error frames to their pending request by
correlation id and appends topic frames to per-topic lists.
"""

from __future__ import annotations

import socket
import threading
from collections import defaultdict

from . import protocol as proto
from .protocol import Frame


class ServiceError(Exception):
    def __init__(self, name, detail):
        super().__init__(f"{name}: {detail}")
        self.service = name
        self.detail = detail


class TeleopClient:
    def __init__(self, host="127.0.0.1", port=7447, timeout=30.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.timeout = timeout
        self._next_id = 0
        self._id_lock = threading.Lock()
        self._pending = {}
        self._pending_lock = threading.Lock()
        self.topic_frames = defaultdict(list)
        self._topic_lock = threading.Lock()
        self._send_lock = threading.Lock()
        self._closed = False
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def close(self):
        self._closed = True
        try:
            self.sock.close()
        except OSError:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _read_loop(self):
        decoder = proto.FrameDecoder()
        try:
            while not self._closed:
                data = self.sock.recv(65536)
                if not data:
                    break
                for frame in decoder.feed(data):
                    self._route(frame)
        except (OSError, proto.FrameError):
            pass
        # unblock anyone still waiting
        with self._pending_lock:
            for event, slot in self._pending.values():
                slot.append(Frame("error", "connection", {"error": "connection closed"}, None))
                event.set()

    def _route(self, frame: Frame):
        if frame.kind == "topic":
            with self._topic_lock:
                self.topic_frames[frame.name].append(frame)
            return
        with self._pending_lock:
            entry = self._pending.pop(frame.id, None)
        if entry is not None:
            event, slot = entry
            slot.append(frame)
            event.set()

    def _send(self, frame: Frame):
        with self._send_lock:
            self.sock.sendall(proto.encode_frame(frame))

    def call(self, name: str, payload: dict | None = None) -> dict:
        with self._id_lock:
            self._next_id += 1
            cid = self._next_id
        event, slot = threading.Event(), []
        with self._pending_lock:
            self._pending[cid] = (event, slot)
        self._send(Frame("request", name, payload or {}, cid))
        if not event.wait(self.timeout):
            with self._pending_lock:
                self._pending.pop(cid, None)
            raise TimeoutError(f"service {name} timed out")
        frame = slot[0]
        if frame.kind == "error":
            raise ServiceError(name, frame.payload.get("error", "unknown error"))
        return frame.payload

    def publish(self, topic: str, payload: dict):
        self._send(Frame("topic", topic, payload))

    def subscribe(self, topic: str):
        return self.call("subscribe", {"topic": topic})

    def received(self, topic: str):
        with self._topic_lock:
            return list(self.topic_frames[topic])

    def clear_topic(self, topic: str):
        with self._topic_lock:
            self.topic_frames[topic].clear()
