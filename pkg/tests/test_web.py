"""Browser bridge: WebSocket handshake and frame pumping, static console
serving. A hand-rolled masked client exercises the server end."""

import json
import os
import socket
import struct
import time
import urllib.request

import pytest

from teleop.protocol import Frame, encode_body
from teleop.server import TeleopServer
from teleop.web import ConsoleWebServer, _ws_accept_key, ws_read_message


@pytest.fixture
def stack(one_box_scene_file):
    srv = TeleopServer(one_box_scene_file, port=0, sim_clock=True).start()
    web = ConsoleWebServer(srv, port=0).start()
    yield srv, web
    web.stop()
    srv.stop()


def ws_connect(port):
    sock = socket.create_connection(("127.0.0.1", port), timeout=10)
    key = "dGhlIHNhbXBsZSBub25jZQ=="
    sock.sendall((
        "GET /ws HTTP/1.1\r\n"
        f"Host: 127.0.0.1:{port}\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Key: {key}\r\n"
        "Sec-WebSocket-Version: 13\r\n\r\n").encode("ascii"))
    response = b""
    while b"\r\n\r\n" not in response:
        response += sock.recv(4096)
    return sock, response.decode("latin-1")


def ws_send_masked(sock, payload: bytes, opcode=0x1):
    mask = os.urandom(4)
    head = bytes([0x80 | opcode])
    n = len(payload)
    if n < 126:
        head += bytes([0x80 | n])
    elif n < 1 << 16:
        head += bytes([0x80 | 126]) + struct.pack(">H", n)
    else:
        head += bytes([0x80 | 127]) + struct.pack(">Q", n)
    body = bytes(c ^ mask[i % 4] for i, c in enumerate(payload))
    sock.sendall(head + mask + body)


def ws_call(sock, name, payload, fid):
    body = encode_body(Frame("request", name, payload, id=fid))
    ws_send_masked(sock, body)
    while True:
        opcode, data = ws_read_message(sock)
        assert opcode == 0x1
        obj = json.loads(data.decode("utf-8"))
        if obj.get("id") == fid:
            return obj, data


# ------------------------------------------------------------- handshake

def test_handshake_accept_key_rfc_sample():
    # the worked example from the protocol specification
    assert _ws_accept_key("dGhlIHNhbXBsZSBub25jZQ==") == \
        "s3pPLMBiTxaQ9kYGzzhZRbK+xOo="


def test_handshake_response(stack):
    _, web = stack
    sock, response = ws_connect(web.port)
    try:
        assert response.startswith("HTTP/1.1 101")
        assert "Sec-WebSocket-Accept: s3pPLMBiTxaQ9kYGzzhZRbK+xOo=" in response
    finally:
        sock.close()


def test_plain_get_to_ws_path_rejected(stack):
    _, web = stack
    with pytest.raises(urllib.error.HTTPError) as ei:
        urllib.request.urlopen(f"http://127.0.0.1:{web.port}/ws", timeout=10)
    assert ei.value.code == 400


# ----------------------------------------------------------------- bridge

def test_ws_service_call(stack):
    _, web = stack
    sock, _ = ws_connect(web.port)
    try:
        obj, raw = ws_call(sock, "GetScene", {}, fid=1)
        assert obj["kind"] == "response"
        assert obj["payload"]["objects"][0]["instance_id"] == "box1"
        # the message body is exactly the canonical TCP frame body
        assert raw == json.dumps(json.loads(raw), sort_keys=True,
                                 separators=(",", ":")).encode("utf-8")
    finally:
        sock.close()


def test_ws_topic_subscription(stack):
    _, web = stack
    sock, _ = ws_connect(web.port)
    try:
        ws_call(sock, "subscribe", {"topic": "joint_states"}, fid=1)
        body = encode_body(Frame("request", "AdvanceClock", {"dt": 0.2}, id=2))
        ws_send_masked(sock, body)
        topics, answered = [], False
        sock.settimeout(10)
        while not (answered and len(topics) >= 10):
            opcode, data = ws_read_message(sock)
            assert opcode == 0x1
            obj = json.loads(data.decode("utf-8"))
            if obj["kind"] == "topic" and obj["name"] == "joint_states":
                topics.append(obj)
            elif obj.get("id") == 2:
                answered = True
        assert all(len(t["payload"]["angles"]) == 7 for t in topics)
    finally:
        sock.close()


def test_ws_error_frame_for_bad_request(stack):
    _, web = stack
    sock, _ = ws_connect(web.port)
    try:
        obj, _ = ws_call(sock, "NoSuchService", {}, fid=3)
        assert obj["kind"] == "error"
        assert "unknown service" in obj["payload"]["error"]
    finally:
        sock.close()


def test_ws_ping_pong(stack):
    _, web = stack
    sock, _ = ws_connect(web.port)
    try:
        ws_send_masked(sock, b"heartbeat", opcode=0x9)
        opcode, payload = ws_read_message(sock)
        assert opcode == 0xA and payload == b"heartbeat"
    finally:
        sock.close()


def test_ws_close_on_client_close(stack):
    _, web = stack
    sock, _ = ws_connect(web.port)
    ws_send_masked(sock, b"", opcode=0x8)
    sock.settimeout(10)
    # server finishes the close handshake and drops the connection
    deadline = time.monotonic() + 10
    while time.monotonic() < deadline:
        data = sock.recv(4096)
        if not data:
            break
    sock.close()


# ----------------------------------------------------------------- static

def fetch(port, path):
    try:
        with urllib.request.urlopen(f"http://127.0.0.1:{port}{path}",
                                    timeout=10) as r:
            return r.status, r.read(), dict(r.headers)
    except urllib.error.HTTPError as e:
        return e.code, e.read(), dict(e.headers)


def test_root_redirects_to_console(stack):
    _, web = stack
    req = urllib.request.Request(f"http://127.0.0.1:{web.port}/")
    with urllib.request.urlopen(req, timeout=10) as r:  # follows the redirect
        assert r.url.endswith("/console/")


def test_placeholder_without_bundle(stack):
    _, web = stack
    status, body, headers = fetch(web.port, "/console/")
    assert status == 200
    assert b"console bundle is not built" in body
    assert headers["Content-Type"].startswith("text/html")


def test_serves_bundle_files(one_box_scene_file, tmp_path):
    (tmp_path / "index.html").write_text("<h1>console</h1>", encoding="utf-8")
    (tmp_path / "app.js").write_text("export {};", encoding="utf-8")
    srv = TeleopServer(one_box_scene_file, port=0, sim_clock=True).start()
    web = ConsoleWebServer(srv, port=0, static_dir=tmp_path).start()
    try:
        status, body, headers = fetch(web.port, "/console/")
        assert status == 200 and body == b"<h1>console</h1>"
        status, body, headers = fetch(web.port, "/console/app.js")
        assert status == 200
        assert headers["Content-Type"].startswith("text/javascript")
        status, _, _ = fetch(web.port, "/console/missing.js")
        assert status == 404
    finally:
        web.stop()
        srv.stop()


def test_path_traversal_blocked(one_box_scene_file, tmp_path):
    bundle = tmp_path / "dist"
    bundle.mkdir()
    (bundle / "index.html").write_text("ok", encoding="utf-8")
    (tmp_path / "secret.txt").write_text("secret", encoding="utf-8")
    srv = TeleopServer(one_box_scene_file, port=0, sim_clock=True).start()
    web = ConsoleWebServer(srv, port=0, static_dir=bundle).start()
    try:
        status, body, _ = fetch(web.port, "/console/../secret.txt")
        assert status in (403, 404)
        assert b"secret" not in body
    finally:
        web.stop()
        srv.stop()
