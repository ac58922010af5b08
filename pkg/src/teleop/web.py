"""Browser bridge: static console files plus a WebSocket endpoint.

The WebSocket at /ws shuttles protocol bodies between a browser and the
TCP endpoint: each text message is exactly one canonical JSON frame body
(the TCP length prefix is dropped because WebSocket frames carry their
own length). The console itself is a static bundle served under
/console/.
"""

from __future__ import annotations

import base64
import hashlib
import logging
import socket
import struct
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .protocol import FrameDecoder, encode_body, encode_frame

log = logging.getLogger(__name__)

WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".map": "application/json",
    ".json": "application/json",
    ".png": "image/png",
    ".svg": "image/svg+xml",
}

_PLACEHOLDER = b"""<!doctype html>
<html><head><title>console</title></head>
<body><p>The console bundle is not built. Run <code>npm run build</code> in
the frontend directory and restart with --console-dir pointing at its
dist/ output.</p></body></html>
"""


def _ws_accept_key(key: str) -> str:
    digest = hashlib.sha1((key + WS_GUID).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


def ws_encode(payload: bytes, opcode=0x1) -> bytes:
    """Server-to-client frame: FIN set, unmasked."""
    head = bytes([0x80 | opcode])
    n = len(payload)
    if n < 126:
        head += bytes([n])
    elif n < 1 << 16:
        head += bytes([126]) + struct.pack(">H", n)
    else:
        head += bytes([127]) + struct.pack(">Q", n)
    return head + payload


def ws_read_message(sock) -> tuple:
    """Read one complete message; returns (opcode, bytes) or (None, b"") on EOF.

    Handles continuation fragments and unmasks client payloads. Control
    frames (ping/close) are surfaced to the caller.
    """
    message = b""
    opcode = None
    while True:
        header = _read_exact(sock, 2)
        if header is None:
            return None, b""
        b0, b1 = header
        fin = bool(b0 & 0x80)
        op = b0 & 0x0F
        masked = bool(b1 & 0x80)
        length = b1 & 0x7F
        if length == 126:
            length = struct.unpack(">H", _read_exact(sock, 2, strict=True))[0]
        elif length == 127:
            length = struct.unpack(">Q", _read_exact(sock, 8, strict=True))[0]
        mask = _read_exact(sock, 4, strict=True) if masked else None
        payload = _read_exact(sock, length, strict=True) if length else b""
        if mask:
            payload = bytes(c ^ mask[i % 4] for i, c in enumerate(payload))
        if op in (0x8, 0x9, 0xA):      # close / ping / pong
            return op, payload
        if op != 0x0:
            opcode = op
        message += payload
        if fin:
            return opcode, message


def _read_exact(sock, n, strict=False):
    chunks = b""
    while len(chunks) < n:
        try:
            chunk = sock.recv(n - len(chunks))
        except OSError:
            chunk = b""
        if not chunk:
            if strict:
                raise ConnectionError("websocket connection interrupted")
            return None
        chunks += chunk
    return chunks


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    web = None  # type: ConsoleWebServer

    def log_message(self, fmt, *args):
        log.debug("http %s", fmt % args)

    def do_GET(self):
        if self.path == "/ws":
            self._upgrade_websocket()
            return
        path = self.path.split("?", 1)[0]
        if path in ("/", "/console"):
            self.send_response(301)
            self.send_header("Location", "/console/")
            self.send_header("Content-Length", "0")
            self.end_headers()
            return
        if path.startswith("/console/"):
            self._serve_static(path[len("/console/"):] or "index.html")
            return
        self._send_bytes(404, b"not found", "text/plain")

    def _serve_static(self, rel):
        root = self.web.static_dir
        if root is None:
            self._send_bytes(200, _PLACEHOLDER, "text/html; charset=utf-8")
            return
        target = (root / rel).resolve()
        if root.resolve() not in target.parents and target != root.resolve():
            self._send_bytes(403, b"forbidden", "text/plain")
            return
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            self._send_bytes(404, b"not found", "text/plain")
            return
        ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
        self._send_bytes(200, target.read_bytes(), ctype)

    def _send_bytes(self, status, body, ctype):
        self.send_response(status)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _upgrade_websocket(self):
        key = self.headers.get("Sec-WebSocket-Key")
        if self.headers.get("Upgrade", "").lower() != "websocket" or not key:
            self._send_bytes(400, b"websocket upgrade required", "text/plain")
            return
        self.send_response(101, "Switching Protocols")
        self.send_header("Upgrade", "websocket")
        self.send_header("Connection", "Upgrade")
        self.send_header("Sec-WebSocket-Accept", _ws_accept_key(key))
        self.end_headers()
        self.close_connection = True
        self.web.bridge(self.connection)


class ConsoleWebServer:
    """HTTP endpoint serving the console bundle and bridging /ws to the
    TCP protocol endpoint."""

    def __init__(self, teleop_server, port=0, host="127.0.0.1", static_dir=None):
        self.teleop = teleop_server
        self.host = host
        self._requested_port = port
        self.static_dir = Path(static_dir) if static_dir else None
        self._httpd = None
        self._thread = None

    @property
    def port(self):
        return self._httpd.server_address[1]

    def start(self):
        handler = type("BoundHandler", (_Handler,), {"web": self})
        self._httpd = ThreadingHTTPServer((self.host, self._requested_port), handler)
        self._httpd.daemon_threads = True
        self._thread = threading.Thread(target=self._httpd.serve_forever,
                                        name="console-http", daemon=True)
        self._thread.start()
        return self

    def stop(self):
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
            self._thread.join(timeout=2.0)

    def bridge(self, ws_sock):
        """Pump frames both ways until either side closes."""
        tcp = socket.create_connection(("127.0.0.1", self.teleop.port))
        tcp_lock = threading.Lock()
        ws_lock = threading.Lock()
        done = threading.Event()

        def tcp_to_ws():
            decoder = FrameDecoder()
            try:
                while not done.is_set():
                    data = tcp.recv(65536)
                    if not data:
                        break
                    for frame in decoder.feed(data):
                        with ws_lock:
                            ws_sock.sendall(ws_encode(encode_body(frame)))
            except OSError:
                pass
            finally:
                done.set()
                try:
                    with ws_lock:
                        ws_sock.sendall(ws_encode(b"", opcode=0x8))
                except OSError:
                    pass

        pump = threading.Thread(target=tcp_to_ws, name="ws-bridge", daemon=True)
        pump.start()
        try:
            while not done.is_set():
                opcode, payload = ws_read_message(ws_sock)
                if opcode is None or opcode == 0x8:
                    break
                if opcode == 0x9:  # ping
                    with ws_lock:
                        ws_sock.sendall(ws_encode(payload, opcode=0xA))
                    continue
                if opcode == 0xA:
                    continue
                with tcp_lock:
                    tcp.sendall(struct.pack(">I", len(payload)) + payload)
        except (ConnectionError, OSError):
            pass
        finally:
            done.set()
            try:
                tcp.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            tcp.close()
            pump.join(timeout=2.0)
