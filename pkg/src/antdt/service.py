"""Length-prefixed JSON over TCP: 4-byte big-endian length, then a UTF-8 JSON body."""

from __future__ import annotations

import json
import socket
import socketserver
import struct
import threading
from typing import Callable

MAX_FRAME = 16 << 20
_HEADER = struct.Struct(">I")


class FramingError(ConnectionError):
    pass


def encode(msg: dict) -> bytes:
    body = json.dumps(msg, separators=(",", ":"), sort_keys=True).encode("utf-8")
    if len(body) > MAX_FRAME:
        raise FramingError(f"frame of {len(body)} bytes exceeds limit")
    return _HEADER.pack(len(body)) + body


def _read_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            if buf:
                raise FramingError("connection closed mid-frame")
            return None
        buf += chunk
    return bytes(buf)


def read_frame(sock: socket.socket) -> dict | None:
    """Next message, or None on a clean close between frames."""
    head = _read_exact(sock, _HEADER.size)
    if head is None:
        return None
    (n,) = _HEADER.unpack(head)
    if n > MAX_FRAME:
        raise FramingError(f"declared frame length {n} exceeds limit")
    body = _read_exact(sock, n)
    if body is None:
        raise FramingError("connection closed mid-frame")
    try:
        return json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FramingError(f"bad frame body: {exc}") from exc


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        dispatch: Callable[[dict], dict] = self.server.dispatch  # type: ignore[attr-defined]
        while True:
            try:
                msg = read_frame(self.request)
            except FramingError as exc:
                self.request.sendall(encode({"error": "FramingError", "detail": str(exc)}))
                return
            if msg is None:
                return
            if not isinstance(msg, dict):
                reply = {"error": "ProtocolError", "detail": "message must be a JSON object"}
            else:
                reply = dispatch(msg)
            self.request.sendall(encode(reply))


class _Server(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class FrameServer:
    """Serves ``dispatch(dict) -> dict`` on a TCP port; the handler must serialize its own state."""

    def __init__(self, dispatch: Callable[[dict], dict], host: str = "127.0.0.1", port: int = 0):
        self._server = _Server((host, port), _Handler)
        self._server.dispatch = dispatch  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def start(self) -> "FrameServer":
        if self._thread is not None:
            return self
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


class FrameClient:
    def __init__(self, host: str, port: int, timeout: float = 5.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)

    def call(self, msg: dict) -> dict:
        self.sock.sendall(encode(msg))
        reply = read_frame(self.sock)
        if reply is None:
            raise FramingError("server closed the connection")
        return reply

    def close(self) -> None:
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
