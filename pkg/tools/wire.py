# tools/wire.py
"""
Length-delimited JSON envelopes over a byte stream.

Frame layout (bit-exact)::

    +----------------------+------------------------------------------+
    | 4 bytes, big-endian  | UTF-8 JSON object, compact, sorted keys  |
    | unsigned body length |                                          |
    +----------------------+------------------------------------------+

Requests:  {"id": <int>, "method": "tools/list" | "tools/call", "params": {...}}
Responses: {"id": <int>, "result": {...}}
           {"id": <int>, "error": {"code": <int>, "message": <str>, "class": <ErrorClass>}}

``tools/call`` params are {"name", "arguments", "call_id"}; its result is a
ToolResult record. Tool-level failures travel inside the result with
status "error"; error frames are reserved for protocol faults.
"""
from __future__ import annotations

import itertools
import json
import logging
import socket
import socketserver
import struct
import threading

from core.trace import ErrorClass
from tools.host import ToolHost, ToolResult
from tools.schema import FAILURE_TYPES, ToolCrashFailure, ToolSchema

logger = logging.getLogger(__name__)

HEADER = struct.Struct(">I")
MAX_FRAME = 16 * 1024 * 1024

PARSE_ERROR = -32700
METHOD_NOT_FOUND = -32601
INVALID_PARAMS = -32602
INTERNAL_ERROR = -32603


def encode_frame(message: dict) -> bytes:
    body = json.dumps(message, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode("utf-8")
    return HEADER.pack(len(body)) + body


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks, remaining = [], n
    while remaining:
        chunk = sock.recv(remaining)
        if not chunk:
            raise ConnectionError("connection closed mid-frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> dict | None:
    """Next envelope, or None on a clean end of stream."""
    first = sock.recv(HEADER.size)
    if not first:
        return None
    header = first if len(first) == HEADER.size else first + _recv_exact(sock, HEADER.size - len(first))
    (length,) = HEADER.unpack(header)
    if length > MAX_FRAME:
        raise ValueError(f"frame of {length} bytes exceeds limit")
    return json.loads(_recv_exact(sock, length).decode("utf-8"))


def result_to_record(result: ToolResult) -> dict:
    return {
        "call_id": result.call_id,
        "status": result.status.value,
        "content": result.content,
        "error_class": result.error_class.value if result.error_class else None,
        "content_tokens": result.content_tokens,
        "duration": result.duration,
    }


def record_to_result(rec: dict) -> ToolResult:
    return ToolResult(
        call_id=rec["call_id"],
        status=rec["status"],
        content=rec.get("content", ""),
        error_class=rec.get("error_class"),
        duration=float(rec.get("duration", 0.0)),
        content_tokens=int(rec.get("content_tokens", 0)),
    )


# ── Server ───────────────────────────────────────────────────────────────────

def handle_request(host: ToolHost, request: dict) -> dict:
    req_id = request.get("id")
    method = request.get("method")
    params = request.get("params") or {}
    if method == "tools/list":
        return {"id": req_id, "result": {"tools": [t.to_record() for t in host.list_tools()]}}
    if method == "tools/call":
        if not isinstance(params.get("name"), str) or not isinstance(params.get("arguments", {}), dict):
            return _error(req_id, INVALID_PARAMS, "tools/call needs name and arguments", ErrorClass.INVALID_ARGUMENTS)
        result = host.execute(str(params.get("call_id", "")), params["name"], params.get("arguments", {}))
        return {"id": req_id, "result": result_to_record(result)}
    return _error(req_id, METHOD_NOT_FOUND, f"unknown method {method!r}", ErrorClass.TOOL_NOT_FOUND)


def _error(req_id, code: int, message: str, error_class: ErrorClass) -> dict:
    return {"id": req_id, "error": {"code": code, "message": message, "class": error_class.value}}


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        host: ToolHost = self.server.tool_host
        while True:
            try:
                request = read_frame(self.request)
            except (ValueError, UnicodeDecodeError) as exc:
                self.request.sendall(encode_frame(_error(None, PARSE_ERROR, str(exc), ErrorClass.INVALID_ARGUMENTS)))
                return
            except ConnectionError:
                return
            if request is None:
                return
            try:
                response = handle_request(host, request)
            except Exception as exc:
                logger.exception("request failed")
                response = _error(request.get("id"), INTERNAL_ERROR, str(exc), ErrorClass.TOOL_CRASH)
            self.request.sendall(encode_frame(response))


class _ThreadingServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


class MockToolServer:
    """Serves a ToolHost over a local socket; ``port=0`` picks an ephemeral port."""

    def __init__(self, host: ToolHost, bind: str = "127.0.0.1", port: int = 0):
        self._server = _ThreadingServer((bind, port), _Handler)
        self._server.tool_host = host
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def start(self) -> "MockToolServer":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        logger.info("Mock tool server listening on %s:%d", *self.address)
        return self

    def serve_forever(self) -> None:
        logger.info("Mock tool server listening on %s:%d", *self.address)
        self._server.serve_forever()

    def stop(self) -> None:
        # shutdown() blocks unless a background loop is running
        if self._thread is not None:
            self._server.shutdown()
            self._thread.join(timeout=5)
            self._thread = None
        self._server.server_close()

    def __enter__(self) -> "MockToolServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


# ── Client adapter ───────────────────────────────────────────────────────────

class SocketTransport:
    """Client side of the wire protocol; one connection per request."""

    def __init__(self, host: str, port: int, timeout: float = 5.0):
        self.address = (host, port)
        self.timeout = timeout
        self._ids = itertools.count(1)
        self._lock = threading.Lock()

    def _next_id(self) -> int:
        with self._lock:
            return next(self._ids)

    def request(self, method: str, params: dict) -> dict:
        req_id = self._next_id()
        with socket.create_connection(self.address, timeout=self.timeout) as sock:
            sock.sendall(encode_frame({"id": req_id, "method": method, "params": params}))
            response = read_frame(sock)
        if response is None:
            raise ConnectionError("server closed the connection without replying")
        if "error" in response:
            err = response["error"]
            failure = FAILURE_TYPES.get(ErrorClass(err.get("class", "tool_crash")), ToolCrashFailure)
            raise failure(f"[{err.get('code')}] {err.get('message')}")
        return response["result"]

    def list_tools(self) -> list[ToolSchema]:
        return [ToolSchema.from_record(r) for r in self.request("tools/list", {})["tools"]]

    def call(self, call_id: str, tool_name: str, arguments: dict) -> ToolResult:
        rec = self.request("tools/call", {"name": tool_name, "arguments": arguments, "call_id": call_id})
        return record_to_result(rec)
