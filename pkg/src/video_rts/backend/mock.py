"""Scripted chat-completions server for tests and offline runs.

Each POST to ``/chat/completions`` consumes the next script entry:

* a string: returned as the completion (OpenAI stop semantics: the stop
  string and anything after it are dropped, ``finish_reason="stop"``);
* a :class:`MockReply`: explicit status / delay / text;
* a callable taking the request body and returning either of the above.

When the script runs out, ``default`` is used the same way.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Callable, Optional, Union


@dataclass
class MockReply:
    text: str = ""
    status: int = 200
    delay: float = 0.0
    finish_reason: Optional[str] = None


ScriptEntry = Union[str, MockReply, Callable[[dict], Union[str, MockReply]]]


@dataclass
class RecordedRequest:
    path: str
    headers: dict[str, str]
    raw_body: bytes

    @property
    def body(self) -> dict[str, Any]:
        return json.loads(self.raw_body)


def _apply_stop(text: str, stop) -> tuple[str, str]:
    stops = [stop] if isinstance(stop, str) else list(stop or [])
    cuts = [text.find(s) for s in stops if s and s in text]
    if cuts:
        return text[: min(cuts)], "stop"
    return text, "stop"


class MockChatServer:
    def __init__(self, script: Optional[list[ScriptEntry]] = None, default: Optional[ScriptEntry] = None):
        self.script = list(script or [])
        self.default = default
        self.requests: list[RecordedRequest] = []
        self._lock = threading.Lock()
        self._server: Optional[ThreadingHTTPServer] = None
        self._thread: Optional[threading.Thread] = None

    @property
    def base_url(self) -> str:
        assert self._server is not None, "server not started"
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/v1"

    def _next(self, body: dict) -> MockReply:
        with self._lock:
            entry = self.script.pop(0) if self.script else self.default
        if entry is None:
            return MockReply(text="script exhausted", status=500)
        if callable(entry) and not isinstance(entry, MockReply):
            entry = entry(body)
        if isinstance(entry, str):
            text, reason = _apply_stop(entry, body.get("stop"))
            return MockReply(text=text, finish_reason=reason)
        if entry.status == 200 and entry.finish_reason is None:
            text, reason = _apply_stop(entry.text, body.get("stop"))
            return MockReply(text, 200, entry.delay, reason)
        return entry

    def _handler(self):
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # keep test output quiet
                pass

            def do_POST(self):
                raw = self.rfile.read(int(self.headers.get("Content-Length", 0)))
                with server._lock:
                    server.requests.append(RecordedRequest(self.path, dict(self.headers), raw))
                if not self.path.endswith("/chat/completions"):
                    self._send(404, {"error": "not found"})
                    return
                try:
                    body = json.loads(raw)
                except json.JSONDecodeError:
                    self._send(400, {"error": "invalid json"})
                    return
                reply = server._next(body)
                if reply.delay:
                    time.sleep(reply.delay)
                if reply.status != 200:
                    self._send(reply.status, {"error": reply.text or "scripted failure"})
                    return
                self._send(
                    200,
                    {
                        "id": f"mock-{len(server.requests)}",
                        "object": "chat.completion",
                        "model": body.get("model"),
                        "choices": [
                            {
                                "index": 0,
                                "message": {"role": "assistant", "content": reply.text},
                                "finish_reason": reply.finish_reason or "stop",
                            }
                        ],
                    },
                )

            def _send(self, status: int, payload: dict):
                data = json.dumps(payload).encode()
                try:
                    self.send_response(status)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(data)))
                    self.end_headers()
                    self.wfile.write(data)
                except (BrokenPipeError, ConnectionResetError):
                    pass  # client gave up (timeout test)

        return Handler

    def start(self) -> "MockChatServer":
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), self._handler())
        self._server.daemon_threads = True
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None

    def __enter__(self) -> "MockChatServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
