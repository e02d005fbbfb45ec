"""Minimal JSON REST server on top of http.server.

Enough router for a desk-scale deployment: regex routes, bearer-token
extraction, JSON bodies, and streaming responses for server-sent events.
Handlers return ``(status, body_dict)`` or call ``request.start_stream``
and write events themselves.
"""

from __future__ import annotations

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlsplit

STREAMED = object()  # sentinel: handler already wrote the response


class HttpError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


class Request:
    def __init__(self, handler: "_Handler", params: tuple[str, ...], query: dict[str, str]):
        self._handler = handler
        self.params = params
        self.query = query
        self.headers = handler.headers
        length = int(handler.headers.get("Content-Length") or 0)
        self.body = handler.rfile.read(length) if length else b""

    @property
    def token(self) -> str | None:
        auth = self.headers.get("Authorization") or ""
        if auth.startswith("Bearer "):
            return auth[len("Bearer "):].strip()
        return None

    def json(self):
        if not self.body:
            return {}
        try:
            return json.loads(self.body)
        except json.JSONDecodeError as exc:
            raise HttpError(400, f"request body is not valid JSON: {exc}") from exc

    # -- streaming (SSE)

    def start_stream(self, content_type: str = "text/event-stream") -> None:
        h = self._handler
        h.send_response(200)
        h.send_header("Content-Type", content_type)
        h.send_header("Cache-Control", "no-cache")
        h.send_header("Access-Control-Allow-Origin", "*")
        h.send_header("Connection", "close")
        h.end_headers()

    def write_event(self, data: str, event: str | None = None) -> bool:
        """Write one SSE event; returns False once the client is gone."""
        h = self._handler
        frame = (f"event: {event}\n" if event else "") + f"data: {data}\n\n"
        try:
            h.wfile.write(frame.encode())
            h.wfile.flush()
            return True
        except OSError:
            return False

    def write_comment(self, text: str = "keepalive") -> bool:
        try:
            self._handler.wfile.write(f": {text}\n\n".encode())
            self._handler.wfile.flush()
            return True
        except OSError:
            return False


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "gridgate"

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send_json(self, status: int, body: dict) -> None:
        payload = json.dumps(body).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(payload)

    def _dispatch(self, method: str) -> None:
        parts = urlsplit(self.path)
        query = {k: v[-1] for k, v in parse_qs(parts.query).items()}
        for route_method, pattern, fn in self.server.routes:  # type: ignore[attr-defined]
            if route_method != method:
                continue
            m = pattern.fullmatch(parts.path)
            if not m:
                continue
            try:
                request = Request(self, m.groups(), query)
                result = fn(request)
            except HttpError as exc:
                self._send_json(exc.status, {"error": exc.message})
            except Exception as exc:  # noqa: BLE001 - surface as 500, keep serving
                self._send_json(500, {"error": f"{type(exc).__name__}: {exc}"})
            else:
                if result is STREAMED:
                    self.close_connection = True
                else:
                    status, body = result
                    self._send_json(status, body)
            return
        self._send_json(404, {"error": f"no route for {method} {parts.path}"})

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_PUT(self):
        self._dispatch("PUT")

    def do_DELETE(self):
        self._dispatch("DELETE")

    def do_OPTIONS(self):
        # CORS preflight for browser clients on another origin
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, PUT, DELETE, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Authorization, Content-Type")
        self.send_header("Access-Control-Max-Age", "600")
        self.send_header("Content-Length", "0")
        self.end_headers()


class ApiServer:
    """Threaded HTTP server with a (method, regex, handler) route table."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        class _Server(ThreadingHTTPServer):
            daemon_threads = True
            allow_reuse_address = True

        self._server = _Server((host, port), _Handler)
        self._server.routes = []  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    def route(self, method: str, pattern: str, fn) -> None:
        self._server.routes.append((method, re.compile(pattern), fn))  # type: ignore[attr-defined]

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    @property
    def base_url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def start(self) -> "ApiServer":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread:
            self._thread.join(timeout=5)

    def __enter__(self) -> "ApiServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
