"""REST + SSE surface over a CloudTwin.

Every route authenticates the bearer token before touching any state.
Gateway-scoped routes accept the gateway's own token or the operator
token; fleet-wide routes (queries, method invocation, desired-state
writes) require the operator token.
"""

from __future__ import annotations

import json
import queue as queue_mod

from .cloud import CloudError, CloudTwin
from .httpd import ApiServer, HttpError, Request, STREAMED

LONG_POLL_HOLD_S = 25.0


def _cloud_errors(fn):
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except CloudError as exc:
            raise HttpError(exc.status, exc.message) from exc

    return wrapper


class CloudHttpApi:
    def __init__(self, twin: CloudTwin, host: str = "127.0.0.1", port: int = 0):
        self.twin = twin
        self.server = ApiServer(host, port)
        r = self.server.route
        r("POST", r"/api/devices/([^/]+)/register", self._register)
        r("POST", r"/api/telemetry", self._ingest)
        r("GET", r"/api/telemetry", self._query_telemetry)
        r("GET", r"/api/devices", self._list_devices)
        r("GET", r"/api/devices/([^/]+)", self._get_device)
        r("GET", r"/api/devices/([^/]+)/mappings", self._get_mappings)
        r("PUT", r"/api/devices/([^/]+)/mappings", self._put_mappings)
        r("GET", r"/api/devices/([^/]+)/vvc", self._get_vvc)
        r("PUT", r"/api/devices/([^/]+)/vvc", self._put_vvc)
        r("POST", r"/api/devices/([^/]+)/methods/([^/]+)", self._invoke)
        r("GET", r"/api/invocations/([^/]+)", self._get_invocation)
        r("GET", r"/api/devices/([^/]+)/method-queue", self._method_queue)
        r("POST", r"/api/devices/([^/]+)/method-result", self._method_result)
        r("GET", r"/api/stream/telemetry", self._stream)

    @property
    def base_url(self) -> str:
        return self.server.base_url

    def start(self) -> "CloudHttpApi":
        self.server.start()
        return self

    def stop(self) -> None:
        self.server.stop()

    def __enter__(self) -> "CloudHttpApi":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    # -- auth helpers

    def _principal(self, req: Request) -> str:
        principal = self.twin.authenticate(req.token)
        if principal is None:
            raise HttpError(401, "missing or invalid bearer token")
        return principal

    def _require_operator(self, req: Request) -> None:
        if self._principal(req) != "operator":
            raise HttpError(401, "operator token required")

    def _require_gateway(self, req: Request, gateway_id: str) -> None:
        principal = self._principal(req)
        if principal not in ("operator", gateway_id):
            raise HttpError(401, f"token does not grant access to gateway {gateway_id!r}")

    # -- routes

    @_cloud_errors
    def _register(self, req: Request):
        gateway_id = req.params[0]
        self._require_gateway(req, gateway_id)
        body = req.json()
        heartbeat = self.twin.authenticate(req.token) == gateway_id
        device = self.twin.register_device(
            gateway_id,
            body.get("device_type", ""),
            body.get("reported") or {},
            heartbeat=heartbeat,
        )
        return 200, device

    @_cloud_errors
    def _ingest(self, req: Request):
        body = req.json()
        gateway_id = body.get("gateway_id")
        if not gateway_id:
            raise HttpError(400, "gateway_id missing from telemetry batch")
        self._require_gateway(req, gateway_id)
        stored = self.twin.ingest_telemetry(gateway_id, body.get("readings", []))
        return 200, {"stored": stored}

    @_cloud_errors
    def _query_telemetry(self, req: Request):
        self._require_operator(req)
        q = req.query

        def _num(key, cast, default=None):
            if key not in q:
                return default
            try:
                return cast(q[key])
            except ValueError:
                raise HttpError(400, f"query parameter {key!r} is not a number") from None

        records = self.twin.query_telemetry(
            gateway_id=q.get("gateway_id"),
            register=_num("register", int),
            t_from=_num("from", float),
            t_to=_num("to", float),
            limit=_num("limit", int, 100),
            offset=_num("offset", int, 0),
        )
        return 200, {"records": records}

    @_cloud_errors
    def _list_devices(self, req: Request):
        self._require_operator(req)
        return 200, {"devices": self.twin.list_devices()}

    @_cloud_errors
    def _get_device(self, req: Request):
        gateway_id = req.params[0]
        self._require_gateway(req, gateway_id)
        return 200, self.twin.get_device(gateway_id)

    @_cloud_errors
    def _get_mappings(self, req: Request):
        gateway_id = req.params[0]
        self._require_gateway(req, gateway_id)
        return 200, self.twin.get_mappings(gateway_id)

    @_cloud_errors
    def _put_mappings(self, req: Request):
        gateway_id = req.params[0]
        self._require_operator(req)
        return 200, self.twin.set_desired_mappings(gateway_id, req.json())

    @_cloud_errors
    def _get_vvc(self, req: Request):
        gateway_id = req.params[0]
        self._require_gateway(req, gateway_id)
        return 200, self.twin.get_vvc(gateway_id)

    @_cloud_errors
    def _put_vvc(self, req: Request):
        gateway_id = req.params[0]
        self._require_operator(req)
        return 200, self.twin.set_desired_vvc(gateway_id, req.json())

    @_cloud_errors
    def _invoke(self, req: Request):
        gateway_id, method = req.params
        self._require_operator(req)
        wait_s = float(req.query.get("wait", 30.0))
        invocation = self.twin.invoke_method(gateway_id, method, req.json(), wait_s=wait_s)
        return 200, invocation

    @_cloud_errors
    def _get_invocation(self, req: Request):
        self._require_operator(req)
        return 200, self.twin.get_invocation(req.params[0])

    @_cloud_errors
    def _method_queue(self, req: Request):
        gateway_id = req.params[0]
        self._require_gateway(req, gateway_id)
        wait_s = min(float(req.query.get("wait", LONG_POLL_HOLD_S)), LONG_POLL_HOLD_S)
        return 200, {"invocations": self.twin.poll_method_queue(gateway_id, wait_s)}

    @_cloud_errors
    def _method_result(self, req: Request):
        gateway_id = req.params[0]
        self._require_gateway(req, gateway_id)
        body = req.json()
        request_id = body.get("request_id")
        if not request_id:
            raise HttpError(400, "request_id missing")
        invocation = self.twin.post_method_result(gateway_id, request_id, body.get("response") or {})
        return 200, invocation

    @_cloud_errors
    def _stream(self, req: Request):
        self._principal(req)  # any authenticated principal may listen
        q = self.twin.subscribe()
        req.start_stream()
        try:
            while True:
                try:
                    record = q.get(timeout=15.0)
                except queue_mod.Empty:
                    if not req.write_comment():
                        return STREAMED
                    continue
                if not req.write_event(json.dumps(record), event="telemetry"):
                    return STREAMED
        finally:
            self.twin.unsubscribe(q)
