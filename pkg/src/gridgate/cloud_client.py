"""Gateway-side cloud access: HTTP client and an in-process variant.

Both expose the same calls the gateway needs (fetch config, push
telemetry, heartbeat, poll the method queue, report results) and raise
:class:`CloudUnreachable` for transport failures or
:class:`CloudRejected` carrying the status for application-level errors,
so the gateway's retry logic does not care which transport is in play.
"""

from __future__ import annotations

import requests

from .cloud import CloudError, CloudTwin


class CloudUnreachable(ConnectionError):
    """Transport failure: no answer from the cloud at all."""


class CloudRejected(Exception):
    """Cloud answered with an error status."""

    def __init__(self, status: int, message: str):
        super().__init__(f"{status}: {message}")
        self.status = status
        self.message = message


class HttpCloudClient:
    def __init__(self, base_url: str, token: str, gateway_id: str, timeout: float = 10.0):
        self.base_url = base_url.rstrip("/")
        self.gateway_id = gateway_id
        self.timeout = timeout
        self._session = requests.Session()
        self._session.headers["Authorization"] = f"Bearer {token}"

    def _call(self, method: str, path: str, body: dict | None = None, timeout: float | None = None):
        try:
            resp = self._session.request(
                method,
                f"{self.base_url}{path}",
                json=body,
                timeout=timeout or self.timeout,
            )
        except requests.RequestException as exc:
            raise CloudUnreachable(f"{method} {path}: {exc}") from exc
        if resp.status_code >= 400:
            try:
                message = resp.json().get("error", resp.text)
            except ValueError:
                message = resp.text
            raise CloudRejected(resp.status_code, message)
        return resp.json()

    def fetch_mappings(self) -> dict:
        return self._call("GET", f"/api/devices/{self.gateway_id}/mappings")

    def fetch_vvc(self) -> dict:
        return self._call("GET", f"/api/devices/{self.gateway_id}/vvc")

    def register(self, device_type: str, reported: dict) -> dict:
        return self._call(
            "POST",
            f"/api/devices/{self.gateway_id}/register",
            {"device_type": device_type, "reported": reported},
        )

    def post_telemetry(self, readings: list[dict]) -> int:
        out = self._call(
            "POST", "/api/telemetry", {"gateway_id": self.gateway_id, "readings": readings}
        )
        return out.get("stored", 0)

    def poll_methods(self, wait_s: float) -> list[dict]:
        out = self._call(
            "GET",
            f"/api/devices/{self.gateway_id}/method-queue?wait={wait_s}",
            timeout=wait_s + self.timeout,
        )
        return out.get("invocations", [])

    def invoke(self, gateway_id: str, method: str, payload: dict, wait_s: float = 30.0) -> dict:
        """Operator-side method invocation; blocks up to ``wait_s``."""
        return self._call(
            "POST",
            f"/api/devices/{gateway_id}/methods/{method}?wait={wait_s}",
            payload,
            timeout=wait_s + self.timeout,
        )

    def post_method_result(self, request_id: str, response: dict) -> None:
        self._call(
            "POST",
            f"/api/devices/{self.gateway_id}/method-result",
            {"request_id": request_id, "response": response},
        )


class LocalCloudClient:
    """Direct calls into a CloudTwin living in the same process."""

    def __init__(self, twin: CloudTwin, token: str, gateway_id: str):
        self.twin = twin
        self.token = token
        self.gateway_id = gateway_id

    def _guard(self):
        principal = self.twin.authenticate(self.token)
        if principal not in ("operator", self.gateway_id):
            raise CloudRejected(401, "missing or invalid bearer token")

    def _wrap(self, fn, *args, **kwargs):
        self._guard()
        try:
            return fn(*args, **kwargs)
        except CloudError as exc:
            raise CloudRejected(exc.status, exc.message) from exc

    def fetch_mappings(self) -> dict:
        return self._wrap(self.twin.get_mappings, self.gateway_id)

    def fetch_vvc(self) -> dict:
        return self._wrap(self.twin.get_vvc, self.gateway_id)

    def register(self, device_type: str, reported: dict) -> dict:
        return self._wrap(
            self.twin.register_device, self.gateway_id, device_type, reported, heartbeat=True
        )

    def post_telemetry(self, readings: list[dict]) -> int:
        return self._wrap(self.twin.ingest_telemetry, self.gateway_id, readings)

    def poll_methods(self, wait_s: float) -> list[dict]:
        return self._wrap(self.twin.poll_method_queue, self.gateway_id, wait_s)

    def post_method_result(self, request_id: str, response: dict) -> None:
        self._wrap(self.twin.post_method_result, self.gateway_id, request_id, response)
