"""Cloud twin: device registry, telemetry store, config egress, methods.

Single-process stand-in for a hosted device-management platform. State
lives in an embedded sqlite database (file or in-memory); the method
queue and completion events are in-memory per gateway. All public
operations raise :class:`CloudError` with an HTTP-ish status code, which
the REST layer maps straight onto responses.
"""

from __future__ import annotations

import json
import queue
import sqlite3
import threading
import uuid
from dataclasses import dataclass, field

from .clock import WallClock
from .mapping import (
    MappingValidationError,
    ReadingValidationError,
    mapping_set_from_json,
    parse_readings,
)
from .vvc import CurveValidationError, parse_curve

OFFLINE_AFTER_MISSED_HEARTBEATS = 3

_LEGAL_TRANSITIONS = {
    ("queued", "delivered"),
    ("delivered", "completed"),
    ("delivered", "failed"),
}

_SCHEMA = """
CREATE TABLE IF NOT EXISTS devices (
    gateway_id TEXT PRIMARY KEY,
    device_type TEXT NOT NULL,
    reported TEXT NOT NULL DEFAULT '{}',
    desired TEXT NOT NULL DEFAULT '{}',
    last_seen REAL,
    heartbeat_interval REAL NOT NULL,
    created_at REAL NOT NULL
);
CREATE TABLE IF NOT EXISTS telemetry (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    gateway_id TEXT NOT NULL,
    register INTEGER NOT NULL,
    period_start INTEGER NOT NULL,
    document TEXT NOT NULL,
    ingested_at REAL NOT NULL,
    UNIQUE (gateway_id, register, period_start)
);
CREATE TABLE IF NOT EXISTS mappings (
    device_type TEXT PRIMARY KEY,
    version INTEGER NOT NULL,
    document TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS curves (
    curve_id TEXT PRIMARY KEY,
    document TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS invocations (
    request_id TEXT PRIMARY KEY,
    gateway_id TEXT NOT NULL,
    method TEXT NOT NULL,
    payload TEXT NOT NULL,
    state TEXT NOT NULL,
    response TEXT,
    created_at REAL NOT NULL,
    updated_at REAL NOT NULL
);
"""


class CloudError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


@dataclass
class AuthTokens:
    """Static bearer tokens: one per gateway plus one operator token."""

    operator: str
    gateways: dict[str, str] = field(default_factory=dict)

    def authenticate(self, token: str | None) -> str | None:
        """Returns "operator", a gateway id, or None for unknown tokens."""
        if not token:
            return None
        if token == self.operator:
            return "operator"
        for gateway_id, expected in self.gateways.items():
            if token == expected:
                return gateway_id
        return None


class CloudTwin:
    def __init__(
        self,
        tokens: AuthTokens,
        clock=None,
        db_path: str = ":memory:",
        default_heartbeat_interval: float = 5.0,
    ):
        self.tokens = tokens
        self.clock = clock or WallClock()
        self.default_heartbeat_interval = default_heartbeat_interval
        self._db = sqlite3.connect(db_path, check_same_thread=False)
        self._db.row_factory = sqlite3.Row
        self._db.executescript(_SCHEMA)
        self._db_lock = threading.RLock()
        self._queue_cond = threading.Condition()
        self._pending: dict[str, list[str]] = {}  # gateway_id -> queued request_ids
        self._completion: dict[str, threading.Event] = {}
        self._subscribers: list[queue.Queue] = []
        self._sub_lock = threading.Lock()

    # -- auth

    def authenticate(self, token: str | None) -> str | None:
        return self.tokens.authenticate(token)

    # -- device registry

    def register_device(
        self,
        gateway_id: str,
        device_type: str,
        reported: dict | None = None,
        heartbeat: bool = True,
    ) -> dict:
        """Create or refresh a device record.

        A gateway's own call is a heartbeat (last_seen moves); an operator
        pre-registration (heartbeat=False) leaves the device provisioning.
        """
        if not gateway_id:
            raise CloudError(400, "gateway_id must be non-empty")
        now = self.clock.now()
        reported = dict(reported or {})
        interval = float(reported.get("heartbeat_interval") or self.default_heartbeat_interval)
        with self._db_lock, self._db:
            row = self._db.execute(
                "SELECT * FROM devices WHERE gateway_id = ?", (gateway_id,)
            ).fetchone()
            if row is None:
                self._db.execute(
                    "INSERT INTO devices (gateway_id, device_type, reported, desired,"
                    " last_seen, heartbeat_interval, created_at) VALUES (?, ?, ?, '{}', ?, ?, ?)",
                    (
                        gateway_id,
                        device_type,
                        json.dumps(reported),
                        now if heartbeat else None,
                        interval,
                        now,
                    ),
                )
            else:
                merged = json.loads(row["reported"])
                merged.update(reported)
                self._db.execute(
                    "UPDATE devices SET device_type = ?, reported = ?, heartbeat_interval = ?,"
                    " last_seen = COALESCE(?, last_seen) WHERE gateway_id = ?",
                    (
                        device_type or row["device_type"],
                        json.dumps(merged),
                        interval,
                        now if heartbeat else None,
                        gateway_id,
                    ),
                )
        return self.get_device(gateway_id)

    def _device_row(self, gateway_id: str) -> sqlite3.Row:
        with self._db_lock:
            row = self._db.execute(
                "SELECT * FROM devices WHERE gateway_id = ?", (gateway_id,)
            ).fetchone()
        if row is None:
            raise CloudError(404, f"unknown gateway {gateway_id!r}")
        return row

    def _status(self, row: sqlite3.Row) -> str:
        if row["last_seen"] is None:
            return "provisioning"
        age = self.clock.now() - row["last_seen"]
        if age > OFFLINE_AFTER_MISSED_HEARTBEATS * row["heartbeat_interval"]:
            return "offline"
        if json.loads(row["reported"]).get("degraded"):
            return "degraded"
        return "online"

    def _device_view(self, row: sqlite3.Row) -> dict:
        return {
            "gateway_id": row["gateway_id"],
            "device_type": row["device_type"],
            "reported": json.loads(row["reported"]),
            "desired": json.loads(row["desired"]),
            "last_seen": row["last_seen"],
            "heartbeat_interval": row["heartbeat_interval"],
            "status": self._status(row),
        }

    def get_device(self, gateway_id: str) -> dict:
        return self._device_view(self._device_row(gateway_id))

    def list_devices(self) -> list[dict]:
        with self._db_lock:
            rows = self._db.execute("SELECT * FROM devices ORDER BY gateway_id").fetchall()
        return [self._device_view(r) for r in rows]

    def _set_desired(self, gateway_id: str, **updates) -> None:
        with self._db_lock, self._db:
            row = self._device_row(gateway_id)
            desired = json.loads(row["desired"])
            desired.update(updates)
            self._db.execute(
                "UPDATE devices SET desired = ? WHERE gateway_id = ?",
                (json.dumps(desired), gateway_id),
            )

    # -- mappings / curves egress

    def set_desired_mappings(self, gateway_id: str, doc: dict) -> dict:
        device = self._device_row(gateway_id)
        try:
            device_type, version, _ = mapping_set_from_json(doc)
        except MappingValidationError as exc:
            raise CloudError(400, str(exc)) from exc
        if device_type != device["device_type"]:
            raise CloudError(
                400,
                f"mapping set is for {device_type!r}, device is {device['device_type']!r}",
            )
        with self._db_lock, self._db:
            self._db.execute(
                "INSERT INTO mappings (device_type, version, document) VALUES (?, ?, ?)"
                " ON CONFLICT(device_type) DO UPDATE SET version = ?, document = ?",
                (device_type, version, json.dumps(doc), version, json.dumps(doc)),
            )
        self._set_desired(gateway_id, mapping_version=version)
        return {"device_type": device_type, "version": version}

    def get_mappings(self, gateway_id: str) -> dict:
        device = self._device_row(gateway_id)
        with self._db_lock:
            row = self._db.execute(
                "SELECT document FROM mappings WHERE device_type = ?",
                (device["device_type"],),
            ).fetchone()
        if row is None:
            raise CloudError(404, f"no mapping set for device type {device['device_type']!r}")
        return json.loads(row["document"])

    def set_desired_vvc(self, gateway_id: str, curve_doc: dict) -> dict:
        self._device_row(gateway_id)
        try:
            curve = parse_curve(curve_doc)
        except CurveValidationError as exc:
            raise CloudError(400, str(exc)) from exc
        with self._db_lock, self._db:
            self._db.execute(
                "INSERT INTO curves (curve_id, document) VALUES (?, ?)"
                " ON CONFLICT(curve_id) DO UPDATE SET document = ?",
                (curve.curve_id, curve.to_json(), curve.to_json()),
            )
        self._set_desired(gateway_id, curve_id=curve.curve_id)
        return {"curve_id": curve.curve_id}

    def get_vvc(self, gateway_id: str) -> dict:
        device = self._device_row(gateway_id)
        curve_id = json.loads(device["desired"]).get("curve_id")
        if not curve_id:
            raise CloudError(404, f"no curve configured for gateway {gateway_id!r}")
        with self._db_lock:
            row = self._db.execute(
                "SELECT document FROM curves WHERE curve_id = ?", (curve_id,)
            ).fetchone()
        if row is None:
            raise CloudError(404, f"curve {curve_id!r} not found")
        return json.loads(row["document"])

    # -- telemetry

    def ingest_telemetry(self, gateway_id: str, payload) -> int:
        """Store a batch atomically; duplicate readings are stored once."""
        self._device_row(gateway_id)
        try:
            docs = parse_readings(payload)
        except ReadingValidationError as exc:
            raise CloudError(400, str(exc)) from exc
        now = self.clock.now()
        stored: list[dict] = []
        with self._db_lock, self._db:
            count = 0
            for doc in docs:
                cur = self._db.execute(
                    "INSERT OR IGNORE INTO telemetry"
                    " (gateway_id, register, period_start, document, ingested_at)"
                    " VALUES (?, ?, ?, ?, ?)",
                    (gateway_id, doc.register, doc.period_start, json.dumps(doc.as_dict()), now),
                )
                if cur.rowcount:
                    count += 1
                    stored.append(
                        {
                            "gateway_id": gateway_id,
                            "register": doc.register,
                            "ingested_at": now,
                            "document": doc.as_dict(),
                        }
                    )
        for record in stored:
            self._publish(record)
        return count

    def query_telemetry(
        self,
        gateway_id: str | None = None,
        register: int | None = None,
        t_from: float | None = None,
        t_to: float | None = None,
        limit: int = 100,
        offset: int = 0,
    ) -> list[dict]:
        """Time-ordered page of stored readings, newest last."""
        if t_from is not None and t_to is not None and t_from > t_to:
            raise CloudError(400, f"bad time range: from {t_from} > to {t_to}")
        clauses, args = [], []
        if gateway_id is not None:
            clauses.append("gateway_id = ?")
            args.append(gateway_id)
        if register is not None:
            clauses.append("register = ?")
            args.append(register)
        if t_from is not None:
            clauses.append("period_start >= ?")
            args.append(t_from)
        if t_to is not None:
            clauses.append("period_start <= ?")
            args.append(t_to)
        where = f"WHERE {' AND '.join(clauses)}" if clauses else ""
        with self._db_lock:
            rows = self._db.execute(
                f"SELECT * FROM telemetry {where} ORDER BY period_start, id LIMIT ? OFFSET ?",
                (*args, limit, offset),
            ).fetchall()
        return [
            {
                "gateway_id": r["gateway_id"],
                "register": r["register"],
                "ingested_at": r["ingested_at"],
                "document": json.loads(r["document"]),
            }
            for r in rows
        ]

    # -- live stream

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue(maxsize=1000)
        with self._sub_lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._sub_lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def _publish(self, record: dict) -> None:
        with self._sub_lock:
            subscribers = list(self._subscribers)
        for q in subscribers:
            try:
                q.put_nowait(record)
            except queue.Full:
                pass  # slow consumer loses old events, the store keeps them

    # -- device methods

    def invoke_method(
        self,
        gateway_id: str,
        method: str,
        payload: dict | None = None,
        wait_s: float = 30.0,
        request_id: str | None = None,
    ) -> dict:
        """Queue a method for the gateway's poll channel.

        Blocks up to ``wait_s`` for the result; ``wait_s=0`` returns the
        queued invocation immediately for later polling.
        """
        device = self._device_row(gateway_id)
        status = self._status(device)
        if status in ("offline", "provisioning"):
            raise CloudError(409, f"gateway {gateway_id!r} is {status}")
        request_id = request_id or uuid.uuid4().hex
        now = self.clock.now()
        with self._db_lock, self._db:
            self._db.execute(
                "INSERT INTO invocations"
                " (request_id, gateway_id, method, payload, state, created_at, updated_at)"
                " VALUES (?, ?, ?, ?, 'queued', ?, ?)",
                (request_id, gateway_id, method, json.dumps(payload or {}), now, now),
            )
        event = threading.Event()
        self._completion[request_id] = event
        with self._queue_cond:
            self._pending.setdefault(gateway_id, []).append(request_id)
            self._queue_cond.notify_all()
        if wait_s > 0:
            if not event.wait(wait_s):
                self._completion.pop(request_id, None)
                raise CloudError(504, f"gateway did not answer {request_id} within {wait_s}s")
        return self.get_invocation(request_id)

    def poll_method_queue(self, gateway_id: str, wait_s: float = 0.0) -> list[dict]:
        """Hand queued invocations to the gateway, marking them delivered."""
        self._device_row(gateway_id)
        deadline = self.clock.now() + wait_s
        with self._queue_cond:
            while True:
                ids = self._pending.get(gateway_id) or []
                if ids:
                    self._pending[gateway_id] = []
                    break
                remaining = deadline - self.clock.now()
                if remaining <= 0:
                    return []
                self._queue_cond.wait(timeout=min(remaining, 1.0))
        out = []
        for request_id in ids:
            inv = self._transition(request_id, "delivered")
            out.append(
                {"request_id": request_id, "method": inv["method"], "payload": inv["payload"]}
            )
        return out

    def post_method_result(self, gateway_id: str, request_id: str, response: dict) -> dict:
        inv = self.get_invocation(request_id)
        if inv["gateway_id"] != gateway_id:
            raise CloudError(404, f"invocation {request_id} is not for gateway {gateway_id!r}")
        status = response.get("status")
        new_state = "completed" if status == 200 else "failed"
        result = self._transition(request_id, new_state, response)
        event = self._completion.pop(request_id, None)
        if event is not None:
            event.set()
        return result

    def get_invocation(self, request_id: str) -> dict:
        with self._db_lock:
            row = self._db.execute(
                "SELECT * FROM invocations WHERE request_id = ?", (request_id,)
            ).fetchone()
        if row is None:
            raise CloudError(404, f"unknown invocation {request_id!r}")
        return {
            "request_id": row["request_id"],
            "gateway_id": row["gateway_id"],
            "method": row["method"],
            "payload": json.loads(row["payload"]),
            "state": row["state"],
            "response": json.loads(row["response"]) if row["response"] else None,
            "created_at": row["created_at"],
            "updated_at": row["updated_at"],
        }

    def _transition(self, request_id: str, new_state: str, response: dict | None = None) -> dict:
        with self._db_lock, self._db:
            row = self._db.execute(
                "SELECT state FROM invocations WHERE request_id = ?", (request_id,)
            ).fetchone()
            if row is None:
                raise CloudError(404, f"unknown invocation {request_id!r}")
            if (row["state"], new_state) not in _LEGAL_TRANSITIONS:
                raise CloudError(
                    409, f"illegal invocation transition {row['state']} -> {new_state}"
                )
            self._db.execute(
                "UPDATE invocations SET state = ?, response = COALESCE(?, response),"
                " updated_at = ? WHERE request_id = ?",
                (
                    new_state,
                    json.dumps(response) if response is not None else None,
                    self.clock.now(),
                    request_id,
                ),
            )
        return self.get_invocation(request_id)

    def close(self) -> None:
        with self._db_lock:
            self._db.close()
