"""Edge gateway: cloud-invocable device methods, telemetry and VVC loops.

The gateway owns three concurrent activities sharing one Modbus client,
the mapping cache and the active curve slot: method handling (long-poll
from the cloud, or an optional local HTTP listener), the telemetry loop
and the Volt-VAR control loop. All shared state goes through the atomic
operations of MappingCache / ActiveCurveSlot, and the Modbus client
serializes internally, so the loops can also be driven single-threaded
on a virtual clock.
"""

from __future__ import annotations

import json
import logging
import os
import socket
import threading
import uuid
from collections import deque
from dataclasses import dataclass, fields as dc_fields
from importlib import resources

from . import __version__
from .clock import WallClock
from .cloud_client import CloudRejected, CloudUnreachable
from .httpd import ApiServer, HttpError, Request
from .inverter import (
    REG_ACTIVE_LIMIT,
    REG_REACTIVE_SETPOINT,
    REG_VOLTAGE,
    encode_active_limit,
    encode_reactive_setpoint,
)
from .mapping import (
    BASE_DEVICE_TYPE,
    BASE_MAPPING_VERSION,
    FieldMapping,
    MappingCache,
    MappingValidationError,
    base_mapping,
    build_reading,
    mapping_set_from_json,
)
from .modbus_io import ModbusExceptionResponse, ModbusIOError
from .vvc import ActiveCurveSlot, CurveValidationError, parse_curve, setpoint_percent

log = logging.getLogger(__name__)

METHOD_NAMES = ("getTelemetry", "curtailPower", "updateGatewayCache")
TELEMETRY_BUFFER_LIMIT = 10000
SETPOINT_DEADBAND_PCT = 0.01
LONG_POLL_WAIT_S = 25.0

ENV_PREFIX = "GRIDGATE_"


@dataclass
class GatewayConfig:
    gateway_id: str
    device_type: str = BASE_DEVICE_TYPE
    inverter_endpoint: str = "127.0.0.1:1502"
    cloud_base_url: str = "http://127.0.0.1:8440"
    auth_token: str = ""
    poll_interval: float = 5.0
    control_interval: float = 1.0
    listen_address: str = ""
    rated_va: float = 5000.0
    vvc_limits_mode: str = "percent"
    voltage_register: int = REG_VOLTAGE
    active_limit_register: int = REG_ACTIVE_LIMIT
    reactive_setpoint_register: int = REG_REACTIVE_SETPOINT
    boot_retries: int = 5
    backoff_base: float = 1.0
    backoff_cap: float = 60.0

    def validate(self) -> None:
        if not self.gateway_id:
            raise ValueError("gateway_id must be non-empty")
        if self.poll_interval <= 0 or self.control_interval <= 0:
            raise ValueError("intervals must be positive")
        if self.vvc_limits_mode not in ("percent", "absolute"):
            raise ValueError("vvc_limits_mode must be percent or absolute")


def load_config(path: str | None = None, env: dict | None = None) -> GatewayConfig:
    """Config file (JSON, GatewayConfig field names) + GRIDGATE_* overrides."""
    env = os.environ if env is None else env
    values: dict = {}
    if path:
        with open(path, encoding="utf-8") as fh:
            values.update(json.load(fh))
    for f in dc_fields(GatewayConfig):
        key = ENV_PREFIX + f.name.upper()
        if key in env:
            raw = env[key]
            if f.type in ("float", float):
                values[f.name] = float(raw)
            elif f.type in ("int", int):
                values[f.name] = int(raw)
            else:
                values[f.name] = raw
    config = GatewayConfig(**values)
    config.validate()
    return config


def parse_endpoint(endpoint: str) -> tuple[str, int]:
    host, _, port = endpoint.rpartition(":")
    return host or "127.0.0.1", int(port)


@dataclass(frozen=True)
class DeviceMethodResponse:
    request_id: str
    status: int  # 200 ok, 400 bad payload, 401 unauthorized, 502 downstream failure
    body: dict

    def as_dict(self) -> dict:
        return {"request_id": self.request_id, "status": self.status, "body": self.body}


@dataclass(frozen=True)
class ControlSample:
    t: float
    voltage: float
    setpoint_pct: float
    curve_id: str
    wrote: bool


def default_curve():
    """Built-in fallback curve used when the cloud has nothing for us."""
    raw = resources.files("gridgate.data").joinpath("vvc1.json").read_text()
    return parse_curve(raw, curve_id="factory-default")


class Gateway:
    def __init__(self, config: GatewayConfig, modbus_client, cloud_client, clock=None):
        config.validate()
        self.config = config
        self.modbus = modbus_client
        self.cloud = cloud_client
        self.clock = clock or WallClock()
        self.mapping_cache = MappingCache()
        self.curve_slot = ActiveCurveSlot(default_curve())
        self.degraded = False
        self.provisioned = False
        self._telemetry_buffer: deque[dict] = deque(maxlen=TELEMETRY_BUFFER_LIMIT)
        self._last_written_pct: float | None = None
        self.last_control: ControlSample | None = None
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._local_api: ApiServer | None = None

    # ------------------------------------------------------------------
    # Provisioning

    def _reported(self) -> dict:
        try:
            ip = socket.gethostbyname(socket.gethostname())
        except OSError:
            ip = "127.0.0.1"
        return {
            "ip": ip,
            "software_version": __version__,
            "mapping_version": self.mapping_cache.version,
            "active_curve_id": self.curve_slot.current.curve_id,
            "degraded": self.degraded,
            "heartbeat_interval": self.config.poll_interval,
        }

    def _install_builtin_mapping(self) -> None:
        if self.mapping_cache.version == 0:
            self.mapping_cache.install(BASE_DEVICE_TYPE, base_mapping(), BASE_MAPPING_VERSION)

    def _fetch_and_apply_config(self) -> None:
        """Pull mapping set and curve; a 404 means run on built-ins."""
        try:
            doc = self.cloud.fetch_mappings()
            device_type, version, mappings = mapping_set_from_json(doc)
            if device_type != self.config.device_type:
                raise MappingValidationError(
                    f"mapping set is for {device_type!r}, expected {self.config.device_type!r}"
                )
            self.mapping_cache.install(device_type, mappings, version)
        except CloudRejected as exc:
            if exc.status != 404:
                raise
            self._install_builtin_mapping()
        try:
            curve_doc = self.cloud.fetch_vvc()
            curve = parse_curve(curve_doc)
            self._activate_curve(curve)
        except CloudRejected as exc:
            if exc.status != 404:
                raise

    def boot_provision(self) -> bool:
        """Zero-touch boot: register, pull config, report in.

        Retries with exponential backoff while the cloud is unreachable or
        rejects us; after ``boot_retries`` attempts the gateway starts on
        the built-in base mapping and reports itself degraded (provisioning
        keeps being retried from the heartbeat path).
        """
        delay = self.config.backoff_base
        for attempt in range(max(self.config.boot_retries, 1)):
            try:
                self.cloud.register(self.config.device_type, self._reported())
                try:
                    self._fetch_and_apply_config()
                    self.degraded = False
                except (MappingValidationError, CurveValidationError) as exc:
                    log.warning("invalid provisioning artifact: %s", exc)
                    self._install_builtin_mapping()
                    self.degraded = True
                self.provisioned = True
                self.heartbeat()
                return True
            except (CloudUnreachable, CloudRejected) as exc:
                log.warning("provisioning attempt %d failed: %s", attempt + 1, exc)
                if attempt + 1 < max(self.config.boot_retries, 1):
                    self.clock.sleep(min(delay, self.config.backoff_cap))
                    delay *= 2
        self._install_builtin_mapping()
        self.degraded = True
        return False

    def heartbeat(self) -> None:
        """Refresh the cloud device record; retries provisioning if degraded."""
        if self.degraded and not self.provisioned:
            try:
                self.cloud.register(self.config.device_type, self._reported())
                self._fetch_and_apply_config()
                self.provisioned = True
                self.degraded = False
            except (CloudUnreachable, CloudRejected, MappingValidationError, CurveValidationError):
                return
        try:
            self.cloud.register(self.config.device_type, self._reported())
        except (CloudUnreachable, CloudRejected) as exc:
            log.debug("heartbeat failed: %s", exc)

    # ------------------------------------------------------------------
    # Device methods

    def handle_method(self, method: str, payload: dict, request_id: str | None = None) -> DeviceMethodResponse:
        request_id = request_id or uuid.uuid4().hex
        payload = payload or {}
        if method == "getTelemetry":
            return self._method_get_telemetry(request_id, payload)
        if method == "curtailPower":
            return self._method_curtail_power(request_id, payload)
        if method == "updateGatewayCache":
            return self._method_update_cache(request_id, payload)
        return DeviceMethodResponse(request_id, 400, {"error": f"unknown method {method!r}"})

    def _method_get_telemetry(self, request_id: str, payload: dict) -> DeviceMethodResponse:
        registers = payload.get("registers")
        if not isinstance(registers, list) or not registers or not all(
            isinstance(r, int) and not isinstance(r, bool) for r in registers
        ):
            return DeviceMethodResponse(
                request_id, 400, {"error": "payload must carry a non-empty integer list 'registers'"}
            )
        mappings = []
        for register in registers:
            m = self.mapping_cache.lookup(self.config.device_type, register)
            if m is None:
                return DeviceMethodResponse(
                    request_id,
                    400,
                    {"error": f"register {register} is not mapped for {self.config.device_type!r}",
                     "register": register},
                )
            mappings.append(m)
        docs = []
        now = self.clock.now()
        for m in mappings:
            try:
                raw = self.modbus.read_registers(m.register, 1)[0]
            except (ModbusIOError, ModbusExceptionResponse) as exc:
                return DeviceMethodResponse(
                    request_id, 502, {"error": f"modbus read of {m.register} failed: {exc}"}
                )
            docs.append(build_reading(m, raw, now))
        batch = [d.as_dict() for d in docs]
        self._forward_telemetry(batch)
        return DeviceMethodResponse(request_id, 200, {"readings": batch})

    def _method_curtail_power(self, request_id: str, payload: dict) -> DeviceMethodResponse:
        if "percent" in payload:
            percent = payload["percent"]
            if not isinstance(percent, (int, float)) or isinstance(percent, bool) \
                    or not 0 < percent <= 100:
                return DeviceMethodResponse(
                    request_id, 400, {"error": f"percent must be in (0, 100], got {percent!r}"}
                )
            register, value = self.config.active_limit_register, encode_active_limit(percent)
        elif "register" in payload and "value" in payload:
            register, value = payload["register"], payload["value"]
            if not isinstance(register, int) or not isinstance(value, int):
                return DeviceMethodResponse(
                    request_id, 400, {"error": "register and value must be integers"}
                )
        else:
            return DeviceMethodResponse(
                request_id, 400, {"error": "payload must carry 'percent' or 'register'+'value'"}
            )
        try:
            self.modbus.write_register(register, value)
        except ModbusExceptionResponse as exc:
            return DeviceMethodResponse(
                request_id, 502, {"error": str(exc), "exception": exc.code.name, "register": register}
            )
        except ModbusIOError as exc:
            return DeviceMethodResponse(request_id, 502, {"error": str(exc), "register": register})
        return DeviceMethodResponse(request_id, 200, {"register": register, "value": value})

    def _method_update_cache(self, request_id: str, payload: dict) -> DeviceMethodResponse:
        kind = payload.get("kind")
        if kind == "mapping":
            device_type = payload.get("device_type")
            raw = payload.get("mappings")
            if not device_type or not isinstance(raw, dict):
                return DeviceMethodResponse(
                    request_id, 400, {"error": "mapping update needs 'device_type' and 'mappings'"}
                )
            try:
                mappings = {int(k): FieldMapping.from_json(int(k), v) for k, v in raw.items()}
                version = self.mapping_cache.update(device_type, mappings)
            except (MappingValidationError, ValueError) as exc:
                return DeviceMethodResponse(request_id, 400, {"error": str(exc)})
            return DeviceMethodResponse(request_id, 200, {"applied_version": version})
        if kind == "vvc":
            try:
                curve = parse_curve(payload.get("curve") or {})
            except CurveValidationError as exc:
                return DeviceMethodResponse(request_id, 400, {"error": str(exc), "field": exc.field})
            try:
                previous = self._activate_curve(curve)
            except (ModbusIOError, ModbusExceptionResponse) as exc:
                return DeviceMethodResponse(
                    request_id, 502, {"error": f"curtailment write for curve failed: {exc}"}
                )
            return DeviceMethodResponse(
                request_id, 200, {"curve_id": curve.curve_id, "previous_curve_id": previous}
            )
        return DeviceMethodResponse(
            request_id, 400, {"error": f"kind must be 'mapping' or 'vvc', got {kind!r}"}
        )

    def _activate_curve(self, curve) -> str:
        """Write the curve's curtailment limit, then swap it in."""
        self.modbus.write_register(
            self.config.active_limit_register, encode_active_limit(curve.active_power_limit)
        )
        return self.curve_slot.swap(curve, self.clock.now())

    # ------------------------------------------------------------------
    # Loops (single-cycle bodies; run_forever wraps them in threads)

    def poll_and_handle_methods(self, wait_s: float = 0.0) -> int:
        """Pull pending invocations, execute, report results back."""
        try:
            invocations = self.cloud.poll_methods(wait_s)
        except (CloudUnreachable, CloudRejected) as exc:
            log.debug("method poll failed: %s", exc)
            return 0
        handled = 0
        for invocation in invocations:
            response = self.handle_method(
                invocation.get("method", ""),
                invocation.get("payload") or {},
                invocation.get("request_id"),
            )
            try:
                self.cloud.post_method_result(response.request_id, response.as_dict())
            except (CloudUnreachable, CloudRejected) as exc:
                log.warning("posting result for %s failed: %s", response.request_id, exc)
            handled += 1
        return handled

    def telemetry_cycle(self) -> list[dict]:
        """Read every mapped register, buffer the batch, flush to cloud."""
        mappings = self.mapping_cache.registers(self.config.device_type)
        now = self.clock.now()
        batch: list[dict] = []
        for register, m in mappings.items():
            try:
                raw = self.modbus.read_registers(register, 1)[0]
            except (ModbusIOError, ModbusExceptionResponse) as exc:
                log.warning("telemetry read of %d failed: %s", register, exc)
                continue
            batch.append(build_reading(m, raw, now).as_dict())
        self._forward_telemetry(batch)
        return batch

    def _forward_telemetry(self, batch: list[dict]) -> None:
        self._telemetry_buffer.extend(batch)  # bounded, drop-oldest
        if not self._telemetry_buffer:
            return
        pending = list(self._telemetry_buffer)
        try:
            self.cloud.post_telemetry(pending)
        except (CloudUnreachable, CloudRejected) as exc:
            log.debug("telemetry push failed, %d records buffered: %s", len(pending), exc)
            return
        self._telemetry_buffer.clear()

    def control_cycle(self) -> ControlSample | None:
        """One Volt-VAR step: read voltage, compute setpoint, write if moved."""
        curve = self.curve_slot.current
        try:
            raw = self.modbus.read_registers(self.config.voltage_register, 1)[0]
        except (ModbusIOError, ModbusExceptionResponse) as exc:
            log.warning("voltage read failed: %s", exc)
            return None
        voltage = raw / 10.0
        pct = setpoint_percent(curve, voltage, self.config.rated_va, self.config.vvc_limits_mode)
        wrote = False
        if self._last_written_pct is None or abs(pct - self._last_written_pct) > SETPOINT_DEADBAND_PCT:
            try:
                self.modbus.write_register(
                    self.config.reactive_setpoint_register, encode_reactive_setpoint(pct)
                )
                self._last_written_pct = pct
                wrote = True
            except (ModbusIOError, ModbusExceptionResponse) as exc:
                log.warning("setpoint write failed: %s", exc)
                return None
        sample = ControlSample(self.clock.now(), voltage, pct, curve.curve_id, wrote)
        self.last_control = sample
        return sample

    # ------------------------------------------------------------------
    # Wall-clock operation

    def _loop(self, body, interval: float) -> None:
        while not self._stop.is_set():
            try:
                body()
            except Exception:  # noqa: BLE001 - loops survive downstream faults
                log.exception("loop iteration failed")
            self._stop.wait(interval)

    def _method_loop(self) -> None:
        while not self._stop.is_set():
            try:
                self.poll_and_handle_methods(wait_s=LONG_POLL_WAIT_S)
            except Exception:  # noqa: BLE001
                log.exception("method loop iteration failed")
                self._stop.wait(1.0)

    def start(self) -> "Gateway":
        """Boot and run all loops on real time until stop()."""
        self.boot_provision()
        self._stop.clear()
        loops = [
            (lambda: (self.telemetry_cycle(), self.heartbeat()), self.config.poll_interval),
            (self.control_cycle, self.config.control_interval),
        ]
        for body, interval in loops:
            t = threading.Thread(target=self._loop, args=(body, interval), daemon=True)
            t.start()
            self._threads.append(t)
        t = threading.Thread(target=self._method_loop, daemon=True)
        t.start()
        self._threads.append(t)
        if self.config.listen_address:
            self._start_local_api()
        return self

    def stop(self) -> None:
        self._stop.set()
        for t in self._threads:
            t.join(timeout=5)
        self._threads.clear()
        if self._local_api is not None:
            self._local_api.stop()
            self._local_api = None

    # ------------------------------------------------------------------
    # Optional local method listener (LAN tests)

    def _start_local_api(self) -> None:
        host, port = parse_endpoint(self.config.listen_address)
        api = ApiServer(host, port)

        def invoke(req: Request):
            if req.token != self.config.auth_token:
                raise HttpError(401, "missing or invalid bearer token")
            response = self.handle_method(req.params[0], req.json())
            return response.status, response.as_dict()

        api.route("POST", r"/methods/([^/]+)", invoke)
        api.start()
        self._local_api = api

    @property
    def local_api_address(self) -> tuple[str, int] | None:
        return self._local_api.address if self._local_api else None
