"""Experiment harness: wire inverter + gateway + cloud, replay a profile.

The default mode steps every component on a shared virtual clock in one
thread, which makes runs deterministic and fast: the demo experiment
(240 simulated seconds with a mid-run curve swap) finishes in well under
a second. Wall-clock mode boots the real servers (Modbus TCP + cloud
REST) and lets the gateway's own threads do the work, for live demos.

Result rows carry the controller's view of voltage (the register value,
quantized to 0.1 V) so each sampled setpoint can be replayed exactly
against the curve that was active at that instant.
"""

from __future__ import annotations

import bisect
import csv
import io
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

from .clock import VirtualClock, WallClock
from .cloud import AuthTokens, CloudTwin
from .cloud_client import HttpCloudClient, LocalCloudClient
from .cloud_http import CloudHttpApi
from .gateway import Gateway, GatewayConfig
from .inverter import InverterNameplate, SimulatedInverter
from .mapping import BASE_DEVICE_TYPE, base_mapping_set
from .modbus_io import InProcessModbusClient, ModbusTcpClient, ModbusTcpServer
from .vvc import VoltVarCurve, parse_curve

CSV_COLUMNS = ("t", "voltage_v", "active_power_w", "reactive_power_var", "setpoint_pct", "curve_id")

GATEWAY_ID = "gw-01"
GATEWAY_TOKEN = "gw-01-token"
OPERATOR_TOKEN = "operator-token"


class HarnessError(RuntimeError):
    """Experiment could not be run to completion."""


# ---------------------------------------------------------------------------
# Scenario profile


@dataclass(frozen=True)
class ScenarioRow:
    t: float
    voltage: float
    available_pv_w: float


class ScenarioProfile:
    """Piecewise-linear voltage / available-PV profile over time."""

    def __init__(self, rows: list[ScenarioRow]):
        if not rows:
            raise HarnessError("scenario must have at least one row")
        for prev, cur in zip(rows, rows[1:]):
            if cur.t <= prev.t:
                raise HarnessError(f"scenario t must be strictly increasing at t={cur.t}")
        for row in rows:
            if not 180.0 <= row.voltage <= 270.0:
                raise HarnessError(f"scenario voltage {row.voltage} outside [180, 270]")
            if row.available_pv_w < 0:
                raise HarnessError("available_pv_w must be non-negative")
        self.rows = rows
        self._ts = [r.t for r in rows]

    @classmethod
    def from_obj(cls, obj) -> "ScenarioProfile":
        if isinstance(obj, str):
            return cls.from_file(obj)
        rows = [
            ScenarioRow(float(r["t"]), float(r["voltage"]), float(r["available_pv_w"]))
            for r in obj
        ]
        return cls(rows)

    @classmethod
    def from_file(cls, path: str) -> "ScenarioProfile":
        p = Path(path)
        if p.suffix == ".json":
            return cls.from_obj(json.loads(p.read_text()))
        with p.open(newline="") as fh:
            return cls.from_obj(list(csv.DictReader(fh)))

    def _interp(self, t: float, attr: str) -> float:
        rows = self.rows
        if t <= rows[0].t:
            return getattr(rows[0], attr)
        if t >= rows[-1].t:
            return getattr(rows[-1], attr)
        i = bisect.bisect_right(self._ts, t)
        lo, hi = rows[i - 1], rows[i]
        frac = (t - lo.t) / (hi.t - lo.t)
        return getattr(lo, attr) + frac * (getattr(hi, attr) - getattr(lo, attr))

    def voltage_at(self, t: float) -> float:
        return self._interp(t, "voltage")

    def pv_at(self, t: float) -> float:
        return self._interp(t, "available_pv_w")


# ---------------------------------------------------------------------------
# Plan


@dataclass
class ExperimentPlan:
    scenario: ScenarioProfile
    initial_curve: VoltVarCurve
    duration: float
    sample_interval: float = 1.0
    control_interval: float = 1.0
    poll_interval: float = 5.0
    q_lag_tau: float = 1.0
    nameplate: InverterNameplate = field(default_factory=InverterNameplate)
    swap_at: float | None = None
    swap_curve: VoltVarCurve | None = None
    start_epoch: float = 0.0

    def validate(self) -> None:
        if self.duration <= 0:
            raise HarnessError("duration must be positive")
        for name in ("sample_interval", "control_interval", "poll_interval"):
            if getattr(self, name) <= 0:
                raise HarnessError(f"{name} must be positive")
        for name in ("sample_interval", "poll_interval"):
            ratio = getattr(self, name) / self.control_interval
            if abs(ratio - round(ratio)) > 1e-9:
                raise HarnessError(f"{name} must be a multiple of control_interval")
        if (self.swap_at is None) != (self.swap_curve is None):
            raise HarnessError("swap needs both 'at' and 'curve'")
        if self.swap_at is not None and not 0 <= self.swap_at <= self.duration:
            raise HarnessError(f"swap.at {self.swap_at} outside [0, {self.duration}]")
        self.nameplate.validate()


def load_plan(source: str | dict) -> ExperimentPlan:
    """Load a plan from a JSON file, a bundled plan name, or a dict."""
    if isinstance(source, str):
        path = Path(source)
        if path.exists():
            doc = json.loads(path.read_text())
        else:
            bundled = resources.files("gridgate.data").joinpath(f"{source}.json")
            if not bundled.is_file():
                raise HarnessError(f"plan {source!r}: no such file or bundled plan")
            doc = json.loads(bundled.read_text())
    else:
        doc = source
    swap = doc.get("swap")
    nameplate = InverterNameplate(**doc.get("nameplate", {}))
    plan = ExperimentPlan(
        scenario=ScenarioProfile.from_obj(doc["scenario"]),
        initial_curve=parse_curve(doc["initial_curve"]),
        duration=float(doc["duration"]),
        sample_interval=float(doc.get("sample_interval", 1.0)),
        control_interval=float(doc.get("control_interval", 1.0)),
        poll_interval=float(doc.get("poll_interval", 5.0)),
        q_lag_tau=float(doc.get("q_lag_tau", 1.0)),
        nameplate=nameplate,
        swap_at=float(swap["at"]) if swap else None,
        swap_curve=parse_curve(swap["curve"]) if swap else None,
        start_epoch=float(doc.get("start_epoch", 0.0)),
    )
    plan.validate()
    return plan


# ---------------------------------------------------------------------------
# Results


@dataclass(frozen=True)
class ResultRow:
    t: float
    voltage_v: float
    active_power_w: float
    reactive_power_var: float
    setpoint_pct: float
    curve_id: str


@dataclass
class ResultSeries:
    rows: list[ResultRow]
    meta: dict = field(default_factory=dict)

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow([repr(r.t), repr(r.voltage_v), repr(r.active_power_w),
                             repr(r.reactive_power_var), repr(r.setpoint_pct), r.curve_id])
        return buf.getvalue()

    def to_json_text(self) -> str:
        return json.dumps({"meta": self.meta, "rows": [asdict(r) for r in self.rows]}, indent=2)

    @classmethod
    def from_csv_text(cls, text: str) -> "ResultSeries":
        reader = csv.DictReader(io.StringIO(text))
        rows = [
            ResultRow(
                t=float(r["t"]),
                voltage_v=float(r["voltage_v"]),
                active_power_w=float(r["active_power_w"]),
                reactive_power_var=float(r["reactive_power_var"]),
                setpoint_pct=float(r["setpoint_pct"]),
                curve_id=r["curve_id"],
            )
            for r in reader
        ]
        return cls(rows)

    @classmethod
    def from_json_text(cls, text: str) -> "ResultSeries":
        doc = json.loads(text)
        rows = [ResultRow(**r) for r in doc["rows"]]
        return cls(rows, doc.get("meta", {}))


def emit(series: ResultSeries, path: str, fmt: str = "csv") -> None:
    """Write a series to disk as csv or json."""
    if not series.rows:
        raise HarnessError("refusing to emit an empty series")
    text = series.to_csv_text() if fmt == "csv" else series.to_json_text()
    Path(path).write_text(text)


def load_series(path: str) -> ResultSeries:
    text = Path(path).read_text()
    if Path(path).suffix == ".json":
        return ResultSeries.from_json_text(text)
    return ResultSeries.from_csv_text(text)


def summarize(series: ResultSeries) -> dict:
    """Pre/post swap reactive extremes plus the observed swap latency."""
    if not series.rows:
        raise HarnessError("cannot summarize an empty series")
    rows = series.rows
    meta = series.meta or {}
    initial_id = meta.get("initial_curve_id") or rows[0].curve_id
    swap_idx = next((i for i, r in enumerate(rows) if r.curve_id != initial_id), None)
    pre = rows if swap_idx is None else rows[:swap_idx]
    post = [] if swap_idx is None else rows[swap_idx:]
    out = {
        "max_abs_q_pre": max(abs(r.reactive_power_var) for r in pre) if pre else None,
        "max_abs_q_post": max(abs(r.reactive_power_var) for r in post) if post else None,
        "post_window_empty": not post,
        "swap_latency_s": None,
    }
    if meta.get("swap_ack_at") is not None and meta.get("swap_applied_at") is not None:
        out["swap_latency_s"] = meta["swap_applied_at"] - meta["swap_ack_at"]
    elif swap_idx is not None and swap_idx > 0:
        # CSV has no invocation timestamps; bound latency by sample spacing.
        out["swap_latency_s"] = rows[swap_idx].t - rows[swap_idx - 1].t
    rated_va = meta.get("rated_va")
    if rated_va:
        for key in ("max_abs_q_pre", "max_abs_q_post"):
            out[f"{key}_pct"] = None if out[key] is None else 100.0 * out[key] / rated_va
    return out


# ---------------------------------------------------------------------------
# Runs


def _seed_cloud(twin: CloudTwin, plan: ExperimentPlan) -> None:
    twin.register_device(GATEWAY_ID, BASE_DEVICE_TYPE, heartbeat=False)
    twin.set_desired_mappings(GATEWAY_ID, base_mapping_set())
    twin.set_desired_vvc(GATEWAY_ID, plan.initial_curve.as_dict())


def run(plan: ExperimentPlan, wall_clock: bool = False) -> ResultSeries:
    plan.validate()
    if wall_clock:
        return _run_wall(plan)
    return _run_virtual(plan)


def _run_virtual(plan: ExperimentPlan) -> ResultSeries:
    clock = VirtualClock(plan.start_epoch)
    tokens = AuthTokens(operator=OPERATOR_TOKEN, gateways={GATEWAY_ID: GATEWAY_TOKEN})
    twin = CloudTwin(tokens, clock=clock, default_heartbeat_interval=plan.poll_interval)
    _seed_cloud(twin, plan)

    inverter = SimulatedInverter(
        plan.nameplate,
        q_lag_tau=plan.q_lag_tau,
        initial_voltage=plan.scenario.voltage_at(0.0),
        initial_pv_w=plan.scenario.pv_at(0.0),
    )
    config = GatewayConfig(
        gateway_id=GATEWAY_ID,
        auth_token=GATEWAY_TOKEN,
        poll_interval=plan.poll_interval,
        control_interval=plan.control_interval,
        rated_va=plan.nameplate.rated_va,
        boot_retries=2,
        backoff_base=0.01,
    )
    gateway = Gateway(
        config,
        InProcessModbusClient(inverter.image),
        LocalCloudClient(twin, GATEWAY_TOKEN, GATEWAY_ID),
        clock=clock,
    )
    if not gateway.boot_provision():
        raise HarnessError("gateway failed to provision against the in-process cloud")

    dt = plan.control_interval
    n_ticks = round(plan.duration / dt)
    sample_every = round(plan.sample_interval / dt)
    poll_every = round(plan.poll_interval / dt)

    rows: list[ResultRow] = []
    swap_request_id: str | None = None
    swap_pending = plan.swap_curve is not None
    swap_requested_at = swap_ack_at = swap_applied_at = None
    initial_id = plan.initial_curve.curve_id

    inverter.prime(plan.scenario.voltage_at(0.0), plan.scenario.pv_at(0.0))
    try:
        for k in range(n_ticks + 1):
            t = k * dt
            if k > 0:
                clock.advance(dt)
                inverter.step(plan.scenario.voltage_at(t), plan.scenario.pv_at(t), dt)
            if swap_pending and t >= plan.swap_at:
                invocation = twin.invoke_method(
                    GATEWAY_ID,
                    "updateGatewayCache",
                    {"kind": "vvc", "curve": plan.swap_curve.as_dict()},
                    wait_s=0,
                )
                swap_request_id = invocation["request_id"]
                swap_requested_at = t
                swap_pending = False
            gateway.poll_and_handle_methods(wait_s=0)
            if swap_request_id is not None and swap_ack_at is None:
                invocation = twin.get_invocation(swap_request_id)
                if invocation["state"] == "failed":
                    raise HarnessError(f"curve swap failed: {invocation['response']}")
                if invocation["state"] == "completed":
                    swap_ack_at = t
            control = gateway.control_cycle()
            if control is None:
                raise HarnessError(f"control cycle failed at t={t}")
            if swap_applied_at is None and control.curve_id != initial_id:
                swap_applied_at = t
            if k % poll_every == 0:
                gateway.heartbeat()
                gateway.telemetry_cycle()
            if k % sample_every == 0:
                state = inverter.state
                rows.append(
                    ResultRow(
                        t=t,
                        voltage_v=control.voltage,
                        active_power_w=state.active_power_w,
                        reactive_power_var=state.reactive_power_var,
                        setpoint_pct=control.setpoint_pct,
                        curve_id=control.curve_id,
                    )
                )
    finally:
        twin.close()
    if plan.swap_curve is not None and swap_applied_at is None:
        raise HarnessError("swap was scheduled but never took effect")

    meta = {
        "initial_curve_id": initial_id,
        "swap_curve_id": plan.swap_curve.curve_id if plan.swap_curve else None,
        "swap_requested_at": swap_requested_at,
        "swap_ack_at": swap_ack_at,
        "swap_applied_at": swap_applied_at,
        "control_interval": plan.control_interval,
        "sample_interval": plan.sample_interval,
        "rated_va": plan.nameplate.rated_va,
        "duration": plan.duration,
        "mode": "virtual",
    }
    return ResultSeries(rows, meta)


def _run_wall(plan: ExperimentPlan) -> ResultSeries:
    """Same experiment over real sockets and the gateway's own threads."""
    clock = WallClock()
    tokens = AuthTokens(operator=OPERATOR_TOKEN, gateways={GATEWAY_ID: GATEWAY_TOKEN})
    twin = CloudTwin(tokens, clock=clock, default_heartbeat_interval=plan.poll_interval)
    _seed_cloud(twin, plan)
    api = CloudHttpApi(twin).start()

    inverter = SimulatedInverter(
        plan.nameplate,
        q_lag_tau=plan.q_lag_tau,
        initial_voltage=plan.scenario.voltage_at(0.0),
        initial_pv_w=plan.scenario.pv_at(0.0),
    )
    modbus_server = ModbusTcpServer(inverter.image, "127.0.0.1", 0).start()
    host, port = modbus_server.address
    config = GatewayConfig(
        gateway_id=GATEWAY_ID,
        inverter_endpoint=f"{host}:{port}",
        cloud_base_url=api.base_url,
        auth_token=GATEWAY_TOKEN,
        poll_interval=plan.poll_interval,
        control_interval=plan.control_interval,
        rated_va=plan.nameplate.rated_va,
        boot_retries=3,
        backoff_base=0.2,
    )
    gateway = Gateway(
        config,
        ModbusTcpClient(host, port),
        HttpCloudClient(api.base_url, GATEWAY_TOKEN, GATEWAY_ID),
        clock=clock,
    )
    operator = HttpCloudClient(api.base_url, OPERATOR_TOKEN, GATEWAY_ID)

    rows: list[ResultRow] = []
    swap_requested_at = swap_ack_at = swap_applied_at = None
    initial_id = plan.initial_curve.curve_id
    try:
        gateway.start()
        if not gateway.provisioned:
            raise HarnessError("gateway failed to provision against the HTTP cloud")
        t0 = clock.now()
        swap_pending = plan.swap_curve is not None
        next_sample = 0.0
        while True:
            t = clock.now() - t0
            if t > plan.duration:
                break
            inverter.step(plan.scenario.voltage_at(t), plan.scenario.pv_at(t),
                          max(plan.control_interval, 1e-3))
            if swap_pending and t >= plan.swap_at:
                swap_requested_at = t
                invocation = operator.invoke(
                    GATEWAY_ID,
                    "updateGatewayCache",
                    {"kind": "vvc", "curve": plan.swap_curve.as_dict()},
                )
                if invocation["state"] != "completed":
                    raise HarnessError(f"curve swap did not complete: {invocation}")
                swap_ack_at = clock.now() - t0
                swap_pending = False
            if t >= next_sample:
                control = gateway.last_control
                state = inverter.state
                if control is not None:
                    if swap_applied_at is None and control.curve_id != initial_id:
                        swap_applied_at = control.t - t0
                    rows.append(
                        ResultRow(
                            t=round(t, 3),
                            voltage_v=control.voltage,
                            active_power_w=state.active_power_w,
                            reactive_power_var=state.reactive_power_var,
                            setpoint_pct=control.setpoint_pct,
                            curve_id=control.curve_id,
                        )
                    )
                next_sample += plan.sample_interval
            clock.sleep(plan.control_interval)
    finally:
        gateway.stop()
        modbus_server.stop()
        api.stop()
        twin.close()

    meta = {
        "initial_curve_id": initial_id,
        "swap_curve_id": plan.swap_curve.curve_id if plan.swap_curve else None,
        "swap_requested_at": swap_requested_at,
        "swap_ack_at": swap_ack_at,
        "swap_applied_at": swap_applied_at,
        "control_interval": plan.control_interval,
        "sample_interval": plan.sample_interval,
        "rated_va": plan.nameplate.rated_va,
        "duration": plan.duration,
        "mode": "wall",
    }
    return ResultSeries(rows, meta)
