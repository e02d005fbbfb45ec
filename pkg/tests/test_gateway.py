import json
from importlib import resources

import pytest

from gridgate.cloud_client import CloudUnreachable
from gridgate.gateway import GatewayConfig, load_config
from gridgate.inverter import REG_ACTIVE_LIMIT, REG_FREQUENCY
from gridgate.mapping import BASE_DEVICE_TYPE, base_mapping_set

from stack import GW, make_stack

VVC1 = json.loads(resources.files("gridgate.data").joinpath("vvc1.json").read_text())
VVC1["curve_id"] = "VVC1"
VVC2 = json.loads(resources.files("gridgate.data").joinpath("vvc2.json").read_text())
VVC2["curve_id"] = "VVC2"

GOLDEN = json.loads(
    resources.files("gridgate.data").joinpath("reading_40083_golden.json").read_text()
)


class DeadCloud:
    """Cloud client whose transport always fails."""

    def __getattr__(self, name):
        def boom(*args, **kwargs):
            raise CloudUnreachable("cloud is down")

        return boom


class FlakyCloud:
    """Delegates to a real client after the first ``failures`` telemetry posts."""

    def __init__(self, inner, failures: int):
        self.inner = inner
        self.failures = failures
        self.batches = []

    def __getattr__(self, name):
        return getattr(self.inner, name)

    def post_telemetry(self, readings):
        if self.failures > 0:
            self.failures -= 1
            raise CloudUnreachable("telemetry ingress down")
        self.batches.append(list(readings))
        return self.inner.post_telemetry(readings)


# -- configuration


def test_config_env_overrides(tmp_path):
    path = tmp_path / "gw.json"
    path.write_text(json.dumps({"gateway_id": "gw-file", "poll_interval": 7}))
    config = load_config(
        str(path),
        env={"GRIDGATE_GATEWAY_ID": "gw-env", "GRIDGATE_CONTROL_INTERVAL": "0.5"},
    )
    assert config.gateway_id == "gw-env"
    assert config.poll_interval == 7
    assert config.control_interval == 0.5


def test_config_validation():
    with pytest.raises(ValueError):
        GatewayConfig(gateway_id="").validate()
    with pytest.raises(ValueError):
        GatewayConfig(gateway_id="x", poll_interval=0).validate()
    with pytest.raises(ValueError):
        GatewayConfig(gateway_id="x", vvc_limits_mode="volts").validate()


# -- provisioning


def test_boot_adopts_cloud_mapping_version():
    stack = make_stack(seed_mapping_version=3, seed_curve=VVC1)
    assert stack.gateway.boot_provision()
    assert stack.gateway.mapping_cache.version == 3
    assert stack.gateway.curve_slot.current.curve_id == "VVC1"
    assert not stack.gateway.degraded
    device = stack.twin.get_device(GW)
    assert device["reported"]["mapping_version"] == 3
    assert device["reported"]["active_curve_id"] == "VVC1"
    assert device["status"] == "online"


def test_boot_with_empty_cloud_falls_back_to_builtin():
    stack = make_stack(seed_mapping_version=None)
    assert stack.gateway.boot_provision()
    assert stack.gateway.mapping_cache.version == 1
    assert stack.gateway.mapping_cache.lookup(BASE_DEVICE_TYPE, 40083) is not None
    assert not stack.gateway.degraded  # reachable cloud with no config is normal


def test_boot_with_cloud_down_degrades_onto_builtin():
    stack = make_stack()
    stack.gateway.cloud = DeadCloud()
    assert not stack.gateway.boot_provision()
    assert stack.gateway.degraded
    assert stack.gateway.mapping_cache.version == 1
    assert stack.gateway.mapping_cache.lookup(BASE_DEVICE_TYPE, 40072) is not None


def test_boot_with_bad_token_degrades():
    stack = make_stack()
    stack.gateway.cloud.token = "wrong-token"
    assert not stack.gateway.boot_provision()
    assert stack.gateway.degraded


def test_boot_with_invalid_cloud_artifact_degrades():
    stack = make_stack(seed_mapping_version=2)
    stack.twin.set_desired_vvc = None  # not used here
    # corrupt the stored mapping set behind the API
    doc = base_mapping_set()
    doc["version"] = 2
    doc["mappings"]["40083"]["decode"]["scale"] = 0
    with stack.twin._db_lock, stack.twin._db:
        stack.twin._db.execute(
            "UPDATE mappings SET document = ? WHERE device_type = ?",
            (json.dumps(doc), BASE_DEVICE_TYPE),
        )
    assert stack.gateway.boot_provision()
    assert stack.gateway.degraded
    assert stack.gateway.mapping_cache.version == 1  # built-in base kept


def test_degraded_gateway_recovers_on_heartbeat():
    stack = make_stack(seed_mapping_version=3, seed_curve=VVC1)
    real_cloud = stack.gateway.cloud
    stack.gateway.cloud = DeadCloud()
    stack.gateway.boot_provision()
    assert stack.gateway.degraded
    stack.gateway.cloud = real_cloud
    stack.gateway.heartbeat()
    assert not stack.gateway.degraded
    assert stack.gateway.mapping_cache.version == 3


# -- device methods


@pytest.fixture
def booted():
    stack = make_stack(pv_w=1914.0, seed_curve=VVC1)
    assert stack.gateway.boot_provision()
    stack.inverter.prime(230.0, 1914.0)
    return stack


def test_get_telemetry_matches_golden(booted):
    resp = booted.gateway.handle_method("getTelemetry", {"registers": [40083]})
    assert resp.status == 200
    (doc,) = resp.body["readings"]
    golden = json.loads(json.dumps(GOLDEN[0]))
    golden["40083"]["Reading"]["timePeriod"]["start"] = doc["40083"]["Reading"]["timePeriod"]["start"]
    assert doc == golden


def test_get_telemetry_forwards_to_cloud(booted):
    booted.gateway.handle_method("getTelemetry", {"registers": [40083]})
    records = booted.twin.query_telemetry(gateway_id=GW, register=40083)
    assert len(records) == 1
    assert records[0]["document"]["40083"]["Reading"]["value"] == 1914


def test_get_telemetry_order_preserved(booted):
    resp = booted.gateway.handle_method("getTelemetry", {"registers": [40083, 40072]})
    assert [list(d)[0] for d in resp.body["readings"]] == ["40083", "40072"]


def test_get_telemetry_unmapped_register_400(booted):
    resp = booted.gateway.handle_method("getTelemetry", {"registers": [40999]})
    assert resp.status == 400
    assert "40999" in resp.body["error"]
    assert resp.body["register"] == 40999


def test_get_telemetry_bad_payload_400(booted):
    for payload in ({}, {"registers": []}, {"registers": "40083"}, {"registers": [1.5]}):
        assert booted.gateway.handle_method("getTelemetry", payload).status == 400


def test_get_telemetry_modbus_failure_502(booted):
    from gridgate.modbus_io import ModbusIOError

    class DeadModbus:
        def read_registers(self, address, count):
            raise ModbusIOError("inverter unplugged")

    booted.gateway.modbus = DeadModbus()
    resp = booted.gateway.handle_method("getTelemetry", {"registers": [40083]})
    assert resp.status == 502
    assert "40083" in resp.body["error"]


def test_swap_shows_in_reported_curve_on_next_heartbeat(booted):
    booted.gateway.handle_method("updateGatewayCache", {"kind": "vvc", "curve": VVC2})
    booted.gateway.heartbeat()
    device = booted.twin.get_device(GW)
    assert device["reported"]["active_curve_id"] == "VVC2"


def test_curtail_percent_write_and_effect():
    stack = make_stack(pv_w=2000.0)
    stack.gateway.boot_provision()
    resp = stack.gateway.handle_method("curtailPower", {"percent": 50})
    assert resp.status == 200
    assert resp.body == {"register": REG_ACTIVE_LIMIT, "value": 5000}
    stack.inverter.step(230.0, 2000.0, dt=1.0)
    assert stack.inverter.state.active_power_w == 2000.0  # limit not binding
    stack.inverter.step(230.0, 4000.0, dt=1.0)
    assert stack.inverter.state.active_power_w == 2500.0  # 5000 W x 50 %


def test_curtail_raw_register_write(booted):
    resp = booted.gateway.handle_method("curtailPower", {"register": REG_ACTIVE_LIMIT, "value": 8000})
    assert resp.status == 200
    assert booted.inverter.state.active_limit_pct == 80.0


def test_curtail_read_only_register_502(booted):
    resp = booted.gateway.handle_method("curtailPower", {"register": REG_FREQUENCY, "value": 1})
    assert resp.status == 502
    assert resp.body["exception"] == "ILLEGAL_DATA_ADDRESS"


def test_curtail_bad_percent_400(booted):
    for percent in (0, -5, 101, "50"):
        resp = booted.gateway.handle_method("curtailPower", {"percent": percent})
        assert resp.status == 400


def test_update_cache_vvc_swaps_curve(booted):
    resp = booted.gateway.handle_method("updateGatewayCache", {"kind": "vvc", "curve": VVC2})
    assert resp.status == 200
    assert resp.body["curve_id"] == "VVC2"
    assert resp.body["previous_curve_id"] == "VVC1"
    assert booted.gateway.curve_slot.current.curve_id == "VVC2"
    # the curve's curtailment limit was written on activation
    assert booted.inverter.state.active_limit_pct == 100.0
    # next control cycle computes with the new curve
    booted.inverter.prime(253.0, 1914.0)
    sample = booted.gateway.control_cycle()
    assert sample.setpoint_pct == -40.5


def test_update_cache_invalid_curve_400(booted):
    bad = json.loads(json.dumps(VVC2))
    bad["VOLTAGE_THRESHOLDS"]["V95"] = bad["VOLTAGE_THRESHOLDS"]["V90"]
    resp = booted.gateway.handle_method("updateGatewayCache", {"kind": "vvc", "curve": bad})
    assert resp.status == 400
    assert booted.gateway.curve_slot.current.curve_id == "VVC1"


def test_update_cache_mapping_bumps_version(booted):
    version = booted.gateway.mapping_cache.version
    payload = {
        "kind": "mapping",
        "device_type": BASE_DEVICE_TYPE,
        "mappings": base_mapping_set()["mappings"],
    }
    resp = booted.gateway.handle_method("updateGatewayCache", payload)
    assert resp.status == 200
    assert resp.body["applied_version"] == version + 1


def test_update_cache_invalid_mapping_400(booted):
    version = booted.gateway.mapping_cache.version
    mappings = json.loads(json.dumps(base_mapping_set()["mappings"]))
    mappings["40083"]["decode"]["scale"] = 0
    resp = booted.gateway.handle_method(
        "updateGatewayCache",
        {"kind": "mapping", "device_type": BASE_DEVICE_TYPE, "mappings": mappings},
    )
    assert resp.status == 400
    assert booted.gateway.mapping_cache.version == version


def test_update_cache_bad_kind_400(booted):
    assert booted.gateway.handle_method("updateGatewayCache", {"kind": "firmware"}).status == 400


def test_unknown_method_400(booted):
    resp = booted.gateway.handle_method("rebootEverything", {})
    assert resp.status == 400
    assert "unknown method" in resp.body["error"]


# -- loops


def test_control_loop_deadband(booted):
    first = booted.gateway.control_cycle()
    assert first.wrote and first.setpoint_pct == 0.0
    second = booted.gateway.control_cycle()
    assert not second.wrote  # unchanged setpoint is skipped
    booted.inverter.prime(250.0, 1914.0)
    third = booted.gateway.control_cycle()
    assert third.wrote and third.setpoint_pct < 0


def test_control_loop_tracks_voltage_ramp(booted):
    from vvc_oracle import oracle_setpoint

    curve = booted.gateway.curve_slot.current
    for v in (230.0, 235.0, 241.5, 247.25, 253.0):
        booted.inverter.prime(v, 1914.0)
        sample = booted.gateway.control_cycle()
        assert sample.setpoint_pct == pytest.approx(oracle_setpoint(curve, sample.voltage), abs=1e-9)
    assert booted.gateway.control_cycle().setpoint_pct == -45.4


def test_method_queue_round_trip(booted):
    invocation = booted.twin.invoke_method(GW, "curtailPower", {"percent": 40}, wait_s=0)
    handled = booted.gateway.poll_and_handle_methods()
    assert handled == 1
    result = booted.twin.get_invocation(invocation["request_id"])
    assert result["state"] == "completed"
    assert result["response"]["status"] == 200
    assert booted.inverter.state.active_limit_pct == 40.0


def test_telemetry_cycle_pushes_all_mapped_registers(booted):
    batch = booted.gateway.telemetry_cycle()
    assert len(batch) == 5
    records = booted.twin.query_telemetry(gateway_id=GW)
    assert len(records) == 5


def test_telemetry_buffered_while_cloud_down_then_flushed():
    stack = make_stack(pv_w=3000.0)
    stack.gateway.boot_provision()
    flaky = FlakyCloud(stack.gateway.cloud, failures=3)
    stack.gateway.cloud = flaky
    for _ in range(3):
        stack.gateway.telemetry_cycle()
        stack.clock.advance(5.0)
    assert len(stack.gateway._telemetry_buffer) == 15
    assert stack.twin.query_telemetry(gateway_id=GW) == []
    stack.gateway.telemetry_cycle()  # cloud back: flush everything
    assert len(stack.gateway._telemetry_buffer) == 0
    assert len(stack.twin.query_telemetry(gateway_id=GW, limit=1000)) == 20


def test_telemetry_buffer_drops_oldest(monkeypatch):
    import gridgate.gateway as gateway_mod

    monkeypatch.setattr(gateway_mod, "TELEMETRY_BUFFER_LIMIT", 12)
    stack = make_stack(pv_w=3000.0)
    stack.gateway.boot_provision()
    stack.gateway.cloud = DeadCloud()
    for _ in range(4):  # 4 cycles x 5 registers = 20 records into a 12-slot buffer
        stack.gateway.telemetry_cycle()
        stack.clock.advance(5.0)
    buffer = list(stack.gateway._telemetry_buffer)
    assert len(buffer) == 12
    starts = [next(iter(d.values()))["Reading"]["timePeriod"]["start"] for d in buffer]
    # oldest 8 of 20 records are gone: all of t=0 and three of t=5
    assert starts == [5, 5] + [10] * 5 + [15] * 5


def test_telemetry_timestamps_monotonic(booted):
    starts = []
    for _ in range(4):
        batch = booted.gateway.telemetry_cycle()
        starts.extend(next(iter(d.values()))["Reading"]["timePeriod"]["start"] for d in batch)
        booted.clock.advance(5.0)
    assert starts == sorted(starts)


def test_local_api_dispatch():
    import requests

    stack = make_stack(pv_w=1914.0)
    stack.gateway.boot_provision()
    stack.gateway.config.listen_address = "127.0.0.1:0"
    stack.gateway._start_local_api()
    host, port = stack.gateway.local_api_address
    try:
        url = f"http://{host}:{port}/methods/getTelemetry"
        assert requests.post(url, json={"registers": [40083]}).status_code == 401
        resp = requests.post(
            url,
            json={"registers": [40083]},
            headers={"Authorization": f"Bearer {stack.gateway.config.auth_token}"},
        )
        assert resp.status_code == 200
        assert resp.json()["body"]["readings"][0]["40083"]["Reading"]["value"] == 1914
    finally:
        stack.gateway._local_api.stop()
