import json
import threading
from importlib import resources

import pytest

from gridgate.clock import VirtualClock
from gridgate.cloud import AuthTokens, CloudError, CloudTwin
from gridgate.mapping import BASE_DEVICE_TYPE, base_mapping, base_mapping_set, build_reading

GW = "gw-a"
TOKENS = AuthTokens(operator="op", gateways={GW: "tok-a", "gw-b": "tok-b"})

GOLDEN = json.loads(
    resources.files("gridgate.data").joinpath("reading_40083_golden.json").read_text()
)
VVC1 = json.loads(resources.files("gridgate.data").joinpath("vvc1.json").read_text())
VVC1["curve_id"] = "VVC1"


@pytest.fixture
def clock():
    return VirtualClock(1000.0)


@pytest.fixture
def twin(clock):
    t = CloudTwin(TOKENS, clock=clock, default_heartbeat_interval=5.0)
    yield t
    t.close()


def batch_at(start: int, registers=(40083,)) -> list[dict]:
    table = base_mapping()
    return [build_reading(table[reg], 1000 + i, now=start).as_dict() for i, reg in enumerate(registers)]


# -- auth


def test_authenticate_tokens(twin):
    assert twin.authenticate("op") == "operator"
    assert twin.authenticate("tok-a") == GW
    assert twin.authenticate("wrong") is None
    assert twin.authenticate(None) is None


# -- registry and status


def test_first_heartbeat_is_online(twin):
    device = twin.register_device(GW, BASE_DEVICE_TYPE, {"mapping_version": 1})
    assert device["status"] == "online"
    assert device["reported"]["mapping_version"] == 1


def test_operator_preregistration_is_provisioning(twin):
    device = twin.register_device(GW, BASE_DEVICE_TYPE, heartbeat=False)
    assert device["status"] == "provisioning"
    assert device["last_seen"] is None


def test_device_goes_offline_after_three_missed_heartbeats(twin, clock):
    twin.register_device(GW, BASE_DEVICE_TYPE)
    clock.advance(14.9)
    assert twin.get_device(GW)["status"] == "online"
    clock.advance(0.2)
    assert twin.get_device(GW)["status"] == "offline"
    twin.register_device(GW, BASE_DEVICE_TYPE)
    assert twin.get_device(GW)["status"] == "online"


def test_degraded_report_reflects_in_status(twin):
    twin.register_device(GW, BASE_DEVICE_TYPE, {"degraded": True})
    assert twin.get_device(GW)["status"] == "degraded"
    twin.register_device(GW, BASE_DEVICE_TYPE, {"degraded": False})
    assert twin.get_device(GW)["status"] == "online"


def test_unknown_device_404(twin):
    with pytest.raises(CloudError) as excinfo:
        twin.get_device("nope")
    assert excinfo.value.status == 404


def test_desired_vs_reported_can_drift(twin):
    twin.register_device(GW, BASE_DEVICE_TYPE, {"mapping_version": 1})
    twin.set_desired_mappings(GW, {**base_mapping_set(), "version": 4})
    device = twin.get_device(GW)
    assert device["desired"]["mapping_version"] == 4
    assert device["reported"]["mapping_version"] == 1


# -- mappings / vvc egress


def test_mappings_round_trip(twin):
    twin.register_device(GW, BASE_DEVICE_TYPE)
    twin.set_desired_mappings(GW, base_mapping_set())
    assert twin.get_mappings(GW) == base_mapping_set()


def test_mappings_404_when_unconfigured(twin):
    twin.register_device(GW, BASE_DEVICE_TYPE)
    with pytest.raises(CloudError) as excinfo:
        twin.get_mappings(GW)
    assert excinfo.value.status == 404


def test_mapping_device_type_mismatch_rejected(twin):
    twin.register_device(GW, "some_other_type")
    with pytest.raises(CloudError) as excinfo:
        twin.set_desired_mappings(GW, base_mapping_set())
    assert excinfo.value.status == 400


def test_vvc_round_trip(twin):
    twin.register_device(GW, BASE_DEVICE_TYPE)
    assert twin.set_desired_vvc(GW, VVC1) == {"curve_id": "VVC1"}
    doc = twin.get_vvc(GW)
    assert doc["REACTIVE_POWER_LIMITS"]["Q_EXPORT"] == 45.4
    assert doc["curve_id"] == "VVC1"


def test_invalid_vvc_rejected(twin):
    twin.register_device(GW, BASE_DEVICE_TYPE)
    bad = json.loads(json.dumps(VVC1))
    bad["VOLTAGE_THRESHOLDS"]["V95"] = 100.0
    with pytest.raises(CloudError) as excinfo:
        twin.set_desired_vvc(GW, bad)
    assert excinfo.value.status == 400
    with pytest.raises(CloudError):
        twin.get_vvc(GW)  # nothing was applied


# -- telemetry ingest / query


def test_ingest_golden_batch(twin):
    twin.register_device(GW, BASE_DEVICE_TYPE)
    assert twin.ingest_telemetry(GW, GOLDEN) == 1
    records = twin.query_telemetry(gateway_id=GW)
    assert len(records) == 1
    assert records[0]["document"] == GOLDEN[0]
    assert records[0]["register"] == 40083


def test_ingest_is_idempotent(twin):
    twin.register_device(GW, BASE_DEVICE_TYPE)
    batch = batch_at(100, (40083, 40072))
    assert twin.ingest_telemetry(GW, batch) == 2
    assert twin.ingest_telemetry(GW, batch) == 0
    assert len(twin.query_telemetry()) == 2


def test_ingest_rejects_whole_batch_on_one_bad_entry(twin):
    twin.register_device(GW, BASE_DEVICE_TYPE)
    batch = batch_at(200, (40070, 40072, 40083))
    del batch[1]["40072"]["Reading"]["value"]
    with pytest.raises(CloudError) as excinfo:
        twin.ingest_telemetry(GW, batch)
    assert excinfo.value.status == 400
    assert twin.query_telemetry() == []


def test_query_filters_and_order(twin, clock):
    twin.register_device(GW, BASE_DEVICE_TYPE)
    twin.register_device("gw-b", BASE_DEVICE_TYPE)
    for start in (300, 100, 200):
        twin.ingest_telemetry(GW, batch_at(start, (40083, 40072)))
    twin.ingest_telemetry("gw-b", batch_at(150, (40083,)))

    only_power = twin.query_telemetry(register=40083)
    assert {r["register"] for r in only_power} == {40083}
    assert [r["document"][str(r["register"])]["Reading"]["timePeriod"]["start"] for r in only_power] == [
        100, 150, 200, 300,
    ]

    windowed = twin.query_telemetry(gateway_id=GW, t_from=100, t_to=200)
    assert len(windowed) == 4
    paged = twin.query_telemetry(gateway_id=GW, limit=2, offset=1)
    assert len(paged) == 2


def test_query_empty_store(twin):
    assert twin.query_telemetry() == []


def test_query_bad_range(twin):
    with pytest.raises(CloudError) as excinfo:
        twin.query_telemetry(t_from=10, t_to=5)
    assert excinfo.value.status == 400


def test_query_round_trip_is_byte_equal(twin):
    twin.register_device(GW, BASE_DEVICE_TYPE)
    twin.ingest_telemetry(GW, GOLDEN)
    stored = twin.query_telemetry(gateway_id=GW)[0]["document"]
    assert json.dumps(stored, sort_keys=True).encode() == json.dumps(
        GOLDEN[0], sort_keys=True
    ).encode()


# -- method invocations


def test_invoke_requires_reachable_device(twin, clock):
    twin.register_device(GW, BASE_DEVICE_TYPE, heartbeat=False)
    with pytest.raises(CloudError) as excinfo:
        twin.invoke_method(GW, "getTelemetry", {}, wait_s=0)
    assert excinfo.value.status == 409
    twin.register_device(GW, BASE_DEVICE_TYPE)
    clock.advance(60.0)
    with pytest.raises(CloudError) as excinfo:
        twin.invoke_method(GW, "getTelemetry", {}, wait_s=0)
    assert excinfo.value.status == 409


def test_invocation_lifecycle(twin):
    twin.register_device(GW, BASE_DEVICE_TYPE)
    invocation = twin.invoke_method(GW, "curtailPower", {"percent": 50}, wait_s=0)
    rid = invocation["request_id"]
    assert invocation["state"] == "queued"

    delivered = twin.poll_method_queue(GW)
    assert [d["request_id"] for d in delivered] == [rid]
    assert twin.get_invocation(rid)["state"] == "delivered"
    assert twin.poll_method_queue(GW) == []

    done = twin.post_method_result(GW, rid, {"request_id": rid, "status": 200, "body": {}})
    assert done["state"] == "completed"
    assert done["response"]["status"] == 200


def test_failed_result_marks_failed(twin):
    twin.register_device(GW, BASE_DEVICE_TYPE)
    rid = twin.invoke_method(GW, "curtailPower", {}, wait_s=0)["request_id"]
    twin.poll_method_queue(GW)
    done = twin.post_method_result(GW, rid, {"request_id": rid, "status": 400, "body": {}})
    assert done["state"] == "failed"


def test_illegal_transitions_rejected(twin):
    twin.register_device(GW, BASE_DEVICE_TYPE)
    rid = twin.invoke_method(GW, "x", {}, wait_s=0)["request_id"]
    # completing before delivery is not a legal move
    with pytest.raises(CloudError) as excinfo:
        twin.post_method_result(GW, rid, {"status": 200})
    assert excinfo.value.status == 409
    twin.poll_method_queue(GW)
    twin.post_method_result(GW, rid, {"status": 200})
    with pytest.raises(CloudError) as excinfo:
        twin.post_method_result(GW, rid, {"status": 200})
    assert excinfo.value.status == 409


def test_invoke_blocks_until_result():
    twin = CloudTwin(TOKENS, default_heartbeat_interval=5.0)  # wall clock
    twin.register_device(GW, BASE_DEVICE_TYPE)

    def responder():
        invocations = twin.poll_method_queue(GW, wait_s=5.0)
        for inv in invocations:
            twin.post_method_result(
                GW, inv["request_id"], {"request_id": inv["request_id"], "status": 200, "body": {}}
            )

    t = threading.Thread(target=responder)
    t.start()
    invocation = twin.invoke_method(GW, "curtailPower", {"percent": 50}, wait_s=5.0)
    t.join()
    twin.close()
    assert invocation["state"] == "completed"


def test_invoke_times_out_without_responder():
    twin = CloudTwin(TOKENS, default_heartbeat_interval=5.0)
    twin.register_device(GW, BASE_DEVICE_TYPE)
    with pytest.raises(CloudError) as excinfo:
        twin.invoke_method(GW, "curtailPower", {}, wait_s=0.2)
    assert excinfo.value.status == 504
    twin.close()


def test_unknown_invocation_404(twin):
    with pytest.raises(CloudError) as excinfo:
        twin.get_invocation("missing")
    assert excinfo.value.status == 404
