"""In-process cloud + inverter + gateway assembly shared by tests."""

from types import SimpleNamespace

from gridgate.clock import VirtualClock
from gridgate.cloud import AuthTokens, CloudTwin
from gridgate.cloud_client import LocalCloudClient
from gridgate.gateway import Gateway, GatewayConfig
from gridgate.inverter import InverterNameplate, SimulatedInverter
from gridgate.mapping import BASE_DEVICE_TYPE, base_mapping_set
from gridgate.modbus_io import InProcessModbusClient

GW = "gw-test"
GW_TOKEN = "gw-test-token"
OP_TOKEN = "op-token"


def make_stack(
    pv_w: float = 4000.0,
    seed_mapping_version: int | None = 1,
    seed_curve: dict | None = None,
    q_lag_tau: float = 1.0,
    nameplate: InverterNameplate | None = None,
    heartbeat_interval: float = 5.0,
):
    clock = VirtualClock(0.0)
    tokens = AuthTokens(operator=OP_TOKEN, gateways={GW: GW_TOKEN})
    twin = CloudTwin(tokens, clock=clock, default_heartbeat_interval=heartbeat_interval)
    twin.register_device(GW, BASE_DEVICE_TYPE, heartbeat=False)
    if seed_mapping_version is not None:
        doc = base_mapping_set()
        doc["version"] = seed_mapping_version
        twin.set_desired_mappings(GW, doc)
    if seed_curve is not None:
        twin.set_desired_vvc(GW, seed_curve)
    inverter = SimulatedInverter(nameplate, q_lag_tau=q_lag_tau, initial_pv_w=pv_w)
    config = GatewayConfig(
        gateway_id=GW,
        auth_token=GW_TOKEN,
        poll_interval=heartbeat_interval,
        boot_retries=2,
        backoff_base=0.01,
        rated_va=(nameplate or InverterNameplate()).rated_va,
    )
    gateway = Gateway(
        config,
        InProcessModbusClient(inverter.image),
        LocalCloudClient(twin, GW_TOKEN, GW),
        clock=clock,
    )
    return SimpleNamespace(
        clock=clock, tokens=tokens, twin=twin, inverter=inverter, gateway=gateway
    )
