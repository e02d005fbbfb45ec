#!/usr/bin/env python3
"""The whole stack on real sockets: cloud REST + Modbus TCP + gateway threads.

Boots everything on loopback ports, lets the gateway provision itself,
then acts as an operator: curtails power over the cloud API and watches
the effect arrive back through telemetry.

Run:  python3 demos/05_full_stack_http.py
"""

import json
import threading
import time

import requests

from gridgate.cloud import AuthTokens, CloudTwin
from gridgate.cloud_client import HttpCloudClient
from gridgate.cloud_http import CloudHttpApi
from gridgate.gateway import Gateway, GatewayConfig
from gridgate.inverter import SimulatedInverter
from gridgate.mapping import BASE_DEVICE_TYPE, base_mapping_set
from gridgate.modbus_io import ModbusTcpClient, ModbusTcpServer

GW = "gw-demo"
GW_TOKEN = "gw-demo-token"
OP_TOKEN = "operator-token"


def main():
    # cloud, pre-seeded like a fleet operator would
    twin = CloudTwin(AuthTokens(operator=OP_TOKEN, gateways={GW: GW_TOKEN}),
                     default_heartbeat_interval=1.0)
    twin.register_device(GW, BASE_DEVICE_TYPE, heartbeat=False)
    twin.set_desired_mappings(GW, base_mapping_set())
    api = CloudHttpApi(twin).start()
    print(f"cloud twin:     {api.base_url}")

    # inverter on a real Modbus TCP port, stepped in the background
    inverter = SimulatedInverter(initial_pv_w=4200.0)
    modbus_server = ModbusTcpServer(inverter.image, "127.0.0.1", 0).start()
    mb_host, mb_port = modbus_server.address
    print(f"inverter:       modbus tcp {mb_host}:{mb_port}")
    stop = threading.Event()

    def plant():
        while not stop.is_set():
            inverter.step(231.0, 4200.0, dt=0.2)
            time.sleep(0.2)

    threading.Thread(target=plant, daemon=True).start()

    # gateway provisions itself and starts its loops
    config = GatewayConfig(
        gateway_id=GW,
        auth_token=GW_TOKEN,
        inverter_endpoint=f"{mb_host}:{mb_port}",
        cloud_base_url=api.base_url,
        poll_interval=1.0,
        control_interval=0.2,
    )
    gateway = Gateway(config, ModbusTcpClient(mb_host, mb_port),
                      HttpCloudClient(api.base_url, GW_TOKEN, GW))
    gateway.start()
    print(f"gateway:        provisioned={gateway.provisioned} mapping_v={gateway.mapping_cache.version}")

    op = {"Authorization": f"Bearer {OP_TOKEN}"}
    time.sleep(2.5)
    device = requests.get(f"{api.base_url}/api/devices/{GW}", headers=op).json()
    print(f"device twin:    status={device['status']} reported={device['reported']['mapping_version']}")

    before = requests.get(f"{api.base_url}/api/telemetry",
                          params={"register": 40083, "limit": 1000}, headers=op).json()["records"]
    print(f"telemetry rows so far: {len(before)}, latest W = "
          f"{before[-1]['document']['40083']['Reading']['value']}")

    print("\noperator invokes curtailPower {percent: 40} ...")
    invocation = requests.post(
        f"{api.base_url}/api/devices/{GW}/methods/curtailPower",
        params={"wait": 10}, json={"percent": 40}, headers=op).json()
    print(f"invocation {invocation['state']}: {invocation['response']['body']}")

    time.sleep(2.5)
    after = requests.get(f"{api.base_url}/api/telemetry",
                         params={"register": 40083, "limit": 1000}, headers=op).json()["records"]
    print(f"latest W after curtailment: {after[-1]['document']['40083']['Reading']['value']} "
          f"(5000 W x 40% = 2000 W cap)")

    stop.set()
    gateway.stop()
    modbus_server.stop()
    api.stop()
    twin.close()


if __name__ == "__main__":
    main()
