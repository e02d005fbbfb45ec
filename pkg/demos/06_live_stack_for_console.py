#!/usr/bin/env python3
"""Long-running stack for driving the operator console (frontend/).

Boots the cloud twin on a fixed port, a simulated inverter and a
provisioned gateway, then plays a slow voltage wave so the charts move
and the Volt-VAR loop has something to do. Stop with Ctrl-C.

Run:  python3 demos/06_live_stack_for_console.py
Then: cd frontend && npm run build && npm run serve
      open http://127.0.0.1:8080, cloud URL http://127.0.0.1:8440, token operator-token
"""

import math
import time

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
CLOUD_PORT = 8440


def main():
    twin = CloudTwin(AuthTokens(operator=OP_TOKEN, gateways={GW: GW_TOKEN}),
                     default_heartbeat_interval=2.0)
    twin.register_device(GW, BASE_DEVICE_TYPE, heartbeat=False)
    twin.set_desired_mappings(GW, base_mapping_set())
    api = CloudHttpApi(twin, "127.0.0.1", CLOUD_PORT).start()

    inverter = SimulatedInverter(initial_pv_w=4200.0)
    modbus_server = ModbusTcpServer(inverter.image, "127.0.0.1", 0).start()
    mb_host, mb_port = modbus_server.address

    config = GatewayConfig(
        gateway_id=GW,
        auth_token=GW_TOKEN,
        inverter_endpoint=f"{mb_host}:{mb_port}",
        cloud_base_url=api.base_url,
        poll_interval=2.0,
        control_interval=0.5,
    )
    gateway = Gateway(config, ModbusTcpClient(mb_host, mb_port),
                      HttpCloudClient(api.base_url, GW_TOKEN, GW))
    gateway.start()

    print(f"cloud twin   {api.base_url}   (operator token: {OP_TOKEN})")
    print(f"inverter     modbus tcp {mb_host}:{mb_port}")
    print(f"gateway      {GW}  provisioned={gateway.provisioned}")
    print("voltage wave 228..256 V with a 120 s period; Ctrl-C to stop")

    t0 = time.time()
    try:
        while True:
            t = time.time() - t0
            voltage = 242.0 + 14.0 * math.sin(2 * math.pi * t / 120.0)
            inverter.step(voltage, 4200.0, dt=0.5)
            time.sleep(0.5)
    except KeyboardInterrupt:
        pass
    finally:
        gateway.stop()
        modbus_server.stop()
        api.stop()
        twin.close()


if __name__ == "__main__":
    main()
