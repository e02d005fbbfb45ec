#!/usr/bin/env python3
"""Serve the simulated inverter over Modbus TCP and poke it with a client.

Run:  python3 demos/02_inverter_over_modbus.py
"""

import time

from gridgate.inverter import (
    REG_ACTIVE_LIMIT,
    REG_ACTIVE_POWER,
    REG_REACTIVE_POWER,
    REG_VOLTAGE,
    SimulatedInverter,
    encode_active_limit,
)
from gridgate.modbus_io import ModbusTcpClient


def main():
    inverter = SimulatedInverter(initial_pv_w=4000.0)
    server = inverter.serve("127.0.0.1", 0)
    host, port = server.address
    print(f"inverter on modbus tcp {host}:{port}")

    client = ModbusTcpClient(host, port)
    inverter.step(233.5, 4000.0, dt=1.0)
    volts = client.read_registers(REG_VOLTAGE, 1)[0] / 10
    watts = client.read_registers(REG_ACTIVE_POWER, 1)[0]
    print(f"terminal voltage {volts:.1f} V, active power {watts} W")

    print("writing a 50% curtailment limit...")
    client.write_register(REG_ACTIVE_LIMIT, encode_active_limit(50.0))
    for _ in range(3):
        inverter.step(233.5, 4000.0, dt=1.0)
        time.sleep(0.05)
    watts = client.read_registers(REG_ACTIVE_POWER, 1)[0]
    print(f"active power now {watts} W (5000 W nameplate x 50%)")

    q_raw = client.read_registers(REG_REACTIVE_POWER, 1)[0]
    print(f"reactive power {q_raw - 32768} VAr (offset-coded register holds {q_raw})")

    client.close()
    server.stop()


if __name__ == "__main__":
    main()
