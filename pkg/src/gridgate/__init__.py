"""Desk-scale smart-grid gateway stack.

A simulated SunSpec-style Modbus inverter, an edge gateway that maps
register telemetry to IEEE 2030.5 reading documents and runs a local
Volt-VAR control loop, a self-hosted cloud twin for provisioning,
telemetry and method routing, and a harness that replays a voltage
profile to reproduce a dynamic curve-swap experiment.
"""

__version__ = "0.1.0"

from .clock import VirtualClock, WallClock
from .inverter import InverterNameplate, SimulatedInverter
from .mapping import FieldMapping, MappingCache, ReadingDocument, base_mapping
from .modbus import MbapHeader, ModbusRequest, ModbusResponse, RegisterImage
from .vvc import ActiveCurveSlot, VoltVarCurve, parse_curve, setpoint

__all__ = [
    "__version__",
    "ActiveCurveSlot",
    "FieldMapping",
    "InverterNameplate",
    "MappingCache",
    "MbapHeader",
    "ModbusRequest",
    "ModbusResponse",
    "ReadingDocument",
    "RegisterImage",
    "SimulatedInverter",
    "VirtualClock",
    "VoltVarCurve",
    "WallClock",
    "base_mapping",
    "parse_curve",
    "setpoint",
]
