"""Simulated single-phase smart inverter behind a Modbus register map.

The plant model is deliberately small: terminal voltage tracks the grid
input directly, active power is the minimum of available PV, the
curtailment limit and apparent-power headroom (VAr priority), and
reactive power relaxes toward its setpoint with a first-order lag.

Register map (all holding registers, big-endian words):

    40070  line frequency, Hz x100          read-only
    40072  AC voltage, V x10                read-only
    40076  AC current, A x100               read-only
    40083  active power, W x1               read-only
    40084  reactive power, VAr + 32768      read-only
    40232  active power limit, % x100       writable (0..10000)
    40240  reactive setpoint, % x100 +10000 writable (0..20000)

Signed quantities use offset coding rather than two's complement so every
stored word is a plain uint16.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

from .modbus import RegisterImage
from .modbus_io import ModbusTcpServer

REG_FREQUENCY = 40070
REG_VOLTAGE = 40072
REG_CURRENT = 40076
REG_ACTIVE_POWER = 40083
REG_REACTIVE_POWER = 40084
REG_ACTIVE_LIMIT = 40232
REG_REACTIVE_SETPOINT = 40240

TELEMETRY_REGISTERS = (REG_FREQUENCY, REG_VOLTAGE, REG_CURRENT, REG_ACTIVE_POWER, REG_REACTIVE_POWER)
CONTROL_REGISTERS = (REG_ACTIVE_LIMIT, REG_REACTIVE_SETPOINT)

REACTIVE_OFFSET = 32768
SETPOINT_OFFSET = 10000


def encode_reactive_setpoint(percent: float) -> int:
    """Signed percent of nameplate VA to the offset-coded register word."""
    word = round(percent * 100) + SETPOINT_OFFSET
    if not 0 <= word <= 2 * SETPOINT_OFFSET:
        raise ValueError(f"reactive setpoint {percent}% outside [-100, 100]")
    return word


def encode_active_limit(percent: float) -> int:
    word = round(percent * 100)
    if not 0 <= word <= 10000:
        raise ValueError(f"active power limit {percent}% outside [0, 100]")
    return word


@dataclass(frozen=True)
class InverterNameplate:
    rated_va: float = 5000.0
    rated_w: float = 5000.0
    nominal_voltage: float = 230.0

    def validate(self) -> None:
        if self.rated_va <= 0 or self.rated_w <= 0 or self.nominal_voltage <= 0:
            raise ValueError("nameplate values must be positive")
        if self.rated_w > self.rated_va:
            raise ValueError("rated_w cannot exceed rated_va")


@dataclass
class PlantState:
    terminal_voltage: float
    frequency: float
    available_pv_w: float
    active_power_w: float
    reactive_power_var: float
    active_limit_pct: float
    q_setpoint_pct: float


class SimulatedInverter:
    """Plant model plus live register image.

    Control-register writes (from any Modbus session) update the limit and
    setpoint immediately; telemetry registers refresh on every ``step``.
    Stepping and serving may run concurrently: both go through the image
    lock, so a reader always sees one step's consistent snapshot.
    """

    def __init__(
        self,
        nameplate: InverterNameplate | None = None,
        q_lag_tau: float = 1.0,
        initial_voltage: float | None = None,
        initial_frequency: float = 50.0,
        initial_pv_w: float = 0.0,
    ):
        self.nameplate = nameplate or InverterNameplate()
        self.nameplate.validate()
        if q_lag_tau <= 0:
            raise ValueError("q_lag_tau must be positive")
        self.q_lag_tau = q_lag_tau
        self._state_lock = threading.Lock()
        self.state = PlantState(
            terminal_voltage=initial_voltage or self.nameplate.nominal_voltage,
            frequency=initial_frequency,
            available_pv_w=initial_pv_w,
            active_power_w=0.0,
            reactive_power_var=0.0,
            active_limit_pct=100.0,
            q_setpoint_pct=0.0,
        )
        self.image = RegisterImage(writable=CONTROL_REGISTERS)
        self.image.load({
            REG_ACTIVE_LIMIT: encode_active_limit(self.state.active_limit_pct),
            REG_REACTIVE_SETPOINT: encode_reactive_setpoint(self.state.q_setpoint_pct),
        })
        self.image.validators[REG_ACTIVE_LIMIT] = lambda w: w <= 10000
        self.image.validators[REG_REACTIVE_SETPOINT] = lambda w: w <= 2 * SETPOINT_OFFSET
        self.image.on_write = self._control_written
        self._solve(dt=None)

    # -- control path

    def _control_written(self, address: int, values: list[int]) -> None:
        for offset, word in enumerate(values):
            addr = address + offset
            with self._state_lock:
                if addr == REG_ACTIVE_LIMIT:
                    self.state.active_limit_pct = word / 100.0
                elif addr == REG_REACTIVE_SETPOINT:
                    self.state.q_setpoint_pct = (word - SETPOINT_OFFSET) / 100.0
        # Power output reacts on the next step; the registers already
        # reflect the accepted control words.

    # -- plant model

    def step(
        self,
        grid_voltage: float,
        available_pv_w: float,
        dt: float,
        frequency: float | None = None,
    ) -> PlantState:
        """Advance the plant by ``dt`` seconds under the given inputs."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        with self._state_lock:
            self.state.terminal_voltage = min(max(grid_voltage, 0.0), 500.0)
            self.state.available_pv_w = max(available_pv_w, 0.0)
            if frequency is not None:
                self.state.frequency = min(max(frequency, 45.0), 65.0)
        self._solve(dt)
        return self.state

    def prime(self, grid_voltage: float, available_pv_w: float, frequency: float | None = None) -> None:
        """Set initial conditions and refresh registers without advancing time."""
        with self._state_lock:
            self.state.terminal_voltage = min(max(grid_voltage, 0.0), 500.0)
            self.state.available_pv_w = max(available_pv_w, 0.0)
            if frequency is not None:
                self.state.frequency = min(max(frequency, 45.0), 65.0)
        self._solve(dt=None)

    def _solve(self, dt: float | None) -> None:
        plate = self.nameplate
        with self._state_lock:
            s = self.state
            q_target = max(-100.0, min(100.0, s.q_setpoint_pct)) / 100.0 * plate.rated_va
            if dt is not None:
                s.reactive_power_var += (q_target - s.reactive_power_var) * (
                    1.0 - math.exp(-dt / self.q_lag_tau)
                )
            q = max(-plate.rated_va, min(plate.rated_va, s.reactive_power_var))
            s.reactive_power_var = q
            # VAr priority: active power yields to reactive headroom.
            headroom = math.sqrt(max(plate.rated_va**2 - q**2, 0.0))
            s.active_power_w = max(
                0.0,
                min(s.available_pv_w, plate.rated_w * s.active_limit_pct / 100.0, headroom),
            )
            amps = s.active_power_w / max(s.terminal_voltage, 1e-3)
            registers = {
                REG_FREQUENCY: round(s.frequency * 100),
                REG_VOLTAGE: round(s.terminal_voltage * 10),
                REG_CURRENT: min(round(amps * 100), 0xFFFF),
                REG_ACTIVE_POWER: min(round(s.active_power_w), 0xFFFF),
                REG_REACTIVE_POWER: min(max(round(s.reactive_power_var) + REACTIVE_OFFSET, 0), 0xFFFF),
            }
        self.image.load(registers)

    # -- serving

    def serve(self, host: str = "127.0.0.1", port: int = 1502) -> ModbusTcpServer:
        """Start answering Modbus requests; returns the running server."""
        return ModbusTcpServer(self.image, host, port).start()
