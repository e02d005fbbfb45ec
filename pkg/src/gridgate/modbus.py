"""Modbus TCP codec and register-image model.

Covers the holding-register subset smart inverters actually use:
0x03 read holding registers, 0x06 write single register and 0x10 write
multiple registers. Frames are MBAP header + PDU, every multi-byte field
big-endian. Codec functions are pure; :class:`RegisterImage` holds the
server-side address space and executes requests against it.
"""

from __future__ import annotations

import struct
import threading
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Iterable, Mapping

MAX_READ_COUNT = 125
MAX_WRITE_COUNT = 123
MBAP_SIZE = 7


class Function(IntEnum):
    READ_HOLDING_REGISTERS = 0x03
    WRITE_SINGLE_REGISTER = 0x06
    WRITE_MULTIPLE_REGISTERS = 0x10


class ExceptionCode(IntEnum):
    ILLEGAL_FUNCTION = 1
    ILLEGAL_DATA_ADDRESS = 2
    ILLEGAL_DATA_VALUE = 3


class CodecError(ValueError):
    """Frame violates the wire format and cannot be encoded/decoded."""


class UnknownFunctionError(CodecError):
    """Well-formed frame carrying a function code we do not implement.

    Servers turn this into an ILLEGAL_FUNCTION exception response, so the
    offending header and code ride along.
    """

    def __init__(self, header: "MbapHeader", function: int):
        super().__init__(f"unsupported function code 0x{function:02X}")
        self.header = header
        self.function = function


def _check_u16(value: int, what: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or not 0 <= value <= 0xFFFF:
        raise CodecError(f"{what} out of uint16 range: {value!r}")
    return value


def _check_u8(value: int, what: str) -> int:
    if not isinstance(value, int) or not 0 <= value <= 0xFF:
        raise CodecError(f"{what} out of uint8 range: {value!r}")
    return value


@dataclass(frozen=True)
class MbapHeader:
    transaction_id: int
    unit_id: int = 0
    protocol_id: int = 0

    def validate(self) -> None:
        _check_u16(self.transaction_id, "transaction_id")
        _check_u8(self.unit_id, "unit_id")
        if self.protocol_id != 0:
            raise CodecError(f"protocol_id must be 0, got {self.protocol_id}")


@dataclass(frozen=True)
class ModbusRequest:
    function: Function
    address: int
    count: int | None = None
    value: int | None = None
    values: tuple[int, ...] | None = None

    @classmethod
    def read(cls, address: int, count: int) -> "ModbusRequest":
        return cls(Function.READ_HOLDING_REGISTERS, address, count=count)

    @classmethod
    def write(cls, address: int, value: int) -> "ModbusRequest":
        return cls(Function.WRITE_SINGLE_REGISTER, address, value=value)

    @classmethod
    def write_many(cls, address: int, values: Iterable[int]) -> "ModbusRequest":
        vals = tuple(values)
        return cls(Function.WRITE_MULTIPLE_REGISTERS, address, count=len(vals), values=vals)

    def validate(self) -> None:
        _check_u16(self.address, "address")
        if self.function is Function.READ_HOLDING_REGISTERS:
            if self.count is None or not 1 <= self.count <= MAX_READ_COUNT:
                raise CodecError(f"read count must be in [1, {MAX_READ_COUNT}], got {self.count}")
        elif self.function is Function.WRITE_SINGLE_REGISTER:
            if self.value is None:
                raise CodecError("write_single requires a value")
            _check_u16(self.value, "value")
        elif self.function is Function.WRITE_MULTIPLE_REGISTERS:
            if not self.values or not 1 <= len(self.values) <= MAX_WRITE_COUNT:
                raise CodecError(
                    f"write count must be in [1, {MAX_WRITE_COUNT}], got "
                    f"{0 if not self.values else len(self.values)}"
                )
            if self.count is not None and self.count != len(self.values):
                raise CodecError("count does not match number of values")
            for v in self.values:
                _check_u16(v, "value")
        else:  # pragma: no cover - Function enum is closed
            raise CodecError(f"unsupported function {self.function}")


@dataclass(frozen=True)
class ModbusResponse:
    """Either a data/echo response or an exception, never both."""

    function: int
    data: tuple[int, ...] | None = None
    address: int | None = None
    value: int | None = None
    count: int | None = None
    exception: ExceptionCode | None = None

    @classmethod
    def read_data(cls, words: Iterable[int]) -> "ModbusResponse":
        return cls(Function.READ_HOLDING_REGISTERS, data=tuple(words))

    @classmethod
    def write_echo(cls, address: int, value: int) -> "ModbusResponse":
        return cls(Function.WRITE_SINGLE_REGISTER, address=address, value=value)

    @classmethod
    def write_many_echo(cls, address: int, count: int) -> "ModbusResponse":
        return cls(Function.WRITE_MULTIPLE_REGISTERS, address=address, count=count)

    @classmethod
    def error(cls, function: int, code: ExceptionCode) -> "ModbusResponse":
        return cls(function, exception=ExceptionCode(code))

    @property
    def is_exception(self) -> bool:
        return self.exception is not None


# ---------------------------------------------------------------------------
# Codec


def _encode_request_pdu(req: ModbusRequest) -> bytes:
    req.validate()
    if req.function is Function.READ_HOLDING_REGISTERS:
        return struct.pack(">BHH", req.function, req.address, req.count)
    if req.function is Function.WRITE_SINGLE_REGISTER:
        return struct.pack(">BHH", req.function, req.address, req.value)
    payload = b"".join(struct.pack(">H", v) for v in req.values)
    return struct.pack(">BHHB", req.function, req.address, len(req.values), len(payload)) + payload


def encode_request(req: ModbusRequest, header: MbapHeader) -> bytes:
    """Serialize request as MBAP + PDU. MBAP length counts unit id + PDU."""
    header.validate()
    pdu = _encode_request_pdu(req)
    mbap = struct.pack(">HHHB", header.transaction_id, 0, len(pdu) + 1, header.unit_id)
    return mbap + pdu


def encode_response(resp: ModbusResponse, header: MbapHeader) -> bytes:
    header.validate()
    if resp.exception is not None:
        pdu = struct.pack(">BB", (resp.function & 0x7F) | 0x80, resp.exception)
    elif resp.function == Function.READ_HOLDING_REGISTERS:
        words = resp.data or ()
        pdu = struct.pack(">BB", resp.function, 2 * len(words))
        pdu += b"".join(struct.pack(">H", _check_u16(w, "word")) for w in words)
    elif resp.function == Function.WRITE_SINGLE_REGISTER:
        pdu = struct.pack(">BHH", resp.function, resp.address, resp.value)
    elif resp.function == Function.WRITE_MULTIPLE_REGISTERS:
        pdu = struct.pack(">BHH", resp.function, resp.address, resp.count)
    else:
        raise CodecError(f"cannot encode response for function 0x{resp.function:02X}")
    mbap = struct.pack(">HHHB", header.transaction_id, 0, len(pdu) + 1, header.unit_id)
    return mbap + pdu


def _split_frame(data: bytes) -> tuple[MbapHeader, bytes]:
    if len(data) < MBAP_SIZE + 1:
        raise CodecError(f"frame truncated: {len(data)} bytes")
    txn, proto, length, unit = struct.unpack(">HHHB", data[:MBAP_SIZE])
    if proto != 0:
        raise CodecError(f"protocol_id must be 0, got {proto}")
    if length != len(data) - 6:
        raise CodecError(f"MBAP length {length} does not match frame size {len(data)}")
    return MbapHeader(transaction_id=txn, unit_id=unit), data[MBAP_SIZE:]


def decode_request(data: bytes) -> tuple[MbapHeader, ModbusRequest]:
    """Inverse of :func:`encode_request`; round-trip identity holds."""
    header, pdu = _split_frame(data)
    fc = pdu[0]
    try:
        function = Function(fc)
    except ValueError:
        raise UnknownFunctionError(header, fc) from None
    if function is Function.READ_HOLDING_REGISTERS:
        if len(pdu) != 5:
            raise CodecError("bad read request length")
        address, count = struct.unpack(">HH", pdu[1:5])
        req = ModbusRequest.read(address, count)
    elif function is Function.WRITE_SINGLE_REGISTER:
        if len(pdu) != 5:
            raise CodecError("bad write request length")
        address, value = struct.unpack(">HH", pdu[1:5])
        req = ModbusRequest.write(address, value)
    else:
        if len(pdu) < 6:
            raise CodecError("bad multi-write request length")
        address, count, byte_count = struct.unpack(">HHB", pdu[1:6])
        if byte_count != 2 * count or len(pdu) != 6 + byte_count:
            raise CodecError("multi-write byte count mismatch")
        values = struct.unpack(f">{count}H", pdu[6:])
        req = ModbusRequest.write_many(address, values)
    req.validate()
    return header, req


def decode_response(data: bytes) -> tuple[MbapHeader, ModbusResponse]:
    header, pdu = _split_frame(data)
    fc = pdu[0]
    if fc & 0x80:
        if len(pdu) != 2:
            raise CodecError("bad exception response length")
        try:
            code = ExceptionCode(pdu[1])
        except ValueError:
            raise CodecError(f"unknown exception code {pdu[1]}") from None
        return header, ModbusResponse.error(fc & 0x7F, code)
    if fc == Function.READ_HOLDING_REGISTERS:
        if len(pdu) < 2 or pdu[1] != len(pdu) - 2 or pdu[1] % 2:
            raise CodecError("bad read response byte count")
        words = struct.unpack(f">{pdu[1] // 2}H", pdu[2:])
        return header, ModbusResponse.read_data(words)
    if fc == Function.WRITE_SINGLE_REGISTER:
        if len(pdu) != 5:
            raise CodecError("bad write echo length")
        address, value = struct.unpack(">HH", pdu[1:5])
        return header, ModbusResponse.write_echo(address, value)
    if fc == Function.WRITE_MULTIPLE_REGISTERS:
        if len(pdu) != 5:
            raise CodecError("bad multi-write echo length")
        address, count = struct.unpack(">HH", pdu[1:5])
        return header, ModbusResponse.write_many_echo(address, count)
    raise CodecError(f"cannot decode response function 0x{fc:02X}")


# ---------------------------------------------------------------------------
# Register image


class RegisterImage:
    """Holding-register address space with a writable subset.

    Reads of unpopulated addresses and writes outside ``writable`` fail with
    the matching Modbus exception. Optional per-address validators reject
    out-of-range control values with ILLEGAL_DATA_VALUE, and ``on_write``
    lets a device model react to control writes immediately. All access is
    serialized on an internal lock; a request is applied atomically (the
    image is untouched when an exception response is returned).
    """

    def __init__(
        self,
        registers: Mapping[int, int] | None = None,
        writable: Iterable[int] = (),
    ):
        self._registers: dict[int, int] = {}
        for addr, word in (registers or {}).items():
            self._registers[_check_u16(addr, "address")] = _check_u16(word, "word")
        self.writable: set[int] = {_check_u16(a, "address") for a in writable}
        self.validators: dict[int, Callable[[int], bool]] = {}
        self.on_write: Callable[[int, list[int]], None] | None = None
        self.lock = threading.RLock()

    def __contains__(self, address: int) -> bool:
        return address in self._registers

    def get(self, address: int) -> int:
        with self.lock:
            return self._registers[address]

    def snapshot(self) -> dict[int, int]:
        with self.lock:
            return dict(self._registers)

    def load(self, values: Mapping[int, int]) -> None:
        """Bulk-populate registers (device model refresh), one atomic step."""
        with self.lock:
            for addr, word in values.items():
                self._registers[_check_u16(addr, "address")] = _check_u16(word, "word")

    def apply(self, req: ModbusRequest) -> ModbusResponse:
        try:
            req.validate()
        except CodecError:
            return ModbusResponse.error(req.function, ExceptionCode.ILLEGAL_DATA_VALUE)

        with self.lock:
            if req.function is Function.READ_HOLDING_REGISTERS:
                span = range(req.address, req.address + req.count)
                if any(a not in self._registers for a in span):
                    return ModbusResponse.error(req.function, ExceptionCode.ILLEGAL_DATA_ADDRESS)
                return ModbusResponse.read_data(self._registers[a] for a in span)

            if req.function is Function.WRITE_SINGLE_REGISTER:
                writes = {req.address: req.value}
            else:
                writes = {req.address + i: v for i, v in enumerate(req.values)}

            # Validate every target before mutating anything.
            for addr in writes:
                if addr not in self._registers or addr not in self.writable:
                    return ModbusResponse.error(req.function, ExceptionCode.ILLEGAL_DATA_ADDRESS)
            for addr, value in writes.items():
                check = self.validators.get(addr)
                if check is not None and not check(value):
                    return ModbusResponse.error(req.function, ExceptionCode.ILLEGAL_DATA_VALUE)

            self._registers.update(writes)
            hook = self.on_write

        if hook is not None:
            hook(req.address, list(writes.values()))
        if req.function is Function.WRITE_SINGLE_REGISTER:
            return ModbusResponse.write_echo(req.address, req.value)
        return ModbusResponse.write_many_echo(req.address, len(req.values))


def apply_request(image: RegisterImage, req: ModbusRequest) -> ModbusResponse:
    """Execute a request against an image per Modbus server rules."""
    return image.apply(req)
