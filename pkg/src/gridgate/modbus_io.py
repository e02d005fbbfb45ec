"""Modbus TCP transport: threaded server, blocking client, in-process link.

One TCP connection per client session, no pipelining: the server reads a
request, answers it, then reads the next. The in-process client exists so
a simulation can talk to a register image without sockets while keeping
the exact client API.
"""

from __future__ import annotations

import socket
import socketserver
import struct
import threading

from .modbus import (
    CodecError,
    ExceptionCode,
    MbapHeader,
    ModbusRequest,
    ModbusResponse,
    RegisterImage,
    UnknownFunctionError,
    decode_request,
    decode_response,
    encode_request,
    encode_response,
)

DEFAULT_PORT = 1502


class ModbusIOError(ConnectionError):
    """Transport-level failure: timeout, refused or dropped connection."""


class ModbusExceptionResponse(Exception):
    """Server answered with a Modbus exception."""

    def __init__(self, code: ExceptionCode, function: int):
        super().__init__(f"modbus exception {ExceptionCode(code).name} (function 0x{function:02X})")
        self.code = ExceptionCode(code)
        self.function = function


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ModbusIOError("connection closed mid-frame" if buf else "connection closed")
        buf += chunk
    return buf


def _read_frame(sock: socket.socket) -> bytes:
    head = _recv_exact(sock, 6)
    _, _, length = struct.unpack(">HHH", head)
    return head + _recv_exact(sock, length)


class _Handler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        image: RegisterImage = self.server.image  # type: ignore[attr-defined]
        sock: socket.socket = self.request
        while True:
            try:
                frame = _read_frame(sock)
            except (ModbusIOError, OSError):
                return
            try:
                header, req = decode_request(frame)
            except UnknownFunctionError as exc:
                resp = ModbusResponse.error(exc.function, ExceptionCode.ILLEGAL_FUNCTION)
                sock.sendall(encode_response(resp, exc.header))
                continue
            except CodecError:
                return  # unrecoverable framing problem, drop the session
            resp = image.apply(req)
            try:
                sock.sendall(encode_response(resp, header))
            except OSError:
                return


class ModbusTcpServer:
    """Serves one register image; ``image.lock`` serializes requests."""

    def __init__(self, image: RegisterImage, host: str = "127.0.0.1", port: int = DEFAULT_PORT):
        self.image = image

        class _Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._server = _Server((host, port), _Handler)
        self._server.image = image  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def start(self) -> "ModbusTcpServer":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread:
            self._thread.join(timeout=5)

    def __enter__(self) -> "ModbusTcpServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


class ModbusTcpClient:
    """Blocking client; transaction ids increment per session."""

    def __init__(self, host: str, port: int = DEFAULT_PORT, unit_id: int = 1, timeout: float = 2.0):
        self.host = host
        self.port = port
        self.unit_id = unit_id
        self.timeout = timeout
        self._sock: socket.socket | None = None
        self._txn = 0
        self._lock = threading.Lock()

    def connect(self) -> None:
        if self._sock is not None:
            return
        try:
            self._sock = socket.create_connection((self.host, self.port), timeout=self.timeout)
        except OSError as exc:
            raise ModbusIOError(f"connect to {self.host}:{self.port} failed: {exc}") from exc

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            finally:
                self._sock = None

    def __enter__(self) -> "ModbusTcpClient":
        self.connect()
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _roundtrip(self, req: ModbusRequest) -> ModbusResponse:
        with self._lock:
            self.connect()
            self._txn = (self._txn + 1) & 0xFFFF
            header = MbapHeader(transaction_id=self._txn, unit_id=self.unit_id)
            try:
                self._sock.sendall(encode_request(req, header))
                frame = _read_frame(self._sock)
            except (socket.timeout, TimeoutError) as exc:
                self.close()
                raise ModbusIOError(f"modbus request timed out after {self.timeout}s") from exc
            except OSError as exc:
                self.close()
                raise ModbusIOError(f"modbus i/o failed: {exc}") from exc
            resp_header, resp = decode_response(frame)
            if resp_header.transaction_id != header.transaction_id:
                self.close()
                raise ModbusIOError(
                    f"transaction id mismatch: sent {header.transaction_id}, "
                    f"got {resp_header.transaction_id}"
                )
            if resp.is_exception:
                raise ModbusExceptionResponse(resp.exception, resp.function)
            return resp

    def read_registers(self, address: int, count: int) -> list[int]:
        resp = self._roundtrip(ModbusRequest.read(address, count))
        return list(resp.data)

    def write_register(self, address: int, value: int) -> tuple[int, int]:
        resp = self._roundtrip(ModbusRequest.write(address, value))
        return resp.address, resp.value

    def write_registers(self, address: int, values: list[int]) -> tuple[int, int]:
        resp = self._roundtrip(ModbusRequest.write_many(address, values))
        return resp.address, resp.count


class InProcessModbusClient:
    """Client API over a local register image, for virtual-time runs."""

    def __init__(self, image: RegisterImage):
        self.image = image

    def connect(self) -> None:  # interface parity with ModbusTcpClient
        pass

    def close(self) -> None:
        pass

    def _apply(self, req: ModbusRequest) -> ModbusResponse:
        resp = self.image.apply(req)
        if resp.is_exception:
            raise ModbusExceptionResponse(resp.exception, resp.function)
        return resp

    def read_registers(self, address: int, count: int) -> list[int]:
        return list(self._apply(ModbusRequest.read(address, count)).data)

    def write_register(self, address: int, value: int) -> tuple[int, int]:
        resp = self._apply(ModbusRequest.write(address, value))
        return resp.address, resp.value

    def write_registers(self, address: int, values: list[int]) -> tuple[int, int]:
        resp = self._apply(ModbusRequest.write_many(address, values))
        return resp.address, resp.count
