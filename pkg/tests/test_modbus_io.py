import socket
import struct
import threading

import pytest

from gridgate.modbus import ExceptionCode, MbapHeader, ModbusRequest, RegisterImage, encode_request
from gridgate.modbus_io import (
    InProcessModbusClient,
    ModbusExceptionResponse,
    ModbusIOError,
    ModbusTcpClient,
    ModbusTcpServer,
)


@pytest.fixture
def served_image():
    image = RegisterImage(registers={40072: 2300, 40232: 10000}, writable=[40232])
    with ModbusTcpServer(image, "127.0.0.1", 0) as server:
        host, port = server.address
        yield image, host, port


def test_read_and_write_round_trip(served_image):
    _, host, port = served_image
    with ModbusTcpClient(host, port) as client:
        assert client.read_registers(40072, 1) == [2300]
        assert client.write_register(40232, 7500) == (40232, 7500)
        assert client.read_registers(40232, 1) == [7500]


def test_transaction_ids_increment_per_session(served_image):
    _, host, port = served_image
    with ModbusTcpClient(host, port) as client:
        client.read_registers(40072, 1)
        client.read_registers(40072, 1)
        assert client._txn == 2


def test_server_echoes_request_transaction_id(served_image):
    _, host, port = served_image
    frame = encode_request(ModbusRequest.read(40072, 1), MbapHeader(transaction_id=0x1234, unit_id=5))
    with socket.create_connection((host, port), timeout=2) as sock:
        sock.sendall(frame)
        reply = sock.recv(256)
    txn, _, _ = struct.unpack(">HHH", reply[:6])
    assert txn == 0x1234
    assert reply[6] == 5  # unit id preserved too


def test_exception_response_surfaces_as_typed_error(served_image):
    _, host, port = served_image
    with ModbusTcpClient(host, port) as client:
        with pytest.raises(ModbusExceptionResponse) as excinfo:
            client.read_registers(41000, 1)
        assert excinfo.value.code is ExceptionCode.ILLEGAL_DATA_ADDRESS


def test_unknown_function_answered_with_illegal_function(served_image):
    _, host, port = served_image
    frame = bytearray(encode_request(ModbusRequest.read(40072, 1), MbapHeader(transaction_id=2)))
    frame[7] = 0x2B
    with socket.create_connection((host, port), timeout=2) as sock:
        sock.sendall(bytes(frame))
        reply = sock.recv(256)
    assert reply[7] == 0x2B | 0x80
    assert reply[8] == ExceptionCode.ILLEGAL_FUNCTION


def test_closed_port_raises_io_error():
    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    _, free_port = probe.getsockname()
    probe.close()
    client = ModbusTcpClient("127.0.0.1", free_port, timeout=0.5)
    with pytest.raises(ModbusIOError):
        client.read_registers(40072, 1)


def test_silent_server_times_out():
    listener = socket.socket()
    listener.bind(("127.0.0.1", 0))
    listener.listen(1)
    _, port = listener.getsockname()
    accepted = []
    threading.Thread(target=lambda: accepted.append(listener.accept()), daemon=True).start()
    client = ModbusTcpClient("127.0.0.1", port, timeout=0.3)
    try:
        with pytest.raises(ModbusIOError):
            client.read_registers(40072, 1)
    finally:
        client.close()
        listener.close()


def test_concurrent_sessions(served_image):
    _, host, port = served_image
    errors = []

    def worker():
        try:
            with ModbusTcpClient(host, port) as client:
                for _ in range(20):
                    assert client.read_registers(40072, 1) == [2300]
        except Exception as exc:  # noqa: BLE001
            errors.append(exc)

    threads = [threading.Thread(target=worker) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors


def test_in_process_client_matches_tcp_semantics():
    image = RegisterImage(registers={40072: 2300, 40232: 0}, writable=[40232])
    client = InProcessModbusClient(image)
    assert client.read_registers(40072, 1) == [2300]
    assert client.write_register(40232, 7500) == (40232, 7500)
    with pytest.raises(ModbusExceptionResponse):
        client.write_register(40072, 1)
