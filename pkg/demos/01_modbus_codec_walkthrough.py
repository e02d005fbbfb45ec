#!/usr/bin/env python3
"""Walk through the Modbus TCP codec: frames on the wire, server semantics.

Run:  python3 demos/01_modbus_codec_walkthrough.py
"""

from gridgate.modbus import (
    ExceptionCode,
    MbapHeader,
    ModbusRequest,
    RegisterImage,
    apply_request,
    decode_request,
    encode_request,
    encode_response,
)


def show(label, data: bytes):
    print(f"{label:<44} {data.hex(' ')}")


def main():
    print("== Encoding requests ==")
    header = MbapHeader(transaction_id=7, unit_id=1)
    read_power = ModbusRequest.read(40083, 1)
    frame = encode_request(read_power, header)
    show("read holding register 40083 (active power)", frame)

    header2, decoded = decode_request(frame)
    print(f"decoded back: txn={header2.transaction_id} fn={decoded.function.name} "
          f"addr={decoded.address} count={decoded.count}")

    show("write single register 40232 := 5000",
         encode_request(ModbusRequest.write(40232, 5000), MbapHeader(transaction_id=8, unit_id=1)))

    print()
    print("== A register image answering requests ==")
    image = RegisterImage(
        registers={40083: 1914, 40084: 32768, 40232: 10000},
        writable=[40232],
    )
    resp = apply_request(image, ModbusRequest.read(40083, 1))
    print(f"read 40083           -> data={list(resp.data)}")
    resp = apply_request(image, ModbusRequest.read(40083, 3))  # 40085 is a hole
    print(f"read 40083 count=3   -> exception={ExceptionCode(resp.exception).name}")
    resp = apply_request(image, ModbusRequest.write(40083, 0))  # telemetry is read-only
    print(f"write 40083          -> exception={ExceptionCode(resp.exception).name}")
    resp = apply_request(image, ModbusRequest.write(40232, 7500))
    print(f"write 40232 := 7500  -> echo addr={resp.address} value={resp.value}")

    print()
    print("== Exception frames set the high bit of the function code ==")
    exc = apply_request(image, ModbusRequest.read(50000, 1))
    show("exception response on the wire", encode_response(exc, header))


if __name__ == "__main__":
    main()
