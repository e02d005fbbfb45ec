import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from gridgate.modbus import (
    CodecError,
    ExceptionCode,
    Function,
    MbapHeader,
    ModbusRequest,
    ModbusResponse,
    RegisterImage,
    UnknownFunctionError,
    apply_request,
    decode_request,
    decode_response,
    encode_request,
    encode_response,
)

headers = st.builds(
    MbapHeader,
    transaction_id=st.integers(0, 0xFFFF),
    unit_id=st.integers(0, 0xFF),
)
read_requests = st.builds(ModbusRequest.read, st.integers(0, 0xFFFF), st.integers(1, 125))
write_requests = st.builds(ModbusRequest.write, st.integers(0, 0xFFFF), st.integers(0, 0xFFFF))
multi_write_requests = st.builds(
    ModbusRequest.write_many,
    st.integers(0, 0xFFFF),
    st.lists(st.integers(0, 0xFFFF), min_size=1, max_size=123),
)
requests = st.one_of(read_requests, write_requests, multi_write_requests)

responses = st.one_of(
    st.builds(ModbusResponse.read_data, st.lists(st.integers(0, 0xFFFF), max_size=125)),
    st.builds(ModbusResponse.write_echo, st.integers(0, 0xFFFF), st.integers(0, 0xFFFF)),
    st.builds(ModbusResponse.write_many_echo, st.integers(0, 0xFFFF), st.integers(1, 123)),
    st.builds(
        ModbusResponse.error,
        st.sampled_from(list(Function)),
        st.sampled_from(list(ExceptionCode)),
    ),
)


# -- frozen byte vectors (hand-encoded per the public framing rules)


def test_read_holding_registers_frame_bytes():
    frame = encode_request(ModbusRequest.read(40083, 1), MbapHeader(transaction_id=7, unit_id=1))
    assert frame == bytes.fromhex("00 07 00 00 00 06 01 03 9C 93 00 01".replace(" ", ""))


def test_write_single_register_all_zero_frame():
    frame = encode_request(ModbusRequest.write(0, 0), MbapHeader(transaction_id=0, unit_id=0))
    assert frame == bytes.fromhex("00 00 00 00 00 06 00 06 00 00 00 00".replace(" ", ""))


def test_read_count_zero_rejected():
    with pytest.raises(CodecError):
        encode_request(ModbusRequest.read(40083, 0), MbapHeader(transaction_id=1))


def test_read_count_above_max_rejected():
    with pytest.raises(CodecError):
        encode_request(ModbusRequest.read(0, 126), MbapHeader(transaction_id=1))


def test_multi_write_counts():
    with pytest.raises(CodecError):
        encode_request(ModbusRequest.write_many(0, []), MbapHeader(transaction_id=1))
    with pytest.raises(CodecError):
        encode_request(ModbusRequest.write_many(0, [0] * 124), MbapHeader(transaction_id=1))


def test_decode_rejects_nonzero_protocol_id():
    frame = bytearray(
        encode_request(ModbusRequest.read(40083, 1), MbapHeader(transaction_id=7, unit_id=1))
    )
    frame[2:4] = b"\x00\x01"
    with pytest.raises(CodecError):
        decode_request(bytes(frame))


def test_decode_rejects_truncated_frame():
    frame = encode_request(ModbusRequest.read(40083, 1), MbapHeader(transaction_id=7, unit_id=1))
    with pytest.raises(CodecError):
        decode_request(frame[:-1])


def test_decode_unknown_function_is_flagged():
    frame = bytearray(
        encode_request(ModbusRequest.read(1, 1), MbapHeader(transaction_id=9, unit_id=2))
    )
    frame[7] = 0x2B
    with pytest.raises(UnknownFunctionError) as excinfo:
        decode_request(bytes(frame))
    assert excinfo.value.function == 0x2B
    assert excinfo.value.header.transaction_id == 9


def test_exception_response_sets_high_bit():
    resp = ModbusResponse.error(Function.READ_HOLDING_REGISTERS, ExceptionCode.ILLEGAL_DATA_ADDRESS)
    frame = encode_response(resp, MbapHeader(transaction_id=3, unit_id=1))
    assert frame[7] == 0x03 | 0x80
    assert frame[8] == 2


# -- round-trip properties


@settings(max_examples=300)
@given(req=requests, header=headers)
def test_request_round_trip(req, header):
    assert decode_request(encode_request(req, header)) == (header, req)


@settings(max_examples=300)
@given(resp=responses, header=headers)
def test_response_round_trip(resp, header):
    assert decode_response(encode_response(resp, header)) == (header, resp)


# -- register image semantics


@pytest.fixture
def image():
    img = RegisterImage(
        registers={40070: 5000, 40083: 1914, 40084: 32768, 40232: 10000},
        writable=[40232],
    )
    img.validators[40232] = lambda w: w <= 10000
    return img


def test_read_returns_current_words(image):
    resp = apply_request(image, ModbusRequest.read(40083, 1))
    assert resp.data == (1914,)
    assert not resp.is_exception


def test_read_hole_is_illegal_data_address(image):
    resp = apply_request(image, ModbusRequest.read(40083, 3))  # 40085 unpopulated
    assert resp.exception is ExceptionCode.ILLEGAL_DATA_ADDRESS


def test_write_read_only_is_illegal_data_address(image):
    resp = apply_request(image, ModbusRequest.write(40070, 1))
    assert resp.exception is ExceptionCode.ILLEGAL_DATA_ADDRESS


def test_write_echo_and_effect(image):
    resp = apply_request(image, ModbusRequest.write(40232, 7500))
    assert (resp.address, resp.value) == (40232, 7500)
    assert apply_request(image, ModbusRequest.read(40232, 1)).data == (7500,)


def test_validator_rejects_out_of_range_value(image):
    resp = apply_request(image, ModbusRequest.write(40232, 10001))
    assert resp.exception is ExceptionCode.ILLEGAL_DATA_VALUE
    assert image.get(40232) == 10000


def test_malformed_count_is_illegal_data_value(image):
    resp = apply_request(image, ModbusRequest.read(40083, 0))
    assert resp.exception is ExceptionCode.ILLEGAL_DATA_VALUE


def test_reads_never_mutate_image(image):
    before = image.snapshot()
    apply_request(image, ModbusRequest.read(40070, 1))
    apply_request(image, ModbusRequest.read(40083, 2))
    apply_request(image, ModbusRequest.read(50000, 1))
    assert image.snapshot() == before


def test_image_unchanged_on_any_exception(image):
    before = image.snapshot()
    for req in (
        ModbusRequest.write(40070, 1),
        ModbusRequest.write(40232, 60000),
        ModbusRequest.write_many(40232, [1, 2]),  # 40233 not writable
    ):
        resp = apply_request(image, req)
        assert resp.is_exception
        assert image.snapshot() == before


def test_response_never_carries_data_and_exception(image):
    for req in (
        ModbusRequest.read(40083, 1),
        ModbusRequest.read(49999, 1),
        ModbusRequest.write(40232, 1),
        ModbusRequest.write(40070, 1),
    ):
        resp = apply_request(image, req)
        assert (resp.exception is None) or (resp.data is None)


def test_on_write_hook_sees_accepted_values(image):
    seen = []
    image.on_write = lambda addr, values: seen.append((addr, values))
    apply_request(image, ModbusRequest.write(40232, 4200))
    apply_request(image, ModbusRequest.write(40232, 60000))  # rejected, no hook
    assert seen == [(40232, [4200])]
