import struct
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsnbridge.frames import (
    ETH_P_GPTP,
    ETH_P_IPV4,
    FOLLOW_UP_LEN,
    GPTP_MCAST_MAC,
    SYNC_LEN,
    CoreDatagram,
    EthernetFrame,
    FrameError,
    GptpMessage,
    GptpResidenceHeader,
    GtpuHeader,
    MalformedHeaderError,
    MessageType,
    Protocol,
    UnsupportedMessageError,
    VlanTag,
    correction_to_ns,
    decode_datagram,
    decode_frame,
    decode_gptp,
    decode_gtpu,
    encode_datagram,
    encode_frame,
    encode_gptp,
    encode_gtpu,
    ns_to_correction,
    unwrap_residence,
    wrap_residence,
)

CASES = settings(max_examples=10_000, deadline=None)
GOLDEN = Path(__file__).parent / "data" / "frames_golden.hex"

macs = st.binary(min_size=6, max_size=6)
ethertypes = st.integers(0, 0xFFFF).filter(lambda e: e != 0x8100)
vlans = st.one_of(st.none(), st.builds(VlanTag, st.integers(0, 7), st.integers(0, 1), st.integers(0, 4095)))
frames = st.builds(EthernetFrame, macs, macs, ethertypes, st.binary(max_size=256), vlans)
gptp_msgs = st.builds(
    GptpMessage,
    st.sampled_from(list(MessageType)),
    st.integers(0, 0xFFFF),
    st.integers(-(2**63), 2**63 - 1),
    st.integers(0, 2**64 - 1),
    st.integers(0, 255),
)
u32 = st.integers(0, 0xFFFFFFFF)
ports = st.integers(0, 0xFFFF)
udp_dgrams = st.builds(
    CoreDatagram, u32, u32, st.integers(0, 63), st.just(Protocol.UDP), ports, ports, st.binary(max_size=512)
)
raw_dgrams = st.builds(CoreDatagram, u32, u32, st.integers(0, 63), st.just(Protocol.RAW), st.just(0), st.just(0),
                       st.binary(max_size=512))
gtpu_headers = st.builds(GtpuHeader, u32, st.integers(0, 63), st.integers(0, 1))


@CASES
@given(frames)
def test_ethernet_roundtrip(frame):
    assert decode_frame(encode_frame(frame)) == frame


@CASES
@given(gptp_msgs)
def test_gptp_roundtrip(msg):
    raw = encode_gptp(msg)
    assert len(raw) == (SYNC_LEN if msg.message_type is MessageType.SYNC else FOLLOW_UP_LEN)
    assert decode_gptp(raw) == msg


@CASES
@given(st.one_of(udp_dgrams, raw_dgrams))
def test_datagram_roundtrip(dgram):
    assert decode_datagram(encode_datagram(dgram)) == dgram


@CASES
@given(gtpu_headers, st.binary(max_size=512))
def test_gtpu_roundtrip(header, payload):
    assert decode_gtpu(encode_gtpu(header, payload)) == (header, payload)


@CASES
@given(st.integers(0, 2**64 - 1), st.integers(0, 0xFFFF), gptp_msgs)
def test_residence_roundtrip(ingress, port, msg):
    frame = encode_frame(EthernetFrame(GPTP_MCAST_MAC, bytes(6), ETH_P_GPTP, encode_gptp(msg)))
    header, inner = unwrap_residence(wrap_residence(frame, ingress, port))
    assert header == GptpResidenceHeader(ingress, port)
    assert inner == frame


def _sample_encodings():
    sync = encode_gptp(GptpMessage(MessageType.SYNC, 7, 123 << 16, 0))
    fu = encode_gptp(GptpMessage(MessageType.FOLLOW_UP, 7, 0, 125_000_000))
    dgram = encode_datagram(CoreDatagram(0x0A000001, 0x0A000101, 6, Protocol.UDP, 5000, 5000, b"x" * 100))
    gtpu = encode_gtpu(GtpuHeader(0x1000, 6), dgram)
    frame = encode_frame(EthernetFrame(GPTP_MCAST_MAC, bytes(6), ETH_P_GPTP, sync))
    return {
        "gptp-sync": (sync, decode_gptp),
        "gptp-follow-up": (fu, decode_gptp),
        "datagram": (dgram, decode_datagram),
        "gtpu": (gtpu, decode_gtpu),
        "residence": (wrap_residence(frame, 5, 1), unwrap_residence),
    }


@pytest.mark.parametrize("name", list(_sample_encodings()))
def test_every_truncation_raises_frame_error(name):
    raw, decode = _sample_encodings()[name]
    minimum = 10 if name == "residence" else len(raw)
    for cut in range(minimum):
        with pytest.raises(FrameError):
            decode(raw[:cut])


def test_ethernet_truncation_only_shortens_payload():
    raw = encode_frame(EthernetFrame(bytes(6), bytes(6), ETH_P_IPV4, b"abcdef", VlanTag(6)))
    for cut in range(18):
        with pytest.raises(FrameError):
            decode_frame(raw[:cut])
    for cut in range(18, len(raw) + 1):
        assert decode_frame(raw[:cut]).payload == raw[18:cut]


@settings(max_examples=2_000, deadline=None)
@given(st.binary(max_size=200))
def test_decoders_only_raise_frame_errors_on_garbage(data):
    for decode in (decode_frame, decode_gptp, decode_datagram, decode_gtpu, unwrap_residence):
        try:
            decode(data)
        except FrameError:
            pass


def test_vlan_tci_layout():
    raw = encode_frame(EthernetFrame(bytes(6), bytes(6), ETH_P_IPV4, b"", VlanTag(6, 0, 5)))
    assert raw[12:16] == bytes.fromhex("8100c005")
    assert VlanTag.from_tci(0xC005) == VlanTag(6, 0, 5)


def test_untagged_frame_is_best_effort():
    assert EthernetFrame(bytes(6), bytes(6), ETH_P_IPV4).pcp == 0


def test_sync_layout_and_correction_offset():
    raw = encode_gptp(GptpMessage(MessageType.SYNC, 0x0102, 0x0000_0001_0000_0000, 0))
    assert raw[0] == 0x10 and raw[1] == 0x02
    assert struct.unpack_from("!H", raw, 2)[0] == 44
    assert raw[8:16] == bytes.fromhex("0000000100000000")
    assert raw[30:32] == b"\x01\x02"


def test_correction_units():
    assert ns_to_correction(2_499_852) == 2_499_852 * 65536
    assert correction_to_ns(ns_to_correction(1)) == 1.0


def test_unsupported_message_type():
    raw = bytearray(encode_gptp(GptpMessage(MessageType.SYNC, 1)))
    raw[0] = (raw[0] & 0xF0) | 0xB  # Announce
    with pytest.raises(UnsupportedMessageError):
        decode_gptp(bytes(raw))


def test_correction_overflow_is_checked():
    msg = GptpMessage(MessageType.SYNC, 0, 2**63 - 10)
    with pytest.raises(OverflowError):
        msg.add_correction(11)
    assert msg.add_correction(9).correction_field == 2**63 - 1


def test_residence_header_too_short():
    with pytest.raises(MalformedHeaderError):
        unwrap_residence(b"\x00" * 9)


def test_wrap_requires_gptp_frame():
    data = encode_frame(EthernetFrame(bytes(6), bytes(6), ETH_P_IPV4, b"hi"))
    with pytest.raises(ValueError):
        wrap_residence(data, 0, 1)


def test_gtpu_carries_qfi_in_pdu_session_container():
    raw = encode_gtpu(GtpuHeader(0xDEADBEEF, 6, 0), b"")
    assert raw[0] == 0x34 and raw[1] == 0xFF
    assert raw[11] == 0x85
    assert raw[14] & 0x3F == 6


def golden_frames():
    sync = GptpMessage(MessageType.SYNC, 3, 0, 0)
    fu = GptpMessage(MessageType.FOLLOW_UP, 3, 163_830_595_584, 375_000_000)
    a = bytes.fromhex("02000000a001")
    dgram = CoreDatagram(0x0A000001, 0x0A000101, 0, Protocol.UDP, 5000, 5000, struct.pack("!Q", 42) + bytes(92))
    return [
        encode_frame(EthernetFrame(GPTP_MCAST_MAC, a, ETH_P_GPTP, encode_gptp(sync))),
        encode_frame(EthernetFrame(GPTP_MCAST_MAC, a, ETH_P_GPTP, encode_gptp(fu))),
        encode_frame(EthernetFrame(bytes.fromhex("0200000b0000"), a, ETH_P_IPV4, encode_datagram(dgram), VlanTag(6))),
        encode_datagram(dgram),
        encode_gtpu(GtpuHeader(0x1000, 6), encode_datagram(dgram)),
        wrap_residence(encode_frame(EthernetFrame(GPTP_MCAST_MAC, a, ETH_P_GPTP, encode_gptp(sync))), 375_050_094, 1),
    ]


def test_golden_encodings_are_stable():
    expected = [bytes.fromhex(line) for line in GOLDEN.read_text().split()]
    assert golden_frames() == expected
