"""Byte-level codecs for every format the bridge touches.

Layouts
-------
Ethernet II        dst(6) src(6) [0x8100 TCI(2)] ethertype(2) payload      (no FCS)
gPTP Sync          34-byte PTP common header + 10-byte originTimestamp      = 44
gPTP Follow_Up     34-byte header + 10-byte preciseOriginTimestamp
                   + 32-byte Follow_Up information TLV                      = 76
Core datagram      IPv4 header (IHL 5, checksum 0) [+ UDP header, checksum 0]
GTP-U              8-byte G-PDU header + seq/N-PDU/next-type word
                   + one PDU Session Container extension carrying the QFI  = 16
Residence header   ingress timestamp u64 BE ns + origin port id u16 BE     = 10
"""

from __future__ import annotations

import enum
import ipaddress
import struct
from dataclasses import dataclass, field, replace

ETH_P_8021Q = 0x8100
ETH_P_IPV4 = 0x0800
ETH_P_GPTP = 0x88F7

GPTP_MCAST_MAC = bytes.fromhex("0180c200000e")
GPTP_EVENT_PORT = 30001
GTPU_PORT = 2152

INT64_MIN = -(1 << 63)
INT64_MAX = (1 << 63) - 1
UINT64_MAX = (1 << 64) - 1

ETH_HEADER_LEN = 14
VLAN_TAG_LEN = 4
PTP_HEADER_LEN = 34
SYNC_LEN = 44
FOLLOW_UP_LEN = 76
IPV4_HEADER_LEN = 20
UDP_HEADER_LEN = 8
GTPU_HEADER_LEN = 16
RESIDENCE_HEADER_LEN = 10


class FrameError(ValueError):
    """Base class for decode failures; ``offset`` is where decoding stopped."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class MalformedFrameError(FrameError):
    pass


class MalformedHeaderError(FrameError):
    pass


class UnsupportedMessageError(FrameError):
    pass


def mac(text: str) -> bytes:
    raw = bytes.fromhex(text.replace(":", "").replace("-", ""))
    if len(raw) != 6:
        raise ValueError(f"bad MAC address {text!r}")
    return raw


def mac_str(raw: bytes) -> str:
    return ":".join(f"{b:02x}" for b in raw)


def ip(text: str) -> int:
    return int(ipaddress.IPv4Address(text))


def ip_str(addr: int) -> str:
    return str(ipaddress.IPv4Address(addr))


def _check_range(name: str, value: int, lo: int, hi: int) -> None:
    if not isinstance(value, int) or isinstance(value, bool) or not lo <= value <= hi:
        raise ValueError(f"{name}={value!r} outside [{lo}, {hi}]")


def _need(data: bytes, end: int, what: str, exc: type[FrameError] = MalformedFrameError) -> None:
    if len(data) < end:
        raise exc(f"truncated {what}: need {end} bytes, have {len(data)}", len(data))


# --------------------------------------------------------------------------- Ethernet


@dataclass(frozen=True)
class VlanTag:
    pcp: int
    dei: int = 0
    vid: int = 0

    def __post_init__(self):
        _check_range("pcp", self.pcp, 0, 7)
        _check_range("dei", self.dei, 0, 1)
        _check_range("vid", self.vid, 0, 4095)

    @property
    def tci(self) -> int:
        return (self.pcp << 13) | (self.dei << 12) | self.vid

    @classmethod
    def from_tci(cls, tci: int) -> VlanTag:
        return cls(pcp=tci >> 13, dei=(tci >> 12) & 1, vid=tci & 0x0FFF)


@dataclass(frozen=True)
class EthernetFrame:
    dst_mac: bytes
    src_mac: bytes
    ethertype: int
    payload: bytes = b""
    vlan: VlanTag | None = None

    def __post_init__(self):
        if len(self.dst_mac) != 6 or len(self.src_mac) != 6:
            raise ValueError("MAC addresses must be 6 bytes")
        _check_range("ethertype", self.ethertype, 0, 0xFFFF)
        if self.ethertype == ETH_P_8021Q:
            raise ValueError("use the vlan field instead of ethertype 0x8100")
        object.__setattr__(self, "payload", bytes(self.payload))

    @property
    def is_gptp(self) -> bool:
        return self.ethertype == ETH_P_GPTP

    @property
    def pcp(self) -> int:
        """Priority of the frame; untagged frames count as best effort."""
        return self.vlan.pcp if self.vlan is not None else 0

    def __len__(self) -> int:
        return ETH_HEADER_LEN + (VLAN_TAG_LEN if self.vlan else 0) + len(self.payload)


def encode_frame(frame: EthernetFrame) -> bytes:
    if frame.vlan is None:
        header = frame.dst_mac + frame.src_mac + struct.pack("!H", frame.ethertype)
    else:
        header = frame.dst_mac + frame.src_mac + struct.pack(
            "!HHH", ETH_P_8021Q, frame.vlan.tci, frame.ethertype
        )
    return header + frame.payload


def decode_frame(data: bytes) -> EthernetFrame:
    data = bytes(data)
    _need(data, ETH_HEADER_LEN, "Ethernet header")
    (ethertype,) = struct.unpack_from("!H", data, 12)
    vlan = None
    offset = ETH_HEADER_LEN
    if ethertype == ETH_P_8021Q:
        _need(data, ETH_HEADER_LEN + VLAN_TAG_LEN, "802.1Q tag")
        tci, ethertype = struct.unpack_from("!HH", data, 14)
        if ethertype == ETH_P_8021Q:
            raise MalformedFrameError("double-tagged frames are not supported", 16)
        vlan = VlanTag.from_tci(tci)
        offset += VLAN_TAG_LEN
    return EthernetFrame(data[0:6], data[6:12], ethertype, data[offset:], vlan)


# --------------------------------------------------------------------------- gPTP


class MessageType(enum.IntEnum):
    SYNC = 0x0
    FOLLOW_UP = 0x8


_MAJOR_SDO_ID = 0x1  # 802.1AS transportSpecific
_LOG_SYNC_INTERVAL = -3  # 125 ms
_FOLLOW_UP_TLV = struct.pack("!HH3s3s", 0x0003, 28, b"\x00\x80\xc2", b"\x00\x00\x01") + bytes(22)


@dataclass(frozen=True)
class GptpMessage:
    """Sync or Follow_Up. ``correction_field`` is in 2^-16 ns units."""

    message_type: MessageType
    sequence_id: int
    correction_field: int = 0
    origin_timestamp: int = 0
    domain_number: int = 0

    def __post_init__(self):
        object.__setattr__(self, "message_type", MessageType(self.message_type))
        _check_range("sequence_id", self.sequence_id, 0, 0xFFFF)
        _check_range("correction_field", self.correction_field, INT64_MIN, INT64_MAX)
        _check_range("origin_timestamp", self.origin_timestamp, 0, UINT64_MAX)
        _check_range("domain_number", self.domain_number, 0, 0xFF)

    def add_correction(self, units: int) -> GptpMessage:
        total = self.correction_field + units
        if not INT64_MIN <= total <= INT64_MAX:
            raise OverflowError(
                f"correction field overflow: {self.correction_field} + {units}"
            )
        return replace(self, correction_field=total)


def ns_to_correction(ns: int) -> int:
    return ns << 16


def correction_to_ns(units: int) -> float:
    return units / 65536


def _encode_timestamp(ns: int) -> bytes:
    seconds, nanos = divmod(ns, 1_000_000_000)
    return seconds.to_bytes(6, "big") + nanos.to_bytes(4, "big")


def _decode_timestamp(data: bytes, offset: int) -> int:
    seconds = int.from_bytes(data[offset : offset + 6], "big")
    (nanos,) = struct.unpack_from("!I", data, offset + 6)
    if nanos >= 1_000_000_000:
        raise MalformedFrameError("timestamp nanoseconds field >= 1e9", offset + 6)
    return seconds * 1_000_000_000 + nanos


def encode_gptp(msg: GptpMessage) -> bytes:
    if msg.message_type is MessageType.SYNC:
        length, flags, control = SYNC_LEN, 0x0200, 0x00  # twoStepFlag
    else:
        length, flags, control = FOLLOW_UP_LEN, 0x0000, 0x02
    header = struct.pack(
        "!BBHBBHq4s10sHBb",
        (_MAJOR_SDO_ID << 4) | msg.message_type,
        0x02,
        length,
        msg.domain_number,
        0,
        flags,
        msg.correction_field,
        bytes(4),
        bytes(10),
        msg.sequence_id,
        control,
        _LOG_SYNC_INTERVAL,
    )
    body = _encode_timestamp(msg.origin_timestamp)
    if msg.message_type is MessageType.FOLLOW_UP:
        body += _FOLLOW_UP_TLV
    return header + body


def decode_gptp(data: bytes) -> GptpMessage:
    data = bytes(data)
    _need(data, PTP_HEADER_LEN, "PTP header")
    nibble = data[0] & 0x0F
    try:
        mtype = MessageType(nibble)
    except ValueError:
        raise UnsupportedMessageError(f"unsupported gPTP messageType 0x{nibble:x}", 0) from None
    need = SYNC_LEN if mtype is MessageType.SYNC else FOLLOW_UP_LEN
    _need(data, need, f"{mtype.name} body")
    domain = data[4]
    (correction,) = struct.unpack_from("!q", data, 8)
    (sequence_id,) = struct.unpack_from("!H", data, 30)
    origin = _decode_timestamp(data, PTP_HEADER_LEN)
    return GptpMessage(mtype, sequence_id, correction, origin, domain)


# --------------------------------------------------------------------------- core datagram


class Protocol(enum.IntEnum):
    UDP = 17
    RAW = 253  # RFC 3692 experimental


@dataclass(frozen=True)
class CoreDatagram:
    src_addr: int
    dst_addr: int
    dscp: int = 0
    protocol: Protocol = Protocol.UDP
    udp_src_port: int = 0
    udp_dst_port: int = 0
    payload: bytes = b""
    # not on the wire; lets the DS-TT hand the originating MAC along
    src_mac: bytes | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "protocol", Protocol(self.protocol))
        object.__setattr__(self, "payload", bytes(self.payload))
        _check_range("src_addr", self.src_addr, 0, 0xFFFFFFFF)
        _check_range("dst_addr", self.dst_addr, 0, 0xFFFFFFFF)
        _check_range("dscp", self.dscp, 0, 63)
        _check_range("udp_src_port", self.udp_src_port, 0, 0xFFFF)
        _check_range("udp_dst_port", self.udp_dst_port, 0, 0xFFFF)
        if self.protocol is Protocol.RAW and (self.udp_src_port or self.udp_dst_port):
            raise ValueError("raw datagrams carry no ports")
        if len(self) > 0xFFFF:
            raise ValueError("datagram longer than 65535 bytes")

    def __len__(self) -> int:
        udp = UDP_HEADER_LEN if self.protocol is Protocol.UDP else 0
        return IPV4_HEADER_LEN + udp + len(self.payload)


def encode_datagram(dgram: CoreDatagram) -> bytes:
    total = len(dgram)
    header = struct.pack(
        "!BBHHHBBHII",
        0x45,
        dgram.dscp << 2,
        total,
        0,
        0x4000,
        64,
        dgram.protocol,
        0,
        dgram.src_addr,
        dgram.dst_addr,
    )
    if dgram.protocol is Protocol.UDP:
        header += struct.pack(
            "!HHHH", dgram.udp_src_port, dgram.udp_dst_port, UDP_HEADER_LEN + len(dgram.payload), 0
        )
    return header + dgram.payload


def decode_datagram(data: bytes) -> CoreDatagram:
    data = bytes(data)
    _need(data, IPV4_HEADER_LEN, "IPv4 header")
    ver_ihl, tos, total, _, _, _, proto, _, src, dst = struct.unpack_from("!BBHHHBBHII", data, 0)
    if ver_ihl != 0x45:
        raise MalformedFrameError(f"unsupported version/IHL byte 0x{ver_ihl:02x}", 0)
    if total < IPV4_HEADER_LEN:
        raise MalformedFrameError(f"IPv4 total length {total} < header", 2)
    _need(data, total, "IPv4 datagram")
    if proto == Protocol.UDP:
        _need(data, IPV4_HEADER_LEN + UDP_HEADER_LEN, "UDP header")
        sport, dport, udp_len, _ = struct.unpack_from("!HHHH", data, IPV4_HEADER_LEN)
        if udp_len != total - IPV4_HEADER_LEN:
            raise MalformedFrameError(f"UDP length {udp_len} disagrees with IPv4 length", 24)
        payload = data[IPV4_HEADER_LEN + UDP_HEADER_LEN : total]
        return CoreDatagram(src, dst, tos >> 2, Protocol.UDP, sport, dport, payload)
    if proto == Protocol.RAW:
        return CoreDatagram(src, dst, tos >> 2, Protocol.RAW, 0, 0, data[IPV4_HEADER_LEN:total])
    raise MalformedFrameError(f"unsupported IP protocol {proto}", 9)


# --------------------------------------------------------------------------- GTP-U

_GTPU_FLAGS = 0x34  # version 1, PT=1, E=1
_GTPU_GPDU = 0xFF
_EXT_PDU_SESSION = 0x85


@dataclass(frozen=True)
class GtpuHeader:
    teid: int
    qfi: int
    pdu_type: int = 0  # 0 = downlink, 1 = uplink

    def __post_init__(self):
        _check_range("teid", self.teid, 0, 0xFFFFFFFF)
        _check_range("qfi", self.qfi, 0, 63)
        _check_range("pdu_type", self.pdu_type, 0, 1)


def encode_gtpu(header: GtpuHeader, payload: bytes) -> bytes:
    return (
        struct.pack("!BBHI", _GTPU_FLAGS, _GTPU_GPDU, 8 + len(payload), header.teid)
        + struct.pack("!HBB", 0, 0, _EXT_PDU_SESSION)
        + struct.pack("!BBBB", 1, header.pdu_type << 4, header.qfi, 0)
        + bytes(payload)
    )


def decode_gtpu(data: bytes) -> tuple[GtpuHeader, bytes]:
    data = bytes(data)
    _need(data, 8, "GTP-U header")
    flags, mtype, length, teid = struct.unpack_from("!BBHI", data, 0)
    if flags >> 5 != 1 or not flags & 0x10:
        raise MalformedFrameError(f"not GTPv1-U (flags 0x{flags:02x})", 0)
    if mtype != _GTPU_GPDU:
        raise UnsupportedMessageError(f"GTP-U message type {mtype} is not a G-PDU", 1)
    end = 8 + length
    _need(data, end, "GTP-U payload")
    if not flags & 0x07:
        raise MalformedFrameError("GTP-U header carries no QFI extension", 0)
    if end < 12:
        raise MalformedFrameError("GTP-U length too short for optional fields", 2)
    offset = 12
    next_type = data[11]
    qfi = pdu_type = None
    while next_type != 0:
        if offset >= end:
            raise MalformedFrameError("truncated GTP-U extension header", offset)
        ext_len = data[offset] * 4
        if ext_len == 0 or offset + ext_len > end:
            raise MalformedFrameError("bad GTP-U extension length", offset)
        if next_type == _EXT_PDU_SESSION:
            pdu_type = data[offset + 1] >> 4
            qfi = data[offset + 2] & 0x3F
        next_type = data[offset + ext_len - 1]
        offset += ext_len
    if qfi is None:
        raise MalformedFrameError("no PDU session container in GTP-U header", 11)
    if pdu_type > 1:
        raise MalformedFrameError(f"unknown PDU type {pdu_type}", 13)
    return GtpuHeader(teid, qfi, pdu_type), data[offset:end]


# --------------------------------------------------------------------------- residence header


@dataclass(frozen=True)
class GptpResidenceHeader:
    ingress_timestamp: int
    origin_port_id: int = 0

    def __post_init__(self):
        _check_range("ingress_timestamp", self.ingress_timestamp, 0, UINT64_MAX)
        _check_range("origin_port_id", self.origin_port_id, 0, 0xFFFF)


def wrap_residence(gptp_frame: bytes, ingress: int, port: int) -> bytes:
    gptp_frame = bytes(gptp_frame)
    if not decode_frame(gptp_frame).is_gptp:
        raise ValueError("only gPTP frames (ethertype 0x88F7) get a residence header")
    header = GptpResidenceHeader(ingress, port)
    return struct.pack("!QH", header.ingress_timestamp, header.origin_port_id) + gptp_frame


def unwrap_residence(data: bytes) -> tuple[GptpResidenceHeader, bytes]:
    data = bytes(data)
    _need(data, RESIDENCE_HEADER_LEN, "residence header", MalformedHeaderError)
    ingress, port = struct.unpack_from("!QH", data, 0)
    return GptpResidenceHeader(ingress, port), data[RESIDENCE_HEADER_LEN:]
