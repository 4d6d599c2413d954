"""Device-side TSN translator (DS-TT) between a UE and its downstream TSN device."""

from __future__ import annotations

import csv
import logging
import math
import struct
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable

from .frames import (
    ETH_P_IPV4,
    FOLLOW_UP_LEN,
    GPTP_EVENT_PORT,
    SYNC_LEN,
    CoreDatagram,
    EthernetFrame,
    FrameError,
    GptpMessage,
    MessageType,
    Protocol,
    VlanTag,
    decode_datagram,
    decode_frame,
    decode_gptp,
    encode_datagram,
    encode_frame,
    ns_to_correction,
    unwrap_residence,
)
from .qos import QosProfile, map_dscp_to_pcp, map_pcp_to_dscp
from .simkernel import InvariantError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ResidenceRecord:
    message_type: MessageType
    sequence_id: int
    ingress: int
    egress: int

    @property
    def residence(self) -> int:
        return self.egress - self.ingress


@dataclass(frozen=True)
class ResidenceStats:
    """Exact summary of residence samples; ``count == 0`` is the empty marker."""

    count: int
    min_ns: int | None = None
    max_ns: int | None = None
    total_ns: int = 0
    total_sq: int = 0

    @classmethod
    def empty(cls) -> ResidenceStats:
        return cls(0)

    @classmethod
    def of(cls, samples: Iterable[int]) -> ResidenceStats:
        samples = list(samples)
        if not samples:
            return cls.empty()
        return cls(
            len(samples), min(samples), max(samples), sum(samples), sum(s * s for s in samples)
        )

    @property
    def is_empty(self) -> bool:
        return self.count == 0

    @property
    def mean(self) -> Fraction | None:
        return None if self.is_empty else Fraction(self.total_ns, self.count)

    @property
    def mean_ns(self) -> int | None:
        return None if self.is_empty else round(self.mean)

    @property
    def spread(self) -> int | None:
        return None if self.is_empty else self.max_ns - self.min_ns

    @property
    def variance(self) -> Fraction | None:
        # population variance, ns^2
        if self.is_empty:
            return None
        return Fraction(self.total_sq, self.count) - self.mean**2

    @property
    def stddev(self) -> float | None:
        return None if self.is_empty else math.sqrt(self.variance)

    def as_dict(self) -> dict:
        if self.is_empty:
            return {"count": 0, "empty": True}
        return {
            "count": self.count,
            "min_ns": self.min_ns,
            "max_ns": self.max_ns,
            "mean_ns": self.mean_ns,
            "mean_ns_exact": f"{self.mean.numerator}/{self.mean.denominator}",
            "spread_ns": self.spread,
            "variance_ns2": round(float(self.variance), 3),
            "stddev_ns": round(self.stddev, 3),
        }


@dataclass
class DsTtCounters:
    gptp_forwarded: int = 0
    data_forwarded_high: int = 0
    data_forwarded_be: int = 0
    reverse_forwarded: int = 0
    reverse_gptp: int = 0
    dropped_malformed: int = 0


_CORRECTION_OFFSET = 8
_MESSAGE_LEN = {MessageType.SYNC: SYNC_LEN, MessageType.FOLLOW_UP: FOLLOW_UP_LEN}


def _apply_sync(body: bytes, residence: int) -> tuple[GptpMessage, bytes]:
    msg = decode_gptp(body[:SYNC_LEN])
    return msg, _patch_correction(body, msg.add_correction(ns_to_correction(residence)))


def _apply_follow_up(body: bytes, residence: int) -> tuple[GptpMessage, bytes]:
    msg = decode_gptp(body[:FOLLOW_UP_LEN])
    return msg, _patch_correction(body, msg.add_correction(ns_to_correction(residence)))


def _patch_correction(body: bytes, updated: GptpMessage) -> bytes:
    # only the correction field changes; every other byte is carried through
    return (
        body[:_CORRECTION_OFFSET]
        + struct.pack("!q", updated.correction_field)
        + body[_CORRECTION_OFFSET + 8 :]
    )


_TYPE_HANDLERS: dict[MessageType, Callable[[bytes, int], tuple[GptpMessage, bytes]]] = {
    MessageType.SYNC: _apply_sync,
    MessageType.FOLLOW_UP: _apply_follow_up,
}


class DsTt:
    def __init__(
        self,
        endpoint_id: int,
        profile: QosProfile,
        *,
        mac: bytes,
        device_mac: bytes,
        device_addr: int = 0,
        upstream_addr: int = 0,
        vid: int = 0,
    ):
        self.endpoint_id = endpoint_id
        self.profile = profile
        self.mac = mac
        self.device_mac = device_mac
        self.device_addr = device_addr
        self.upstream_addr = upstream_addr
        self.vid = vid
        self.counters = DsTtCounters()
        self.residence_log: list[ResidenceRecord] = []
        self.residence_listeners: list[Callable[[int, ResidenceRecord], None]] = []

    def on_ue_ingress(self, packet: CoreDatagram, now: int) -> EthernetFrame | None:
        if packet.protocol is Protocol.UDP and packet.udp_dst_port == GPTP_EVENT_PORT:
            try:
                return self._forward_gptp(packet, now)
            except FrameError as exc:
                self.counters.dropped_malformed += 1
                log.warning("DS-TT %d dropped wrapped gPTP at t=%d: %s", self.endpoint_id, now, exc)
                return None
        pcp = map_dscp_to_pcp(self.profile, packet.dscp)
        if pcp:
            self.counters.data_forwarded_high += 1
        else:
            self.counters.data_forwarded_be += 1
        return EthernetFrame(
            self.device_mac, self.mac, ETH_P_IPV4, encode_datagram(packet), VlanTag(pcp, 0, self.vid)
        )

    def _forward_gptp(self, packet: CoreDatagram, now: int) -> EthernetFrame:
        header, raw = unwrap_residence(packet.payload)
        frame = decode_frame(raw)
        if not frame.is_gptp:
            raise FrameError("residence header does not wrap a gPTP frame", 10)
        residence = now - header.ingress_timestamp
        if residence < 0:
            raise InvariantError(
                f"negative residence: ingress {header.ingress_timestamp} after egress {now}"
            )
        mtype = MessageType(decode_gptp(frame.payload).message_type)
        msg, payload = _TYPE_HANDLERS[mtype](frame.payload, residence)
        record = ResidenceRecord(mtype, msg.sequence_id, header.ingress_timestamp, now)
        self.residence_log.append(record)
        self.counters.gptp_forwarded += 1
        for listener in self.residence_listeners:
            listener(self.endpoint_id, record)
        return replace(frame, payload=payload)

    def on_tsn_ingress(self, frame: EthernetFrame) -> CoreDatagram:
        """Reverse path: frame from the TSN device, datagram toward the UE."""
        dscp = map_pcp_to_dscp(self.profile, frame.pcp)
        if frame.is_gptp:
            self.counters.reverse_gptp += 1
            log.warning("DS-TT %d forwarding reverse gPTP as plain data", self.endpoint_id)
            dgram = CoreDatagram(
                self.device_addr, self.upstream_addr, dscp, Protocol.RAW, payload=encode_frame(frame)
            )
        else:
            if frame.ethertype != ETH_P_IPV4:
                raise FrameError(f"cannot forward ethertype 0x{frame.ethertype:04x}", 12)
            dgram = replace(decode_datagram(frame.payload), dscp=dscp)
        self.counters.reverse_forwarded += 1
        return replace(dgram, src_mac=frame.src_mac)

    def residence_stats(self) -> ResidenceStats:
        return ResidenceStats.of(r.residence for r in self.residence_log)

    def write_residence_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["seq", "type", "ingress_ns", "egress_ns", "residence_ns"])
            for r in self.residence_log:
                writer.writerow([r.sequence_id, r.message_type.name, r.ingress, r.egress, r.residence])
