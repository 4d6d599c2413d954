"""Network-side TSN translator (NW-TT) sitting between the TSN switch and the UPF."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Iterable, Mapping

from .binder import NR_ID_MIN, BindingError, IdRangeError, NodeRegistry
from .frames import (
    ETH_P_IPV4,
    GPTP_EVENT_PORT,
    CoreDatagram,
    EthernetFrame,
    FrameError,
    Protocol,
    VlanTag,
    decode_datagram,
    decode_frame,
    encode_datagram,
    encode_frame,
    ip,
    ip_str,
    wrap_residence,
)
from .qos import QosProfile, map_dscp_to_pcp, map_pcp_to_dscp

log = logging.getLogger(__name__)


class RoutingError(LookupError):
    pass


@dataclass(frozen=True)
class EndpointBinding:
    downstream_addr: int
    ue_id: int

    def __post_init__(self):
        if self.ue_id < NR_ID_MIN:
            raise IdRangeError(f"UE id {self.ue_id} is below the NR range (>= {NR_ID_MIN})")


def register_endpoints(
    entries: Iterable[Mapping], registry: NodeRegistry
) -> list[EndpointBinding]:
    """Bind each ``{address, ue}`` pair; ``ue`` is a registry name or an NR id."""
    bindings: list[EndpointBinding] = []
    seen: set[int] = set()
    for entry in entries:
        addr = entry["address"]
        addr = ip(addr) if isinstance(addr, str) else int(addr)
        if addr in seen:
            raise BindingError(f"downstream address {ip_str(addr)} bound twice")
        seen.add(addr)
        bindings.append(EndpointBinding(addr, registry.resolve(entry["ue"])))
    if not bindings:
        raise BindingError("at least one endpoint binding is required")
    return bindings


@dataclass
class NwTtCounters:
    frames_in: int = 0
    gptp_frames: int = 0
    gptp_wrapped: int = 0
    data_translated: int = 0
    egress_rebuilt: int = 0
    dropped_malformed: int = 0
    routing_errors: int = 0
    gptp_egress_rejected: int = 0


class NwTt:
    def __init__(
        self,
        bindings: list[EndpointBinding],
        profile: QosProfile,
        *,
        address: int,
        mac: bytes,
        mac_table: Mapping[int, bytes],
        port_id: int = 1,
        vid: int = 0,
        gptp_dscp: int = 0,
    ):
        self.bindings = list(bindings)
        self.profile = profile
        self.address = address
        self.mac = mac
        self.mac_table = dict(mac_table)
        self.port_id = port_id
        self.vid = vid
        self.gptp_dscp = gptp_dscp
        self.counters = NwTtCounters()

    @property
    def replication_factor(self) -> int:
        return len(self.bindings)

    def on_tsn_ingress(self, frame: bytes | EthernetFrame, now: int) -> list[CoreDatagram]:
        c = self.counters
        c.frames_in += 1
        raw = frame if isinstance(frame, (bytes, bytearray)) else encode_frame(frame)
        try:
            if isinstance(frame, EthernetFrame):
                frame_obj = frame
            else:
                frame_obj = decode_frame(raw)
            if frame_obj.is_gptp:
                return self._wrap_gptp(bytes(raw), now)
            return [self._translate_data(frame_obj)]
        except FrameError as exc:
            c.dropped_malformed += 1
            log.warning("NW-TT dropped malformed frame at t=%d: %s", now, exc)
            return []

    def _wrap_gptp(self, raw: bytes, now: int) -> list[CoreDatagram]:
        wrapped = wrap_residence(raw, now, self.port_id)
        self.counters.gptp_frames += 1
        out = [
            CoreDatagram(
                self.address,
                b.downstream_addr,
                self.gptp_dscp,
                Protocol.UDP,
                GPTP_EVENT_PORT,
                GPTP_EVENT_PORT,
                wrapped,
            )
            for b in self.bindings
        ]
        self.counters.gptp_wrapped += len(out)
        return out

    def _translate_data(self, frame: EthernetFrame) -> CoreDatagram:
        if frame.ethertype != ETH_P_IPV4:
            raise FrameError(f"ethertype 0x{frame.ethertype:04x} is neither gPTP nor IPv4", 12)
        dgram = decode_datagram(frame.payload)
        self.counters.data_translated += 1
        return replace(dgram, dscp=map_pcp_to_dscp(self.profile, frame.pcp))

    def on_core_egress(self, datagram: CoreDatagram) -> EthernetFrame:
        """Rebuild a tagged Ethernet frame for a datagram leaving the 5GS."""
        if datagram.protocol is Protocol.UDP and datagram.udp_dst_port == GPTP_EVENT_PORT:
            self.counters.gptp_egress_rejected += 1
            log.warning("NW-TT rejected gPTP-in-UDP on the egress path from %s", ip_str(datagram.src_addr))
            raise RoutingError("gPTP on the 5GS->TSN path is not supported")
        dst_mac = self.mac_table.get(datagram.dst_addr)
        if dst_mac is None:
            self.counters.routing_errors += 1
            log.warning("NW-TT has no route to %s", ip_str(datagram.dst_addr))
            raise RoutingError(f"no route to {ip_str(datagram.dst_addr)}")
        self.counters.egress_rebuilt += 1
        return EthernetFrame(
            dst_mac,
            self.mac,
            ETH_P_IPV4,
            encode_datagram(datagram),
            VlanTag(map_dscp_to_pcp(self.profile, datagram.dscp), 0, self.vid),
        )
