"""Network wiring and the simulation run.

Downlink: Device A -> switch -> NW-TT -> UPF -> gNB -(radio)-> UE_i/DS-TT_i -> Device B_i.
Uplink walks the same chain backwards with its own radio RB pool.
Every hop carries encoded bytes, so all codecs are exercised on every packet.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .binder import NodeRegistry
from .config import ScenarioConfig
from .core5g import (
    MacScheduler,
    RadioAttach,
    TransportJob,
    Tunnel,
    UnboundDestination,
    Upf,
    sdap_enqueue,
)
from .dstt import DsTt, ResidenceStats
from .frames import (
    ETH_P_GPTP,
    ETH_P_IPV4,
    GPTP_EVENT_PORT,
    GPTP_MCAST_MAC,
    CoreDatagram,
    EthernetFrame,
    GtpuHeader,
    MessageType,
    Protocol,
    VlanTag,
    decode_datagram,
    decode_frame,
    decode_gptp,
    decode_gtpu,
    encode_datagram,
    encode_frame,
    encode_gptp,
    encode_gtpu,
    ip,
)
from .gptp import GptpSlave, grandmaster_emit, validate_hierarchy
from .nwtt import NwTt, RoutingError, register_endpoints
from .qos import map_dscp_to_qfi
from .simkernel import NS_PER_S, InvariantError, Kernel, RunSummary
from .traffic import Direction, Fate, FlowSpec, LineageBook, compute_metrics, generate, make_payload, read_lineage
from .tsn_af import BridgeDelayStats, TsnAf, observe_residence

log = logging.getLogger(__name__)

OUTER_IP_UDP = 28  # outer IPv4 + UDP around GTP-U on the N3 link
DATA_PORT = 5000


@dataclass
class WiredLink:
    """Full-duplex point-to-point link; one FIFO transmitter per direction."""

    a: str
    b: str
    propagation_ns: int
    rate_bps: int
    _busy_until: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.rate_bps <= 0 or self.propagation_ns < 0:
            raise ValueError(f"link {self.a}-{self.b}: rate must be positive and propagation non-negative")

    def serialization(self, nbytes: int) -> int:
        return -(-nbytes * 8 * NS_PER_S // self.rate_bps)

    def transit(self, src: str, nbytes: int, depart: int) -> int:
        if src not in (self.a, self.b):
            raise ValueError(f"{src!r} is not an end of link {self.a}-{self.b}")
        start = max(depart, self._busy_until.get(src, 0))
        done = start + self.serialization(nbytes)
        self._busy_until[src] = done
        return done + self.propagation_ns


def wired_transit(link: WiredLink, packet_bytes: int, depart: int, src: str | None = None) -> int:
    return link.transit(src or link.a, packet_bytes, depart)


@dataclass
class _SlotClock:
    scheduler: MacScheduler
    pending: bool = False
    last_tick: int = -1


@dataclass(frozen=True)
class FlowInstance:
    spec: FlowSpec
    endpoint: int


@dataclass
class RunResult:
    main: RunSummary
    drain: RunSummary


class Network:
    def __init__(self, cfg: ScenarioConfig, *, grant_trace: bool = False):
        self.cfg = cfg
        self.kernel = Kernel(cfg.seed)
        self.profile = cfg.qos.build()
        self.ran = cfg.ran.build()
        self.channel = cfg.channel.build()
        self.hierarchy = cfg.clock_hierarchy()
        self.bmca = validate_hierarchy(self.hierarchy)
        n = self.endpoint_count = cfg.endpoint_count

        self.registry = NodeRegistry()
        self.ue_ids = [self.registry.add_ue(f"ue{i}") for i in range(n)]
        self.a_addr, self.nwtt_addr = ip("10.0.0.1"), ip("10.0.0.254")
        self.a_mac = bytes.fromhex("02000000a001")
        self.b_addr = [ip(f"10.0.1.{i + 1}") for i in range(n)]
        self.b_mac = [bytes.fromhex(f"0200000b{i:04x}") for i in range(n)]
        entries = (
            [b.model_dump() for b in cfg.bindings]
            if cfg.bindings is not None
            else [{"address": self.b_addr[i], "ue": f"ue{i}"} for i in range(n)]
        )
        self.bindings = register_endpoints(entries, self.registry)
        self.nwtt = NwTt(
            self.bindings,
            self.profile,
            address=self.nwtt_addr,
            mac=bytes.fromhex("02000000fe01"),
            mac_table={self.a_addr: self.a_mac},
            gptp_dscp=cfg.gptp.dscp,
        )
        self.teid_of_ue = {ue: 0x1000 + i for i, ue in enumerate(self.ue_ids)}
        self.upf = Upf(self.profile, [Tunnel(self.teid_of_ue[b.ue_id], b.ue_id, b.downstream_addr) for b in self.bindings])
        self.endpoint_of_ue = {ue: i for i, ue in enumerate(self.ue_ids)}
        self.dstt = [
            DsTt(
                i,
                self.profile,
                mac=bytes.fromhex(f"0200000d{i:04x}"),
                device_mac=self.b_mac[i],
                device_addr=self.b_addr[i],
                upstream_addr=self.a_addr,
            )
            for i in range(n)
        ]
        self.slaves = [GptpSlave(i) for i in range(n)]
        self.af = TsnAf((r.build() for r in cfg.reservations), cfg.violation_mode)
        for d in self.dstt:
            d.residence_listeners.append(self.af.on_residence)

        self.drb_configs = {ue: cfg.drb_config_for(ue) for ue in self.ue_ids}
        self.attach = RadioAttach({ue: self.ran.attach_time for ue in self.ue_ids})
        self.grant_trace = {"dl": [], "ul": []} if grant_trace else None
        self.dl = _SlotClock(self._scheduler("dl", self._dl_delivered))
        self.ul = _SlotClock(self._scheduler("ul", self._ul_delivered))

        topo = cfg.topology
        self.link_a_sw = WiredLink("device_a", "switch", topo.tsn_propagation_ns, topo.tsn_link_rate_bps)
        self.link_sw_nwtt = WiredLink("switch", "nwtt", topo.tsn_propagation_ns, topo.tsn_link_rate_bps)
        self.link_nwtt_upf = WiredLink("nwtt", "upf", topo.core_propagation_ns, topo.core_link_rate_bps)
        self.link_upf_gnb = WiredLink("upf", "gnb", topo.core_propagation_ns, topo.core_link_rate_bps)
        self.link_dstt_b = [
            WiredLink(f"dstt{i}", f"device_b{i}", topo.tsn_propagation_ns, topo.tsn_link_rate_bps) for i in range(n)
        ]

        self.lineage = LineageBook()
        self.flows: list[FlowInstance] = []
        for spec in cfg.flow_specs():
            eps = range(n) if spec.endpoint is None else [spec.endpoint]
            self.flows.extend(FlowInstance(spec, i) for i in eps)
        self.component_drops = {"nwtt": 0, "upf": 0, "dstt": 0, "radio": 0}
        self.result: RunResult | None = None

    @property
    def links(self) -> list[WiredLink]:
        return [self.link_a_sw, self.link_sw_nwtt, self.link_nwtt_upf, self.link_upf_gnb, *self.link_dstt_b]

    def _scheduler(self, direction: str, deliver) -> MacScheduler:
        rng = self.kernel.rng
        return MacScheduler(
            self.ran,
            self.channel,
            self.drb_configs,
            fading_rngs={ue: rng(f"fading/{direction}/{ue}") for ue in self.ue_ids},
            harq_rngs={ue: rng(f"harq/{direction}/{ue}") for ue in self.ue_ids},
            deliver=deliver,
            trace=None if self.grant_trace is None else self.grant_trace[direction],
        )

    # -- plumbing ----------------------------------------------------------

    def _tx(self, link: WiredLink, src: str, raw: bytes, handler, *args, overhead: int = 0) -> None:
        arrival = link.transit(src, len(raw) + overhead, self.kernel.now)
        self.kernel.schedule(arrival, handler, raw, *args)

    def _ensure_tick(self, clock: _SlotClock) -> None:
        if clock.pending:
            return
        slot = self.ran.slot_duration
        now = self.kernel.now
        t = -(-now // slot) * slot
        if t <= clock.last_tick:
            t = clock.last_tick + slot
        clock.pending = True
        self.kernel.schedule(t, self._tick, clock)

    def _tick(self, clock: _SlotClock) -> None:
        clock.pending = False
        clock.last_tick = self.kernel.now
        clock.scheduler.schedule_slot(self.kernel.now)
        if clock.scheduler.backlogged:
            self._ensure_tick(clock)

    def _drop(self, where: str, lineage_id: int) -> None:
        self.component_drops[where] += 1
        if lineage_id:
            self.lineage.settle(lineage_id, Fate.DROPPED)

    @staticmethod
    def _lineage_of(d: CoreDatagram) -> int:
        if d.protocol is Protocol.UDP and d.udp_dst_port == DATA_PORT:
            return read_lineage(d.payload)
        return 0

    # -- sources -----------------------------------------------------------

    def _start_sources(self) -> None:
        for flow in self.flows:
            rng = self.kernel.rng(f"traffic/{flow.spec.name}/{flow.endpoint}")
            times = generate(flow.spec, rng)
            first = next(times, None)
            if first is not None:
                self.kernel.schedule(first, self._send, flow, times)
        g = self.cfg.gptp
        for t, sync, follow_up in grandmaster_emit(g.interval_ns, g.start_ns, self.cfg.horizon_ns):
            self.kernel.schedule(t, self._emit_gptp, sync, follow_up)

    def _send(self, flow: FlowInstance, times) -> None:
        spec, i = flow.spec, flow.endpoint
        rec = self.lineage.issue(spec.name, i, self.kernel.now, spec.pcp)
        payload = make_payload(rec.lineage_id, spec.payload_bytes)
        if spec.direction is Direction.DOWNLINK:
            dgram = CoreDatagram(self.a_addr, self.b_addr[i], 0, Protocol.UDP, DATA_PORT, DATA_PORT, payload)
            frame = EthernetFrame(self.b_mac[i], self.a_mac, ETH_P_IPV4, encode_datagram(dgram), VlanTag(spec.pcp))
            self._tx(self.link_a_sw, "device_a", encode_frame(frame), self._switch_dl)
        else:
            dgram = CoreDatagram(self.b_addr[i], self.a_addr, 0, Protocol.UDP, DATA_PORT, DATA_PORT, payload)
            frame = EthernetFrame(self.a_mac, self.b_mac[i], ETH_P_IPV4, encode_datagram(dgram), VlanTag(spec.pcp))
            self._tx(self.link_dstt_b[i], f"device_b{i}", encode_frame(frame), self._dstt_ul, i)
        nxt = next(times, None)
        if nxt is not None:
            self.kernel.schedule(nxt, self._send, flow, times)

    def _emit_gptp(self, sync, follow_up) -> None:
        for msg in (sync, follow_up):
            frame = EthernetFrame(GPTP_MCAST_MAC, self.a_mac, ETH_P_GPTP, encode_gptp(msg))
            self._tx(self.link_a_sw, "device_a", encode_frame(frame), self._switch_dl)

    # -- downlink ----------------------------------------------------------

    def _switch_dl(self, raw: bytes) -> None:
        self._tx(self.link_sw_nwtt, "switch", raw, self._nwtt_dl)

    def _nwtt_dl(self, raw: bytes) -> None:
        out = self.nwtt.on_tsn_ingress(raw, self.kernel.now)
        if not out:
            self.component_drops["nwtt"] += 1
        for d in out:
            self._tx(self.link_nwtt_upf, "nwtt", encode_datagram(d), self._upf_dl)

    def _upf_dl(self, raw: bytes) -> None:
        d = decode_datagram(raw)
        try:
            header, _ = self.upf.classify_and_tunnel(d)
        except UnboundDestination:
            self._drop("upf", self._lineage_of(d))
            return
        self._tx(self.link_upf_gnb, "upf", encode_gtpu(header, raw), self._gnb_dl, overhead=OUTER_IP_UDP)

    def _gnb_dl(self, raw: bytes) -> None:
        header, inner = decode_gtpu(raw)
        ue = self.upf.by_teid[header.teid].ue_id
        now = self.kernel.now
        d = decode_datagram(inner)
        lineage_id = self._lineage_of(d)
        if not self.attach.admit(ue, now):
            if lineage_id:
                self.lineage.settle(lineage_id, Fate.ATTACH_LOSS)
            return
        is_gptp = d.protocol is Protocol.UDP and d.udp_dst_port == GPTP_EVENT_PORT
        override = self.cfg.gptp.drb_override if is_gptp else None
        job = TransportJob(len(inner), now, lineage_id, data=inner)
        sdap_enqueue(self.dl.scheduler, self.drb_configs[ue], header, job, override)
        self._ensure_tick(self.dl)

    def _dl_delivered(self, job: TransportJob, queue, completion: int) -> None:
        self.kernel.schedule(completion, self._ue_dl, queue.ue_id, job.data)

    def _ue_dl(self, ue: int, inner: bytes) -> None:
        i = self.endpoint_of_ue[ue]
        d = decode_datagram(inner)
        frame = self.dstt[i].on_ue_ingress(d, self.kernel.now)
        if frame is None:
            self._drop("dstt", self._lineage_of(d))
            return
        self._tx(self.link_dstt_b[i], f"dstt{i}", encode_frame(frame), self._device_b, i)

    def _device_b(self, raw: bytes, i: int) -> None:
        frame = decode_frame(raw)
        if frame.is_gptp:
            self.slaves[i].record(decode_gptp(frame.payload), self.kernel.now)
            return
        d = decode_datagram(frame.payload)
        self.lineage.deliver(read_lineage(d.payload), self.kernel.now, frame.pcp)

    # -- uplink ------------------------------------------------------------

    def _dstt_ul(self, raw: bytes, i: int) -> None:
        d = self.dstt[i].on_tsn_ingress(decode_frame(raw))
        ue, now = self.ue_ids[i], self.kernel.now
        lineage_id = self._lineage_of(d)
        if not self.attach.admit(ue, now):
            if lineage_id:
                self.lineage.settle(lineage_id, Fate.ATTACH_LOSS)
            return
        inner = encode_datagram(d)
        qfi = map_dscp_to_qfi(self.profile, d.dscp)
        header = GtpuHeader(self.teid_of_ue[ue], qfi, 1)
        sdap_enqueue(self.ul.scheduler, self.drb_configs[ue], header, TransportJob(len(inner), now, lineage_id, data=(header, inner)))
        self._ensure_tick(self.ul)

    def _ul_delivered(self, job: TransportJob, queue, completion: int) -> None:
        self.kernel.schedule(completion, self._gnb_ul, *job.data)

    def _gnb_ul(self, header: GtpuHeader, inner: bytes) -> None:
        self._tx(self.link_upf_gnb, "gnb", encode_gtpu(header, inner), self._upf_ul, overhead=OUTER_IP_UDP)

    def _upf_ul(self, raw: bytes) -> None:
        _, inner = decode_gtpu(raw)
        self._tx(self.link_nwtt_upf, "upf", inner, self._nwtt_ul)

    def _nwtt_ul(self, raw: bytes) -> None:
        d = decode_datagram(raw)
        try:
            frame = self.nwtt.on_core_egress(d)
        except RoutingError:
            self._drop("nwtt", self._lineage_of(d))
            return
        self._tx(self.link_sw_nwtt, "nwtt", encode_frame(frame), self._switch_ul)

    def _switch_ul(self, raw: bytes) -> None:
        self._tx(self.link_a_sw, "switch", raw, self._device_a)

    def _device_a(self, raw: bytes) -> None:
        frame = decode_frame(raw)
        d = decode_datagram(frame.payload)
        self.lineage.deliver(read_lineage(d.payload), self.kernel.now, frame.pcp)

    # -- run ---------------------------------------------------------------

    def run(self) -> RunResult:
        if self.result is not None:
            raise RuntimeError("a Network runs once")
        self._start_sources()
        horizon = self.cfg.horizon_ns
        main = self.kernel.run_until(horizon)
        drain = self.kernel.run_until_empty(horizon + self.cfg.drain_ns)
        self.result = RunResult(main, drain)
        self.check_invariants()
        return self.result

    def flow_metrics(self):
        groups = self.lineage.by_flow()
        out = []
        for flow in self.flows:
            recs = groups.get((flow.spec.name, flow.endpoint), [])
            out.append(compute_metrics(recs, self.cfg.warmup_ns, flow.spec.name, flow.endpoint))
        return out

    def residence_stats(self) -> list[ResidenceStats]:
        return [d.residence_stats() for d in self.dstt]

    def correction_equality(self) -> tuple[int, int]:
        """(messages checked, mismatches) between slave corrections and DS-TT residence records."""
        checked = mismatched = 0
        for i, slave in enumerate(self.slaves):
            res = {(r.message_type, r.sequence_id): r.residence for r in self.dstt[i].residence_log}
            for s in slave.samples:
                for mtype, corr in ((MessageType.SYNC, s.sync_correction), (MessageType.FOLLOW_UP, s.correction_total)):
                    checked += 1
                    mismatched += (res[(mtype, s.sequence_id)] << 16) != corr
        return checked, mismatched

    def check_invariants(self) -> list[str]:
        problems = []
        for m in self.flow_metrics():
            if m.in_flight:
                problems.append(f"{m.flow}[{m.endpoint}]: {m.in_flight} packets still in flight after drain")
            if not m.pcp_preserved:
                problems.append(f"{m.flow}[{m.endpoint}]: PCP changed between source and sink")
        _, mismatched = self.correction_equality()
        if mismatched:
            problems.append(f"{mismatched} gPTP corrections differ from the DS-TT residence log")
        for s in self.slaves:
            if s.orphans:
                problems.append(f"endpoint {s.endpoint_id}: {s.orphans} orphan Follow_Up messages")
            if any(x.followup_rx_time < x.sync_rx_time for x in s.samples):
                problems.append(f"endpoint {s.endpoint_id}: Follow_Up overtook its Sync")
        batch = BridgeDelayStats()
        for d in self.dstt:
            for r in d.residence_log:
                observe_residence(batch, r.residence)
        if batch != self.af.stats:
            problems.append("AF incremental bridge-delay stats differ from batch recomputation")
        if problems:
            raise InvariantError("; ".join(problems))
        return problems

    # -- dumps -------------------------------------------------------------

    def write_lineage_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lineage_id", "flow", "endpoint", "sent_ns", "delivered_ns", "fate", "pcp_src", "pcp_sink"])
            for r in self.lineage.records.values():
                w.writerow([r.lineage_id, r.flow, r.endpoint, r.sent_time, r.delivered_time, r.fate.value,
                            r.pcp_at_source, r.pcp_at_sink])

    def write_grant_trace(self, path: str | Path) -> None:
        if self.grant_trace is None:
            raise RuntimeError("grant tracing was not enabled")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["direction", "slot_ns", "ue", "drb", "rbs", "bytes", "jobs_completed", "outcome"])
            for direction in ("dl", "ul"):
                for row in self.grant_trace[direction]:
                    w.writerow([direction, *row])


def build(cfg: ScenarioConfig, **kwargs) -> Network:
    return Network(cfg, **kwargs)
