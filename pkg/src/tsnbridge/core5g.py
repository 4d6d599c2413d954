"""User-plane model of the 5G system: UPF tunnelling, SDAP, slotted MAC, channel.

The radio is abstracted to a per-slot resource-block budget. A transport
block that is granted in slot ``[s, s + slot)`` completes at
``s + slot + pipeline_delay``. Fading scales the bytes one RB carries by a
per-UE, per-slot draw and makes blocks fail with a fixed HARQ BLER.
"""

from __future__ import annotations

import enum
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

from .frames import CoreDatagram, GtpuHeader, ip_str
from .qos import DrbConfig, QosProfile, map_dscp_to_qfi, map_qfi_to_drb
from .simkernel import InvariantError, RngStream

log = logging.getLogger(__name__)


class SchedulerKind(str, enum.Enum):
    MAXCI = "maxci"
    PF = "pf"
    RR = "rr"


class ChannelMode(str, enum.Enum):
    IDEAL = "ideal"
    FADING = "fading"


@dataclass(frozen=True)
class RanConfig:
    num_rbs: int = 25
    slot_duration: int = 500_000  # numerology 1
    bytes_per_rb_per_slot: int = 64
    scheduler: SchedulerKind = SchedulerKind.MAXCI
    pipeline_delay: int = 1_550_000
    attach_time: int = 8_000_000
    pf_alpha: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "scheduler", SchedulerKind(self.scheduler))
        if self.num_rbs <= 0 or self.slot_duration <= 0 or self.bytes_per_rb_per_slot <= 0:
            raise ValueError("num_rbs, slot_duration and bytes_per_rb_per_slot must be positive")
        if self.pipeline_delay < 0 or self.attach_time < 0:
            raise ValueError("pipeline_delay and attach_time must be non-negative")
        if not 0 < self.pf_alpha <= 1:
            raise ValueError("pf_alpha must be in (0, 1]")


@dataclass(frozen=True)
class ChannelModel:
    mode: ChannelMode = ChannelMode.IDEAL
    mcs_sigma: float = 0.3
    mcs_min: float = 0.25
    mcs_max: float = 2.0
    harq_bler: float = 0.01
    harq_rtt_slots: int = 2
    max_retx: int = 3

    def __post_init__(self):
        object.__setattr__(self, "mode", ChannelMode(self.mode))
        if not 0 <= self.harq_bler < 1:
            raise ValueError("harq_bler must be in [0, 1)")
        if self.harq_rtt_slots < 1 or self.max_retx < 0:
            raise ValueError("harq_rtt_slots >= 1 and max_retx >= 0 required")
        if not 0 < self.mcs_min <= 1 <= self.mcs_max:
            raise ValueError("need 0 < mcs_min <= 1 <= mcs_max")

    @property
    def ideal(self) -> bool:
        return self.mode is ChannelMode.IDEAL

    def quality(self, rng: RngStream | None) -> float:
        """Per-slot multiplier on bytes per RB (truncated log-normal, median 1)."""
        if self.ideal:
            return 1.0
        return min(self.mcs_max, max(self.mcs_min, rng.lognormal(self.mcs_sigma)))


@dataclass
class TransportJob:
    payload_bytes: int
    enqueue_time: int
    lineage_id: int
    data: Any = None
    seq: int = 0
    served: int = 0

    @property
    def remaining(self) -> int:
        return self.payload_bytes - self.served


@dataclass
class DrbQueue:
    ue_id: int
    drb_id: int
    priority: int
    jobs: deque = field(default_factory=deque)
    backlog: int = 0
    blocked_until: int = 0
    retx: int = 0
    avg_rate: float = 1.0
    last_delivered_seq: int = -1

    @property
    def key(self) -> tuple[int, int]:
        return (self.ue_id, self.drb_id)

    def eligible(self, slot_start: int) -> bool:
        return self.backlog > 0 and self.blocked_until <= slot_start


@dataclass(frozen=True)
class Grant:
    ue: int
    drb: int
    rbs: int
    bytes: int
    jobs_served: tuple[int, ...]


@dataclass(frozen=True)
class TransmissionOutcome:
    success: bool
    retransmit_after: int = 0  # slots
    forced: bool = False


def channel_apply(
    model: ChannelModel, grant: Grant, rng: RngStream | None, retx_so_far: int = 0
) -> TransmissionOutcome:
    """HARQ outcome of one transport block.

    After ``max_retx`` failed retransmissions the block is handed up anyway,
    standing in for RLC-AM recovery.
    """
    if model.ideal or model.harq_bler == 0:
        return TransmissionOutcome(True)
    if not rng.bernoulli(model.harq_bler):
        return TransmissionOutcome(True)
    if retx_so_far >= model.max_retx:
        return TransmissionOutcome(True, forced=True)
    return TransmissionOutcome(False, model.harq_rtt_slots)


@dataclass
class HarqStats:
    transmissions: int = 0
    failures: int = 0
    forced: int = 0


class MacScheduler:
    """Per-slot RB allocation over (UE, DRB) queues.

    ``deliver(job, queue, completion_time)`` is called for every job whose
    last byte goes out in a successful transport block.
    """

    def __init__(
        self,
        ran: RanConfig,
        channel: ChannelModel,
        drb_configs: Mapping[int, DrbConfig],
        *,
        fading_rngs: Mapping[int, RngStream] | None = None,
        harq_rngs: Mapping[int, RngStream] | None = None,
        deliver: Callable[[TransportJob, DrbQueue, int], None] | None = None,
        trace: list | None = None,
    ):
        self.ran = ran
        self.channel = channel
        self.drb_configs = dict(drb_configs)
        self.ue_ids = sorted(self.drb_configs)
        self.fading_rngs = dict(fading_rngs or {})
        self.harq_rngs = dict(harq_rngs or {})
        self.deliver = deliver
        self.trace = trace
        self.queues: dict[tuple[int, int], DrbQueue] = {}
        self.harq = HarqStats()
        self.slots_run = 0
        self._rr_cursor = 0
        self._seq = 0

    def queue(self, ue: int, drb: int) -> DrbQueue:
        q = self.queues.get((ue, drb))
        if q is None:
            prio = self.drb_configs[ue].priority_of(drb) if ue in self.drb_configs else drb
            q = self.queues[(ue, drb)] = DrbQueue(ue, drb, prio)
        return q

    def enqueue(self, ue: int, drb: int, job: TransportJob) -> None:
        q = self.queue(ue, drb)
        job.seq = self._seq
        self._seq += 1
        q.jobs.append(job)
        q.backlog += job.remaining

    @property
    def backlogged(self) -> bool:
        return any(q.backlog for q in self.queues.values())

    def _order(self, eligible: list[DrbQueue], quality: dict[int, float]) -> list[DrbQueue]:
        kind = self.ran.scheduler
        if kind is SchedulerKind.MAXCI:
            return sorted(eligible, key=lambda q: (-q.priority, -quality[q.ue_id], q.ue_id, q.drb_id))
        if kind is SchedulerKind.PF:
            rate = lambda q: self.ran.num_rbs * self._bytes_per_rb(quality[q.ue_id])  # noqa: E731
            return sorted(eligible, key=lambda q: (-rate(q) / q.avg_rate, q.ue_id, q.drb_id))
        ring = sorted(self.queues)
        n = len(ring)
        start = self._rr_cursor % n
        rank = {key: (i - start) % n for i, key in enumerate(ring)}
        return sorted(eligible, key=lambda q: rank[q.key])

    def _bytes_per_rb(self, quality: float) -> int:
        return max(1, math.floor(self.ran.bytes_per_rb_per_slot * quality))

    def schedule_slot(self, slot_start: int) -> list[Grant]:
        ran = self.ran
        self.slots_run += 1
        quality = {ue: self.channel.quality(self.fading_rngs.get(ue)) for ue in self.ue_ids}
        for q in self.queues.values():
            quality.setdefault(q.ue_id, self.channel.quality(self.fading_rngs.get(q.ue_id)))
        eligible = [q for q in self.queues.values() if q.eligible(slot_start)]
        if not eligible:
            self._update_pf({})
            return []
        order = self._order(eligible, quality)
        rbs_left = ran.num_rbs
        completion = slot_start + ran.slot_duration + ran.pipeline_delay
        grants: list[Grant] = []
        served_bytes: dict[tuple[int, int], int] = {}
        satisfied: set[tuple[int, int]] = set()
        for q in order:
            if rbs_left == 0:
                continue
            bpr = self._bytes_per_rb(quality[q.ue_id])
            need = -(-q.backlog // bpr)
            rbs = min(need, rbs_left)
            rbs_left -= rbs
            if rbs == need:
                satisfied.add(q.key)
            capacity = min(rbs * bpr, q.backlog)
            done, carried = self._tentative(q, capacity)
            grant = Grant(q.ue_id, q.drb_id, rbs, capacity, tuple(j.lineage_id for j in done))
            grants.append(grant)
            outcome = channel_apply(self.channel, grant, self.harq_rngs.get(q.ue_id), q.retx)
            self.harq.transmissions += 1
            if outcome.success:
                self.harq.forced += outcome.forced
                q.retx = 0
                self._commit(q, done, carried, capacity, completion)
                served_bytes[q.key] = capacity
            else:
                self.harq.failures += 1
                q.retx += 1
                q.blocked_until = slot_start + outcome.retransmit_after * ran.slot_duration
            if self.trace is not None:
                self.trace.append(
                    (slot_start, q.ue_id, q.drb_id, rbs, capacity, len(done),
                     "ok" if outcome.success else "harq-fail")
                )
        # checked against every eligible queue, not just the ones the discipline visited
        if rbs_left > 0 and any(q.key not in satisfied for q in eligible):
            raise InvariantError(f"slot {slot_start}: {rbs_left} RBs idle with backlog pending")
        if ran.scheduler is SchedulerKind.RR and grants:
            ring = sorted(self.queues)
            self._rr_cursor = ring.index((grants[0].ue, grants[0].drb)) + 1
        self._update_pf(served_bytes)
        return grants

    def _tentative(self, q: DrbQueue, capacity: int) -> tuple[list[TransportJob], int]:
        done = []
        left = capacity
        for job in q.jobs:
            if job.remaining > left:
                return done, left
            left -= job.remaining
            done.append(job)
        return done, left

    def _commit(self, q: DrbQueue, done: list, carried: int, capacity: int, completion: int) -> None:
        for job in done:
            popped = q.jobs.popleft()
            if popped.seq <= q.last_delivered_seq:
                raise InvariantError(f"queue {q.key} delivered out of order")
            q.last_delivered_seq = popped.seq
            popped.served = popped.payload_bytes
            if self.deliver is not None:
                self.deliver(popped, q, completion)
        if carried and q.jobs:
            q.jobs[0].served += carried
        q.backlog -= capacity

    def _update_pf(self, served: dict[tuple[int, int], int]) -> None:
        if self.ran.scheduler is not SchedulerKind.PF:
            return
        a = self.ran.pf_alpha
        for key, q in self.queues.items():
            q.avg_rate = (1 - a) * q.avg_rate + a * served.get(key, 0)


class UnboundDestination(LookupError):
    pass


@dataclass(frozen=True)
class Tunnel:
    teid: int
    ue_id: int
    addr: int


class Upf:
    """Traffic flow filter: DSCP -> QFI, destination address -> tunnel."""

    def __init__(self, profile: QosProfile, tunnels: list[Tunnel]):
        self.profile = profile
        self.by_addr = {t.addr: t for t in tunnels}
        self.by_teid = {t.teid: t for t in tunnels}
        self.classified_drops = 0
        self.tunnelled = 0

    def classify_and_tunnel(self, datagram: CoreDatagram) -> tuple[GtpuHeader, CoreDatagram]:
        tunnel = self.by_addr.get(datagram.dst_addr)
        if tunnel is None:
            self.classified_drops += 1
            log.warning("UPF: no tunnel for %s", ip_str(datagram.dst_addr))
            raise UnboundDestination(f"no tunnel for {ip_str(datagram.dst_addr)}")
        self.tunnelled += 1
        return GtpuHeader(tunnel.teid, map_dscp_to_qfi(self.profile, datagram.dscp)), datagram


upf_classify_and_tunnel = Upf.classify_and_tunnel


def sdap_enqueue(
    scheduler: MacScheduler,
    config: DrbConfig,
    header: GtpuHeader,
    job: TransportJob,
    drb_override: int | None = None,
) -> int:
    """Queue ``job`` on the DRB its QFI selects; returns that DRB."""
    drb = map_qfi_to_drb(config, header.qfi) if drb_override is None else drb_override
    scheduler.enqueue(config.ue_id, drb, job)
    return drb


class RadioAttach:
    """Per-UE attach instants; traffic reaching the RAN earlier is discarded."""

    def __init__(self, attach_times: Mapping[int, int]):
        self.attach_times = dict(attach_times)
        self.losses: dict[int, int] = {ue: 0 for ue in self.attach_times}

    def admit(self, ue: int, now: int) -> bool:
        if now >= self.attach_times.get(ue, 0):
            return True
        self.losses[ue] = self.losses.get(ue, 0) + 1
        return False
