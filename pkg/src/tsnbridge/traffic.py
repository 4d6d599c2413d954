"""Traffic sources, per-packet lineage and flow metrics."""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Union

from .simkernel import RngStream, draw_exponential

LINEAGE_LEN = 8


class Direction(str, enum.Enum):
    DOWNLINK = "downlink"  # Device A -> Device B
    UPLINK = "uplink"  # Device B -> Device A


@dataclass(frozen=True)
class Cbr:
    period_ns: int


@dataclass(frozen=True)
class Exponential:
    mean_ns: int


Arrival = Union[Cbr, Exponential]


@dataclass(frozen=True)
class FlowSpec:
    name: str
    direction: Direction
    endpoint: int | None  # None means every endpoint
    payload_bytes: int
    arrival: Arrival
    pcp: int
    start_ns: int
    stop_ns: int

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction))
        if not 0 <= self.pcp <= 7:
            raise ValueError(f"flow {self.name!r}: pcp {self.pcp} outside 0..7")
        if not 0 <= self.start_ns < self.stop_ns:
            raise ValueError(f"flow {self.name!r}: need 0 <= start_ns < stop_ns")
        if self.payload_bytes < LINEAGE_LEN:
            raise ValueError(f"flow {self.name!r}: payload must hold the {LINEAGE_LEN}-byte lineage tag")
        period = self.arrival.period_ns if isinstance(self.arrival, Cbr) else self.arrival.mean_ns
        if period <= 0:
            raise ValueError(f"flow {self.name!r}: arrival period must be positive")

    def expected_count(self) -> float:
        span = self.stop_ns - self.start_ns
        if isinstance(self.arrival, Cbr):
            return math.ceil(span / self.arrival.period_ns)
        return span / self.arrival.mean_ns


def generate(flow: FlowSpec, rng: RngStream | None) -> Iterator[int]:
    """Send instants in ``[start, stop)``. Exponential gaps start counting at ``start``."""
    if isinstance(flow.arrival, Cbr):
        t = flow.start_ns
        while t < flow.stop_ns:
            yield t
            t += flow.arrival.period_ns
        return
    t = flow.start_ns + draw_exponential(rng, flow.arrival.mean_ns)
    while t < flow.stop_ns:
        yield t
        t += draw_exponential(rng, flow.arrival.mean_ns)


def make_payload(lineage_id: int, size: int) -> bytes:
    return struct.pack("!Q", lineage_id) + bytes(size - LINEAGE_LEN)


def read_lineage(payload: bytes) -> int:
    return struct.unpack_from("!Q", payload)[0]


class Fate(str, enum.Enum):
    IN_FLIGHT = "in_flight"
    DELIVERED = "delivered"
    ATTACH_LOSS = "radio_attach_loss"
    DROPPED = "dropped"


@dataclass
class PacketLineage:
    lineage_id: int
    flow: str
    endpoint: int
    sent_time: int
    pcp_at_source: int
    delivered_time: int | None = None
    pcp_at_sink: int | None = None
    fate: Fate = Fate.IN_FLIGHT

    @property
    def delay(self) -> int | None:
        return None if self.delivered_time is None else self.delivered_time - self.sent_time


class LineageBook:
    """Owns lineage ids; ids are dense and start at 1."""

    def __init__(self):
        self.records: dict[int, PacketLineage] = {}
        self._next = 1

    def issue(self, flow: str, endpoint: int, sent_time: int, pcp: int) -> PacketLineage:
        rec = PacketLineage(self._next, flow, endpoint, sent_time, pcp)
        self.records[rec.lineage_id] = rec
        self._next += 1
        return rec

    def deliver(self, lineage_id: int, now: int, pcp: int) -> PacketLineage:
        rec = self.records[lineage_id]
        if rec.fate is not Fate.IN_FLIGHT:
            raise KeyError(f"lineage {lineage_id} already settled as {rec.fate.value}")
        rec.delivered_time, rec.pcp_at_sink, rec.fate = now, pcp, Fate.DELIVERED
        return rec

    def settle(self, lineage_id: int, fate: Fate) -> None:
        self.records[lineage_id].fate = fate

    def by_flow(self) -> dict[tuple[str, int], list[PacketLineage]]:
        out: dict[tuple[str, int], list[PacketLineage]] = {}
        for rec in self.records.values():
            out.setdefault((rec.flow, rec.endpoint), []).append(rec)
        return out


def nearest_rank(sorted_values: list[int], q: Fraction) -> int:
    rank = max(1, math.ceil(q * len(sorted_values)))
    return sorted_values[rank - 1]


@dataclass(frozen=True)
class DelayStats:
    count: int
    mean_ns: Fraction | None = None
    p99_ns: int | None = None
    max_ns: int | None = None
    min_ns: int | None = None

    @property
    def empty(self) -> bool:
        return self.count == 0

    @classmethod
    def of(cls, delays: Iterable[int]) -> DelayStats:
        ordered = sorted(delays)
        if not ordered:
            return cls(0)
        return cls(
            len(ordered),
            Fraction(sum(ordered), len(ordered)),
            nearest_rank(ordered, Fraction(99, 100)),
            ordered[-1],
            ordered[0],
        )

    def as_dict(self) -> dict:
        if self.empty:
            return {"count": 0, "empty": True}
        return {
            "count": self.count,
            "mean_ns": round(self.mean_ns),
            "p99_ns": self.p99_ns,
            "max_ns": self.max_ns,
            "min_ns": self.min_ns,
        }


@dataclass(frozen=True)
class FlowMetrics:
    flow: str
    endpoint: int
    sent: int
    delivered: int
    radio_attach_loss: int
    dropped: int
    in_flight: int
    delay: DelayStats
    delay_full_run: DelayStats
    pcp_preserved: bool

    @property
    def conserved(self) -> bool:
        return self.sent == self.delivered + self.radio_attach_loss + self.dropped and self.in_flight == 0

    def as_dict(self) -> dict:
        return {
            "flow": self.flow,
            "endpoint": self.endpoint,
            "sent": self.sent,
            "delivered": self.delivered,
            "radio_attach_loss": self.radio_attach_loss,
            "dropped": self.dropped,
            "in_flight": self.in_flight,
            "delay_after_warmup": self.delay.as_dict(),
            "delay_full_run": self.delay_full_run.as_dict(),
            "pcp_preserved": self.pcp_preserved,
        }


def compute_metrics(lineages: list[PacketLineage], warmup_ns: int, flow: str = "", endpoint: int = -1) -> FlowMetrics:
    counts = {f: 0 for f in Fate}
    for rec in lineages:
        counts[rec.fate] += 1
    delivered = [r for r in lineages if r.fate is Fate.DELIVERED]
    if lineages:
        flow, endpoint = lineages[0].flow, lineages[0].endpoint
    return FlowMetrics(
        flow,
        endpoint,
        len(lineages),
        counts[Fate.DELIVERED],
        counts[Fate.ATTACH_LOSS],
        counts[Fate.DROPPED],
        counts[Fate.IN_FLIGHT],
        DelayStats.of(r.delay for r in delivered if r.sent_time >= warmup_ns),
        DelayStats.of(r.delay for r in delivered),
        all(r.pcp_at_sink == r.pcp_at_source for r in delivered),
    )
