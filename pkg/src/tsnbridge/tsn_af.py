"""TSN application function: live bridge-delay statistics and reservation checks."""

from __future__ import annotations

import enum
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable

from .simkernel import InvariantError


@dataclass(frozen=True)
class StreamReservation:
    stream_id: str
    bandwidth_bps: int
    max_latency_ns: int

    def __post_init__(self):
        if self.bandwidth_bps <= 0 or self.max_latency_ns <= 0:
            raise ValueError(f"reservation {self.stream_id!r}: bandwidth and latency bound must be positive")


@dataclass
class BridgeDelayStats:
    min_ns: int | None = None
    max_ns: int | None = None
    total_ns: int = 0
    sample_count: int = 0

    @property
    def mean_ns(self) -> Fraction | None:
        return Fraction(self.total_ns, self.sample_count) if self.sample_count else None

    def as_dict(self) -> dict:
        if not self.sample_count:
            return {"sample_count": 0, "empty": True}
        return {
            "sample_count": self.sample_count,
            "min_ns": self.min_ns,
            "max_ns": self.max_ns,
            "mean_ns": round(self.mean_ns),
        }


def observe_residence(stats: BridgeDelayStats, sample_ns: int) -> BridgeDelayStats:
    if sample_ns < 0:
        raise InvariantError(f"negative residence sample {sample_ns}")
    stats.min_ns = sample_ns if stats.min_ns is None else min(stats.min_ns, sample_ns)
    stats.max_ns = sample_ns if stats.max_ns is None else max(stats.max_ns, sample_ns)
    stats.total_ns += sample_ns
    stats.sample_count += 1
    return stats


@dataclass(frozen=True)
class Violation:
    stream_id: str
    measured_ns: int | float
    bound_ns: int
    time: int
    endpoint: int | None = None


class ViolationMode(str, enum.Enum):
    PER_SAMPLE = "per_sample"
    RUNNING_AVERAGE = "running_average"


def check_violation(
    reservations: Iterable[StreamReservation], measured_ns: int | Fraction, time: int, endpoint: int | None = None
) -> list[Violation]:
    out = []
    for r in reservations:
        if measured_ns > r.max_latency_ns:
            measured = measured_ns if isinstance(measured_ns, int) else float(measured_ns)
            out.append(Violation(r.stream_id, measured, r.max_latency_ns, time, endpoint))
    return out


class TsnAf:
    """Subscribes to DS-TT residence records.

    Bandwidth figures are reported, never enforced.
    """

    def __init__(self, reservations: Iterable[StreamReservation] = (), mode: ViolationMode = ViolationMode.PER_SAMPLE):
        self.reservations = list(reservations)
        self.mode = ViolationMode(mode)
        self.stats = BridgeDelayStats()
        self.per_endpoint: dict[int, BridgeDelayStats] = {}
        self.violations: list[Violation] = []

    def on_residence(self, endpoint: int, record) -> None:
        sample = record.residence
        observe_residence(self.stats, sample)
        observe_residence(self.per_endpoint.setdefault(endpoint, BridgeDelayStats()), sample)
        measured = sample if self.mode is ViolationMode.PER_SAMPLE else self.stats.mean_ns
        self.violations.extend(check_violation(self.reservations, measured, record.egress, endpoint))

    def report(self, max_logged: int = 50) -> dict:
        return {
            "mode": self.mode.value,
            "bridge_delay": self.stats.as_dict(),
            "per_endpoint": {str(k): v.as_dict() for k, v in sorted(self.per_endpoint.items())},
            "reservations": [
                {"stream_id": r.stream_id, "bandwidth_bps": r.bandwidth_bps, "max_latency_ns": r.max_latency_ns}
                for r in self.reservations
            ],
            "violation_count": len(self.violations),
            "violations": [
                {"stream_id": v.stream_id, "measured_ns": v.measured_ns, "bound_ns": v.bound_ns,
                 "time_ns": v.time, "endpoint": v.endpoint}
                for v in self.violations[:max_logged]
            ],
        }


def load_cnc_xml(path: str | Path) -> list[StreamReservation]:
    """Read ``<stream id=".." bandwidthBps=".." maxLatencyNs=".."/>`` elements."""
    root = ET.parse(path).getroot()
    out = []
    for el in root.iter("stream"):
        try:
            out.append(
                StreamReservation(el.attrib["id"], int(el.attrib["bandwidthBps"]), int(el.attrib["maxLatencyNs"]))
            )
        except KeyError as exc:
            raise ValueError(f"stream element missing attribute {exc.args[0]!r}") from None
    return out
