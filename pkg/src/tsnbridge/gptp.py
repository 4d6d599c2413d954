"""gPTP grandmaster schedule, slave-side recorders and static clock hierarchy checks."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

from .frames import GptpMessage, MessageType


def grandmaster_emit(interval: int, start: int, horizon: int) -> list[tuple[int, GptpMessage, GptpMessage]]:
    """Two-step emission schedule: one (Sync, Follow_Up) pair per instant before horizon."""
    if interval <= 0:
        raise ValueError("sync interval must be positive")
    pairs = []
    t, k = start, 0
    while t < horizon:
        seq = k & 0xFFFF
        pairs.append(
            (
                t,
                GptpMessage(MessageType.SYNC, seq, 0, 0),
                GptpMessage(MessageType.FOLLOW_UP, seq, 0, t),
            )
        )
        k += 1
        t = start + k * interval
    return pairs


def expected_message_count(interval: int, start: int, horizon: int) -> int:
    if start >= horizon:
        return 0
    return 2 * ((horizon - 1 - start) // interval + 1)


@dataclass(frozen=True)
class SyncSample:
    endpoint_id: int
    sequence_id: int
    sync_rx_time: int
    followup_rx_time: int
    correction_total: int  # 2^-16 ns, from the Follow_Up
    origin_timestamp: int
    sync_correction: int = 0

    @property
    def implied_path_delay(self) -> Fraction:
        """Receive time minus origin minus reported bridge residence, in ns."""
        return self.sync_rx_time - self.origin_timestamp - Fraction(self.correction_total, 1 << 16)


class GptpSlave:
    """Records Sync/Follow_Up pairs for one endpoint. No servo."""

    def __init__(self, endpoint_id: int):
        self.endpoint_id = endpoint_id
        self._pending: dict[int, tuple[int, int]] = {}
        self.samples: list[SyncSample] = []
        self.orphans = 0
        self.received = {MessageType.SYNC: 0, MessageType.FOLLOW_UP: 0}

    def record(self, msg: GptpMessage, rx_time: int) -> SyncSample | None:
        self.received[msg.message_type] += 1
        if msg.message_type is MessageType.SYNC:
            self._pending[msg.sequence_id] = (rx_time, msg.correction_field)
            return None
        sync = self._pending.pop(msg.sequence_id, None)
        if sync is None:
            self.orphans += 1
            return None
        sample = SyncSample(
            self.endpoint_id,
            msg.sequence_id,
            sync[0],
            rx_time,
            msg.correction_field,
            msg.origin_timestamp,
            sync[1],
        )
        self.samples.append(sample)
        return sample


slave_record = GptpSlave.record


class ClockRole(str, enum.Enum):
    GRANDMASTER = "grandmaster"
    BRIDGE = "bridge"
    SLAVE = "slave"
    TRANSPARENT_CLOCK = "transparent_clock"


@dataclass(frozen=True)
class ClockNode:
    name: str
    role: ClockRole | None


@dataclass(frozen=True)
class ClockHierarchy:
    nodes: tuple[ClockNode, ...]
    edges: tuple[tuple[str, str], ...] = ()

    @classmethod
    def from_dict(cls, data: Mapping) -> ClockHierarchy:
        nodes = []
        for n in data.get("nodes", ()):
            role = n.get("role")
            nodes.append(ClockNode(n["name"], ClockRole(role) if role else None))
        edges = tuple((a, b) for a, b in data.get("edges", ()))
        return cls(tuple(nodes), edges)

    def as_dict(self) -> dict:
        return {
            "nodes": [{"name": n.name, "role": n.role.value if n.role else None} for n in self.nodes],
            "edges": [list(e) for e in self.edges],
        }


def bridge_hierarchy(endpoint_count: int) -> ClockHierarchy:
    """Device A as grandmaster, the TSN switch, the 5GS transparent clock, one slave per Device B."""
    nodes = [
        ClockNode("device_a", ClockRole.GRANDMASTER),
        ClockNode("switch", ClockRole.BRIDGE),
        ClockNode("5gs", ClockRole.TRANSPARENT_CLOCK),
    ]
    edges = [("device_a", "switch"), ("switch", "5gs")]
    for i in range(endpoint_count):
        nodes.append(ClockNode(f"device_b{i}", ClockRole.SLAVE))
        edges.append(("5gs", f"device_b{i}"))
    return ClockHierarchy(tuple(nodes), tuple(edges))


@dataclass(frozen=True)
class HierarchyIssue:
    code: str  # duplicate-grandmaster | missing-grandmaster | missing-role | unreachable | unknown-node
    node: str | None
    message: str


@dataclass(frozen=True)
class ValidationReport:
    errors: tuple[HierarchyIssue, ...]
    registered_transparent_clocks: tuple[str, ...] = field(default=())

    @property
    def ok(self) -> bool:
        return not self.errors

    def as_dict(self) -> dict:
        return {
            "ok": self.ok,
            "errors": [{"code": e.code, "node": e.node, "message": e.message} for e in self.errors],
            "registered_transparent_clocks": list(self.registered_transparent_clocks),
        }


def validate_hierarchy(h: ClockHierarchy) -> ValidationReport:
    errors: list[HierarchyIssue] = []
    names = [n.name for n in h.nodes]
    known = set(names)
    for n in h.nodes:
        if n.role is None:
            errors.append(HierarchyIssue("missing-role", n.name, f"node {n.name!r} has no role"))
    for a, b in h.edges:
        for end in (a, b):
            if end not in known:
                errors.append(HierarchyIssue("unknown-node", end, f"edge references unknown node {end!r}"))
    masters = [n.name for n in h.nodes if n.role is ClockRole.GRANDMASTER]
    if not masters:
        errors.append(HierarchyIssue("missing-grandmaster", None, "no grandmaster configured"))
    elif len(masters) > 1:
        for extra in masters[1:]:
            errors.append(
                HierarchyIssue("duplicate-grandmaster", extra, f"second grandmaster {extra!r} (first {masters[0]!r})")
            )
    if masters:
        children: dict[str, list[str]] = {}
        for a, b in h.edges:
            children.setdefault(a, []).append(b)
        reached = set(masters)
        todo = deque(masters)
        while todo:
            for child in children.get(todo.popleft(), ()):
                if child not in reached:
                    reached.add(child)
                    todo.append(child)
        for name in names:
            if name not in reached:
                errors.append(HierarchyIssue("unreachable", name, f"{name!r} is not reachable from the grandmaster"))
    tcs = tuple(n.name for n in h.nodes if n.role is ClockRole.TRANSPARENT_CLOCK)
    return ValidationReport(tuple(errors), tcs if not errors else ())


def count_roles(h: ClockHierarchy) -> dict[str, int]:
    counts: dict[str, int] = {}
    for n in h.nodes:
        key = n.role.value if n.role else "unset"
        counts[key] = counts.get(key, 0) + 1
    return counts


def correction_matches(samples: Iterable[SyncSample], residence_by_seq: Mapping[int, int]) -> bool:
    return all((residence_by_seq[s.sequence_id] << 16) == s.correction_total for s in samples)
