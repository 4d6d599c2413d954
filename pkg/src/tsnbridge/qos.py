"""PCP -> DSCP -> QFI -> DRB mapping and its reverse DSCP -> PCP."""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping

BEST_EFFORT = 0


def _identity_pcp() -> tuple[int, ...]:
    return tuple(range(8))


@dataclass(frozen=True)
class QosProfile:
    """Immutable mapping tables for one bridge.

    ``dscp_to_qfi`` and ``dscp_to_pcp`` are sparse; anything missing lands
    in best effort. When ``dscp_to_pcp`` is not given it is derived as the
    inverse of ``pcp_to_dscp`` so the pipeline is class-preserving.
    """

    pcp_to_dscp: tuple[int, ...] = field(default_factory=_identity_pcp)
    dscp_to_qfi: Mapping[int, int] = field(default_factory=lambda: {d: d for d in range(8)})
    dscp_to_pcp: Mapping[int, int] | None = None

    def __post_init__(self):
        table = tuple(self.pcp_to_dscp)
        if len(table) != 8 or not all(0 <= d <= 63 for d in table):
            raise ValueError(f"pcp_to_dscp needs 8 DSCP values in 0..63, got {table}")
        object.__setattr__(self, "pcp_to_dscp", table)
        for d, q in self.dscp_to_qfi.items():
            if not (0 <= d <= 63 and 0 <= q <= 63):
                raise ValueError(f"bad DSCP->QFI entry {d}->{q}")
        object.__setattr__(self, "dscp_to_qfi", MappingProxyType(dict(self.dscp_to_qfi)))
        if self.dscp_to_pcp is None:
            inverse: dict[int, int] = {}
            for pcp, dscp in enumerate(table):
                inverse.setdefault(dscp, pcp)
            reverse = inverse
        else:
            reverse = dict(self.dscp_to_pcp)
            for d, p in reverse.items():
                if not (0 <= d <= 63 and 0 <= p <= 7):
                    raise ValueError(f"bad DSCP->PCP entry {d}->{p}")
        object.__setattr__(self, "dscp_to_pcp", MappingProxyType(reverse))

    def class_preserving(self) -> bool:
        return all(map_dscp_to_pcp(self, map_pcp_to_dscp(self, p)) == p for p in range(8))


DEFAULT_PROFILE = QosProfile()


def map_pcp_to_dscp(profile: QosProfile, pcp: int) -> int:
    if not 0 <= pcp <= 7:
        raise ValueError(f"PCP {pcp} outside 0..7")
    return profile.pcp_to_dscp[pcp]


def map_dscp_to_qfi(profile: QosProfile, dscp: int) -> int:
    if not 0 <= dscp <= 63:
        raise ValueError(f"DSCP {dscp} outside 0..63")
    return profile.dscp_to_qfi.get(dscp, BEST_EFFORT)


def map_dscp_to_pcp(profile: QosProfile, dscp: int) -> int:
    if not 0 <= dscp <= 63:
        raise ValueError(f"DSCP {dscp} outside 0..63")
    return profile.dscp_to_pcp.get(dscp, BEST_EFFORT)


@dataclass(frozen=True)
class DrbEntry:
    drb: int
    qfi_list: tuple[int, ...]
    default: bool = False
    priority: int | None = None  # scheduler priority; defaults to the DRB id

    @property
    def effective_priority(self) -> int:
        return self.drb if self.priority is None else self.priority


@dataclass(frozen=True)
class DrbIssue:
    code: str  # duplicate-qfi | missing-default | multiple-default | empty-entry | duplicate-drb
    message: str
    qfi: int | None = None


@dataclass(frozen=True)
class DrbValidation:
    issues: tuple[DrbIssue, ...]

    @property
    def ok(self) -> bool:
        return not self.issues


@dataclass(frozen=True)
class DrbConfig:
    """SDAP QFI -> DRB table for one UE.

    The default entry (catch-all for unmapped QFIs) is the one flagged
    ``default``; failing that, the entry that lists QFI 0.
    """

    ue_id: int
    entries: tuple[DrbEntry, ...]

    @classmethod
    def from_json(cls, ue_id: int, items: Iterable[Mapping]) -> DrbConfig:
        entries = []
        for item in items:
            entries.append(
                DrbEntry(
                    drb=int(item["drb"]),
                    qfi_list=tuple(int(q) for q in item.get("qfiList", item.get("qfi_list", ()))),
                    default=bool(item.get("default", False)),
                    priority=item.get("priority"),
                )
            )
        return cls(ue_id, tuple(entries))

    def default_entry(self) -> DrbEntry | None:
        flagged = [e for e in self.entries if e.default]
        if flagged:
            return flagged[0]
        for e in self.entries:
            if BEST_EFFORT in e.qfi_list:
                return e
        return None

    def priority_of(self, drb: int) -> int:
        for e in self.entries:
            if e.drb == drb:
                return e.effective_priority
        return drb


def validate_drb_config(config: DrbConfig) -> DrbValidation:
    issues: list[DrbIssue] = []
    seen_qfi: dict[int, int] = {}
    seen_drb: set[int] = set()
    for e in config.entries:
        if e.drb in seen_drb:
            issues.append(DrbIssue("duplicate-drb", f"DRB {e.drb} listed twice"))
        seen_drb.add(e.drb)
        if not e.qfi_list:
            issues.append(DrbIssue("empty-entry", f"DRB {e.drb} has an empty qfiList"))
        for q in e.qfi_list:
            if q in seen_qfi:
                issues.append(
                    DrbIssue("duplicate-qfi", f"QFI {q} mapped to DRB {seen_qfi[q]} and DRB {e.drb}", q)
                )
            else:
                seen_qfi[q] = e.drb
    if sum(e.default for e in config.entries) > 1:
        issues.append(DrbIssue("multiple-default", "more than one entry flagged default"))
    if config.default_entry() is None:
        issues.append(DrbIssue("missing-default", "no default DRB (flag one or map QFI 0)"))
    return DrbValidation(tuple(issues))


def map_qfi_to_drb(config: DrbConfig, qfi: int) -> int:
    for e in config.entries:
        if qfi in e.qfi_list:
            return e.drb
    default = config.default_entry()
    if default is None:
        raise ValueError(f"DRB config for UE {config.ue_id} has no default entry")
    return default.drb
