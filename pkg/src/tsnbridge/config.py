"""Scenario configuration: strict schema, cross-field checks, bundled scenarios."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Annotated, Any, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .binder import NR_ID_MIN
from .core5g import ChannelMode, ChannelModel, RanConfig, SchedulerKind
from .gptp import ClockHierarchy, bridge_hierarchy, validate_hierarchy
from .qos import DrbConfig, QosProfile, validate_drb_config
from .traffic import Cbr, Direction, Exponential, FlowSpec
from .tsn_af import StreamReservation, ViolationMode

BUNDLED = ("ideal_3ep", "ideal_1ep", "fading_3ep", "contention_3ep")


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("; ".join(errors))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


class ChannelSchema(_Strict):
    mode: ChannelMode = ChannelMode.IDEAL
    mcs_sigma: float = Field(0.3, ge=0)
    mcs_min: float = 0.25
    mcs_max: float = 2.0
    harq_bler: float = Field(0.01, ge=0, lt=1)
    harq_rtt_slots: int = Field(2, ge=1)
    max_retx: int = Field(3, ge=0)

    def build(self) -> ChannelModel:
        return ChannelModel(**self.model_dump())


class RanSchema(_Strict):
    num_rbs: int = Field(25, gt=0)
    slot_duration_ns: int = Field(500_000, gt=0)
    bytes_per_rb_per_slot: int = Field(64, gt=0)
    scheduler: SchedulerKind = SchedulerKind.MAXCI
    pipeline_delay_ns: int = Field(1_550_000, ge=0)
    attach_time_ns: int = Field(8_000_000, ge=0)
    pf_alpha: float = Field(0.01, gt=0, le=1)

    def build(self) -> RanConfig:
        return RanConfig(
            self.num_rbs,
            self.slot_duration_ns,
            self.bytes_per_rb_per_slot,
            self.scheduler,
            self.pipeline_delay_ns,
            self.attach_time_ns,
            self.pf_alpha,
        )


class QosSchema(_Strict):
    pcp_to_dscp: list[Annotated[int, Field(ge=0, le=63)]] = Field(default_factory=lambda: list(range(8)))
    dscp_to_qfi: dict[int, Annotated[int, Field(ge=0, le=63)]] = Field(default_factory=lambda: {d: d for d in range(8)})
    dscp_to_pcp: dict[int, Annotated[int, Field(ge=0, le=7)]] | None = None

    @model_validator(mode="after")
    def _eight(self):
        if len(self.pcp_to_dscp) != 8:
            raise ValueError("pcp_to_dscp needs exactly 8 entries")
        return self

    def build(self) -> QosProfile:
        return QosProfile(tuple(self.pcp_to_dscp), dict(self.dscp_to_qfi), self.dscp_to_pcp)


class DrbEntrySchema(_Strict):
    drb: int = Field(ge=0)
    qfi_list: list[Annotated[int, Field(ge=0, le=63)]] = Field(alias="qfiList")
    default: bool = False
    priority: int | None = None


class CbrSchema(_Strict):
    kind: Literal["cbr"]
    period_ns: int = Field(gt=0)


class ExponentialSchema(_Strict):
    kind: Literal["exponential"]
    mean_ns: int = Field(gt=0)


class FlowSchema(_Strict):
    name: str
    direction: Direction
    endpoint: int | Literal["all"] = "all"
    payload_bytes: int = Field(ge=8, le=1400)
    arrival: Annotated[Union[CbrSchema, ExponentialSchema], Field(discriminator="kind")]
    pcp: int = Field(ge=0, le=7)
    start_ns: int = Field(ge=0)
    stop_ns: int = Field(gt=0)

    def build(self) -> FlowSpec:
        arrival = Cbr(self.arrival.period_ns) if self.arrival.kind == "cbr" else Exponential(self.arrival.mean_ns)
        endpoint = None if self.endpoint == "all" else self.endpoint
        return FlowSpec(
            self.name, self.direction, endpoint, self.payload_bytes, arrival, self.pcp, self.start_ns, self.stop_ns
        )


class GptpSchema(_Strict):
    interval_ns: int = Field(125_000_000, gt=0)
    start_ns: int = Field(125_000_000, ge=0)
    drb_override: int | None = None
    dscp: int = Field(0, ge=0, le=63)


class HierarchyNodeSchema(_Strict):
    name: str
    role: Literal["grandmaster", "bridge", "slave", "transparent_clock"] | None = None


class HierarchySchema(_Strict):
    nodes: list[HierarchyNodeSchema]
    edges: list[tuple[str, str]] = Field(default_factory=list)

    def build(self) -> ClockHierarchy:
        return ClockHierarchy.from_dict(self.model_dump())


class ReservationSchema(_Strict):
    stream_id: str
    bandwidth_bps: int = Field(gt=0)
    max_latency_ns: int = Field(gt=0)

    def build(self) -> StreamReservation:
        return StreamReservation(self.stream_id, self.bandwidth_bps, self.max_latency_ns)


class TopologySchema(_Strict):
    tsn_link_rate_bps: int = Field(10_000_000_000, gt=0)
    tsn_propagation_ns: int = Field(25_000, ge=0)
    core_link_rate_bps: int = Field(10_000_000_000, gt=0)
    core_propagation_ns: int = Field(200_000, ge=0)


class BindingSchema(_Strict):
    address: str
    ue: str | int


class ScenarioConfig(_Strict):
    name: str = "custom"
    horizon_ns: int = Field(gt=0)
    warmup_ns: int = Field(1_000_000_000, ge=0)
    drain_ns: int = Field(5_000_000_000, ge=0)
    seed: int = Field(1, ge=0)
    endpoint_count: int = Field(3, ge=1)
    channel: ChannelSchema = ChannelSchema()
    ran: RanSchema = RanSchema()
    qos: QosSchema = QosSchema()
    drb_config: list[DrbEntrySchema] = Field(
        default_factory=lambda: [
            DrbEntrySchema(drb=0, qfi_list=[0], default=True),
            DrbEntrySchema(drb=1, qfi_list=[6]),
        ]
    )
    flows: list[FlowSchema] = Field(default_factory=list)
    gptp: GptpSchema = GptpSchema()
    hierarchy: HierarchySchema | None = None
    reservations: list[ReservationSchema] = Field(default_factory=list)
    violation_mode: ViolationMode = ViolationMode.PER_SAMPLE
    topology: TopologySchema = TopologySchema()
    bindings: list[BindingSchema] | None = None

    @model_validator(mode="after")
    def _consistent(self):
        problems = []
        names = set()
        for i, f in enumerate(self.flows):
            where = f"flows.{i}"
            if f.name in names:
                problems.append(f"{where}.name: duplicate flow name {f.name!r}")
            names.add(f.name)
            if f.endpoint != "all" and not 0 <= f.endpoint < self.endpoint_count:
                problems.append(f"{where}.endpoint: {f.endpoint} outside 0..{self.endpoint_count - 1}")
            if f.start_ns >= f.stop_ns:
                problems.append(f"{where}: start_ns must be below stop_ns")
            if f.stop_ns > self.horizon_ns:
                problems.append(f"{where}.stop_ns: {f.stop_ns} exceeds horizon_ns {self.horizon_ns}")
        try:
            if not self.qos.build().class_preserving():
                problems.append("qos: PCP -> DSCP -> PCP does not return every PCP to itself")
        except ValueError as exc:
            problems.append(f"qos: {exc}")
        report = validate_drb_config(self.drb_config_for(NR_ID_MIN))
        for issue in report.issues:
            problems.append(f"drb_config: {issue.code}: {issue.message}")
        drbs = {e.drb for e in self.drb_config}
        if self.gptp.drb_override is not None and self.gptp.drb_override not in drbs:
            problems.append(f"gptp.drb_override: DRB {self.gptp.drb_override} is not configured")
        if self.bindings is not None:
            ue_names = {f"ue{i}" for i in range(self.endpoint_count)}
            ue_ids = set(range(NR_ID_MIN, NR_ID_MIN + self.endpoint_count))
            for i, b in enumerate(self.bindings):
                if b.ue not in ue_names and b.ue not in ue_ids:
                    problems.append(f"bindings.{i}.ue: {b.ue!r} is not a configured UE")
        if problems:
            raise ValueError("\n".join(problems))
        return self

    def drb_config_for(self, ue_id: int) -> DrbConfig:
        return DrbConfig.from_json(ue_id, [e.model_dump(by_alias=True) for e in self.drb_config])

    def clock_hierarchy(self) -> ClockHierarchy:
        return self.hierarchy.build() if self.hierarchy else bridge_hierarchy(self.endpoint_count)

    def flow_specs(self) -> list[FlowSpec]:
        return [f.build() for f in self.flows]

    def echo(self) -> dict:
        return self.model_dump(mode="json")


def _format_errors(exc: ValidationError) -> list[str]:
    out = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        msg = err["msg"]
        if err["type"] == "value_error" and msg.startswith("Value error, "):
            # cross-field errors already carry their own paths
            out.extend(line for line in msg[len("Value error, "):].splitlines())
            continue
        out.append(f"{path}: {msg}")
    return out


def parse_config(data: dict) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def bundled_path(name: str):
    return resources.files("tsnbridge").joinpath("scenarios", f"{name}.json")


def load_raw(path_or_name: str | Path) -> dict:
    p = Path(path_or_name)
    if p.exists():
        text = p.read_text()
    elif str(path_or_name) in BUNDLED:
        text = bundled_path(str(path_or_name)).read_text()
    else:
        raise FileNotFoundError(f"no config file or bundled scenario named {path_or_name!r}")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"<document>: invalid JSON at line {exc.lineno}: {exc.msg}"]) from None


def load_config(path_or_name: str | Path, **overrides: Any) -> ScenarioConfig:
    """Load, apply CLI-style overrides, validate.

    Changing ``endpoints`` regenerates the clock hierarchy and the endpoint
    bindings, since both are tied to the endpoint count.
    """
    data = load_raw(path_or_name)
    return parse_config(apply_overrides(data, **overrides))


def apply_overrides(
    data: dict,
    *,
    seed: int | None = None,
    endpoints: int | None = None,
    channel: str | None = None,
    scheduler: str | None = None,
) -> dict:
    data = json.loads(json.dumps(data))
    if seed is not None:
        data["seed"] = seed
    if endpoints is not None and endpoints != data.get("endpoint_count"):
        data["endpoint_count"] = endpoints
        data.pop("hierarchy", None)
        data.pop("bindings", None)
    if channel is not None:
        data.setdefault("channel", {})["mode"] = channel
    if scheduler is not None:
        data.setdefault("ran", {})["scheduler"] = scheduler
    return data


def precheck(cfg: ScenarioConfig):
    """Hierarchy validation run before any simulation."""
    return validate_hierarchy(cfg.clock_hierarchy())
