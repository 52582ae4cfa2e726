"""Deterministic scenario runner.

Virtual time advances in integer ticks (one logical second). Each tick runs a
fixed pipeline: apply booked QoS windows, materialize background flows,
allocate the cell, evaluate monitoring and deliver queued callbacks, then let
the client measure and react. Everything is pure state in one process, so a
given spec always produces byte-identical output.

Three canned experiments share the pipeline:

* scenario 1: best-effort benchmark, adaptation disabled, the video rate
  simply degrades as background load ramps up;
* scenario 2: the stream starts under a fully ramped background load and the
  client upgrades within its debounce window;
* scenario 3: load ramps while streaming; monitoring plus the throughput
  debounce trigger the upgrade dynamically.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .capif import ApiEndpoint, CapifCore, ProviderRegistration, ServiceApiDraft
from .client import AdaptationConfig, ClientPhase, InvokerClient, measure_throughput
from .errors import ServiceError, ValidationError
from .nef import ALL_API_NAMES, NefService
from .netmodel import (
    BackgroundEntry,
    BackgroundSchedule,
    Cell,
    Direction,
    Flow,
    NetworkModel,
    UeContext,
    flow_latency,
)
from .notifications import CallbackRegistry, NotificationDispatcher

CSV_HEADER = "tick,video_rate_mbps,cell_load,bg_flows,client_phase,latency_ms,events"

VIDEO_FLOW_ID = "video"
VIDEO_UE_ID = "ue-video"
CELL_ID = "cell-1"
AEF_ID = "nef-aef"
AF_ID = "af-video"
PROVIDER_DOMAIN = "exposure.operator.example"
SIM_CALLBACK_URI = "inproc://client/notifications"

CENTRE_EFFICIENCY = 1.0
EDGE_EFFICIENCY = 0.5

API_BASE_PATHS = {
    "as-session-with-qos": "/nef/3gpp-as-session-with-qos/v1",
    "monitoring-event": "/nef/3gpp-monitoring-event/v1",
    "traffic-influence": "/nef/3gpp-traffic-influence/v1",
    "pdtq": "/nef/pdtq/v1",
}


class Scenario(Enum):
    S1_BENCHMARK = 1
    S2_CONGESTED_START = 2
    S3_DYNAMIC = 3

    @classmethod
    def from_number(cls, number: int) -> "Scenario":
        for member in cls:
            if member.value == number:
                return member
        raise ValidationError("BAD_FLAG", f"scenario must be 1, 2 or 3, got {number!r}")


@dataclass
class ScenarioSpec:
    """Everything a run depends on. Defaults reproduce the stock experiments."""

    scenario: Scenario = Scenario.S3_DYNAMIC
    ticks: int = 100
    cell_capacity: float = 12.0
    video_demand: float = 4.5
    video_efficiency: float = CENTRE_EFFICIENCY
    background_schedule: Optional[BackgroundSchedule] = None  # None = built-in ramp
    ramp_interval: int = 20
    ramp_max_flows: int = 4
    background_demand: float = 10.0
    background_efficiency: float = 1.0
    adaptation: AdaptationConfig = field(default_factory=AdaptationConfig)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.ticks <= 0:
            raise ValidationError("SPEC_INVALID", "ticks must be > 0")
        if self.cell_capacity <= 0:
            raise ValidationError("SPEC_INVALID", "cell capacity must be > 0")
        if self.video_demand < 0:
            raise ValidationError("SPEC_INVALID", "video demand must be >= 0")
        if not 0 < self.video_efficiency <= 1:
            raise ValidationError("SPEC_INVALID", "video efficiency must be in (0, 1]")
        if self.ramp_interval <= 0:
            raise ValidationError("SPEC_INVALID", "ramp interval must be > 0")
        if self.ramp_max_flows < 0:
            raise ValidationError("SPEC_INVALID", "ramp max flows must be >= 0")
        if self.background_demand < 0:
            raise ValidationError("SPEC_INVALID", "background demand must be >= 0")
        if not 0 < self.background_efficiency <= 1:
            raise ValidationError("SPEC_INVALID", "background efficiency must be in (0, 1]")

    def resolved_schedule(self) -> BackgroundSchedule:
        """The explicit schedule, or the ramp the scenario implies.

        The ramp adds one background flow every ``ramp_interval`` ticks up to
        ``ramp_max_flows``; scenario 2 starts with the ramp already complete.
        """
        if self.background_schedule is not None:
            return self.background_schedule
        end = self.ticks - 1
        entries = []
        for k in range(1, self.ramp_max_flows + 1):
            start = 0 if self.scenario is Scenario.S2_CONGESTED_START else k * self.ramp_interval
            if start > end:
                continue
            entries.append(
                BackgroundEntry(start, end, 1, self.background_demand, self.background_efficiency)
            )
        return BackgroundSchedule(tuple(entries))


@dataclass
class TickRecord:
    tick: int
    video_rate_mbps: float
    cell_load: float
    bg_flows: int
    client_phase: str
    latency_ms: float
    events: list[str] = field(default_factory=list)


@dataclass
class Summary:
    scenario: Scenario
    ticks: int
    final_phase: str
    min_video_rate: float
    final_video_rate: float
    peak_load: float
    request_tick: Optional[int] = None
    guaranteed_tick: Optional[int] = None
    rejected: bool = False
    exhausted_deliveries: int = 0


@dataclass
class ScenarioStack:
    """The wired components of one run, kept around for inspection."""

    spec: ScenarioSpec
    model: NetworkModel
    capif: CapifCore
    nef: NefService
    dispatcher: NotificationDispatcher
    client: InvokerClient
    provider: ProviderRegistration


@dataclass
class RunResult:
    records: list[TickRecord]
    summary: Summary
    stack: ScenarioStack


def build_model(spec: ScenarioSpec) -> NetworkModel:
    """Cell, video UE and flow, and the background schedule for a spec."""
    cell = Cell(CELL_ID, spec.cell_capacity)
    model = NetworkModel(cell)
    model.add_ue(UeContext(VIDEO_UE_ID, CELL_ID, spec.video_efficiency))
    model.add_flow(
        Flow(VIDEO_FLOW_ID, VIDEO_UE_ID, spec.video_demand, direction=Direction.UPLINK)
    )
    model.register_background_schedule(spec.resolved_schedule())
    return model


def publish_catalogue(
    capif: CapifCore,
    provider: ProviderRegistration,
    host: str = "nef.internal",
    port: int = 8443,
) -> None:
    """Publish the full northbound API set under one AEF."""
    for name in ALL_API_NAMES:
        capif.publish_service_api(
            provider.provider_id,
            provider.provider_secret,
            ServiceApiDraft(
                api_name=name,
                aef_id=AEF_ID,
                endpoint=ApiEndpoint(host, port, API_BASE_PATHS[name]),
                version="v1",
            ),
        )


def run_scenario(spec: ScenarioSpec) -> RunResult:
    """Run one experiment in virtual time and return its tick series.

    Scenario 1 keeps the client passive after discovery (zero exposure API
    calls), which makes it the degradation benchmark the other scenarios are
    compared against.
    """
    model = build_model(spec)
    capif = CapifCore()
    provider = capif.register_provider(PROVIDER_DOMAIN)
    publish_catalogue(capif, provider)

    registry = CallbackRegistry()
    dispatcher = NotificationDispatcher(registry.send, live=False)
    nef = NefService(AEF_ID, model, capif.introspect_token, dispatcher)

    client = InvokerClient(
        capif,
        spec.adaptation,
        af_id=AF_ID,
        flow_id=VIDEO_FLOW_ID,
        cell_id=CELL_ID,
        notification_uri=SIM_CALLBACK_URI,
        nef=nef,
    )
    registry.register(SIM_CALLBACK_URI, client.on_notification_wire)
    client.onboard_and_discover()

    adaptive = spec.scenario is not Scenario.S1_BENCHMARK
    records: list[TickRecord] = []
    for tick in range(spec.ticks):
        events: list[str] = []
        events.extend(nef.apply_pdtq_bookings(tick))
        allocation = model.allocate_at(tick)
        crossings = nef.evaluate_monitoring_tick({CELL_ID: allocation.cell_load_ratio})
        events.extend(n.kind.value for n in crossings)
        for record in dispatcher.pump(tick):
            if record.outcome != "DELIVERED":
                events.append(record.outcome)
        measured = measure_throughput(VIDEO_FLOW_ID, allocation)
        if adaptive:
            events.extend(client.step(measured))
        bg_count = len(model.background_at(tick)[0])
        latency = flow_latency(
            model.get_flow(VIDEO_FLOW_ID), model.path_config, allocation.cell_load_ratio
        )
        records.append(
            TickRecord(
                tick=tick,
                video_rate_mbps=measured,
                cell_load=allocation.cell_load_ratio,
                bg_flows=bg_count,
                client_phase=client.state.phase.value,
                latency_ms=latency,
                events=events,
            )
        )

    stack = ScenarioStack(spec, model, capif, nef, dispatcher, client, provider)
    return RunResult(records, summarize(spec, records, stack), stack)


def summarize(spec: ScenarioSpec, records: list[TickRecord], stack: ScenarioStack) -> Summary:
    request_tick = next(
        (r.tick for r in records if "REQUEST_QOS" in r.events), None
    )
    guaranteed_tick = next(
        (r.tick for r in records if r.client_phase == ClientPhase.QOS_GUARANTEED.value), None
    )
    return Summary(
        scenario=spec.scenario,
        ticks=spec.ticks,
        final_phase=records[-1].client_phase,
        min_video_rate=min(r.video_rate_mbps for r in records),
        final_video_rate=records[-1].video_rate_mbps,
        peak_load=max(r.cell_load for r in records),
        request_tick=request_tick,
        guaranteed_tick=guaranteed_tick,
        rejected=any("QOS_REJECTED" in r.events for r in records),
        exhausted_deliveries=sum(
            1 for rec in stack.dispatcher.history if rec.outcome != "DELIVERED"
        ),
    )


def emit_csv(records: list[TickRecord], path: str) -> None:
    """Write the tick series as CSV, three decimals, LF line endings.

    An empty series is refused before the file is created.
    """
    if not records:
        raise ValidationError("EMPTY_SERIES", "refusing to write an empty time series")
    lines = [CSV_HEADER]
    for r in records:
        lines.append(
            f"{r.tick},{r.video_rate_mbps:.3f},{r.cell_load:.3f},{r.bg_flows},"
            f"{r.client_phase},{r.latency_ms:.3f},{';'.join(r.events)}"
        )
    try:
        with open(path, "w", newline="") as handle:
            handle.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise ServiceError("IO_ERROR", f"cannot write {path!r}: {exc}", 500) from exc


# -- spec building from flag/config values ----------------------------------

_POSITION_EFFICIENCY = {"centre": CENTRE_EFFICIENCY, "edge": EDGE_EFFICIENCY}

SPEC_DEFAULTS = {
    "scenario": 3,
    "position": "centre",
    "capacity": 12.0,
    "ticks": 100,
    "threshold": 4.2,
    "ramp_interval": 20,
    "seed": 0,
}


def load_config_file(path: str) -> dict:
    """Flat key=value file; '#' starts a comment. Unknown keys are rejected."""
    known_keys = set(SPEC_DEFAULTS) | {"out", "live", "ccf", "nef"}
    values: dict = {}
    try:
        with open(path) as handle:
            raw = handle.read()
    except OSError as exc:
        raise ValidationError("BAD_CONFIG", f"cannot read config {path!r}: {exc}") from exc
    for lineno, line in enumerate(raw.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValidationError("BAD_CONFIG", f"{path}:{lineno}: expected key=value")
        key, _, value = stripped.partition("=")
        key = key.strip().replace("-", "_")
        if key not in known_keys:
            raise ValidationError("BAD_CONFIG", f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value.strip()
    return values


def _coerce(key: str, value, kind, code: str):
    if isinstance(value, kind):
        return value
    try:
        if kind is bool:
            if str(value).lower() in ("1", "true", "yes", "on"):
                return True
            if str(value).lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        return kind(value)
    except (TypeError, ValueError):
        raise ValidationError(code, f"bad value for {key!r}: {value!r}") from None


def build_scenario_spec(values: dict) -> ScenarioSpec:
    """Merged flag/config values -> a validated ScenarioSpec.

    Precedence is handled by the caller (explicit flags over config file over
    defaults); this function only validates and assembles.
    """
    merged = dict(SPEC_DEFAULTS)
    merged.update({k: v for k, v in values.items() if v is not None})

    scenario = Scenario.from_number(_coerce("scenario", merged["scenario"], int, "BAD_FLAG"))
    position = str(merged["position"]).lower()
    if position not in _POSITION_EFFICIENCY:
        raise ValidationError("BAD_FLAG", f"position must be centre or edge, got {position!r}")
    capacity = _coerce("capacity", merged["capacity"], float, "BAD_FLAG")
    ticks = _coerce("ticks", merged["ticks"], int, "BAD_FLAG")
    threshold = _coerce("threshold", merged["threshold"], float, "BAD_FLAG")
    ramp_interval = _coerce("ramp_interval", merged["ramp_interval"], int, "BAD_FLAG")
    seed = _coerce("seed", merged["seed"], int, "BAD_FLAG")

    adaptation = AdaptationConfig(lower_threshold=threshold)
    return ScenarioSpec(
        scenario=scenario,
        ticks=ticks,
        cell_capacity=capacity,
        video_efficiency=_POSITION_EFFICIENCY[position],
        ramp_interval=ramp_interval,
        adaptation=adaptation,
        seed=seed,
    )
