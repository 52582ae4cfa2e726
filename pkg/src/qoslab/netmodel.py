"""Emulated radio cell: capacity sharing, GBR admission, latency, background load.

The bandwidth model works in abstract resource units. A flow served at rate
``r`` Mbps on a UE with radio efficiency ``e`` consumes ``r / e`` units, and a
cell offers ``uplink_capacity`` units per tick. Rates are assigned in two
phases:

1. every admitted guaranteed-bitrate flow reserves ``min(demand, guarantee) / e``
   units off the top;
2. the remaining units are spread over the residual unit demands of all flows
   by progressive filling (raise a common level, freeze whoever saturates,
   repeat), which yields the efficiency-weighted max-min share.

Latency is a straight line in cell load on top of a per-route base, so steering
a flow to the edge route shifts the whole curve down by a constant.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Optional

from .errors import ConflictError, NotFoundError, ValidationError

EPS = 1e-9
_FILL_EPS = 1e-12

DEFAULT_GBR_CAPACITY_FRACTION = 0.8


class Direction(str, Enum):
    UPLINK = "UPLINK"
    DOWNLINK = "DOWNLINK"


class Route(str, Enum):
    CORE = "CORE"
    EDGE = "EDGE"


@dataclass(frozen=True)
class Cell:
    """One emulated cell; capacity is expressed in resource units (= Mbps at efficiency 1)."""

    cell_id: str
    uplink_capacity: float
    gbr_capacity_fraction: float = DEFAULT_GBR_CAPACITY_FRACTION

    def __post_init__(self) -> None:
        if not self.cell_id:
            raise ValidationError("EMPTY_NAME", "cell_id must be non-empty")
        if self.uplink_capacity <= 0:
            raise ValidationError("SPEC_INVALID", "uplink_capacity must be > 0")
        if not 0 < self.gbr_capacity_fraction <= 1:
            raise ValidationError("SPEC_INVALID", "gbr_capacity_fraction must be in (0, 1]")

    @property
    def gbr_budget_units(self) -> float:
        return self.gbr_capacity_fraction * self.uplink_capacity


@dataclass(frozen=True)
class UeContext:
    """A terminal attached to a cell; efficiency degrades with radio conditions."""

    ue_id: str
    cell_id: str
    radio_efficiency: float

    def __post_init__(self) -> None:
        if not 0 < self.radio_efficiency <= 1:
            raise ValidationError("SPEC_INVALID", "radio_efficiency must be in (0, 1]")


@dataclass
class Flow:
    """A traffic flow. ``gbr_rate`` is None for best-effort, else the guarantee in Mbps."""

    flow_id: str
    ue_id: str
    demand_rate: float
    direction: Direction = Direction.UPLINK
    gbr_rate: Optional[float] = None
    route: Route = Route.CORE

    def __post_init__(self) -> None:
        if self.demand_rate < 0:
            raise ValidationError("SPEC_INVALID", "demand_rate must be >= 0")
        if self.gbr_rate is not None and not 0 < self.gbr_rate <= self.demand_rate + EPS:
            raise ValidationError(
                "SPEC_INVALID", "gbr_rate must satisfy 0 < gbr_rate <= demand_rate"
            )

    @property
    def is_gbr(self) -> bool:
        return self.gbr_rate is not None


@dataclass(frozen=True)
class AllocationResult:
    """Achieved uplink rate per flow id plus the resulting cell load ratio."""

    achieved_rate: Mapping[str, float]
    cell_load_ratio: float


@dataclass(frozen=True)
class PathConfig:
    """Latency model parameters, milliseconds."""

    core_base_latency: float = 20.0
    edge_base_latency: float = 5.0
    load_latency_slope: float = 30.0

    def __post_init__(self) -> None:
        if self.core_base_latency < 0 or self.edge_base_latency < 0 or self.load_latency_slope < 0:
            raise ValidationError("SPEC_INVALID", "latency parameters must be >= 0")
        if self.edge_base_latency > self.core_base_latency:
            raise ValidationError("SPEC_INVALID", "edge base latency must not exceed core base")


@dataclass(frozen=True)
class BackgroundEntry:
    """A burst of identical best-effort flows active on [start_tick, end_tick]."""

    start_tick: int
    end_tick: int
    flow_count: int
    per_flow_demand: float
    radio_efficiency: float = 1.0

    def __post_init__(self) -> None:
        if self.start_tick < 0 or self.end_tick < self.start_tick:
            raise ValidationError("SPEC_INVALID", "background entry window is invalid")
        if self.flow_count < 0:
            raise ValidationError("SPEC_INVALID", "flow_count must be >= 0")
        if self.per_flow_demand < 0:
            raise ValidationError("SPEC_INVALID", "per_flow_demand must be >= 0")
        if not 0 < self.radio_efficiency <= 1:
            raise ValidationError("SPEC_INVALID", "radio_efficiency must be in (0, 1]")


@dataclass(frozen=True)
class BackgroundSchedule:
    """Deterministic load generator: a list of background entries."""

    entries: tuple[BackgroundEntry, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))


EMPTY_SCHEDULE = BackgroundSchedule()


@dataclass(frozen=True)
class AdmissionDecision:
    """Outcome of a GBR admission check."""

    admitted: bool
    reason: Optional[str] = None
    committed_units: float = 0.0
    budget_units: float = 0.0


def admit_gbr(
    cell: Cell,
    current_admitted: Iterable[tuple[float, float]],
    request: tuple[float, float],
) -> AdmissionDecision:
    """Check whether one more guarantee fits the cell's GBR budget.

    Args:
        current_admitted: (guaranteed_rate, efficiency) pairs already admitted.
        request: the (guaranteed_rate, efficiency) pair asking in.

    Returns an AdmissionDecision; a rejection carries reason GBR_BUDGET_EXCEEDED.
    """
    rate, efficiency = request
    if rate <= 0:
        raise ValidationError("SPEC_INVALID", "guaranteed rate must be > 0")
    if not 0 < efficiency <= 1:
        raise ValidationError("SPEC_INVALID", "efficiency must be in (0, 1]")
    committed = sum(g / e for g, e in current_admitted)
    budget = cell.gbr_budget_units
    wanted = committed + rate / efficiency
    if wanted <= budget + EPS:
        return AdmissionDecision(True, None, wanted, budget)
    return AdmissionDecision(False, "GBR_BUDGET_EXCEEDED", wanted, budget)


def _progressive_fill(residuals: Mapping[str, float], budget: float) -> dict[str, float]:
    """Share ``budget`` units over residual unit demands by progressive filling.

    Raise a common level; whenever the smallest pending residual saturates,
    freeze it and keep filling the rest. Equal shares in the unit domain give
    the efficiency-weighted max-min allocation.
    """
    fill = {fid: 0.0 for fid in residuals}
    pending = dict(residuals)
    active = {fid for fid, r in pending.items() if r > _FILL_EPS}
    remaining = budget
    while active and remaining > _FILL_EPS:
        level = remaining / len(active)
        lowest = min(pending[fid] for fid in active)
        grant = lowest if lowest <= level else level
        for fid in active:
            fill[fid] += grant
            pending[fid] -= grant
        remaining -= grant * len(active)
        if lowest <= level:
            active = {fid for fid in active if pending[fid] > _FILL_EPS}
        else:
            break  # level grant consumed the whole budget
    return fill


def allocate(
    cell: Cell,
    ues: Iterable[UeContext],
    flows: Iterable[Flow],
    admitted_gbr: Iterable[str],
) -> AllocationResult:
    """Assign uplink rates for one tick.

    Admitted GBR flows reserve their guarantee first, then every flow's
    residual demand competes for the leftover units by progressive filling.
    Only uplink flows appear in the result; there is no downlink model.

    Raises:
        NotFoundError(UNKNOWN_UE): a flow's UE is missing or on another cell.
        ValidationError(INFEASIBLE_GBR): the admitted set violates the
            admission invariant, which means the caller skipped admit_gbr.
    """
    ue_index = {ue.ue_id: ue for ue in ues}
    uplink = [f for f in flows if f.direction is Direction.UPLINK]
    flow_index = {f.flow_id: f for f in uplink}

    eff: dict[str, float] = {}
    for flow in uplink:
        ue = ue_index.get(flow.ue_id)
        if ue is None or ue.cell_id != cell.cell_id:
            raise NotFoundError(
                "UNKNOWN_UE", f"flow {flow.flow_id!r} references UE {flow.ue_id!r} not on cell"
            )
        eff[flow.flow_id] = ue.radio_efficiency

    admitted = set(admitted_gbr) & set(flow_index)
    committed = 0.0
    for fid in admitted:
        flow = flow_index[fid]
        if flow.gbr_rate is None:
            raise ValidationError("INFEASIBLE_GBR", f"admitted flow {fid!r} has no guarantee")
        committed += flow.gbr_rate / eff[fid]
    if committed > cell.gbr_budget_units + EPS:
        raise ValidationError(
            "INFEASIBLE_GBR",
            f"admitted guarantees need {committed:.6f} units, budget is {cell.gbr_budget_units:.6f}",
        )

    reserved: dict[str, float] = {}
    residual: dict[str, float] = {}
    for flow in uplink:
        fid = flow.flow_id
        e = eff[fid]
        if fid in admitted:
            head = min(flow.demand_rate, flow.gbr_rate)  # type: ignore[arg-type]
            reserved[fid] = head / e
            residual[fid] = max(0.0, flow.demand_rate - head) / e
        else:
            reserved[fid] = 0.0
            residual[fid] = flow.demand_rate / e

    remaining = max(0.0, cell.uplink_capacity - sum(reserved.values()))
    fill = _progressive_fill(residual, remaining)

    achieved: dict[str, float] = {}
    used = 0.0
    for flow in uplink:
        fid = flow.flow_id
        units = reserved[fid] + fill[fid]
        used += units
        achieved[fid] = eff[fid] * units
    load = min(1.0, used / cell.uplink_capacity)
    return AllocationResult(achieved, load)


def flow_latency(flow: Flow, path: PathConfig, cell_load_ratio: float) -> float:
    """Latency in ms: per-route base plus a linear load penalty."""
    if not 0 <= cell_load_ratio <= 1:
        raise ValidationError("SPEC_INVALID", "cell_load_ratio must be in [0, 1]")
    base = path.edge_base_latency if flow.route is Route.EDGE else path.core_base_latency
    return base + path.load_latency_slope * cell_load_ratio


def materialize_background(schedule: BackgroundSchedule, tick: int) -> list[Flow]:
    """Background flows active at ``tick``, with stable ids bg-{entry}-{k}."""
    flows: list[Flow] = []
    for idx, entry in enumerate(schedule.entries):
        if entry.start_tick <= tick <= entry.end_tick:
            for k in range(entry.flow_count):
                fid = f"bg-{idx}-{k}"
                flows.append(Flow(flow_id=fid, ue_id=fid, demand_rate=entry.per_flow_demand))
    return flows


def background_ue_contexts(
    schedule: BackgroundSchedule, cell_id: str, tick: int
) -> list[UeContext]:
    """UE contexts matching materialize_background for the same tick."""
    ues: list[UeContext] = []
    for idx, entry in enumerate(schedule.entries):
        if entry.start_tick <= tick <= entry.end_tick:
            for k in range(entry.flow_count):
                fid = f"bg-{idx}-{k}"
                ues.append(UeContext(fid, cell_id, entry.radio_efficiency))
    return ues


def predicted_load(
    cell: Cell,
    schedule: BackgroundSchedule,
    window: tuple[int, int],
    extra_gbr: Optional[tuple[float, float]] = None,
) -> float:
    """Peak cell load over a tick window, from the background schedule alone.

    ``extra_gbr`` optionally adds one hypothetical admitted guarantee
    (rate, efficiency) to every tick, the what-if used by window negotiation.
    """
    start, end = window
    if start < 0 or end < start:
        raise ValidationError("SPEC_INVALID", "window must satisfy 0 <= start <= end")
    peak = 0.0
    for tick in range(start, end + 1):
        flows = materialize_background(schedule, tick)
        ues = background_ue_contexts(schedule, cell.cell_id, tick)
        admitted: set[str] = set()
        if extra_gbr is not None:
            rate, efficiency = extra_gbr
            probe = Flow("gbr-probe", "gbr-probe", demand_rate=rate, gbr_rate=rate)
            flows = flows + [probe]
            ues = ues + [UeContext("gbr-probe", cell.cell_id, efficiency)]
            admitted = {"gbr-probe"}
        result = allocate(cell, ues, flows, admitted)
        peak = max(peak, result.cell_load_ratio)
    return peak


class NetworkModel:
    """Mutable state around the pure allocator: UEs, flows, admissions, routes.

    Mutations are serialized with a lock so concurrent API frontends see
    atomic operations.
    """

    def __init__(self, cell: Cell, path_config: Optional[PathConfig] = None):
        self.cell = cell
        self.path_config = path_config or PathConfig()
        self.ues: dict[str, UeContext] = {}
        self.flows: dict[str, Flow] = {}
        self.admitted: set[str] = set()
        self.schedule: BackgroundSchedule = EMPTY_SCHEDULE
        self._lock = threading.RLock()

    def add_ue(self, ue: UeContext) -> UeContext:
        with self._lock:
            if ue.cell_id != self.cell.cell_id:
                raise NotFoundError("UNKNOWN_CELL", f"UE {ue.ue_id!r} targets unknown cell")
            self.ues[ue.ue_id] = ue
            return ue

    def add_flow(self, flow: Flow) -> Flow:
        with self._lock:
            if flow.ue_id not in self.ues:
                raise NotFoundError("UNKNOWN_UE", f"flow {flow.flow_id!r} references unknown UE")
            self.flows[flow.flow_id] = flow
            return flow

    def get_flow(self, flow_id: str) -> Flow:
        flow = self.flows.get(flow_id)
        if flow is None:
            raise NotFoundError("UNKNOWN_FLOW", f"no flow {flow_id!r}")
        return flow

    def flow_efficiency(self, flow_id: str) -> float:
        flow = self.get_flow(flow_id)
        return self.ues[flow.ue_id].radio_efficiency

    def admitted_pairs(self) -> list[tuple[float, float]]:
        """(guarantee, efficiency) for every currently admitted flow."""
        pairs = []
        for fid in self.admitted:
            flow = self.flows[fid]
            pairs.append((flow.gbr_rate, self.ues[flow.ue_id].radio_efficiency))
        return pairs

    def admit_flow(self, flow_id: str, guaranteed_rate: float) -> AdmissionDecision:
        """Run admission for a flow; on success it becomes GBR and joins the set."""
        with self._lock:
            flow = self.get_flow(flow_id)
            if flow_id in self.admitted:
                raise ConflictError("DUPLICATE_SUBSCRIPTION", f"flow {flow_id!r} already admitted")
            efficiency = self.ues[flow.ue_id].radio_efficiency
            decision = admit_gbr(self.cell, self.admitted_pairs(), (guaranteed_rate, efficiency))
            if decision.admitted:
                # a guarantee above the flow's demand would violate the flow
                # invariant; the budget already accounted the full guarantee
                flow.gbr_rate = min(guaranteed_rate, flow.demand_rate)
                self.admitted.add(flow_id)
            return decision

    def release_flow(self, flow_id: str) -> None:
        """Drop a guarantee; the flow reverts to best-effort."""
        with self._lock:
            flow = self.get_flow(flow_id)
            if flow_id not in self.admitted:
                raise ConflictError("NOT_ADMITTED", f"flow {flow_id!r} holds no guarantee")
            self.admitted.discard(flow_id)
            flow.gbr_rate = None

    def apply_traffic_influence(self, flow_id: str, route: Route) -> Flow:
        with self._lock:
            flow = self.get_flow(flow_id)
            flow.route = route
            return flow

    def register_background_schedule(self, schedule: BackgroundSchedule) -> None:
        with self._lock:
            self.schedule = schedule

    def background_at(self, tick: int) -> tuple[list[Flow], list[UeContext]]:
        flows = materialize_background(self.schedule, tick)
        ues = background_ue_contexts(self.schedule, self.cell.cell_id, tick)
        return flows, ues

    def allocate_at(self, tick: int) -> AllocationResult:
        """Allocate for one tick over registered flows plus the background mix."""
        with self._lock:
            bg_flows, bg_ues = self.background_at(tick)
            return allocate(
                self.cell,
                list(self.ues.values()) + bg_ues,
                list(self.flows.values()) + bg_flows,
                self.admitted,
            )

    def predicted_load(
        self, window: tuple[int, int], extra_gbr: Optional[tuple[float, float]] = None
    ) -> float:
        return predicted_load(self.cell, self.schedule, window, extra_gbr)

    def latency_of(self, flow_id: str, cell_load_ratio: float) -> float:
        return flow_latency(self.get_flow(flow_id), self.path_config, cell_load_ratio)
