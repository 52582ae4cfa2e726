"""Northbound exposure service: QoS sessions, cell-load monitoring, traffic
influence, and time-window QoS negotiation, all backed by one cell model.

Every operation authorizes the caller's bearer token through an injected
introspection function before touching state, so the service works the same
whether the token authority lives in-process or behind HTTP.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

from .capif import IntrospectionResult
from .errors import AuthError, ConflictError, NotFoundError, ValidationError
from .netmodel import NetworkModel, Route, admit_gbr
from .notifications import Notification, NotificationDispatcher, NotificationKind

API_QOS = "as-session-with-qos"
API_MONITORING = "monitoring-event"
API_TRAFFIC_INFLUENCE = "traffic-influence"
API_PDTQ = "pdtq"
ALL_API_NAMES = (API_QOS, API_MONITORING, API_TRAFFIC_INFLUENCE, API_PDTQ)

DNAI_EDGE = "edge"
DNAI_CORE = "core"

DEFAULT_QOS_REFERENCES = {"qos-gbr-video": 4.5}
DEFAULT_PDTQ_LOAD_CEILING = 0.95

BELOW = "BELOW"
ABOVE = "ABOVE"

Introspector = Callable[[str, str, str], IntrospectionResult]


class QosStatus(str, Enum):
    GUARANTEED = "GUARANTEED"
    NOT_GUARANTEED = "NOT_GUARANTEED"


@dataclass
class QosSubscription:
    subscription_id: str
    af_id: str
    flow_id: str
    qos_reference: str
    notification_uri: str
    status: QosStatus


@dataclass
class MonitoringSubscription:
    subscription_id: str
    af_id: str
    cell_id: str
    upper_threshold: float
    notification_uri: str
    last_reported_side: str  # BELOW or ABOVE
    event_type: str = "CELL_LOAD"


@dataclass
class TrafficInfluenceSubscription:
    subscription_id: str
    af_id: str
    flow_id: str
    dnai: str
    notification_uri: str


@dataclass(frozen=True)
class PdtqCandidate:
    policy_id: str
    window: tuple[int, int]
    predicted_peak_load: float


@dataclass
class PdtqNegotiation:
    negotiation_id: str
    af_id: str
    flow_id: str
    requested_windows: tuple[tuple[int, int], ...]
    desired_rate: float
    efficiency: float
    candidates: tuple[PdtqCandidate, ...]
    selected_policy_id: Optional[str] = None


@dataclass
class PdtqBooking:
    """A selected window: the flow turns GBR inside it, best-effort outside.

    ``active`` means this booking performed the admission and owes a release;
    ``abandoned`` marks a booking that could not take effect (flow already
    guaranteed elsewhere, or admission failed at window start).
    """

    negotiation_id: str
    flow_id: str
    window: tuple[int, int]
    rate: float
    active: bool = False
    abandoned: bool = False


class NefService:
    """Northbound API state machine over one NetworkModel."""

    def __init__(
        self,
        aef_id: str,
        model: NetworkModel,
        introspector: Introspector,
        dispatcher: NotificationDispatcher,
        qos_references: Optional[dict[str, float]] = None,
        pdtq_load_ceiling: float = DEFAULT_PDTQ_LOAD_CEILING,
    ):
        self.aef_id = aef_id
        self.model = model
        self._introspect = introspector
        self.dispatcher = dispatcher
        self.qos_references = dict(qos_references or DEFAULT_QOS_REFERENCES)
        for name, rate in self.qos_references.items():
            if rate <= 0:
                raise ValidationError("SPEC_INVALID", f"qos reference {name!r} rate must be > 0")
        self.pdtq_load_ceiling = pdtq_load_ceiling
        self._lock = threading.RLock()
        self.qos_subscriptions: dict[str, QosSubscription] = {}
        self.monitoring_subscriptions: dict[str, MonitoringSubscription] = {}
        self.traffic_subscriptions: dict[str, TrafficInfluenceSubscription] = {}
        self.negotiations: dict[str, PdtqNegotiation] = {}
        self.bookings: list[PdtqBooking] = []
        self._counters: dict[str, int] = {}
        self._sequence: dict[str, int] = {}
        self._last_loads: dict[str, float] = {}

    def _next_id(self, prefix: str) -> str:
        self._counters[prefix] = self._counters.get(prefix, 0) + 1
        return f"{prefix}-{self._counters[prefix]:06d}"

    def _authorize(self, token: Optional[str], api_name: str) -> str:
        """Introspect the bearer token for this AEF and API; returns invoker id."""
        if not token:
            raise AuthError("AUTH_DENIED", "missing bearer token", http_status=401)
        result = self._introspect(token, self.aef_id, api_name)
        if not result.active:
            status = 403 if result.reason == "OUT_OF_SCOPE" else 401
            raise AuthError("AUTH_DENIED", f"token rejected ({result.reason})", http_status=status)
        return result.invoker_id or ""

    def _emit(self, subscription_id: str, uri: str, kind: NotificationKind, payload: dict) -> Notification:
        seq = self._sequence.get(subscription_id, 0) + 1
        self._sequence[subscription_id] = seq
        notification = Notification(subscription_id, kind, payload, seq)
        self.dispatcher.enqueue(subscription_id, uri, notification)
        return notification

    # -- session with QoS --------------------------------------------------

    def create_qos_subscription(
        self,
        af_id: str,
        token: Optional[str],
        flow_id: str,
        qos_reference: str,
        notification_uri: str,
    ) -> QosSubscription:
        """Upgrade a flow to its reference guarantee, if admission lets it in.

        A rejected admission raises GBR_BUDGET_EXCEEDED and creates nothing.
        On success the subscription is GUARANTEED and a QOS_GUARANTEED
        notification is queued for the callback URI.
        """
        self._authorize(token, API_QOS)
        with self._lock:
            flow = self.model.get_flow(flow_id)
            if qos_reference not in self.qos_references:
                raise NotFoundError(
                    "UNKNOWN_QOS_REFERENCE", f"no QoS reference {qos_reference!r}"
                )
            for sub in self.qos_subscriptions.values():
                if sub.flow_id == flow_id:
                    raise ConflictError(
                        "DUPLICATE_SUBSCRIPTION", f"flow {flow_id!r} already has a QoS session"
                    )
            rate = self.qos_references[qos_reference]
            decision = self.model.admit_flow(flow_id, rate)
            if not decision.admitted:
                raise ConflictError(
                    "GBR_BUDGET_EXCEEDED",
                    f"guarantee needs {decision.committed_units:.3f} units, "
                    f"budget is {decision.budget_units:.3f}",
                )
            sub = QosSubscription(
                subscription_id=self._next_id("qos"),
                af_id=af_id,
                flow_id=flow.flow_id,
                qos_reference=qos_reference,
                notification_uri=notification_uri,
                status=QosStatus.GUARANTEED,
            )
            self.qos_subscriptions[sub.subscription_id] = sub
            self._emit(
                sub.subscription_id,
                notification_uri,
                NotificationKind.QOS_GUARANTEED,
                {"flowId": flow_id, "status": QosStatus.GUARANTEED.value},
            )
            return sub

    def get_qos_subscription(self, af_id: str, token: Optional[str], subscription_id: str) -> QosSubscription:
        self._authorize(token, API_QOS)
        with self._lock:
            return self._owned_qos(af_id, subscription_id)

    def list_qos_subscriptions(self, af_id: str, token: Optional[str]) -> list[QosSubscription]:
        self._authorize(token, API_QOS)
        with self._lock:
            return [s for s in self.qos_subscriptions.values() if s.af_id == af_id]

    def delete_qos_subscription(self, af_id: str, token: Optional[str], subscription_id: str) -> None:
        """Tear down a QoS session and release its guarantee."""
        self._authorize(token, API_QOS)
        with self._lock:
            sub = self._owned_qos(af_id, subscription_id)
            if sub.flow_id in self.model.admitted:
                self.model.release_flow(sub.flow_id)
            del self.qos_subscriptions[subscription_id]

    def _owned_qos(self, af_id: str, subscription_id: str) -> QosSubscription:
        sub = self.qos_subscriptions.get(subscription_id)
        if sub is None or sub.af_id != af_id:
            raise NotFoundError(
                "UNKNOWN_SUBSCRIPTION", f"no QoS subscription {subscription_id!r} for {af_id!r}"
            )
        return sub

    # -- monitoring --------------------------------------------------------

    def create_monitoring_subscription(
        self,
        af_id: str,
        token: Optional[str],
        cell_id: str,
        upper_threshold: float,
        notification_uri: str,
    ) -> MonitoringSubscription:
        """Watch a cell's load ratio; crossings from below fire CELL_LOAD_CROSSED."""
        self._authorize(token, API_MONITORING)
        with self._lock:
            if cell_id != self.model.cell.cell_id:
                raise NotFoundError("UNKNOWN_CELL", f"no cell {cell_id!r}")
            if not 0 < upper_threshold <= 1:
                raise ValidationError(
                    "BAD_THRESHOLD", "threshold must be in (0, 1]", http_status=422
                )
            load = self._last_loads.get(cell_id, 0.0)
            sub = MonitoringSubscription(
                subscription_id=self._next_id("mon"),
                af_id=af_id,
                cell_id=cell_id,
                upper_threshold=upper_threshold,
                notification_uri=notification_uri,
                last_reported_side=ABOVE if load >= upper_threshold else BELOW,
            )
            self.monitoring_subscriptions[sub.subscription_id] = sub
            return sub

    def delete_monitoring_subscription(self, af_id: str, token: Optional[str], subscription_id: str) -> None:
        self._authorize(token, API_MONITORING)
        with self._lock:
            sub = self.monitoring_subscriptions.get(subscription_id)
            if sub is None or sub.af_id != af_id:
                raise NotFoundError(
                    "UNKNOWN_SUBSCRIPTION", f"no monitoring subscription {subscription_id!r}"
                )
            del self.monitoring_subscriptions[subscription_id]

    def evaluate_monitoring_tick(self, current_loads: dict[str, float]) -> list[Notification]:
        """Feed one tick of load samples; edge-triggered, upward crossings only.

        The tracked side updates in both directions, so a dip below the
        threshold re-arms the subscription without emitting anything.
        """
        emitted: list[Notification] = []
        with self._lock:
            self._last_loads.update(current_loads)
            for sub in self.monitoring_subscriptions.values():
                if sub.cell_id not in current_loads:
                    continue
                load = current_loads[sub.cell_id]
                side = ABOVE if load >= sub.upper_threshold else BELOW
                if side == sub.last_reported_side:
                    continue
                if side == ABOVE:
                    emitted.append(
                        self._emit(
                            sub.subscription_id,
                            sub.notification_uri,
                            NotificationKind.CELL_LOAD_CROSSED,
                            {"cellId": sub.cell_id, "loadRatio": load},
                        )
                    )
                sub.last_reported_side = side
        return emitted

    # -- traffic influence -------------------------------------------------

    def create_traffic_influence(
        self,
        af_id: str,
        token: Optional[str],
        flow_id: str,
        dnai: str,
        notification_uri: str,
    ) -> TrafficInfluenceSubscription:
        """Steer a flow's route to the named DN access point. Idempotent per flow."""
        self._authorize(token, API_TRAFFIC_INFLUENCE)
        with self._lock:
            if dnai not in (DNAI_EDGE, DNAI_CORE):
                raise ValidationError("BAD_DNAI", f"unknown dnai {dnai!r}", http_status=422)
            self.model.get_flow(flow_id)
            route = Route.EDGE if dnai == DNAI_EDGE else Route.CORE
            for sub in self.traffic_subscriptions.values():
                if sub.flow_id == flow_id:
                    sub.dnai = dnai
                    self.model.apply_traffic_influence(flow_id, route)
                    return sub
            sub = TrafficInfluenceSubscription(
                subscription_id=self._next_id("ti"),
                af_id=af_id,
                flow_id=flow_id,
                dnai=dnai,
                notification_uri=notification_uri,
            )
            self.traffic_subscriptions[sub.subscription_id] = sub
            self.model.apply_traffic_influence(flow_id, route)
            return sub

    def delete_traffic_influence(self, af_id: str, token: Optional[str], subscription_id: str) -> None:
        """Remove the steering rule; the flow falls back to the core route."""
        self._authorize(token, API_TRAFFIC_INFLUENCE)
        with self._lock:
            sub = self.traffic_subscriptions.get(subscription_id)
            if sub is None or sub.af_id != af_id:
                raise NotFoundError(
                    "UNKNOWN_SUBSCRIPTION", f"no traffic influence subscription {subscription_id!r}"
                )
            self.model.apply_traffic_influence(sub.flow_id, Route.CORE)
            del self.traffic_subscriptions[subscription_id]

    # -- planned-time QoS windows -------------------------------------------

    def pdtq_negotiate(
        self,
        af_id: str,
        token: Optional[str],
        flow_id: str,
        requested_windows: list[tuple[int, int]],
        desired_rate: float,
        efficiency: float,
    ) -> PdtqNegotiation:
        """Find which requested tick windows could host a new guarantee.

        A window qualifies when the predicted peak load (background schedule
        plus the hypothetical guarantee) stays at or under the ceiling and
        the GBR budget admits the guarantee.
        """
        self._authorize(token, API_PDTQ)
        with self._lock:
            if not requested_windows:
                raise ValidationError("NO_WINDOWS", "at least one window is required", http_status=422)
            if desired_rate <= 0:
                raise ValidationError("SPEC_INVALID", "desired_rate must be > 0", http_status=422)
            if not 0 < efficiency <= 1:
                raise ValidationError("SPEC_INVALID", "efficiency must be in (0, 1]", http_status=422)
            self.model.get_flow(flow_id)
            negotiation_id = self._next_id("neg")
            candidates: list[PdtqCandidate] = []
            budget_ok = admit_gbr(
                self.model.cell, self.model.admitted_pairs(), (desired_rate, efficiency)
            ).admitted
            for k, window in enumerate(requested_windows):
                start, end = window
                if start < 0 or end < start:
                    raise ValidationError(
                        "SPEC_INVALID", f"window {window!r} is invalid", http_status=422
                    )
                if not budget_ok:
                    continue
                peak = self.model.predicted_load(window, (desired_rate, efficiency))
                if peak <= self.pdtq_load_ceiling + 1e-9:
                    candidates.append(PdtqCandidate(f"{negotiation_id}-p{k}", (start, end), peak))
            negotiation = PdtqNegotiation(
                negotiation_id=negotiation_id,
                af_id=af_id,
                flow_id=flow_id,
                requested_windows=tuple((int(s), int(e)) for s, e in requested_windows),
                desired_rate=desired_rate,
                efficiency=efficiency,
                candidates=tuple(candidates),
            )
            self.negotiations[negotiation_id] = negotiation
            return negotiation

    def pdtq_select(
        self, af_id: str, token: Optional[str], negotiation_id: str, policy_id: str
    ) -> PdtqNegotiation:
        """Commit one candidate window; the guarantee is booked inside it only."""
        self._authorize(token, API_PDTQ)
        with self._lock:
            negotiation = self.negotiations.get(negotiation_id)
            if negotiation is None or negotiation.af_id != af_id:
                raise NotFoundError("UNKNOWN_NEGOTIATION", f"no negotiation {negotiation_id!r}")
            if negotiation.selected_policy_id is not None:
                raise ConflictError(
                    "ALREADY_SELECTED", f"negotiation {negotiation_id!r} already selected"
                )
            chosen = next((c for c in negotiation.candidates if c.policy_id == policy_id), None)
            if chosen is None:
                raise NotFoundError("UNKNOWN_POLICY", f"no candidate policy {policy_id!r}")
            negotiation.selected_policy_id = policy_id
            self.bookings.append(
                PdtqBooking(
                    negotiation_id=negotiation_id,
                    flow_id=negotiation.flow_id,
                    window=chosen.window,
                    rate=negotiation.desired_rate,
                )
            )
            return negotiation

    def apply_pdtq_bookings(self, tick: int) -> list[str]:
        """Admit or release booked guarantees as windows open and close.

        Called once per tick before allocation. Returns event strings for the
        run log.
        """
        events: list[str] = []
        with self._lock:
            for booking in self.bookings:
                start, end = booking.window
                inside = start <= tick <= end
                if inside and not booking.active and not booking.abandoned:
                    if booking.flow_id in self.model.admitted:
                        booking.abandoned = True
                        events.append(f"PDTQ_SKIPPED:{booking.negotiation_id}")
                        continue
                    decision = self.model.admit_flow(booking.flow_id, booking.rate)
                    if decision.admitted:
                        booking.active = True
                        events.append(f"PDTQ_BOOKED:{booking.negotiation_id}")
                    else:
                        booking.abandoned = True
                        events.append(f"PDTQ_ADMISSION_FAILED:{booking.negotiation_id}")
                elif not inside and booking.active:
                    if booking.flow_id in self.model.admitted:
                        self.model.release_flow(booking.flow_id)
                    booking.active = False
                    events.append(f"PDTQ_RELEASED:{booking.negotiation_id}")
        return events
