"""Application-side invoker: onboarding, discovery, and the rate-adaptation
state machine that decides when to ask the network for help.

The control loop is a pure function over (measurement, state, config) so the
decision rules can be traced in isolation; the InvokerClient wrapper owns the
connector plumbing and executes the emitted actions.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Protocol

from .capif import AccessToken, ApiEndpoint, InvokerProfile, ServiceApiDescription
from .errors import ConflictError, NotFoundError, ServiceError, ValidationError
from .nef import (
    ALL_API_NAMES,
    API_QOS,
    DNAI_EDGE,
    MonitoringSubscription,
    QosSubscription,
    TrafficInfluenceSubscription,
)
from .netmodel import AllocationResult
from .notifications import Notification, NotificationKind


class ClientPhase(str, Enum):
    INIT = "INIT"
    DISCOVERED = "DISCOVERED"
    STREAMING_BEST_EFFORT = "STREAMING_BEST_EFFORT"
    QOS_REQUESTED = "QOS_REQUESTED"
    QOS_GUARANTEED = "QOS_GUARANTEED"
    QOS_REJECTED = "QOS_REJECTED"


class Action(str, Enum):
    REQUEST_QOS = "REQUEST_QOS"
    SUBSCRIBE_MONITORING = "SUBSCRIBE_MONITORING"
    REQUEST_EDGE = "REQUEST_EDGE"


@dataclass
class AdaptationConfig:
    """Knobs of the upgrade decision. The lower threshold is the user-facing
    "video is struggling" line, strictly below the nominal target rate."""

    target_rate: float = 4.5
    lower_threshold: float = 4.2
    debounce_samples: int = 2
    qos_reference: str = "qos-gbr-video"
    monitor_cell_load_threshold: float = 0.9
    request_edge_routing: bool = True

    def __post_init__(self) -> None:
        if not 0 < self.lower_threshold <= self.target_rate:
            raise ValidationError(
                "SPEC_INVALID", "lower_threshold must be in (0, target_rate]"
            )
        if self.debounce_samples < 1:
            raise ValidationError("SPEC_INVALID", "debounce_samples must be >= 1")
        if not 0 < self.monitor_cell_load_threshold <= 1:
            raise ValidationError("SPEC_INVALID", "monitor threshold must be in (0, 1]")


@dataclass
class ClientState:
    phase: ClientPhase = ClientPhase.INIT
    below_count: int = 0
    invoker_id: Optional[str] = None
    token: Optional[str] = None
    discovered_endpoints: dict[str, ApiEndpoint] = field(default_factory=dict)
    qos_subscription_id: Optional[str] = None
    monitoring_subscription_id: Optional[str] = None
    traffic_subscription_id: Optional[str] = None

    def active_subscription_ids(self) -> set[str]:
        return {
            sid
            for sid in (
                self.qos_subscription_id,
                self.monitoring_subscription_id,
                self.traffic_subscription_id,
            )
            if sid is not None
        }


def measure_throughput(flow_id: str, allocation: AllocationResult) -> float:
    """The flow's achieved rate in the given allocation."""
    try:
        return allocation.achieved_rate[flow_id]
    except KeyError:
        raise NotFoundError("UNKNOWN_FLOW", f"allocation has no flow {flow_id!r}") from None


def control_step(measured_rate: float, state: ClientState, config: AdaptationConfig) -> list[Action]:
    """Advance the adaptation state machine by one sample; mutates ``state``.

    DISCOVERED arms the stream: subscribe to cell-load monitoring and, when
    configured, steer to the edge route, then start streaming best-effort.
    While streaming, consecutive below-threshold samples accumulate; hitting
    the debounce count emits REQUEST_QOS exactly once. A healthy sample
    clears the count, including a count primed by a load-crossing
    notification. Terminal and in-flight phases do nothing.
    """
    if state.phase is ClientPhase.INIT:
        raise ValidationError("SPEC_INVALID", "client has not discovered the APIs yet")
    actions: list[Action] = []
    if state.phase is ClientPhase.DISCOVERED:
        actions.append(Action.SUBSCRIBE_MONITORING)
        if config.request_edge_routing:
            actions.append(Action.REQUEST_EDGE)
        state.phase = ClientPhase.STREAMING_BEST_EFFORT
        return actions
    if state.phase is ClientPhase.STREAMING_BEST_EFFORT:
        if measured_rate < config.lower_threshold:
            state.below_count = min(state.below_count + 1, config.debounce_samples)
        else:
            state.below_count = 0
        if state.below_count >= config.debounce_samples:
            actions.append(Action.REQUEST_QOS)
            state.phase = ClientPhase.QOS_REQUESTED
        return actions
    # QOS_REQUESTED, QOS_GUARANTEED, QOS_REJECTED: nothing left to decide
    return actions


def handle_notification(
    notification: Notification, state: ClientState, config: AdaptationConfig
) -> None:
    """Apply one callback notification to the client state; mutates ``state``.

    A CELL_LOAD_CROSSED while streaming primes the debounce counter so the
    next below-threshold sample triggers the upgrade immediately. A
    QOS_GUARANTEED acknowledgement completes an in-flight request.
    """
    if notification.subscription_id not in state.active_subscription_ids():
        raise NotFoundError(
            "UNKNOWN_SUBSCRIPTION",
            f"notification for unknown subscription {notification.subscription_id!r}",
        )
    if (
        notification.kind is NotificationKind.CELL_LOAD_CROSSED
        and state.phase is ClientPhase.STREAMING_BEST_EFFORT
    ):
        state.below_count = config.debounce_samples
    elif (
        notification.kind is NotificationKind.QOS_GUARANTEED
        and state.phase is ClientPhase.QOS_REQUESTED
    ):
        state.phase = ClientPhase.QOS_GUARANTEED


class CapifConnector(Protocol):
    """Client-side face of the registry, in-process or HTTP."""

    def onboard_invoker(self, display_name: str) -> InvokerProfile: ...

    def discover_service_apis(
        self, invoker_id: str, api_name: Optional[str] = None, aef_id: Optional[str] = None
    ) -> list[ServiceApiDescription]: ...

    def issue_token(
        self, invoker_id: str, onboarding_credential: str, scope: list[tuple[str, str]]
    ) -> AccessToken: ...


class NefConnector(Protocol):
    """Client-side face of the exposure APIs."""

    def create_qos_subscription(
        self, af_id: str, token: str, flow_id: str, qos_reference: str, notification_uri: str
    ) -> QosSubscription: ...

    def create_monitoring_subscription(
        self, af_id: str, token: str, cell_id: str, upper_threshold: float, notification_uri: str
    ) -> MonitoringSubscription: ...

    def create_traffic_influence(
        self, af_id: str, token: str, flow_id: str, dnai: str, notification_uri: str
    ) -> TrafficInfluenceSubscription: ...


class InvokerClient:
    """Wires the pure control loop to real connectors and a callback queue."""

    def __init__(
        self,
        capif: CapifConnector,
        config: AdaptationConfig,
        af_id: str,
        flow_id: str,
        cell_id: str,
        notification_uri: str,
        nef: Optional[NefConnector] = None,
        nef_factory: Optional[Callable[[ApiEndpoint], NefConnector]] = None,
        display_name: str = "adaptive-video-client",
    ):
        self.capif = capif
        self.nef = nef
        self._nef_factory = nef_factory
        self.config = config
        self.af_id = af_id
        self.flow_id = flow_id
        self.cell_id = cell_id
        self.notification_uri = notification_uri
        self.display_name = display_name
        self.state = ClientState()
        self._credential: Optional[str] = None
        self._inbox: list[Notification] = []
        self._inbox_lock = threading.Lock()

    # -- CAPIF workflow ----------------------------------------------------

    def onboard_and_discover(self) -> ClientState:
        """Onboard, discover the full API set, and obtain a scoped token.

        Missing any required API raises DISCOVERY_EMPTY. Calling again is
        allowed and yields a fresh identity and token over the same endpoints.
        """
        profile = self.capif.onboard_invoker(self.display_name)
        apis = self.capif.discover_service_apis(profile.invoker_id)
        by_name = {api.api_name: api for api in apis}
        missing = [name for name in ALL_API_NAMES if name not in by_name]
        if missing:
            raise NotFoundError(
                "DISCOVERY_EMPTY", f"required APIs not discoverable: {', '.join(missing)}"
            )
        scope = [(by_name[name].aef_id, name) for name in ALL_API_NAMES]
        token = self.capif.issue_token(profile.invoker_id, profile.onboarding_credential, scope)
        self.state.invoker_id = profile.invoker_id
        self.state.token = token.token_string
        self.state.discovered_endpoints = {name: by_name[name].endpoint for name in ALL_API_NAMES}
        self.state.phase = ClientPhase.DISCOVERED
        self._credential = profile.onboarding_credential
        if self.nef is None and self._nef_factory is not None:
            self.nef = self._nef_factory(self.state.discovered_endpoints[API_QOS])
        return self.state

    # -- notification intake ----------------------------------------------

    def on_notification_wire(self, payload: dict) -> None:
        """Callback endpoint body -> inbox. Safe to call from any thread."""
        notification = Notification(
            subscription_id=str(payload.get("subscriptionId", "")),
            kind=NotificationKind(payload.get("kind")),
            payload=dict(payload.get("payload", {})),
            sequence_number=int(payload.get("sequenceNumber", 0)),
        )
        if notification.subscription_id not in self.state.active_subscription_ids():
            raise NotFoundError(
                "UNKNOWN_SUBSCRIPTION",
                f"no active subscription {notification.subscription_id!r}",
            )
        with self._inbox_lock:
            self._inbox.append(notification)

    def _drain_inbox(self) -> list[str]:
        with self._inbox_lock:
            pending, self._inbox = self._inbox, []
        events = []
        for notification in pending:
            before = self.state.phase
            handle_notification(notification, self.state, self.config)
            if before is not self.state.phase and self.state.phase is ClientPhase.QOS_GUARANTEED:
                events.append("QOS_GUARANTEED")
        return events

    # -- per-tick driver ---------------------------------------------------

    def step(self, measured_rate: float) -> list[str]:
        """Consume queued notifications, run one control step, execute actions.

        Returns human-readable event strings for the run log.
        """
        events = self._drain_inbox()
        actions = control_step(measured_rate, self.state, self.config)
        for action in actions:
            events.extend(self._execute(action))
        return events

    def _execute(self, action: Action) -> list[str]:
        if self.nef is None:
            raise ServiceError("CCF_UNREACHABLE", "no exposure connector available", 502)
        token = self.state.token or ""
        if action is Action.SUBSCRIBE_MONITORING:
            sub = self.nef.create_monitoring_subscription(
                self.af_id,
                token,
                self.cell_id,
                self.config.monitor_cell_load_threshold,
                self.notification_uri,
            )
            self.state.monitoring_subscription_id = sub.subscription_id
            return ["SUBSCRIBE_MONITORING"]
        if action is Action.REQUEST_EDGE:
            sub = self.nef.create_traffic_influence(
                self.af_id, token, self.flow_id, DNAI_EDGE, self.notification_uri
            )
            self.state.traffic_subscription_id = sub.subscription_id
            return ["REQUEST_EDGE"]
        if action is Action.REQUEST_QOS:
            try:
                sub = self.nef.create_qos_subscription(
                    self.af_id,
                    token,
                    self.flow_id,
                    self.config.qos_reference,
                    self.notification_uri,
                )
            except ConflictError as exc:
                if exc.code != "GBR_BUDGET_EXCEEDED":
                    raise
                self.state.phase = ClientPhase.QOS_REJECTED
                return ["REQUEST_QOS", "QOS_REJECTED"]
            self.state.qos_subscription_id = sub.subscription_id
            return ["REQUEST_QOS"]
        return []
