"""Adaptation state machine tests, pure logic first, then the wired client."""
from __future__ import annotations

import pytest

from qoslab.capif import ApiEndpoint, CapifCore, ServiceApiDraft
from qoslab.client import (
    Action,
    AdaptationConfig,
    ClientPhase,
    ClientState,
    InvokerClient,
    control_step,
    handle_notification,
    measure_throughput,
)
from qoslab.errors import NotFoundError, ValidationError
from qoslab.nef import ALL_API_NAMES, NefService
from qoslab.netmodel import (
    AllocationResult,
    Cell,
    Flow,
    NetworkModel,
    Route,
    UeContext,
)
from qoslab.notifications import (
    CallbackRegistry,
    Notification,
    NotificationDispatcher,
    NotificationKind,
)

CFG = AdaptationConfig()


def streaming_state():
    return ClientState(phase=ClientPhase.STREAMING_BEST_EFFORT)


class TestControlStep:
    def test_init_not_ready(self):
        with pytest.raises(ValidationError):
            control_step(4.5, ClientState(), CFG)

    def test_discovered_arms_stream(self):
        state = ClientState(phase=ClientPhase.DISCOVERED)
        actions = control_step(0.0, state, CFG)  # measurement is irrelevant here
        assert actions == [Action.SUBSCRIBE_MONITORING, Action.REQUEST_EDGE]
        assert state.phase is ClientPhase.STREAMING_BEST_EFFORT

    def test_edge_routing_optional(self):
        config = AdaptationConfig(request_edge_routing=False)
        state = ClientState(phase=ClientPhase.DISCOVERED)
        assert control_step(0.0, state, config) == [Action.SUBSCRIBE_MONITORING]

    def test_debounce_two_bad_samples(self):
        state = streaming_state()
        assert control_step(4.0, state, CFG) == []
        assert state.below_count == 1
        assert control_step(4.0, state, CFG) == [Action.REQUEST_QOS]
        assert state.phase is ClientPhase.QOS_REQUESTED

    def test_healthy_sample_resets_count(self):
        state = streaming_state()
        control_step(4.0, state, CFG)
        control_step(4.5, state, CFG)
        assert state.below_count == 0
        assert control_step(4.0, state, CFG) == []  # debounce restarts

    def test_threshold_is_strict(self):
        state = streaming_state()
        control_step(4.2, state, CFG)  # exactly at threshold counts as healthy
        assert state.below_count == 0

    def test_no_second_request(self):
        state = ClientState(phase=ClientPhase.QOS_REQUESTED)
        assert control_step(0.1, state, CFG) == []
        state.phase = ClientPhase.QOS_GUARANTEED
        assert control_step(0.1, state, CFG) == []
        state.phase = ClientPhase.QOS_REJECTED
        assert control_step(0.1, state, CFG) == []


class TestNotifications:
    def crossing(self, sub="mon-1"):
        return Notification(sub, NotificationKind.CELL_LOAD_CROSSED, {}, 1)

    def test_unknown_subscription_rejected(self):
        state = streaming_state()
        with pytest.raises(NotFoundError):
            handle_notification(self.crossing(), state, CFG)

    def test_crossing_primes_debounce(self):
        state = streaming_state()
        state.monitoring_subscription_id = "mon-1"
        handle_notification(self.crossing(), state, CFG)
        assert state.below_count == CFG.debounce_samples
        # one bad sample now fires immediately
        assert control_step(4.0, state, CFG) == [Action.REQUEST_QOS]

    def test_crossing_then_healthy_sample_stands_down(self):
        state = streaming_state()
        state.monitoring_subscription_id = "mon-1"
        handle_notification(self.crossing(), state, CFG)
        assert control_step(4.5, state, CFG) == []
        assert state.below_count == 0

    def test_guarantee_ack_completes_request(self):
        state = ClientState(phase=ClientPhase.QOS_REQUESTED, qos_subscription_id="qos-1")
        ack = Notification("qos-1", NotificationKind.QOS_GUARANTEED, {}, 1)
        handle_notification(ack, state, CFG)
        assert state.phase is ClientPhase.QOS_GUARANTEED

    def test_guarantee_ack_ignored_while_streaming(self):
        state = streaming_state()
        state.qos_subscription_id = "qos-1"
        ack = Notification("qos-1", NotificationKind.QOS_GUARANTEED, {}, 1)
        handle_notification(ack, state, CFG)
        assert state.phase is ClientPhase.STREAMING_BEST_EFFORT


class TestConfig:
    def test_threshold_bounds(self):
        with pytest.raises(ValidationError):
            AdaptationConfig(lower_threshold=5.0, target_rate=4.5)
        with pytest.raises(ValidationError):
            AdaptationConfig(lower_threshold=0.0)

    def test_debounce_minimum(self):
        with pytest.raises(ValidationError):
            AdaptationConfig(debounce_samples=0)


def test_measure_throughput():
    allocation = AllocationResult({"video": 3.25}, 0.5)
    assert measure_throughput("video", allocation) == 3.25
    with pytest.raises(NotFoundError):
        measure_throughput("ghost", allocation)


# -- wired client against in-process services --------------------------------


def build_world(publish=ALL_API_NAMES, rival_units=0.0):
    capif = CapifCore()
    provider = capif.register_provider("exposure.example")
    for name in publish:
        capif.publish_service_api(
            provider.provider_id,
            provider.provider_secret,
            ServiceApiDraft(name, "nef-aef", ApiEndpoint("nef", 8443, "/nef"), "v1"),
        )
    model = NetworkModel(Cell("cell-1", 12.0))
    model.add_ue(UeContext("ue-video", "cell-1", 1.0))
    model.add_flow(Flow("video", "ue-video", 4.5))
    if rival_units:
        model.add_ue(UeContext("ue-rival", "cell-1", 0.5))
        model.add_flow(Flow("rival", "ue-rival", rival_units / 2))
        model.admit_flow("rival", rival_units / 2)  # units = rate / 0.5
    registry = CallbackRegistry()
    dispatcher = NotificationDispatcher(registry.send)
    nef = NefService("nef-aef", model, capif.introspect_token, dispatcher)
    client = InvokerClient(
        capif,
        AdaptationConfig(),
        af_id="af-video",
        flow_id="video",
        cell_id="cell-1",
        notification_uri="inproc://client",
        nef=nef,
    )
    registry.register("inproc://client", client.on_notification_wire)
    return client, model, dispatcher


class TestInvokerClient:
    def test_onboard_and_discover(self):
        client, _, _ = build_world()
        state = client.onboard_and_discover()
        assert state.phase is ClientPhase.DISCOVERED
        assert state.token
        assert set(state.discovered_endpoints) == set(ALL_API_NAMES)

    def test_missing_api_fails_discovery(self):
        client, _, _ = build_world(publish=ALL_API_NAMES[:-1])
        with pytest.raises(NotFoundError) as err:
            client.onboard_and_discover()
        assert err.value.code == "DISCOVERY_EMPTY"

    def test_reonboard_rotates_identity(self):
        client, _, _ = build_world()
        first = client.onboard_and_discover()
        first_invoker, first_token = first.invoker_id, first.token
        second = client.onboard_and_discover()
        assert second.invoker_id != first_invoker
        assert second.token != first_token
        assert set(second.discovered_endpoints) == set(ALL_API_NAMES)

    def test_full_upgrade_path(self):
        client, model, dispatcher = build_world()
        client.onboard_and_discover()
        assert client.step(4.5) == ["SUBSCRIBE_MONITORING", "REQUEST_EDGE"]
        assert model.get_flow("video").route is Route.EDGE
        assert client.state.monitoring_subscription_id
        assert client.step(4.0) == []
        assert client.step(4.0) == ["REQUEST_QOS"]
        assert "video" in model.admitted
        dispatcher.pump(0)  # deliver the guarantee acknowledgement
        assert client.step(4.5) == ["QOS_GUARANTEED"]
        assert client.state.phase is ClientPhase.QOS_GUARANTEED

    def test_rejected_when_budget_full(self):
        client, model, _ = build_world(rival_units=9.0)
        client.onboard_and_discover()
        client.step(4.5)
        client.step(2.0)
        events = client.step(2.0)
        assert events == ["REQUEST_QOS", "QOS_REJECTED"]
        assert client.state.phase is ClientPhase.QOS_REJECTED
        assert "video" not in model.admitted

    def test_wire_notification_unknown_subscription(self):
        client, _, _ = build_world()
        client.onboard_and_discover()
        with pytest.raises(NotFoundError):
            client.on_notification_wire(
                {"subscriptionId": "nope", "kind": "CELL_LOAD_CROSSED", "payload": {}, "sequenceNumber": 1}
            )
