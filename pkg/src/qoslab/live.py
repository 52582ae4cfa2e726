"""Live mode: the same scenario pipeline with real HTTP between the parts.

Three uvicorn servers run in background threads of this process: the API
registry, the exposure service, and the client's callback receiver. They share
the in-process cell model, so the physics stays identical to the virtual-time
runner; only transport and notification timing go through real sockets.
"""
from __future__ import annotations

import threading
import time
from typing import Optional

import uvicorn

from .capif import CapifCore
from .client import InvokerClient, measure_throughput
from .errors import ServiceError, ValidationError
from .harness import (
    AEF_ID,
    AF_ID,
    CELL_ID,
    PROVIDER_DOMAIN,
    VIDEO_FLOW_ID,
    RunResult,
    Scenario,
    ScenarioSpec,
    ScenarioStack,
    TickRecord,
    build_model,
    publish_catalogue,
    summarize,
)
from .http_api import create_callback_app, create_capif_app, create_nef_app
from .nef import NefService
from .netmodel import flow_latency
from .notifications import NotificationDispatcher
from .remote import (
    HttpCapifConnector,
    HttpIntrospector,
    HttpNefConnector,
    http_notification_transport,
)

DELIVERY_SETTLE_SECONDS = 5.0


class ServerHandle:
    """A uvicorn server on a background thread, stoppable, port discoverable."""

    def __init__(self, app, host: str = "127.0.0.1", port: int = 0):
        self.host = host
        config = uvicorn.Config(app, host=host, port=port, log_level="warning")
        self._server = uvicorn.Server(config)
        self._thread = threading.Thread(target=self._server.run, daemon=True)

    def start(self, timeout: float = 10.0) -> "ServerHandle":
        self._thread.start()
        deadline = time.monotonic() + timeout
        while not self._server.started:
            if not self._thread.is_alive():
                raise ServiceError("SERVER_FAILED", "server thread exited during startup", 500)
            if time.monotonic() > deadline:
                raise ServiceError("SERVER_FAILED", "server did not start in time", 500)
            time.sleep(0.01)
        return self

    @property
    def port(self) -> int:
        return self._server.servers[0].sockets[0].getsockname()[1]

    @property
    def base_url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def stop(self, timeout: float = 5.0) -> None:
        self._server.should_exit = True
        self._thread.join(timeout=timeout)


def parse_bind(value: Optional[str], flag: str) -> tuple[str, int]:
    """'host:port' or 'http://host:port' -> (host, port); None -> ephemeral."""
    if value is None:
        return "127.0.0.1", 0
    text = value.strip()
    for prefix in ("http://", "https://"):
        if text.startswith(prefix):
            text = text[len(prefix):]
    text = text.rstrip("/")
    host, sep, port_text = text.rpartition(":")
    if not sep or not host:
        raise ValidationError("BAD_FLAG", f"{flag} must look like host:port, got {value!r}")
    try:
        port = int(port_text)
    except ValueError:
        raise ValidationError("BAD_FLAG", f"{flag} has a bad port: {value!r}") from None
    if not 0 <= port <= 65535:
        raise ValidationError("BAD_FLAG", f"{flag} port out of range: {port}")
    return host, port


def run_scenario_live(
    spec: ScenarioSpec,
    ccf_bind: Optional[str] = None,
    nef_bind: Optional[str] = None,
) -> RunResult:
    """Run one experiment with HTTP between client, registry and exposure.

    Ticks still advance as fast as the loop allows; after each tick the runner
    waits for the notification queues to settle so the trace keeps the same
    ordering guarantees as the virtual-time runner, minus exact timing.
    """
    ccf_host, ccf_port = parse_bind(ccf_bind, "--ccf")
    nef_host, nef_port = parse_bind(nef_bind, "--nef")

    model = build_model(spec)
    capif = CapifCore()
    provider = capif.register_provider(PROVIDER_DOMAIN)

    ccf_server = ServerHandle(create_capif_app(capif), ccf_host, ccf_port).start()
    try:
        dispatcher = NotificationDispatcher(http_notification_transport(), live=True)
        nef = NefService(
            AEF_ID, model, HttpIntrospector(ccf_server.base_url), dispatcher
        )
        nef_server = ServerHandle(create_nef_app(nef), nef_host, nef_port).start()
        try:
            publish_catalogue(capif, provider, host=nef_server.host, port=nef_server.port)

            client: Optional[InvokerClient] = None

            def callback(payload: dict) -> None:
                assert client is not None  # no subscription exists before the client
                client.on_notification_wire(payload)

            callback_server = ServerHandle(create_callback_app(callback)).start()
            try:
                client = InvokerClient(
                    HttpCapifConnector(ccf_server.base_url),
                    spec.adaptation,
                    af_id=AF_ID,
                    flow_id=VIDEO_FLOW_ID,
                    cell_id=CELL_ID,
                    notification_uri=f"{callback_server.base_url}/client/notifications",
                    nef_factory=lambda endpoint: HttpNefConnector(
                        f"http://{endpoint.host}:{endpoint.port}"
                    ),
                )
                client.onboard_and_discover()

                adaptive = spec.scenario is not Scenario.S1_BENCHMARK
                records: list[TickRecord] = []
                for tick in range(spec.ticks):
                    events: list[str] = []
                    events.extend(nef.apply_pdtq_bookings(tick))
                    allocation = model.allocate_at(tick)
                    crossings = nef.evaluate_monitoring_tick(
                        {CELL_ID: allocation.cell_load_ratio}
                    )
                    events.extend(n.kind.value for n in crossings)
                    dispatcher.wait_idle(DELIVERY_SETTLE_SECONDS)
                    measured = measure_throughput(VIDEO_FLOW_ID, allocation)
                    if adaptive:
                        events.extend(client.step(measured))
                    bg_count = len(model.background_at(tick)[0])
                    latency = flow_latency(
                        model.get_flow(VIDEO_FLOW_ID),
                        model.path_config,
                        allocation.cell_load_ratio,
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
                dispatcher.wait_idle(DELIVERY_SETTLE_SECONDS)
                stack = ScenarioStack(spec, model, capif, nef, dispatcher, client, provider)
                return RunResult(records, summarize(spec, records, stack), stack)
            finally:
                callback_server.stop()
        finally:
            nef_server.stop()
    finally:
        ccf_server.stop()
