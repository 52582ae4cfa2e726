"""HTTP connectors: call a remote registry / exposure service and translate
wire errors back into the same ServiceError codes the cores raise."""
from __future__ import annotations

from typing import Optional

import httpx

from .capif import (
    AccessToken,
    ApiEndpoint,
    ApiStatus,
    IntrospectionResult,
    InvokerProfile,
    SecurityMethod,
    ServiceApiDescription,
)
from .errors import ServiceError
from .nef import (
    MonitoringSubscription,
    PdtqCandidate,
    PdtqNegotiation,
    QosSubscription,
    QosStatus,
    TrafficInfluenceSubscription,
)

_TIMEOUT = 10.0


def _check(response: httpx.Response) -> httpx.Response:
    if response.status_code < 400:
        return response
    try:
        body = response.json()
        code = body.get("code", "HTTP_ERROR")
        detail = body.get("detail", response.text)
    except ValueError:
        code, detail = "HTTP_ERROR", response.text
    raise ServiceError(code, detail, response.status_code)


def _auth(token: str) -> dict:
    return {"Authorization": f"Bearer {token}"}


class HttpCapifConnector:
    """Talks to a registry server; satisfies the CapifConnector protocol."""

    def __init__(self, base_url: str, client: Optional[httpx.Client] = None):
        self._http = client or httpx.Client(base_url=base_url, timeout=_TIMEOUT)

    def onboard_invoker(self, display_name: str) -> InvokerProfile:
        try:
            response = self._http.post("/capif/invokers", json={"displayName": display_name})
        except httpx.TransportError as exc:
            raise ServiceError("CCF_UNREACHABLE", str(exc), 502) from exc
        body = _check(response).json()
        return InvokerProfile(body["invokerId"], body["displayName"], body["onboardingCredential"])

    def discover_service_apis(
        self, invoker_id: str, api_name: Optional[str] = None, aef_id: Optional[str] = None
    ) -> list[ServiceApiDescription]:
        params = {"api-invoker-id": invoker_id}
        if api_name is not None:
            params["api-name"] = api_name
        if aef_id is not None:
            params["aef-id"] = aef_id
        try:
            response = self._http.get("/capif/service-apis", params=params)
        except httpx.TransportError as exc:
            raise ServiceError("CCF_UNREACHABLE", str(exc), 502) from exc
        body = _check(response).json()
        apis = []
        for item in body["serviceApis"]:
            endpoint = item["endpoint"]
            apis.append(
                ServiceApiDescription(
                    api_id=item["apiId"],
                    api_name=item["apiName"],
                    provider_id=item["providerId"],
                    aef_id=item["aefId"],
                    endpoint=ApiEndpoint(endpoint["host"], endpoint["port"], endpoint["basePath"]),
                    version=item["version"],
                    security_method=SecurityMethod(item["securityMethod"]),
                    status=ApiStatus(item["status"]),
                )
            )
        return apis

    def issue_token(
        self, invoker_id: str, onboarding_credential: str, scope: list[tuple[str, str]]
    ) -> AccessToken:
        payload = {
            "invokerId": invoker_id,
            "onboardingCredential": onboarding_credential,
            "scope": [{"aefId": a, "apiName": n} for a, n in scope],
        }
        try:
            response = self._http.post("/capif/security/token", json=payload)
        except httpx.TransportError as exc:
            raise ServiceError("CCF_UNREACHABLE", str(exc), 502) from exc
        body = _check(response).json()
        return AccessToken(
            token_string=body["tokenString"],
            invoker_id=body["invokerId"],
            scope=frozenset((e["aefId"], e["apiName"]) for e in body["scope"]),
            issued_at=body["issuedAt"],
            expires_in=body["expiresIn"],
        )


class HttpIntrospector:
    """Introspection callable for an exposure service living apart from the
    registry; matches the Introspector signature."""

    def __init__(self, base_url: str, client: Optional[httpx.Client] = None):
        self._http = client or httpx.Client(base_url=base_url, timeout=_TIMEOUT)

    def __call__(self, token: str, aef_id: str, api_name: str) -> IntrospectionResult:
        response = self._http.post(
            "/capif/security/introspect",
            json={"token": token, "aefId": aef_id, "apiName": api_name},
        )
        body = _check(response).json()
        return IntrospectionResult(body["active"], body.get("invokerId"), body.get("reason"))


class HttpNefConnector:
    """Talks to an exposure server; satisfies the NefConnector protocol."""

    def __init__(self, base_url: str, client: Optional[httpx.Client] = None):
        self._http = client or httpx.Client(base_url=base_url, timeout=_TIMEOUT)

    def create_qos_subscription(
        self, af_id: str, token: str, flow_id: str, qos_reference: str, notification_uri: str
    ) -> QosSubscription:
        response = self._http.post(
            f"/nef/3gpp-as-session-with-qos/v1/{af_id}/subscriptions",
            json={
                "flowId": flow_id,
                "qosReference": qos_reference,
                "notificationUri": notification_uri,
            },
            headers=_auth(token),
        )
        body = _check(response).json()
        return QosSubscription(
            subscription_id=body["subscriptionId"],
            af_id=body["afId"],
            flow_id=body["flowId"],
            qos_reference=body["qosReference"],
            notification_uri=body["notificationUri"],
            status=QosStatus(body["status"]),
        )

    def delete_qos_subscription(self, af_id: str, token: str, subscription_id: str) -> None:
        response = self._http.delete(
            f"/nef/3gpp-as-session-with-qos/v1/{af_id}/subscriptions/{subscription_id}",
            headers=_auth(token),
        )
        _check(response)

    def create_monitoring_subscription(
        self, af_id: str, token: str, cell_id: str, upper_threshold: float, notification_uri: str
    ) -> MonitoringSubscription:
        response = self._http.post(
            f"/nef/3gpp-monitoring-event/v1/{af_id}/subscriptions",
            json={
                "cellId": cell_id,
                "upperThreshold": upper_threshold,
                "notificationUri": notification_uri,
            },
            headers=_auth(token),
        )
        body = _check(response).json()
        return MonitoringSubscription(
            subscription_id=body["subscriptionId"],
            af_id=body["afId"],
            cell_id=body["cellId"],
            upper_threshold=body["upperThreshold"],
            notification_uri=body["notificationUri"],
            last_reported_side="BELOW",
        )

    def create_traffic_influence(
        self, af_id: str, token: str, flow_id: str, dnai: str, notification_uri: str
    ) -> TrafficInfluenceSubscription:
        response = self._http.post(
            f"/nef/3gpp-traffic-influence/v1/{af_id}/subscriptions",
            json={"flowId": flow_id, "dnai": dnai, "notificationUri": notification_uri},
            headers=_auth(token),
        )
        body = _check(response).json()
        return TrafficInfluenceSubscription(
            subscription_id=body["subscriptionId"],
            af_id=body["afId"],
            flow_id=body["flowId"],
            dnai=body["dnai"],
            notification_uri=body["notificationUri"],
        )

    def pdtq_negotiate(
        self,
        af_id: str,
        token: str,
        flow_id: str,
        requested_windows: list[tuple[int, int]],
        desired_rate: float,
        efficiency: float,
    ) -> PdtqNegotiation:
        response = self._http.post(
            f"/nef/pdtq/v1/{af_id}/negotiations",
            json={
                "flowId": flow_id,
                "requestedWindows": [{"startTick": s, "endTick": e} for s, e in requested_windows],
                "desiredRate": desired_rate,
                "efficiency": efficiency,
            },
            headers=_auth(token),
        )
        return _negotiation_from_wire(_check(response).json())

    def pdtq_select(
        self, af_id: str, token: str, negotiation_id: str, policy_id: str
    ) -> PdtqNegotiation:
        response = self._http.post(
            f"/nef/pdtq/v1/{af_id}/negotiations/{negotiation_id}/select",
            json={"policyId": policy_id},
            headers=_auth(token),
        )
        return _negotiation_from_wire(_check(response).json())


def _negotiation_from_wire(body: dict) -> PdtqNegotiation:
    return PdtqNegotiation(
        negotiation_id=body["negotiationId"],
        af_id=body["afId"],
        flow_id=body["flowId"],
        requested_windows=tuple(
            (w["startTick"], w["endTick"]) for w in body["requestedWindows"]
        ),
        desired_rate=body["desiredRate"],
        efficiency=body["efficiency"],
        candidates=tuple(
            PdtqCandidate(
                c["policyId"],
                (c["window"]["startTick"], c["window"]["endTick"]),
                c["predictedPeakLoad"],
            )
            for c in body["candidatePolicies"]
        ),
        selected_policy_id=body.get("selectedPolicyId"),
    )


def http_notification_transport(client: Optional[httpx.Client] = None):
    """Transport for the dispatcher: POST the wire payload to the callback URI."""
    from .notifications import DeliveryError

    http = client or httpx.Client(timeout=_TIMEOUT)

    def send(uri: str, payload: dict) -> None:
        try:
            response = http.post(uri, json=payload)
        except httpx.TransportError as exc:
            raise DeliveryError(str(exc)) from exc
        if response.status_code >= 400:
            raise DeliveryError(f"receiver returned {response.status_code}")

    return send
