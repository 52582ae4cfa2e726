"""HTTP bindings for the registry and the exposure service.

Thin app factories over the in-process cores: parse the wire shape, call the
core, translate ServiceError codes to statuses. Bodies use camelCase keys.
"""
from __future__ import annotations

from typing import Callable, Optional

from fastapi import FastAPI, Header, Query, Request
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, Field

from .capif import (
    AccessToken,
    ApiEndpoint,
    CapifCore,
    SecurityMethod,
    ServiceApiDescription,
    ServiceApiDraft,
)
from .errors import AuthError, ServiceError
from .nef import (
    MonitoringSubscription,
    NefService,
    PdtqNegotiation,
    QosSubscription,
    TrafficInfluenceSubscription,
)


def _install_error_handler(app: FastAPI) -> None:
    @app.exception_handler(ServiceError)
    async def _service_error(_request: Request, exc: ServiceError):
        return JSONResponse(
            status_code=exc.http_status, content={"code": exc.code, "detail": str(exc)}
        )


def _bearer(authorization: Optional[str]) -> str:
    if not authorization or not authorization.startswith("Bearer "):
        raise AuthError("AUTH_DENIED", "missing bearer token", http_status=401)
    return authorization[len("Bearer "):]


# -- wire shapes -------------------------------------------------------------


class EndpointBody(BaseModel):
    host: str
    port: int
    basePath: str


class ProviderCreate(BaseModel):
    domainName: str = ""


class ServiceApiCreate(BaseModel):
    apiName: str = ""
    aefId: str = ""
    endpoint: EndpointBody
    version: str = ""
    securityMethod: str = SecurityMethod.TOKEN.value


class InvokerCreate(BaseModel):
    displayName: str = ""


class ScopeEntry(BaseModel):
    aefId: str
    apiName: str


class TokenRequest(BaseModel):
    invokerId: str = ""
    onboardingCredential: str = ""
    scope: list[ScopeEntry] = Field(default_factory=list)


class IntrospectRequest(BaseModel):
    token: str = ""
    aefId: str = ""
    apiName: str = ""


class QosCreate(BaseModel):
    flowId: str = ""
    qosReference: str = ""
    notificationUri: str = ""


class MonitoringCreate(BaseModel):
    cellId: str = ""
    upperThreshold: float = 0.9
    notificationUri: str = ""


class TrafficInfluenceCreate(BaseModel):
    flowId: str = ""
    dnai: str = ""
    notificationUri: str = ""


class WindowBody(BaseModel):
    startTick: int
    endTick: int


class PdtqNegotiateRequest(BaseModel):
    flowId: str = ""
    requestedWindows: list[WindowBody] = Field(default_factory=list)
    desiredRate: float = 0.0
    efficiency: float = 1.0


class PdtqSelectRequest(BaseModel):
    policyId: str = ""


# -- wire serialization ------------------------------------------------------


def endpoint_to_wire(endpoint: ApiEndpoint) -> dict:
    return {"host": endpoint.host, "port": endpoint.port, "basePath": endpoint.base_path}


def api_to_wire(api: ServiceApiDescription) -> dict:
    return {
        "apiId": api.api_id,
        "apiName": api.api_name,
        "providerId": api.provider_id,
        "aefId": api.aef_id,
        "endpoint": endpoint_to_wire(api.endpoint),
        "version": api.version,
        "securityMethod": api.security_method.value,
        "status": api.status.value,
    }


def token_to_wire(token: AccessToken) -> dict:
    return {
        "tokenString": token.token_string,
        "invokerId": token.invoker_id,
        "scope": [{"aefId": a, "apiName": n} for a, n in sorted(token.scope)],
        "issuedAt": token.issued_at,
        "expiresIn": token.expires_in,
    }


def qos_sub_to_wire(sub: QosSubscription) -> dict:
    return {
        "subscriptionId": sub.subscription_id,
        "afId": sub.af_id,
        "flowId": sub.flow_id,
        "qosReference": sub.qos_reference,
        "notificationUri": sub.notification_uri,
        "status": sub.status.value,
    }


def monitoring_sub_to_wire(sub: MonitoringSubscription) -> dict:
    return {
        "subscriptionId": sub.subscription_id,
        "afId": sub.af_id,
        "cellId": sub.cell_id,
        "eventType": sub.event_type,
        "upperThreshold": sub.upper_threshold,
        "notificationUri": sub.notification_uri,
    }


def ti_sub_to_wire(sub: TrafficInfluenceSubscription) -> dict:
    return {
        "subscriptionId": sub.subscription_id,
        "afId": sub.af_id,
        "flowId": sub.flow_id,
        "dnai": sub.dnai,
        "notificationUri": sub.notification_uri,
    }


def negotiation_to_wire(negotiation: PdtqNegotiation) -> dict:
    return {
        "negotiationId": negotiation.negotiation_id,
        "afId": negotiation.af_id,
        "flowId": negotiation.flow_id,
        "requestedWindows": [
            {"startTick": s, "endTick": e} for s, e in negotiation.requested_windows
        ],
        "desiredRate": negotiation.desired_rate,
        "efficiency": negotiation.efficiency,
        "candidatePolicies": [
            {
                "policyId": c.policy_id,
                "window": {"startTick": c.window[0], "endTick": c.window[1]},
                "predictedPeakLoad": c.predicted_peak_load,
            }
            for c in negotiation.candidates
        ],
        "selectedPolicyId": negotiation.selected_policy_id,
    }


# -- CAPIF app ---------------------------------------------------------------


def create_capif_app(core: CapifCore) -> FastAPI:
    app = FastAPI(title="capif-core", docs_url=None, redoc_url=None)
    _install_error_handler(app)

    @app.post("/capif/providers", status_code=201)
    def register_provider(body: ProviderCreate):
        provider = core.register_provider(body.domainName)
        return {
            "providerId": provider.provider_id,
            "domainName": provider.domain_name,
            "providerSecret": provider.provider_secret,
        }

    @app.post("/capif/providers/{provider_id}/service-apis", status_code=201)
    def publish(
        provider_id: str,
        body: ServiceApiCreate,
        x_provider_secret: Optional[str] = Header(default=None),
    ):
        draft = ServiceApiDraft(
            api_name=body.apiName,
            aef_id=body.aefId,
            endpoint=ApiEndpoint(body.endpoint.host, body.endpoint.port, body.endpoint.basePath),
            version=body.version,
            security_method=SecurityMethod(body.securityMethod),
        )
        api = core.publish_service_api(provider_id, x_provider_secret or "", draft)
        return api_to_wire(api)

    @app.delete("/capif/providers/{provider_id}/service-apis/{api_id}", status_code=204)
    def unpublish(
        provider_id: str,
        api_id: str,
        x_provider_secret: Optional[str] = Header(default=None),
    ):
        core.unpublish_service_api(provider_id, x_provider_secret or "", api_id)
        return Response(status_code=204)

    @app.post("/capif/invokers", status_code=201)
    def onboard(body: InvokerCreate):
        profile = core.onboard_invoker(body.displayName)
        return {
            "invokerId": profile.invoker_id,
            "displayName": profile.display_name,
            "onboardingCredential": profile.onboarding_credential,
        }

    @app.get("/capif/service-apis")
    def discover(
        invoker_id: str = Query(default="", alias="api-invoker-id"),
        api_name: Optional[str] = Query(default=None, alias="api-name"),
        aef_id: Optional[str] = Query(default=None, alias="aef-id"),
    ):
        apis = core.discover_service_apis(invoker_id, api_name, aef_id)
        return {"serviceApis": [api_to_wire(api) for api in apis]}

    @app.post("/capif/security/token", status_code=201)
    def issue_token(body: TokenRequest):
        token = core.issue_token(
            body.invokerId,
            body.onboardingCredential,
            [(entry.aefId, entry.apiName) for entry in body.scope],
        )
        return token_to_wire(token)

    @app.post("/capif/security/introspect")
    def introspect(body: IntrospectRequest):
        result = core.introspect_token(body.token, body.aefId, body.apiName)
        return {
            "active": result.active,
            "invokerId": result.invoker_id,
            "reason": result.reason,
        }

    return app


# -- NEF app -----------------------------------------------------------------


def create_nef_app(service: NefService) -> FastAPI:
    app = FastAPI(title="nef-northbound", docs_url=None, redoc_url=None)
    _install_error_handler(app)

    qos = "/nef/3gpp-as-session-with-qos/v1"
    mon = "/nef/3gpp-monitoring-event/v1"
    ti = "/nef/3gpp-traffic-influence/v1"
    pdtq = "/nef/pdtq/v1"

    @app.post(qos + "/{af_id}/subscriptions", status_code=201)
    def create_qos(af_id: str, body: QosCreate, authorization: Optional[str] = Header(default=None)):
        sub = service.create_qos_subscription(
            af_id, _bearer(authorization), body.flowId, body.qosReference, body.notificationUri
        )
        return qos_sub_to_wire(sub)

    @app.get(qos + "/{af_id}/subscriptions")
    def list_qos(af_id: str, authorization: Optional[str] = Header(default=None)):
        subs = service.list_qos_subscriptions(af_id, _bearer(authorization))
        return {"subscriptions": [qos_sub_to_wire(s) for s in subs]}

    @app.get(qos + "/{af_id}/subscriptions/{subscription_id}")
    def get_qos(
        af_id: str, subscription_id: str, authorization: Optional[str] = Header(default=None)
    ):
        sub = service.get_qos_subscription(af_id, _bearer(authorization), subscription_id)
        return qos_sub_to_wire(sub)

    @app.delete(qos + "/{af_id}/subscriptions/{subscription_id}", status_code=204)
    def delete_qos(
        af_id: str, subscription_id: str, authorization: Optional[str] = Header(default=None)
    ):
        service.delete_qos_subscription(af_id, _bearer(authorization), subscription_id)
        return Response(status_code=204)

    @app.post(mon + "/{af_id}/subscriptions", status_code=201)
    def create_monitoring(
        af_id: str, body: MonitoringCreate, authorization: Optional[str] = Header(default=None)
    ):
        sub = service.create_monitoring_subscription(
            af_id, _bearer(authorization), body.cellId, body.upperThreshold, body.notificationUri
        )
        return monitoring_sub_to_wire(sub)

    @app.delete(mon + "/{af_id}/subscriptions/{subscription_id}", status_code=204)
    def delete_monitoring(
        af_id: str, subscription_id: str, authorization: Optional[str] = Header(default=None)
    ):
        service.delete_monitoring_subscription(af_id, _bearer(authorization), subscription_id)
        return Response(status_code=204)

    @app.post(ti + "/{af_id}/subscriptions", status_code=201)
    def create_traffic_influence(
        af_id: str,
        body: TrafficInfluenceCreate,
        authorization: Optional[str] = Header(default=None),
    ):
        sub = service.create_traffic_influence(
            af_id, _bearer(authorization), body.flowId, body.dnai, body.notificationUri
        )
        return ti_sub_to_wire(sub)

    @app.delete(ti + "/{af_id}/subscriptions/{subscription_id}", status_code=204)
    def delete_traffic_influence(
        af_id: str, subscription_id: str, authorization: Optional[str] = Header(default=None)
    ):
        service.delete_traffic_influence(af_id, _bearer(authorization), subscription_id)
        return Response(status_code=204)

    @app.post(pdtq + "/{af_id}/negotiations", status_code=201)
    def negotiate(
        af_id: str, body: PdtqNegotiateRequest, authorization: Optional[str] = Header(default=None)
    ):
        negotiation = service.pdtq_negotiate(
            af_id,
            _bearer(authorization),
            body.flowId,
            [(w.startTick, w.endTick) for w in body.requestedWindows],
            body.desiredRate,
            body.efficiency,
        )
        return negotiation_to_wire(negotiation)

    @app.post(pdtq + "/{af_id}/negotiations/{negotiation_id}/select")
    def select(
        af_id: str,
        negotiation_id: str,
        body: PdtqSelectRequest,
        authorization: Optional[str] = Header(default=None),
    ):
        negotiation = service.pdtq_select(
            af_id, _bearer(authorization), negotiation_id, body.policyId
        )
        return negotiation_to_wire(negotiation)

    return app


# -- client callback app -----------------------------------------------------


def create_callback_app(handler: Callable[[dict], None]) -> FastAPI:
    """Receiver for notification callbacks; 204 on accept."""
    app = FastAPI(title="client-callback", docs_url=None, redoc_url=None)
    _install_error_handler(app)

    @app.post("/client/notifications", status_code=204)
    async def notifications(request: Request):
        payload = await request.json()
        handler(payload)
        return Response(status_code=204)

    return app
