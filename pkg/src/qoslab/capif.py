"""Common API framework core: provider registry, API catalogue, invoker
onboarding, discovery, and opaque bearer tokens with introspection.

All state lives in memory. Mutations are serialized per operation, ids are
opaque strings from per-kind counters, and secrets come from the OS RNG.
"""
from __future__ import annotations

import secrets
import threading
import time
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Iterable, Optional

from .errors import AuthError, ConflictError, NotFoundError, ValidationError

DEFAULT_TOKEN_LIFETIME_SECONDS = 3600.0


class SecurityMethod(str, Enum):
    TOKEN = "TOKEN"


class ApiStatus(str, Enum):
    PUBLISHED = "PUBLISHED"
    UNPUBLISHED = "UNPUBLISHED"


@dataclass(frozen=True)
class ApiEndpoint:
    host: str
    port: int
    base_path: str

    def __post_init__(self) -> None:
        if not self.host:
            raise ValidationError("SPEC_INVALID", "endpoint host must be non-empty")
        if not 1 <= self.port <= 65535:
            raise ValidationError("SPEC_INVALID", "endpoint port must be in 1..65535")


@dataclass(frozen=True)
class ProviderRegistration:
    provider_id: str
    domain_name: str
    provider_secret: str


@dataclass(frozen=True)
class ServiceApiDraft:
    """What a provider submits; the core assigns the id and owner."""

    api_name: str
    aef_id: str
    endpoint: ApiEndpoint
    version: str
    security_method: SecurityMethod = SecurityMethod.TOKEN


@dataclass(frozen=True)
class ServiceApiDescription:
    api_id: str
    api_name: str
    provider_id: str
    aef_id: str
    endpoint: ApiEndpoint
    version: str
    security_method: SecurityMethod
    status: ApiStatus


@dataclass(frozen=True)
class InvokerProfile:
    invoker_id: str
    display_name: str
    onboarding_credential: str


@dataclass(frozen=True)
class AccessToken:
    token_string: str
    invoker_id: str
    scope: frozenset[tuple[str, str]]  # (aef_id, api_name) pairs
    issued_at: float
    expires_in: float = DEFAULT_TOKEN_LIFETIME_SECONDS


@dataclass(frozen=True)
class IntrospectionResult:
    """Decision for one (token, aef, api) probe.

    ``reason`` separates a dead token (UNKNOWN_TOKEN, EXPIRED) from a live
    token probing outside its scope (OUT_OF_SCOPE), which the HTTP layer
    needs to pick between 401 and 403.
    """

    active: bool
    invoker_id: Optional[str] = None
    reason: Optional[str] = None


class CapifCore:
    """In-memory registry and token authority."""

    def __init__(self, clock: Callable[[], float] = time.time):
        self._clock = clock
        self._lock = threading.RLock()
        self._providers: dict[str, ProviderRegistration] = {}
        self._apis: dict[str, ServiceApiDescription] = {}
        self._invokers: dict[str, InvokerProfile] = {}
        self._tokens: dict[str, AccessToken] = {}
        self._counters: dict[str, int] = {}

    def _next_id(self, prefix: str) -> str:
        self._counters[prefix] = self._counters.get(prefix, 0) + 1
        return f"{prefix}-{self._counters[prefix]:06d}"

    # -- provider side -----------------------------------------------------

    def register_provider(self, domain_name: str) -> ProviderRegistration:
        if not domain_name or not domain_name.strip():
            raise ValidationError("EMPTY_DOMAIN_NAME", "provider domain name must be non-empty")
        with self._lock:
            registration = ProviderRegistration(
                provider_id=self._next_id("prov"),
                domain_name=domain_name,
                provider_secret=secrets.token_hex(16),
            )
            self._providers[registration.provider_id] = registration
            return registration

    def _check_provider(self, provider_id: str, provider_secret: str) -> ProviderRegistration:
        provider = self._providers.get(provider_id)
        if provider is None:
            raise NotFoundError("UNKNOWN_PROVIDER", f"no provider {provider_id!r}")
        if provider.provider_secret != provider_secret:
            raise AuthError("BAD_SECRET", "provider secret does not match")
        return provider

    def publish_service_api(
        self, provider_id: str, provider_secret: str, draft: ServiceApiDraft
    ) -> ServiceApiDescription:
        """Add an API to the catalogue. (name, version) must be unique among
        this provider's published entries."""
        if not draft.api_name or not draft.aef_id or not draft.version:
            raise ValidationError("SPEC_INVALID", "api_name, aef_id and version are required")
        with self._lock:
            self._check_provider(provider_id, provider_secret)
            for api in self._apis.values():
                if (
                    api.status is ApiStatus.PUBLISHED
                    and api.provider_id == provider_id
                    and api.api_name == draft.api_name
                    and api.version == draft.version
                ):
                    raise ConflictError(
                        "DUPLICATE_API",
                        f"{draft.api_name!r} {draft.version!r} already published by {provider_id!r}",
                    )
            description = ServiceApiDescription(
                api_id=self._next_id("api"),
                api_name=draft.api_name,
                provider_id=provider_id,
                aef_id=draft.aef_id,
                endpoint=draft.endpoint,
                version=draft.version,
                security_method=draft.security_method,
                status=ApiStatus.PUBLISHED,
            )
            self._apis[description.api_id] = description
            return description

    def unpublish_service_api(self, provider_id: str, provider_secret: str, api_id: str) -> None:
        """Withdraw an API from discovery. Existing tokens stay valid until expiry."""
        with self._lock:
            self._check_provider(provider_id, provider_secret)
            api = self._apis.get(api_id)
            if api is None:
                raise NotFoundError("UNKNOWN_API", f"no service API {api_id!r}")
            if api.provider_id != provider_id:
                raise AuthError("NOT_OWNER", "API belongs to another provider", http_status=403)
            self._apis[api_id] = replace(api, status=ApiStatus.UNPUBLISHED)

    # -- invoker side ------------------------------------------------------

    def onboard_invoker(self, display_name: str) -> InvokerProfile:
        if not display_name or not display_name.strip():
            raise ValidationError("EMPTY_NAME", "invoker display name must be non-empty")
        with self._lock:
            profile = InvokerProfile(
                invoker_id=self._next_id("inv"),
                display_name=display_name,
                onboarding_credential=secrets.token_hex(16),
            )
            self._invokers[profile.invoker_id] = profile
            return profile

    def discover_service_apis(
        self,
        invoker_id: str,
        api_name: Optional[str] = None,
        aef_id: Optional[str] = None,
    ) -> list[ServiceApiDescription]:
        """All published APIs matching the filters, ordered by ascending api_id."""
        with self._lock:
            if invoker_id not in self._invokers:
                raise NotFoundError("UNKNOWN_INVOKER", f"no invoker {invoker_id!r}")
            hits = [
                api
                for api in self._apis.values()
                if api.status is ApiStatus.PUBLISHED
                and (api_name is None or api.api_name == api_name)
                and (aef_id is None or api.aef_id == aef_id)
            ]
            return sorted(hits, key=lambda api: api.api_id)

    # -- tokens ------------------------------------------------------------

    def issue_token(
        self,
        invoker_id: str,
        onboarding_credential: str,
        scope: Iterable[tuple[str, str]],
    ) -> AccessToken:
        """Issue an opaque bearer token for a set of (aef_id, api_name) pairs.

        Every requested pair must currently be published; tokens are not
        revoked retroactively when an API is later unpublished.
        """
        requested = frozenset(scope)
        if not requested:
            raise ValidationError("EMPTY_SCOPE", "token scope must name at least one API")
        with self._lock:
            invoker = self._invokers.get(invoker_id)
            if invoker is None:
                raise NotFoundError("UNKNOWN_INVOKER", f"no invoker {invoker_id!r}")
            if invoker.onboarding_credential != onboarding_credential:
                raise AuthError("BAD_CREDENTIAL", "onboarding credential does not match")
            published = {
                (api.aef_id, api.api_name)
                for api in self._apis.values()
                if api.status is ApiStatus.PUBLISHED
            }
            for pair in requested:
                if pair not in published:
                    raise AuthError(
                        "SCOPE_NOT_PUBLISHED",
                        f"scope entry {pair!r} names an unpublished API",
                        http_status=403,
                    )
            token = AccessToken(
                token_string=secrets.token_hex(16),
                invoker_id=invoker_id,
                scope=requested,
                issued_at=self._clock(),
            )
            self._tokens[token.token_string] = token
            return token

    def introspect_token(self, token_string: str, aef_id: str, api_name: str) -> IntrospectionResult:
        """Is this token live and scoped for (aef_id, api_name)?"""
        with self._lock:
            token = self._tokens.get(token_string or "")
            if token is None:
                return IntrospectionResult(False, reason="UNKNOWN_TOKEN")
            if self._clock() >= token.issued_at + token.expires_in:
                return IntrospectionResult(False, reason="EXPIRED")
            if (aef_id, api_name) not in token.scope:
                return IntrospectionResult(False, reason="OUT_OF_SCOPE")
            return IntrospectionResult(True, invoker_id=token.invoker_id)

    # -- diagnostics -------------------------------------------------------

    def all_service_apis(self) -> list[ServiceApiDescription]:
        """Snapshot of the whole catalogue, published or not (diagnostics)."""
        with self._lock:
            return list(self._apis.values())
