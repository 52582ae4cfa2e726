"""Registry tests: publication, discovery, token lifecycle."""
from __future__ import annotations

import random

import pytest

from qoslab.capif import (
    ApiEndpoint,
    ApiStatus,
    CapifCore,
    SecurityMethod,
    ServiceApiDraft,
)
from qoslab.errors import AuthError, ConflictError, NotFoundError, ValidationError

ENDPOINT = ApiEndpoint("nef.internal", 8443, "/nef/v1")


def draft(name="as-session-with-qos", aef="aef-1", version="v1"):
    return ServiceApiDraft(api_name=name, aef_id=aef, endpoint=ENDPOINT, version=version)


@pytest.fixture
def core():
    return CapifCore()


@pytest.fixture
def provider(core):
    return core.register_provider("exposure.example")


class TestProviders:
    def test_register_assigns_id_and_secret(self, core):
        a = core.register_provider("one.example")
        b = core.register_provider("two.example")
        assert a.provider_id != b.provider_id
        assert len(a.provider_secret) >= 32
        assert a.provider_secret != b.provider_secret

    def test_empty_domain_rejected(self, core):
        with pytest.raises(ValidationError):
            core.register_provider("   ")


class TestPublication:
    def test_publish_and_describe(self, core, provider):
        api = core.publish_service_api(provider.provider_id, provider.provider_secret, draft())
        assert api.status is ApiStatus.PUBLISHED
        assert api.security_method is SecurityMethod.TOKEN
        assert api.api_id.startswith("api-")

    def test_unknown_provider(self, core):
        with pytest.raises(NotFoundError):
            core.publish_service_api("prov-999999", "x", draft())

    def test_bad_secret(self, core, provider):
        with pytest.raises(AuthError):
            core.publish_service_api(provider.provider_id, "wrong", draft())

    def test_duplicate_name_version_conflicts(self, core, provider):
        core.publish_service_api(provider.provider_id, provider.provider_secret, draft())
        with pytest.raises(ConflictError):
            core.publish_service_api(provider.provider_id, provider.provider_secret, draft())

    def test_republish_after_unpublish_allowed(self, core, provider):
        api = core.publish_service_api(provider.provider_id, provider.provider_secret, draft())
        core.unpublish_service_api(provider.provider_id, provider.provider_secret, api.api_id)
        again = core.publish_service_api(provider.provider_id, provider.provider_secret, draft())
        assert again.api_id != api.api_id

    def test_unpublish_requires_owner(self, core, provider):
        other = core.register_provider("other.example")
        api = core.publish_service_api(provider.provider_id, provider.provider_secret, draft())
        with pytest.raises(AuthError):
            core.unpublish_service_api(other.provider_id, other.provider_secret, api.api_id)


class TestDiscovery:
    def test_requires_known_invoker(self, core):
        with pytest.raises(NotFoundError):
            core.discover_service_apis("inv-999999")

    def test_published_only_sorted(self, core, provider):
        a = core.publish_service_api(provider.provider_id, provider.provider_secret, draft())
        b = core.publish_service_api(
            provider.provider_id, provider.provider_secret, draft(name="monitoring-event")
        )
        core.unpublish_service_api(provider.provider_id, provider.provider_secret, a.api_id)
        invoker = core.onboard_invoker("client")
        found = core.discover_service_apis(invoker.invoker_id)
        assert [api.api_id for api in found] == [b.api_id]

    def test_filters(self, core, provider):
        core.publish_service_api(provider.provider_id, provider.provider_secret, draft())
        core.publish_service_api(
            provider.provider_id, provider.provider_secret, draft(name="pdtq", aef="aef-2")
        )
        invoker = core.onboard_invoker("client")
        by_name = core.discover_service_apis(invoker.invoker_id, api_name="pdtq")
        assert [api.api_name for api in by_name] == ["pdtq"]
        by_aef = core.discover_service_apis(invoker.invoker_id, aef_id="aef-1")
        assert [api.aef_id for api in by_aef] == ["aef-1"]
        assert core.discover_service_apis(invoker.invoker_id, api_name="nope") == []

    def test_ascending_api_id_order(self, core, provider):
        names = [f"api-{i}" for i in range(5)]
        for name in names:
            core.publish_service_api(provider.provider_id, provider.provider_secret, draft(name=name))
        invoker = core.onboard_invoker("client")
        found = core.discover_service_apis(invoker.invoker_id)
        ids = [api.api_id for api in found]
        assert ids == sorted(ids)


class TestTokens:
    def setup_scope(self, core, provider):
        core.publish_service_api(provider.provider_id, provider.provider_secret, draft())
        invoker = core.onboard_invoker("client")
        return invoker, [("aef-1", "as-session-with-qos")]

    def test_issue_shape(self, core, provider):
        invoker, scope = self.setup_scope(core, provider)
        token = core.issue_token(invoker.invoker_id, invoker.onboarding_credential, scope)
        assert len(token.token_string) >= 32
        int(token.token_string, 16)  # hex
        assert token.expires_in == 3600.0

    def test_tokens_unique(self, core, provider):
        invoker, scope = self.setup_scope(core, provider)
        seen = {
            core.issue_token(invoker.invoker_id, invoker.onboarding_credential, scope).token_string
            for _ in range(50)
        }
        assert len(seen) == 50

    def test_bad_credential(self, core, provider):
        invoker, scope = self.setup_scope(core, provider)
        with pytest.raises(AuthError):
            core.issue_token(invoker.invoker_id, "nope", scope)

    def test_empty_scope_rejected(self, core, provider):
        invoker, _ = self.setup_scope(core, provider)
        with pytest.raises(ValidationError):
            core.issue_token(invoker.invoker_id, invoker.onboarding_credential, [])

    def test_scope_must_be_published(self, core, provider):
        invoker, _ = self.setup_scope(core, provider)
        with pytest.raises(AuthError) as err:
            core.issue_token(
                invoker.invoker_id,
                invoker.onboarding_credential,
                [("aef-1", "not-published")],
            )
        assert err.value.http_status == 403

    def test_introspection_active_and_scope(self, core, provider):
        invoker, scope = self.setup_scope(core, provider)
        token = core.issue_token(invoker.invoker_id, invoker.onboarding_credential, scope)
        good = core.introspect_token(token.token_string, "aef-1", "as-session-with-qos")
        assert good.active and good.invoker_id == invoker.invoker_id
        outside = core.introspect_token(token.token_string, "aef-1", "other-api")
        assert not outside.active and outside.reason == "OUT_OF_SCOPE"
        unknown = core.introspect_token("feedface", "aef-1", "as-session-with-qos")
        assert not unknown.active and unknown.reason == "UNKNOWN_TOKEN"

    def test_expiry_with_fake_clock(self):
        now = [1000.0]
        core = CapifCore(clock=lambda: now[0])
        provider = core.register_provider("exposure.example")
        core.publish_service_api(provider.provider_id, provider.provider_secret, draft())
        invoker = core.onboard_invoker("client")
        token = core.issue_token(
            invoker.invoker_id, invoker.onboarding_credential, [("aef-1", "as-session-with-qos")]
        )
        assert core.introspect_token(token.token_string, "aef-1", "as-session-with-qos").active
        now[0] += 3599.0
        assert core.introspect_token(token.token_string, "aef-1", "as-session-with-qos").active
        now[0] += 2.0
        expired = core.introspect_token(token.token_string, "aef-1", "as-session-with-qos")
        assert not expired.active and expired.reason == "EXPIRED"

    def test_unpublish_keeps_existing_tokens(self, core, provider):
        invoker, scope = self.setup_scope(core, provider)
        token = core.issue_token(invoker.invoker_id, invoker.onboarding_credential, scope)
        api = core.all_service_apis()[0]
        core.unpublish_service_api(provider.provider_id, provider.provider_secret, api.api_id)
        still = core.introspect_token(token.token_string, "aef-1", "as-session-with-qos")
        assert still.active
        # but a fresh token for the now-hidden API is refused
        with pytest.raises(AuthError):
            core.issue_token(invoker.invoker_id, invoker.onboarding_credential, scope)


def test_discovery_matches_mirror_model():
    # randomized publish/unpublish against a plain dict mirror; the acceptance
    # suite runs the long version of this
    rng = random.Random(7)
    core = CapifCore()
    providers = [core.register_provider(f"p{i}.example") for i in range(3)]
    invoker = core.onboard_invoker("probe")
    mirror = {}  # api_id -> (name, aef, published)
    names = ["qos", "monitor", "steer"]
    aefs = ["aef-a", "aef-b"]
    for _ in range(200):
        action = rng.random()
        if action < 0.6:
            provider = rng.choice(providers)
            name, aef = rng.choice(names), rng.choice(aefs)
            version = f"v{rng.randint(1, 3)}"
            try:
                api = core.publish_service_api(
                    provider.provider_id, provider.provider_secret, draft(name, aef, version)
                )
            except ConflictError:
                continue
            mirror[api.api_id] = (name, aef)
        elif mirror:
            api_id = rng.choice(sorted(mirror))
            owner = next(
                p for p in providers
                for a in core.all_service_apis()
                if a.api_id == api_id and a.provider_id == p.provider_id
            )
            core.unpublish_service_api(owner.provider_id, owner.provider_secret, api_id)
            del mirror[api_id]
        name_filter = rng.choice(names + [None])
        found = core.discover_service_apis(invoker.invoker_id, api_name=name_filter)
        expected = sorted(
            api_id
            for api_id, (name, _) in mirror.items()
            if name_filter is None or name == name_filter
        )
        assert [api.api_id for api in found] == expected
