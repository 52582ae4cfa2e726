"""Delivery mechanics: ordering, bounded retries, live worker mode."""
from __future__ import annotations

import threading

import pytest

from qoslab.notifications import (
    DELIVERED,
    DELIVERY_EXHAUSTED,
    MAX_ATTEMPTS,
    CallbackRegistry,
    DeliveryError,
    Notification,
    NotificationDispatcher,
    NotificationKind,
)


def note(sub="sub-1", seq=1):
    return Notification(sub, NotificationKind.CELL_LOAD_CROSSED, {"n": seq}, seq)


class FlakyTransport:
    """Fails the first ``failures`` sends per (sub, seq); records successes."""

    def __init__(self, failures=0):
        self.failures = failures
        self.attempts: dict[tuple, int] = {}
        self.delivered: list[dict] = []
        self.lock = threading.Lock()

    def __call__(self, uri, payload):
        key = (payload["subscriptionId"], payload["sequenceNumber"])
        with self.lock:
            self.attempts[key] = self.attempts.get(key, 0) + 1
            if self.attempts[key] <= self.failures:
                raise DeliveryError("injected")
            self.delivered.append(payload)


def test_clean_delivery_first_attempt():
    transport = FlakyTransport()
    dispatcher = NotificationDispatcher(transport)
    dispatcher.enqueue("sub-1", "uri", note())
    records = dispatcher.pump(0)
    assert [r.outcome for r in records] == [DELIVERED]
    assert records[0].attempts == 1


def test_single_failure_retried_next_tick():
    transport = FlakyTransport(failures=1)
    dispatcher = NotificationDispatcher(transport)
    dispatcher.enqueue("sub-1", "uri", note())
    assert dispatcher.pump(0) == []  # failed, parked for the next tick
    assert dispatcher.pending_count() == 1
    records = dispatcher.pump(1)
    assert [r.outcome for r in records] == [DELIVERED]
    assert records[0].attempts == 2


def test_exhaustion_after_four_attempts():
    transport = FlakyTransport(failures=99)
    dispatcher = NotificationDispatcher(transport)
    dispatcher.enqueue("sub-1", "uri", note())
    records = []
    for tick in range(10):
        records += dispatcher.pump(tick)
    assert [r.outcome for r in records] == [DELIVERY_EXHAUSTED]
    assert records[0].attempts == MAX_ATTEMPTS
    assert dispatcher.pending_count() == 0
    # the subscription queue still works afterwards
    good = FlakyTransport()
    dispatcher._transport = good
    dispatcher.enqueue("sub-1", "uri", note(seq=2))
    assert [r.outcome for r in dispatcher.pump(99)] == [DELIVERED]


def test_head_of_line_blocks_in_order():
    transport = FlakyTransport(failures=1)  # first attempt of each item fails
    dispatcher = NotificationDispatcher(transport)
    dispatcher.enqueue("sub-1", "uri", note(seq=1))
    dispatcher.enqueue("sub-1", "uri", note(seq=2))
    assert dispatcher.pump(0) == []  # head failed; seq 2 must not be tried
    assert transport.attempts == {("sub-1", 1): 1}
    first = dispatcher.pump(1)  # head lands, then seq 2 gets its first try
    assert [r.notification.sequence_number for r in first] == [1]
    assert transport.attempts[("sub-1", 2)] == 1
    second = dispatcher.pump(2)
    assert [r.notification.sequence_number for r in second] == [2]
    assert [p["sequenceNumber"] for p in transport.delivered] == [1, 2]


def test_exhausted_head_unblocks_same_tick():
    class FailFirstSeq:
        def __init__(self):
            self.delivered = []

        def __call__(self, uri, payload):
            if payload["sequenceNumber"] == 1:
                raise DeliveryError("always")
            self.delivered.append(payload)

    transport = FailFirstSeq()
    dispatcher = NotificationDispatcher(transport)
    dispatcher.enqueue("sub-1", "uri", note(seq=1))
    dispatcher.enqueue("sub-1", "uri", note(seq=2))
    outcomes = []
    for tick in range(6):
        outcomes += [(r.notification.sequence_number, r.outcome) for r in dispatcher.pump(tick)]
    assert outcomes == [(1, DELIVERY_EXHAUSTED), (2, DELIVERED)]


def test_subscriptions_do_not_block_each_other():
    class FailSubOne:
        def __call__(self, uri, payload):
            if payload["subscriptionId"] == "sub-1":
                raise DeliveryError("down")

    dispatcher = NotificationDispatcher(FailSubOne())
    dispatcher.enqueue("sub-1", "uri", note("sub-1", 1))
    dispatcher.enqueue("sub-2", "uri", note("sub-2", 1))
    records = dispatcher.pump(0)
    assert [(r.notification.subscription_id, r.outcome) for r in records] == [
        ("sub-2", DELIVERED)
    ]


def test_registry_unknown_uri_counts_as_failure():
    registry = CallbackRegistry()
    with pytest.raises(DeliveryError):
        registry.send("inproc://nobody", {})


def test_registry_wraps_handler_exceptions():
    registry = CallbackRegistry()

    def boom(payload):
        raise RuntimeError("handler broke")

    registry.register("uri", boom)
    with pytest.raises(DeliveryError):
        registry.send("uri", {})


def test_live_worker_retries_with_backoff():
    transport = FlakyTransport(failures=1)
    dispatcher = NotificationDispatcher(transport, live=True)
    dispatcher.enqueue("sub-1", "uri", note())
    assert dispatcher.wait_idle(timeout=5.0)
    assert [r.outcome for r in dispatcher.history] == [DELIVERED]
    assert dispatcher.history[0].attempts == 2


def test_live_keeps_order_per_subscription():
    transport = FlakyTransport(failures=1)
    dispatcher = NotificationDispatcher(transport, live=True)
    for seq in (1, 2, 3):
        dispatcher.enqueue("sub-1", "uri", note(seq=seq))
    assert dispatcher.wait_idle(timeout=10.0)
    assert [p["sequenceNumber"] for p in transport.delivered] == [1, 2, 3]
