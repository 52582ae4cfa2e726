"""Callback notification delivery with bounded retries.

One queue per subscription keeps deliveries in order: a later notification is
never attempted before an earlier one either lands or exhausts its retries.
Delivery is at-least-once; four attempts total, then the item is logged as
DELIVERY_EXHAUSTED and dropped while the subscription stays alive.

Two clock modes share the retry logic. In virtual time the owner calls
``pump(tick)`` each tick and failed attempts come back on following ticks. In
live mode worker threads drain the queues with real sleeps between attempts.
"""
from __future__ import annotations

import logging
import threading
import time
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Mapping, Optional

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 4  # first try plus three retries
LIVE_BACKOFF_SECONDS = (0.5, 1.0, 2.0)

DELIVERED = "DELIVERED"
DELIVERY_EXHAUSTED = "DELIVERY_EXHAUSTED"


class NotificationKind(str, Enum):
    QOS_GUARANTEED = "QOS_GUARANTEED"
    QOS_NOT_GUARANTEED = "QOS_NOT_GUARANTEED"
    CELL_LOAD_CROSSED = "CELL_LOAD_CROSSED"


@dataclass(frozen=True)
class Notification:
    subscription_id: str
    kind: NotificationKind
    payload: Mapping[str, object]
    sequence_number: int

    def to_wire(self) -> dict:
        return {
            "subscriptionId": self.subscription_id,
            "kind": self.kind.value,
            "payload": dict(self.payload),
            "sequenceNumber": self.sequence_number,
        }


@dataclass(frozen=True)
class DeliveryRecord:
    notification: Notification
    uri: str
    attempts: int
    outcome: str  # DELIVERED or DELIVERY_EXHAUSTED


class DeliveryError(Exception):
    """Raised by a transport when one delivery attempt fails."""


# transport contract: send(uri, wire_payload) -> None, raise DeliveryError on failure
Transport = Callable[[str, dict], None]


@dataclass
class _Pending:
    notification: Notification
    uri: str
    attempts: int = 0
    not_before_tick: Optional[int] = None  # None = due immediately


class CallbackRegistry:
    """URI -> handler table used as the in-process transport."""

    def __init__(self) -> None:
        self._handlers: dict[str, Callable[[dict], None]] = {}

    def register(self, uri: str, handler: Callable[[dict], None]) -> None:
        self._handlers[uri] = handler

    def send(self, uri: str, payload: dict) -> None:
        handler = self._handlers.get(uri)
        if handler is None:
            raise DeliveryError(f"no receiver registered for {uri!r}")
        try:
            handler(payload)
        except DeliveryError:
            raise
        except Exception as exc:  # receiver blew up: counts as a failed attempt
            raise DeliveryError(str(exc)) from exc


class NotificationDispatcher:
    """Per-subscription delivery queues over a pluggable transport."""

    def __init__(self, transport: Transport, live: bool = False):
        self._transport = transport
        self._live = live
        self._lock = threading.RLock()
        self._queues: dict[str, deque[_Pending]] = {}
        self._workers: dict[str, threading.Thread] = {}
        self.history: list[DeliveryRecord] = []

    def enqueue(self, subscription_id: str, uri: str, notification: Notification) -> None:
        with self._lock:
            queue = self._queues.setdefault(subscription_id, deque())
            queue.append(_Pending(notification, uri))
            if self._live:
                self._ensure_worker(subscription_id)

    # -- virtual time ------------------------------------------------------

    def pump(self, tick: int) -> list[DeliveryRecord]:
        """Attempt due deliveries; failures come back next tick. Returns the
        records finalized during this call."""
        finalized: list[DeliveryRecord] = []
        with self._lock:
            for sub_id, queue in self._queues.items():
                while queue:
                    head = queue[0]
                    if head.not_before_tick is not None and head.not_before_tick > tick:
                        break
                    head.attempts += 1
                    try:
                        self._transport(head.uri, head.notification.to_wire())
                    except DeliveryError as exc:
                        if head.attempts >= MAX_ATTEMPTS:
                            queue.popleft()
                            record = DeliveryRecord(
                                head.notification, head.uri, head.attempts, DELIVERY_EXHAUSTED
                            )
                            logger.warning(
                                "delivery exhausted for %s seq %s: %s",
                                sub_id,
                                head.notification.sequence_number,
                                exc,
                            )
                            self.history.append(record)
                            finalized.append(record)
                            continue  # the next item may now be attempted
                        head.not_before_tick = tick + 1
                        break
                    else:
                        queue.popleft()
                        record = DeliveryRecord(head.notification, head.uri, head.attempts, DELIVERED)
                        self.history.append(record)
                        finalized.append(record)
        return finalized

    # -- live time ---------------------------------------------------------

    def _ensure_worker(self, sub_id: str) -> None:
        worker = self._workers.get(sub_id)
        if worker is not None and worker.is_alive():
            return
        worker = threading.Thread(target=self._drain, args=(sub_id,), daemon=True)
        self._workers[sub_id] = worker
        worker.start()

    def _drain(self, sub_id: str) -> None:
        while True:
            with self._lock:
                queue = self._queues.get(sub_id)
                if not queue:
                    return
                head = queue[0]
            outcome = None
            for attempt in range(1, MAX_ATTEMPTS + 1):
                try:
                    self._transport(head.uri, head.notification.to_wire())
                    outcome = DeliveryRecord(head.notification, head.uri, attempt, DELIVERED)
                    break
                except DeliveryError as exc:
                    if attempt == MAX_ATTEMPTS:
                        logger.warning(
                            "delivery exhausted for %s seq %s: %s",
                            sub_id,
                            head.notification.sequence_number,
                            exc,
                        )
                        outcome = DeliveryRecord(
                            head.notification, head.uri, attempt, DELIVERY_EXHAUSTED
                        )
                    else:
                        time.sleep(LIVE_BACKOFF_SECONDS[attempt - 1])
            with self._lock:
                queue.popleft()
                self.history.append(outcome)

    def wait_idle(self, timeout: float = 10.0) -> bool:
        """Live mode helper: block until every queue is empty."""
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            with self._lock:
                if all(not q for q in self._queues.values()):
                    return True
            time.sleep(0.01)
        return False

    def pending_count(self) -> int:
        with self._lock:
            return sum(len(q) for q in self._queues.values())
