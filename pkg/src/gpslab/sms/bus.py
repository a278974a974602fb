"""
In-process stand-in for the cellular network.

Every message is logged before delivery, in send order. Delivery is
synchronous: `send` returns once the recipient's subscriber has run. A send
issued from inside a subscriber (a tracker replying, say) is logged and
resolved immediately but delivered after the outer delivery returns, so a
thread never holds more than one pair's ordering lock.
"""

import logging
import threading
from collections import deque
from enum import Enum
from typing import Callable, Protocol

from gpslab.schemas.core import SmsMessage

logger = logging.getLogger(__name__)

Subscriber = Callable[[SmsMessage], None]


class Delivery(str, Enum):
    DELIVERED = "Delivered"
    NOT_DELIVERED = "NotDelivered"


class SmsTransport(Protocol):
    def register(self, phone: str, subscriber: Subscriber) -> None: ...

    def unregister(self, phone: str) -> None: ...

    def send(self, msg: SmsMessage) -> Delivery: ...


class SmsBus:
    def __init__(self):
        self._lock = threading.Lock()
        self._registry: dict[str, Subscriber] = {}
        self._log: list[SmsMessage] = []
        self._observers: list[Subscriber] = []
        # both maps hold only pairs with traffic in flight
        self._queues: dict[tuple[str, str], deque] = {}
        self._pair_locks: dict[tuple[str, str], list] = {}
        self._local = threading.local()

    def register(self, phone: str, subscriber: Subscriber) -> None:
        with self._lock:
            self._registry[phone] = subscriber
        logger.debug("SMS subscriber registered", extra={"sms.phone": phone})

    def unregister(self, phone: str) -> None:
        with self._lock:
            self._registry.pop(phone, None)

    def observe(self, observer: Subscriber) -> None:
        """Observers see every logged message, delivered or not."""
        with self._lock:
            self._observers.append(observer)

    def unobserve(self, observer: Subscriber) -> None:
        with self._lock:
            if observer in self._observers:
                self._observers.remove(observer)

    @property
    def log(self) -> tuple[SmsMessage, ...]:
        with self._lock:
            return tuple(self._log)

    def is_registered(self, phone: str) -> bool:
        with self._lock:
            return phone in self._registry

    def send(self, msg: SmsMessage) -> Delivery:
        pair = (msg.sender, msg.to)
        pending = getattr(self._local, "pending", None)
        nested = pending is not None
        if not nested:
            pending = self._local.pending = []

        try:
            with self._lock:
                subscriber = self._registry.get(msg.to)
                self._log.append(msg)
                if subscriber is not None:
                    self._queues.setdefault(pair, deque()).append((msg, subscriber))
                observers = list(self._observers)
            result = Delivery.DELIVERED if subscriber else Delivery.NOT_DELIVERED
            logger.info(
                "SMS sent",
                extra={
                    "sms.from": msg.sender,
                    "sms.to": msg.to,
                    "sms.body": msg.body,
                    "sms.delivery": result.value,
                },
            )
            for observer in observers:
                observer(msg)

            if subscriber is not None:
                pending.append(pair)
            if not nested:
                while pending:
                    self._drain(pending.pop(0))
            return result
        finally:
            if not nested:
                self._local.pending = None

    def _drain(self, pair: tuple[str, str]) -> None:
        # queue order is log order; one thread at a time delivers per pair
        with self._lock:
            entry = self._pair_locks.setdefault(pair, [threading.Lock(), 0])
            entry[1] += 1
        try:
            with entry[0]:
                self._deliver_queued(pair)
        finally:
            with self._lock:
                entry[1] -= 1
                if entry[1] == 0:
                    del self._pair_locks[pair]

    def _deliver_queued(self, pair: tuple[str, str]) -> None:
        while True:
            with self._lock:
                queue = self._queues.get(pair)
                if not queue:
                    self._queues.pop(pair, None)
                    return
                msg, subscriber = queue.popleft()
            try:
                subscriber(msg)
            except Exception as ex:
                logger.error(
                    f"SMS subscriber failed: {ex}",
                    extra={"sms.from": msg.sender, "sms.to": msg.to},
                )

    @property
    def pending_pairs(self) -> int:
        """Sender/recipient pairs with a queue or a delivery in flight."""
        with self._lock:
            return len(self._queues.keys() | self._pair_locks.keys())


class Mailbox:
    """Subscriber that keeps whatever it receives; handy for attacker phones."""

    def __init__(self, phone: str):
        self.phone = phone
        self._lock = threading.Lock()
        self._messages: list[SmsMessage] = []

    def __call__(self, msg: SmsMessage) -> None:
        with self._lock:
            self._messages.append(msg)

    @property
    def messages(self) -> list[SmsMessage]:
        with self._lock:
            return list(self._messages)

    def from_sender(self, sender: str) -> list[SmsMessage]:
        return [msg for msg in self.messages if msg.sender == sender]

    def attach(self, bus: SmsTransport) -> "Mailbox":
        bus.register(self.phone, self)
        return self
