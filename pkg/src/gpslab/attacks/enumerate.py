"""
Tracker discovery over a phone-number range: text `Status` to every number
and see who answers. Noisy by nature; every ping is a real SMS.
"""

import logging
import random
from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, computed_field

from gpslab.platform.store import HistoryStore
from gpslab.schemas.core import RecordKind, SmsMessage
from gpslab.sms.bus import Delivery, Mailbox, SmsTransport

logger = logging.getLogger(__name__)

PING_BODY = "Status"


class Verdict(str, Enum):
    REPLIED = "Delivered+Replied"
    SILENT = "Delivered+Silent"
    NOT_DELIVERED = "NotDelivered"


class Ping(BaseModel):
    model_config = ConfigDict(frozen=True)

    phone: str
    verdict: Verdict
    # known only when the pinged tracker forwarded the ping to a watched platform
    serial: Optional[str] = None


class Enumeration(BaseModel):
    pings: list[Ping]

    @computed_field
    @property
    def hits(self) -> list[Ping]:
        """Numbers that answered or forwarded the ping; a spoofed source gets no replies."""
        return [
            ping
            for ping in self.pings
            if ping.verdict is Verdict.REPLIED or ping.serial is not None
        ]


def number_range(prefix: str, start: int, count: int, width: int = 0) -> list[str]:
    """`count` numbers from prefix+start, zero-padded to `width` digits."""
    if count <= 0:
        return []
    width = width or len(str(start + count - 1))
    return [f"{prefix}{n:0{width}d}" for n in range(start, start + count)]


def _forwards_from(store: HistoryStore, sender: str) -> list[str]:
    return [
        record.serial
        for record in store.records(kind=RecordKind.SMS_FORWARD)
        if record.meta.get("sender") == sender
    ]


def enumerate_numbers(
    bus: SmsTransport,
    numbers: list[str],
    source: str,
    mailbox: Optional[Mailbox] = None,
    known: Optional[HistoryStore] = None,
    rng: Optional[random.Random] = None,
) -> Enumeration:
    """
    Ping every number from `source`. Replies are caught by `mailbox` (one is
    attached to `source` for the duration when not given). `known` is the
    store of a platform the trackers forward texts to; a forward of the ping
    names the serial behind the number. `rng` shuffles the ping order;
    results always come back in number order.
    """
    own_mailbox = mailbox is None
    if own_mailbox:
        mailbox = Mailbox(source).attach(bus)

    order = list(numbers)
    if rng is not None:
        rng.shuffle(order)

    verdicts: dict[str, Ping] = {}
    try:
        for phone in order:
            before = len(mailbox.from_sender(phone))
            forwarded = len(_forwards_from(known, source)) if known is not None else 0
            result = bus.send(SmsMessage(sender=source, to=phone, body=PING_BODY))
            if result is Delivery.NOT_DELIVERED:
                verdict = Verdict.NOT_DELIVERED
            elif len(mailbox.from_sender(phone)) > before:
                verdict = Verdict.REPLIED
            else:
                verdict = Verdict.SILENT
            serial = None
            if known is not None:
                fresh = _forwards_from(known, source)[forwarded:]
                serial = fresh[-1] if fresh else None
            verdicts[phone] = Ping(phone=phone, verdict=verdict, serial=serial)
    finally:
        if own_mailbox:
            bus.unregister(source)

    report = Enumeration(pings=[verdicts[phone] for phone in numbers])
    logger.info(
        "Enumeration finished",
        extra={"enum.pings": len(numbers), "enum.hits": len(report.hits)},
    )
    return report
