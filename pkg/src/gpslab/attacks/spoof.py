"""Our own `*HQ` client: a V1 report for any serial, sent straight to the platform."""

import logging
from datetime import datetime
from typing import Optional

from gpslab.codecs.hq import HqV1, serialize_hq
from gpslab.emulator.network import Network, TcpNetwork
from gpslab.schemas.core import Endpoint, GeoPosition

logger = logging.getLogger(__name__)

SPOOF_SOURCE = "spoofer"


def forged_frame(
    serial: str,
    position: GeoPosition,
    ts: datetime,
    speed_raw: str = "000.0",
    course_raw: str = "000.00",
) -> bytes:
    msg = HqV1.from_position(
        serial, ts, position, speed_raw=speed_raw, course_raw=course_raw
    )
    return serialize_hq(msg)


def spoof_position(
    server: Endpoint,
    serial: str,
    position: GeoPosition,
    ts: datetime,
    network: Optional[Network] = None,
) -> bytes:
    """
    Send one forged position for `serial`. Only the serial is needed.

    Raises NetworkError when the platform cannot be reached.
    """
    frame = forged_frame(serial, position, ts)
    if network is None:
        tcp = TcpNetwork()
        try:
            tcp.send(SPOOF_SOURCE, server, frame)
        finally:
            tcp.close()
    else:
        network.send(SPOOF_SOURCE, server, frame)
    logger.info(
        "Forged position sent",
        extra={
            "target.serial": serial,
            "server": str(server),
            "forged.lat": position.lat_deg,
            "forged.lon": position.lon_deg,
        },
    )
    return frame
