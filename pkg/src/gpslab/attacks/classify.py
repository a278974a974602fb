"""
Content-only traffic classification: which of the lab protocols a buffer
belongs to, from its leading bytes, without knowing the port.
"""

import logging
import string
from enum import Enum

from gpslab.codecs.agps import CRLF as AGPS_CRLF
from gpslab.codecs.hq import PREFIX as HQ_PREFIX
from gpslab.codecs.yy import (
    CRLF as YY_CRLF,
    HEADER_LEN,
    MAGIC,
    TYPE_ALERT,
    TYPE_POSITION,
    TYPE_SMS_FORWARD,
)

logger = logging.getLogger(__name__)

AGPS_LOGIN_PREFIX = b"cmd="
CONTENT_LENGTH = b"Content-Length: "
# longest banner line we are willing to scan for
MAX_BANNER = 256
_KNOWN_YY_TYPES = {TYPE_POSITION, TYPE_SMS_FORWARD, TYPE_ALERT}
_PRINTABLE = set(string.printable.encode("ascii")) - set(b"\r\n\t\x0b\x0c")


class Protocol(str, Enum):
    HQ = "HQ"
    YY = "YY"
    AGPS_LOGIN = "AGPS_LOGIN"
    AGPS_RESPONSE = "AGPS_RESPONSE"
    UNKNOWN = "UNKNOWN"


def _looks_like_yy(data: bytes) -> bool:
    if data[:2] != MAGIC or len(data) < HEADER_LEN + 1:
        return False
    length = int.from_bytes(data[2:HEADER_LEN], "big")
    if length < 2:
        return False
    end = HEADER_LEN + length
    if len(data) >= end + len(YY_CRLF):
        return data[end : end + len(YY_CRLF)] == YY_CRLF
    # only the start of a frame: trust the type byte
    return data[HEADER_LEN] in _KNOWN_YY_TYPES


def _looks_like_agps_response(data: bytes) -> bool:
    end = data.find(AGPS_CRLF, 0, MAX_BANNER + len(AGPS_CRLF))
    if end <= 0:
        return False
    banner = data[:end]
    if any(byte not in _PRINTABLE for byte in banner):
        return False
    return data[end + len(AGPS_CRLF) :].startswith(CONTENT_LENGTH)


def classify_traffic(data: bytes) -> Protocol:
    """Total: anything unrecognized is UNKNOWN."""
    if data.startswith(HQ_PREFIX):
        return Protocol.HQ
    if _looks_like_yy(data):
        return Protocol.YY
    if data.startswith(AGPS_LOGIN_PREFIX):
        return Protocol.AGPS_LOGIN
    if _looks_like_agps_response(data):
        return Protocol.AGPS_RESPONSE
    return Protocol.UNKNOWN
