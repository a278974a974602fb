"""
Codec for the plaintext AGPS assistance session.

The client sends one line

    cmd=full;user=someone@example.com;pwd=secret;lat=22.680193;lon=114.146846;alt=0.0;pacc=100.00

and the server answers with a banner, two header lines, a blank line and an
opaque assistance blob of Content-Length bytes.
"""

import logging
import math
import random
import re
from typing import Optional, Union

from pydantic import BaseModel, ConfigDict

from gpslab.config import AGPS_BANNER, AGPS_BLOB_SIZE, AGPS_CONTENT_TYPE
from gpslab.exceptions import (
    BadNumber,
    DuplicateKey,
    LengthMismatch,
    MalformedLogin,
    MalformedResponse,
    MissingKey,
)
from gpslab.schemas.core import GeoPosition

logger = logging.getLogger(__name__)

KEY_ORDER = ("cmd", "user", "pwd", "lat", "lon", "alt", "pacc")
NUMERIC_KEYS = ("lat", "lon", "alt", "pacc")
HEADER_END = b"\r\n\r\n"
CRLF = b"\r\n"
# the login line goes out newline-terminated; the server answers at the newline
LINE_END = b"\n"
# Content-Length of an assistance blob never runs past 4 digits
MAX_LENGTH_DIGITS = 4
_NUMBER = re.compile(r"^[+-]?\d+(\.\d+)?$")


class AgpsLogin(BaseModel):
    model_config = ConfigDict(frozen=True)

    cmd: str = "full"
    user: str
    pwd: str
    position: GeoPosition
    pacc: float = 100.0


class AgpsResponse(BaseModel):
    model_config = ConfigDict(frozen=True)

    banner: str = AGPS_BANNER
    content_length: int
    content_type: str = AGPS_CONTENT_TYPE
    blob: bytes


def _text(line: Union[str, bytes]) -> str:
    if isinstance(line, bytes):
        try:
            line = line.decode("ascii")
        except UnicodeDecodeError:
            raise MalformedLogin("login line is not ASCII")
    if line.endswith("\r\n"):
        line = line[:-2]
    elif line.endswith("\n"):
        line = line[:-1]
    if "\r" in line or "\n" in line:
        raise MalformedLogin("login must be a single line")
    if not line.isascii():
        raise MalformedLogin("login line is not ASCII")
    return line


def _number(name: str, value: str) -> float:
    if not _NUMBER.match(value):
        raise BadNumber(name, value)
    number = float(value)
    if not math.isfinite(number):
        raise BadNumber(name, value)
    return number


def parse_agps_login(line: Union[str, bytes]) -> AgpsLogin:
    pairs: dict[str, str] = {}
    for item in _text(line).split(";"):
        key, sep, value = item.partition("=")
        if not sep:
            raise MalformedLogin(f"{item!r} is not key=value")
        if key not in KEY_ORDER:
            raise MalformedLogin(f"unexpected key {key!r}")
        if key in pairs:
            raise DuplicateKey(key)
        pairs[key] = value

    for key in KEY_ORDER:
        if key not in pairs:
            raise MissingKey(key)
    numbers = {key: _number(key, pairs[key]) for key in NUMERIC_KEYS}
    if abs(numbers["lat"]) > 90.0:
        raise BadNumber("lat", pairs["lat"])
    if abs(numbers["lon"]) > 180.0:
        raise BadNumber("lon", pairs["lon"])

    return AgpsLogin(
        cmd=pairs["cmd"],
        user=pairs["user"],
        pwd=pairs["pwd"],
        position=GeoPosition(
            lat_deg=numbers["lat"], lon_deg=numbers["lon"], alt_m=numbers["alt"]
        ),
        pacc=numbers["pacc"],
    )


def serialize_agps_login(login: AgpsLogin) -> bytes:
    for key in ("cmd", "user", "pwd"):
        value = getattr(login, key)
        if any(c in value for c in ";=\r\n") or not value.isascii():
            raise MalformedLogin(f"{key} {value!r} cannot be carried on the line")
    if not math.isfinite(login.pacc):
        raise BadNumber("pacc", str(login.pacc))
    line = (
        f"cmd={login.cmd};user={login.user};pwd={login.pwd};"
        f"lat={login.position.lat_deg:.6f};lon={login.position.lon_deg:.6f};"
        f"alt={login.position.alt_m:.1f};pacc={login.pacc:.2f}"
    )
    return line.encode("ascii")


def frame_agps_login(login: AgpsLogin) -> bytes:
    """The login as sent on the wire."""
    return serialize_agps_login(login) + LINE_END


def serialize_agps_response(resp: AgpsResponse) -> bytes:
    if resp.content_length != len(resp.blob):
        raise LengthMismatch(resp.content_length, len(resp.blob))
    for value in (resp.banner, resp.content_type):
        if "\r" in value or "\n" in value or not value.isascii():
            raise MalformedResponse(f"header value {value!r}")
    header = (
        f"{resp.banner}\r\n"
        f"Content-Length: {resp.content_length}\r\n"
        f"Content-Type: {resp.content_type}\r\n\r\n"
    )
    return header.encode("ascii") + resp.blob


def _header(line: bytes, name: str) -> str:
    prefix = f"{name}: ".encode("ascii")
    if not line.startswith(prefix):
        raise MalformedResponse(f"expected a {name} header")
    try:
        return line[len(prefix) :].decode("ascii")
    except UnicodeDecodeError:
        raise MalformedResponse(f"{name} is not ASCII")


def parse_agps_response(data: bytes) -> AgpsResponse:
    end = data.find(HEADER_END)
    if end < 0:
        raise MalformedResponse("header block is not terminated")
    lines = data[:end].split(CRLF)
    if len(lines) != 3:
        raise MalformedResponse(f"expected 3 header lines, got {len(lines)}")
    try:
        banner = lines[0].decode("ascii")
    except UnicodeDecodeError:
        raise MalformedResponse("banner is not ASCII")

    length_text = _header(lines[1], "Content-Length")
    if not _is_length(length_text.encode("ascii")):
        raise MalformedResponse(
            f"Content-Length {length_text!r} is not a number of at most {MAX_LENGTH_DIGITS} digits"
        )
    content_length = int(length_text)
    content_type = _header(lines[2], "Content-Type")

    blob = data[end + len(HEADER_END) :]
    if len(blob) != content_length:
        raise LengthMismatch(content_length, len(blob))
    return AgpsResponse(
        banner=banner,
        content_length=content_length,
        content_type=content_type,
        blob=blob,
    )


def _is_length(text: bytes) -> bool:
    return text.isdigit() and len(text) <= MAX_LENGTH_DIGITS


def expected_size(buffer: bytes) -> Optional[int]:
    """Total response size once the header block is in `buffer`, else None."""
    end = buffer.find(HEADER_END)
    if end < 0:
        return None
    for line in buffer[:end].split(CRLF):
        if line.startswith(b"Content-Length: ") and _is_length(line[16:]):
            return end + len(HEADER_END) + int(line[16:])
    return end + len(HEADER_END)


def assistance_blob(position: GeoPosition, size: int = AGPS_BLOB_SIZE) -> bytes:
    """
    Stand-in assistance data: pseudo-random bytes seeded by the position
    rounded to 0.01 degree, so equal areas get equal blobs.
    """
    seed = f"{round(position.lat_deg * 100)}:{round(position.lon_deg * 100)}"
    return random.Random(seed).randbytes(size)


def build_response(position: GeoPosition, size: int = AGPS_BLOB_SIZE) -> AgpsResponse:
    blob = assistance_blob(position, size)
    return AgpsResponse(content_length=len(blob), blob=blob)
