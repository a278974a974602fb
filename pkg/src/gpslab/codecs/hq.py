"""
Codec for the ASCII `*HQ` tracker protocol.

    *HQ,17000XXXXX,V1,115112,A,2240.8116,N,11408.8108,E,000.0,000.00,100119,FFFFFFFF#

Every token is kept verbatim so that `serialize_hq(parse_hq(b)) == b`. Typed
views (`timestamp`, `position`, `speed_kn`) are derived on demand.
"""

import logging
import re
from datetime import datetime
from decimal import Decimal
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict

from gpslab.exceptions import (
    FieldCount,
    IllegalSerial,
    MalformedFrame,
    ProtocolError,
    UnknownVariant,
)
from gpslab.models.geo import Axis, axis_of, ddmm_to_degrees, degrees_to_ddmm
from gpslab.models.simclock import (
    combine_hq,
    hq_date,
    hq_time,
    parse_hq_date,
    parse_hq_time,
)
from gpslab.schemas.core import GeoPosition

logger = logging.getLogger(__name__)

PREFIX = b"*HQ,"
TERMINATOR = b"#"
V1_TOKENS = 13
CELL_MIN_TOKENS = 6
MAX_FRAME = 1024
# Status word of a V1 raised by a geofence exit: the alarm bit (active low) cleared.
ALERT_STATUS = "FFFFFFFD"

_STATUS = re.compile(r"^[0-9A-Fa-f]{1,8}$")
_DECIMAL = re.compile(r"^\d+(\.\d+)?$")


class HqBase(BaseModel):
    model_config = ConfigDict(frozen=True)

    serial: str
    time_raw: str
    date_raw: str
    status_hex: str

    @property
    def timestamp(self) -> datetime:
        return combine_hq(parse_hq_date(self.date_raw), parse_hq_time(self.time_raw))

    def body_tokens(self) -> list[str]:
        raise NotImplementedError


class HqV1(HqBase):
    variant: Literal["V1"] = "V1"
    fix: str = "A"
    lat_field: str
    lat_hemisphere: str
    lon_field: str
    lon_hemisphere: str
    speed_raw: str = "000.0"
    course_raw: str = "000.00"

    @property
    def position(self) -> GeoPosition:
        return GeoPosition(
            lat_deg=ddmm_to_degrees(self.lat_field, self.lat_hemisphere),
            lon_deg=ddmm_to_degrees(self.lon_field, self.lon_hemisphere),
            valid=self.fix == "A",
        )

    @property
    def speed_kn(self) -> Decimal:
        return Decimal(self.speed_raw)

    @property
    def course_deg(self) -> Decimal:
        return Decimal(self.course_raw)

    def body_tokens(self) -> list[str]:
        return [
            self.time_raw,
            self.fix,
            self.lat_field,
            self.lat_hemisphere,
            self.lon_field,
            self.lon_hemisphere,
            self.speed_raw,
            self.course_raw,
        ]

    @classmethod
    def from_position(
        cls,
        serial: str,
        ts: datetime,
        position: GeoPosition,
        status_hex: str = "FFFFFFFF",
        speed_raw: str = "000.0",
        course_raw: str = "000.00",
    ) -> "HqV1":
        lat_field, lat_hemisphere = degrees_to_ddmm(position.lat_deg, Axis.LAT)
        lon_field, lon_hemisphere = degrees_to_ddmm(position.lon_deg, Axis.LON)
        return cls(
            serial=serial,
            time_raw=hq_time(ts),
            date_raw=hq_date(ts),
            status_hex=status_hex,
            fix="A" if position.valid else "V",
            lat_field=lat_field,
            lat_hemisphere=lat_hemisphere,
            lon_field=lon_field,
            lon_hemisphere=lon_hemisphere,
            speed_raw=speed_raw,
            course_raw=course_raw,
        )

    @property
    def is_alert(self) -> bool:
        return self.status_hex.upper() == ALERT_STATUS

    def with_position(self, position: GeoPosition) -> "HqV1":
        lat_field, lat_hemisphere = degrees_to_ddmm(position.lat_deg, Axis.LAT)
        lon_field, lon_hemisphere = degrees_to_ddmm(position.lon_deg, Axis.LON)
        return self.model_copy(
            update={
                "lat_field": lat_field,
                "lat_hemisphere": lat_hemisphere,
                "lon_field": lon_field,
                "lon_hemisphere": lon_hemisphere,
            }
        )


class HqCellFields(HqBase):
    # MCC/MNC/cell layout is plausible but unconfirmed; tokens stay opaque
    fields_raw: list[str]

    def body_tokens(self) -> list[str]:
        return [self.time_raw, *self.fields_raw]

    @classmethod
    def build(
        cls, serial: str, ts: datetime, fields_raw: list[str], status_hex: str
    ) -> "HqCellFields":
        return cls(
            serial=serial,
            time_raw=hq_time(ts),
            date_raw=hq_date(ts),
            status_hex=status_hex,
            fields_raw=list(fields_raw),
        )


class HqNbr(HqCellFields):
    variant: Literal["NBR"] = "NBR"


class HqLink(HqCellFields):
    variant: Literal["LINK"] = "LINK"


HqMessage = Union[HqV1, HqNbr, HqLink]


def _check_status(token: str) -> str:
    if not _STATUS.match(token):
        raise MalformedFrame(f"status {token!r} is not 1-8 hex characters")
    return token


def _check_serial(serial: str) -> str:
    if (
        not serial
        or any(c in serial for c in ",#")
        or not serial.isascii()
        or not serial.isprintable()
    ):
        raise IllegalSerial(serial)
    return serial


def parse_hq(data: bytes) -> HqMessage:
    """
    Parse one complete `*HQ` frame, terminator included.

    Raises only ProtocolError subclasses, whatever the input.
    """
    if len(data) > MAX_FRAME:
        raise MalformedFrame(f"frame of {len(data)} bytes exceeds {MAX_FRAME}")
    if not data.startswith(PREFIX):
        raise MalformedFrame("frame does not start with *HQ,")
    if not data.endswith(TERMINATOR) or data.count(TERMINATOR) != 1:
        raise MalformedFrame("frame must end with a single '#'")
    try:
        text = data[1:-1].decode("ascii")
    except UnicodeDecodeError:
        raise MalformedFrame("frame is not ASCII")

    tokens = text.split(",")
    if len(tokens) < 3:
        raise FieldCount("*HQ", f"at least {CELL_MIN_TOKENS}", len(tokens))
    serial = _check_serial(tokens[1])
    variant = tokens[2]

    if variant == "V1":
        return _parse_v1(serial, tokens)
    if variant in ("NBR", "LINK"):
        return _parse_cell(serial, variant, tokens)
    raise UnknownVariant(variant)


def _parse_v1(serial: str, tokens: list[str]) -> HqV1:
    if len(tokens) != V1_TOKENS:
        raise FieldCount("V1", str(V1_TOKENS), len(tokens))
    (
        _,
        _,
        _,
        time_raw,
        fix,
        lat_field,
        lat_hemisphere,
        lon_field,
        lon_hemisphere,
        speed_raw,
        course_raw,
        date_raw,
        status_hex,
    ) = tokens
    parse_hq_time(time_raw)
    parse_hq_date(date_raw)
    if fix not in ("A", "V"):
        raise MalformedFrame(f"fix flag {fix!r} must be A or V")
    if axis_of(lat_hemisphere) is not Axis.LAT:
        raise MalformedFrame(f"latitude hemisphere {lat_hemisphere!r}")
    if axis_of(lon_hemisphere) is not Axis.LON:
        raise MalformedFrame(f"longitude hemisphere {lon_hemisphere!r}")
    ddmm_to_degrees(lat_field, lat_hemisphere)
    ddmm_to_degrees(lon_field, lon_hemisphere)
    for name, token in (("speed", speed_raw), ("course", course_raw)):
        if not _DECIMAL.match(token):
            raise MalformedFrame(f"{name} {token!r} is not a decimal")

    return HqV1(
        serial=serial,
        time_raw=time_raw,
        fix=fix,
        lat_field=lat_field,
        lat_hemisphere=lat_hemisphere,
        lon_field=lon_field,
        lon_hemisphere=lon_hemisphere,
        speed_raw=speed_raw,
        course_raw=course_raw,
        date_raw=date_raw,
        status_hex=_check_status(status_hex),
    )


def _parse_cell(serial: str, variant: str, tokens: list[str]) -> HqCellFields:
    if len(tokens) < CELL_MIN_TOKENS:
        raise FieldCount(variant, f"at least {CELL_MIN_TOKENS}", len(tokens))
    time_raw, fields_raw = tokens[3], tokens[4:-2]
    date_raw, status_hex = tokens[-2], tokens[-1]
    parse_hq_time(time_raw)
    parse_hq_date(date_raw)
    for token in fields_raw:
        if not token.isdigit():
            raise MalformedFrame(f"{variant} field {token!r} is not numeric")

    model = HqNbr if variant == "NBR" else HqLink
    return model(
        serial=serial,
        time_raw=time_raw,
        fields_raw=fields_raw,
        date_raw=date_raw,
        status_hex=_check_status(status_hex),
    )


def serialize_hq(msg: HqMessage) -> bytes:
    _check_serial(msg.serial)
    _check_status(msg.status_hex)
    tokens = [msg.serial, msg.variant, *msg.body_tokens(), msg.date_raw, msg.status_hex]
    for token in tokens[1:]:
        if "," in token or "#" in token:
            raise MalformedFrame(f"token {token!r} would break the frame")
    try:
        return PREFIX + ",".join(tokens).encode("ascii") + TERMINATOR
    except UnicodeEncodeError:
        raise MalformedFrame("frame fields must be ASCII")


class HqStreamSplitter:
    """
    Cuts a TCP byte stream into candidate frames on '#'. CR/LF between frames
    is dropped. A run longer than `limit` without a terminator is flushed as
    one bad chunk so the buffer stays bounded.
    """

    def __init__(self, limit: int = MAX_FRAME):
        self.limit = limit
        self._buffer = bytearray()

    def feed(self, data: bytes) -> list[bytes]:
        self._buffer += data
        chunks: list[bytes] = []
        while True:
            self._skip_line_breaks()
            end = self._buffer.find(TERMINATOR)
            if end < 0:
                break
            chunks.append(bytes(self._buffer[: end + 1]))
            del self._buffer[: end + 1]
        if len(self._buffer) > self.limit:
            chunks.append(bytes(self._buffer))
            self._buffer.clear()
        return chunks

    def close(self) -> Optional[bytes]:
        self._skip_line_breaks()
        leftover = bytes(self._buffer)
        self._buffer.clear()
        return leftover or None

    def _skip_line_breaks(self) -> None:
        strip = 0
        while strip < len(self._buffer) and self._buffer[strip] in b"\r\n":
            strip += 1
        if strip:
            del self._buffer[:strip]


def try_parse_hq(data: bytes) -> tuple[Optional[HqMessage], Optional[ProtocolError]]:
    try:
        return parse_hq(data), None
    except ProtocolError as ex:
        return None, ex
