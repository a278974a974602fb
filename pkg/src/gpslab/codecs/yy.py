"""
Codec for the binary "yy" platform protocol.

    79 79 | L (u16, big endian) | type | payload ... | check | 0D 0A

L counts every byte from the type byte to the check byte inclusive. Type 0xF2
carries a forwarded SMS, decoded field by field; every other type is kept as
an opaque payload. Nothing is known about the check byte beyond one sample,
so parsed frames keep whatever check they arrived with.
"""

import logging
from datetime import datetime
from functools import lru_cache
from typing import Optional, Union

from pydantic import BaseModel, ConfigDict, Field

from gpslab.codecs.checks import UNKNOWN, check_function, solve_check_algorithm
from gpslab.exceptions import (
    BadTerminator,
    FrameTooLong,
    MalformedFrame,
    MalformedSmsForward,
    NotYy,
    ProtocolError,
    TextTooLong,
    Truncated,
)
from gpslab.models.simclock import parse_yy_stamp, yy_stamp

logger = logging.getLogger(__name__)

MAGIC = b"yy"
CRLF = b"\r\n"
HEADER_LEN = 4
MAX_BODY = 0xFFFF

TYPE_POSITION = 0xF1
TYPE_SMS_FORWARD = 0xF2
TYPE_ALERT = 0xF4

TAG1 = 0x01
SEP_TILDE = 0x7E
SEP_LF = 0x0A
SENDER_END = 0x01
TRAILER = b"\x00\x05\x30"

SERIAL_LEN = 15
ICCID_LEN = 20
STAMP_LEN = 12

# An SMS forwarded by a tracker (serial 690217122612463) to its vendor
# platform; the only yy frame with a known-good check byte.
REFERENCE_FRAME = bytes.fromhex(
    "79790049f2"
    + b"690217122612463".hex()
    + b"8988211000000276405F".hex()
    + "017e"
    + b"190109105417".hex()
    + "0a"
    + b"+440025239".hex()
    + "0106"
    + b"Status".hex()
    + "000530"
    + "f3"
    + "0d0a"
)
PLACEHOLDER_CHECK = "xor8@4"


class SmsForward(BaseModel):
    model_config = ConfigDict(frozen=True)

    serial: str
    iccid: str
    tag1: int = TAG1
    sep_tilde: int = SEP_TILDE
    datetime_raw: str
    sep_lf: int = SEP_LF
    sender: str
    text: str
    trailer: bytes = TRAILER

    @property
    def text_len(self) -> int:
        return len(self.text)

    @property
    def timestamp(self) -> datetime:
        return parse_yy_stamp(self.datetime_raw)

    @classmethod
    def build(
        cls, serial: str, iccid: str, ts: datetime, sender: str, text: str
    ) -> "SmsForward":
        return cls(
            serial=serial,
            iccid=iccid,
            datetime_raw=yy_stamp(ts),
            sender=sender,
            text=text,
        )


class Opaque(BaseModel):
    model_config = ConfigDict(frozen=True)

    data: bytes = b""

    @property
    def serial_hint(self) -> Optional[str]:
        """Leading run of ASCII digits, where yy payloads put the serial."""
        digits = bytearray()
        for byte in self.data:
            if not 0x30 <= byte <= 0x39:
                break
            digits.append(byte)
        return digits.decode("ascii") or None


YyPayload = Union[SmsForward, Opaque]


class YyFrame(BaseModel):
    model_config = ConfigDict(frozen=True)

    frame_type: int = Field(ge=0, le=0xFF)
    payload: YyPayload
    check: int = Field(ge=0, le=0xFF)

    @property
    def body_raw(self) -> bytes:
        return (
            bytes([self.frame_type]) + encode_payload(self.payload) + bytes([self.check])
        )

    @property
    def length(self) -> int:
        return len(self.body_raw)

    @classmethod
    def build(
        cls, frame_type: int, payload: YyPayload, check: Optional[int] = None
    ) -> "YyFrame":
        """Frame with the given check, or the default generator's when omitted."""
        if check is None:
            body = bytes([frame_type]) + encode_payload(payload)
            prefix = MAGIC + (len(body) + 1).to_bytes(2, "big") + body
            check = default_check(prefix)
        return cls(frame_type=frame_type, payload=payload, check=check)

    @classmethod
    def sms_forward(cls, forward: SmsForward) -> "YyFrame":
        return cls.build(TYPE_SMS_FORWARD, forward)


def _ascii(raw: bytes, what: str) -> str:
    try:
        return raw.decode("ascii")
    except UnicodeDecodeError:
        raise MalformedSmsForward(f"{what} is not ASCII")


def parse_sms_forward(inner: bytes) -> SmsForward:
    fixed = SERIAL_LEN + ICCID_LEN + 2 + STAMP_LEN + 1
    if len(inner) < fixed + 2 + len(TRAILER):
        raise MalformedSmsForward(f"SMS forward of {len(inner)} bytes is too short")

    serial = _ascii(inner[:SERIAL_LEN], "serial")
    if not serial.isdigit():
        raise MalformedSmsForward(f"serial {serial!r} is not 15 digits")
    iccid = _ascii(inner[SERIAL_LEN : SERIAL_LEN + ICCID_LEN], "iccid")
    pos = SERIAL_LEN + ICCID_LEN
    tag1, sep_tilde = inner[pos], inner[pos + 1]
    if sep_tilde != SEP_TILDE:
        raise MalformedSmsForward(f"expected 0x7E separator, got 0x{sep_tilde:02X}")
    pos += 2
    datetime_raw = _ascii(inner[pos : pos + STAMP_LEN], "datetime")
    try:
        parse_yy_stamp(datetime_raw)
    except MalformedFrame as ex:
        raise MalformedSmsForward(str(ex))
    pos += STAMP_LEN
    sep_lf = inner[pos]
    if sep_lf != SEP_LF:
        raise MalformedSmsForward(f"expected 0x0A separator, got 0x{sep_lf:02X}")
    pos += 1

    end = inner.find(bytes([SENDER_END]), pos)
    if end < 0:
        raise MalformedSmsForward("sender is not terminated by 0x01")
    sender = _ascii(inner[pos:end], "sender")
    pos = end + 1
    if pos >= len(inner):
        raise MalformedSmsForward("missing text length")
    text_len = inner[pos]
    pos += 1
    text = inner[pos : pos + text_len]
    trailer = inner[pos + text_len :]
    if len(text) != text_len or len(trailer) != len(TRAILER):
        raise MalformedSmsForward(
            f"text length {text_len} leaves {len(inner) - pos - text_len} trailer bytes"
        )

    return SmsForward(
        serial=serial,
        iccid=iccid,
        tag1=tag1,
        sep_tilde=sep_tilde,
        datetime_raw=datetime_raw,
        sep_lf=sep_lf,
        sender=sender,
        text=_ascii(text, "text"),
        trailer=trailer,
    )


def encode_payload(payload: YyPayload) -> bytes:
    if isinstance(payload, Opaque):
        return payload.data
    if len(payload.text) > 0xFF:
        raise TextTooLong(f"text of {len(payload.text)} characters exceeds 255")
    if len(payload.serial) != SERIAL_LEN or not payload.serial.isdigit():
        raise MalformedSmsForward(f"serial {payload.serial!r} is not 15 digits")
    if len(payload.iccid) != ICCID_LEN:
        raise MalformedSmsForward(f"iccid {payload.iccid!r} is not 20 characters")
    if len(payload.datetime_raw) != STAMP_LEN:
        raise MalformedSmsForward(f"datetime {payload.datetime_raw!r}")
    if chr(SENDER_END) in payload.sender:
        raise MalformedSmsForward("sender may not contain 0x01")
    if len(payload.trailer) != len(TRAILER):
        raise MalformedSmsForward("trailer must be 3 bytes")
    try:
        return (
            payload.serial.encode("ascii")
            + payload.iccid.encode("ascii")
            + bytes([payload.tag1, payload.sep_tilde])
            + payload.datetime_raw.encode("ascii")
            + bytes([payload.sep_lf])
            + payload.sender.encode("ascii")
            + bytes([SENDER_END, len(payload.text)])
            + payload.text.encode("ascii")
            + payload.trailer
        )
    except (UnicodeEncodeError, ValueError) as ex:
        raise MalformedSmsForward(str(ex))


def parse_yy(data: bytes) -> YyFrame:
    """
    Parse exactly one yy frame, CRLF included.

    Raises only ProtocolError subclasses, whatever the input.
    """
    if data[:2] != MAGIC:
        raise NotYy(f"frame starts with {data[:2].hex()!r}, not 7979")
    if len(data) < HEADER_LEN:
        raise Truncated(2, len(data) - 2)
    length = int.from_bytes(data[2:4], "big")
    available = len(data) - HEADER_LEN
    if length > available:
        raise Truncated(length, available)
    if length < 2:
        raise MalformedFrame(f"length {length} cannot hold a type and a check byte")
    if data[HEADER_LEN + length :] != CRLF:
        raise BadTerminator("frame is not followed by exactly CRLF")

    body = data[HEADER_LEN : HEADER_LEN + length]
    frame_type, inner, check = body[0], body[1:-1], body[-1]
    if frame_type == TYPE_SMS_FORWARD:
        payload: YyPayload = parse_sms_forward(inner)
    else:
        payload = Opaque(data=inner)
    return YyFrame(frame_type=frame_type, payload=payload, check=check)


def serialize_yy(frame: YyFrame) -> bytes:
    body = frame.body_raw
    if len(body) > MAX_BODY:
        raise FrameTooLong(f"body of {len(body)} bytes does not fit a u16 length")
    return MAGIC + len(body).to_bytes(2, "big") + body + CRLF


@lru_cache(maxsize=1)
def default_check_algorithm() -> str:
    algorithm_id = solve_check_algorithm(REFERENCE_FRAME)
    if algorithm_id == UNKNOWN:
        logger.warning(
            "yy check algorithm unknown, generated frames carry a placeholder",
            extra={"check.algorithm": PLACEHOLDER_CHECK},
        )
        return PLACEHOLDER_CHECK
    return algorithm_id


def default_check(prefix: bytes) -> int:
    """Check byte for a frame whose bytes up to (excluding) the check are `prefix`."""
    return check_function(default_check_algorithm())(prefix)


def try_parse_yy(data: bytes) -> tuple[Optional[YyFrame], Optional[ProtocolError]]:
    try:
        return parse_yy(data), None
    except ProtocolError as ex:
        return None, ex


class YyStreamSplitter:
    """
    Cuts a byte stream into candidate yy frames. Bytes before a magic and
    spans that fail the CRLF check come out as separate chunks so the caller
    can report them; scanning resumes right after the bad magic.
    """

    def __init__(self):
        self._buffer = bytearray()

    def feed(self, data: bytes) -> list[bytes]:
        self._buffer += data
        chunks: list[bytes] = []
        while self._buffer:
            start = self._buffer.find(MAGIC)
            if start < 0:
                keep = 1 if self._buffer.endswith(b"y") else 0
                if len(self._buffer) > keep:
                    chunks.append(bytes(self._buffer[: len(self._buffer) - keep]))
                    del self._buffer[: len(self._buffer) - keep]
                break
            if start > 0:
                chunks.append(bytes(self._buffer[:start]))
                del self._buffer[:start]
            if len(self._buffer) < HEADER_LEN:
                break
            total = HEADER_LEN + int.from_bytes(self._buffer[2:4], "big") + len(CRLF)
            if len(self._buffer) < total:
                break
            candidate = bytes(self._buffer[:total])
            chunks.append(candidate)
            if candidate.endswith(CRLF):
                del self._buffer[:total]
            else:
                del self._buffer[: len(MAGIC)]
        return chunks

    def close(self) -> Optional[bytes]:
        leftover = bytes(self._buffer)
        self._buffer.clear()
        return leftover or None
