"""Turning decoded frames into history records, and back again."""

from datetime import datetime

from gpslab.codecs.agps import AgpsLogin, parse_agps_login
from gpslab.codecs.hq import HqMessage, HqV1, parse_hq
from gpslab.codecs.yy import TYPE_ALERT, SmsForward, YyFrame, parse_yy
from gpslab.exceptions import ProtocolError
from gpslab.schemas.core import RecordKind, TrackRecord

ANONYMOUS = "-"


def from_hq(msg: HqMessage, raw: bytes, ts: datetime) -> TrackRecord:
    meta = {
        "variant": msg.variant,
        "status": msg.status_hex,
        "device_time": msg.time_raw + msg.date_raw,
    }
    if isinstance(msg, HqV1):
        kind = RecordKind.ALERT if msg.is_alert else RecordKind.POSITION
        meta.update(speed=msg.speed_raw, course=msg.course_raw)
        return TrackRecord(
            ts=ts, serial=msg.serial, kind=kind, position=msg.position, raw=raw, meta=meta
        )
    kind = RecordKind.CELL_NBR if msg.variant == "NBR" else RecordKind.LINK
    meta["fields"] = ",".join(msg.fields_raw)
    return TrackRecord(ts=ts, serial=msg.serial, kind=kind, raw=raw, meta=meta)


def from_yy(frame: YyFrame, raw: bytes, ts: datetime) -> TrackRecord:
    meta = {"frame_type": f"{frame.frame_type:02X}", "check": f"{frame.check:02X}"}
    payload = frame.payload
    if isinstance(payload, SmsForward):
        meta.update(
            iccid=payload.iccid,
            sender=payload.sender,
            text=payload.text,
            device_time=payload.datetime_raw,
        )
        return TrackRecord(
            ts=ts, serial=payload.serial, kind=RecordKind.SMS_FORWARD, raw=raw, meta=meta
        )
    kind = RecordKind.ALERT if frame.frame_type == TYPE_ALERT else RecordKind.OPAQUE
    serial = payload.serial_hint or ANONYMOUS
    return TrackRecord(ts=ts, serial=serial, kind=kind, raw=raw, meta=meta)


def from_agps(login: AgpsLogin, raw: bytes, ts: datetime) -> TrackRecord:
    # the account name is all an AGPS login says about the device
    serial = login.user if login.user and "\t" not in login.user else ANONYMOUS
    return TrackRecord(
        ts=ts,
        serial=serial,
        kind=RecordKind.AGPS_LOGIN,
        position=login.position,
        raw=raw,
        meta={
            "cmd": login.cmd,
            "user": login.user,
            "pwd": login.pwd,
            "pacc": f"{login.pacc:.2f}",
        },
    )


def rederive(record: TrackRecord) -> TrackRecord:
    """Rebuild a record from its raw bytes alone, keeping its receive time."""
    if record.kind in (RecordKind.POSITION, RecordKind.CELL_NBR, RecordKind.LINK):
        return from_hq(parse_hq(record.raw), record.raw, record.ts)
    if record.kind is RecordKind.AGPS_LOGIN:
        return from_agps(parse_agps_login(record.raw), record.raw, record.ts)
    if record.kind is RecordKind.ALERT and record.raw.startswith(b"*HQ,"):
        return from_hq(parse_hq(record.raw), record.raw, record.ts)
    if record.kind in (RecordKind.SMS_FORWARD, RecordKind.OPAQUE, RecordKind.ALERT):
        return from_yy(parse_yy(record.raw), record.raw, record.ts)
    raise ProtocolError(f"no decoder for {record.kind}")
