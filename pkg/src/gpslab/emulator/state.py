"""
Tracker state machine.

Transitions are pure: each takes a TrackerState and returns the next one plus
the frames the device wants on the wire. Sending them is the driver's job.
"""

import logging
import math
from datetime import datetime
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from gpslab.codecs.agps import AgpsLogin, frame_agps_login
from gpslab.codecs.hq import ALERT_STATUS, HqLink, HqNbr, HqV1, serialize_hq
from gpslab.codecs.yy import (
    SERIAL_LEN,
    TYPE_ALERT,
    TYPE_POSITION,
    Opaque,
    SmsForward,
    YyFrame,
    serialize_yy,
)
from gpslab.config import CELL_REPORT_EVERY
from gpslab.exceptions import ProtocolError, Unsupported
from gpslab.models.geo import Axis, degrees_to_ddmm
from gpslab.models.simclock import format_iso, yy_stamp
from gpslab.schemas.core import (
    DeviceIdentity,
    Endpoint,
    FenceAction,
    Geofence,
    GeoPosition,
    ProtocolFamily,
    RecordKind,
    SmsMessage,
)
from gpslab.schemas.fleet import DeviceConfig
from gpslab.sms.commands import (
    Authorization,
    FactoryCode,
    ImeiSet,
    Master,
    Reboot,
    Reg,
    SmsCommand,
    Status,
    authorize,
    parse_sms_command,
)

logger = logging.getLogger(__name__)

AGPS_PACC_M = 100.0
KNOTS_PER_MPS = 1.943844
STATUS_REPLY = "{serial} GPS:{fix} LAT:{lat:.6f} LON:{lon:.6f} ENGINE:{engine} SERVER:{server}"


class Outbound(BaseModel):
    """One frame a tracker puts on the wire."""

    model_config = ConfigDict(frozen=True)

    ts: datetime
    serial: str
    destination: Endpoint
    kind: RecordKind
    data: bytes


class TrackerState(BaseModel):
    model_config = ConfigDict(frozen=True)

    identity: DeviceIdentity
    protocol_family: ProtocolFamily
    server_addr: Endpoint
    factory_server: Endpoint
    agps_server: Optional[Endpoint] = None
    path: list[GeoPosition] = Field(min_length=1)
    position_index: int = 0
    engine_relay: bool = False
    engine_on: bool = True
    geofences: tuple[Geofence, ...] = ()
    # membership of the current position, one flag per fence
    fence_inside: tuple[bool, ...] = ()
    report_interval_s: int = Field(default=10, ge=1)
    last_report: Optional[datetime] = None
    reports_sent: int = 0
    status_hex: str = "FFFFFFFF"
    nbr_fields: list[str]
    link_fields: list[str]
    agps_user: Optional[str] = None
    agps_pass: Optional[str] = None

    @property
    def serial(self) -> str:
        return self.identity.serial

    @property
    def position(self) -> GeoPosition:
        return self.path[self.position_index]


def initial_state(
    device: DeviceConfig, server: Endpoint, agps_server: Optional[Endpoint] = None
) -> TrackerState:
    return TrackerState(
        identity=device.identity,
        protocol_family=device.protocol_family,
        server_addr=server,
        factory_server=server,
        agps_server=agps_server,
        path=device.path,
        engine_relay=device.engine_relay,
        report_interval_s=device.report_interval_s,
        status_hex=device.status_hex,
        nbr_fields=device.nbr_fields,
        link_fields=device.link_fields,
        agps_user=device.agps_user,
        agps_pass=device.agps_pass,
    )


# --- frame rendering --------------------------------------------------------


def _motion(state: TrackerState, previous: GeoPosition) -> tuple[str, str]:
    here = state.position
    meters = previous.distance_m(here)
    if meters == 0:
        return "000.0", "000.00"
    knots = min(meters / state.report_interval_s * KNOTS_PER_MPS, 999.9)
    dlon = math.radians(here.lon_deg - previous.lon_deg)
    lat1, lat2 = math.radians(previous.lat_deg), math.radians(here.lat_deg)
    bearing = math.degrees(
        math.atan2(
            math.sin(dlon) * math.cos(lat2),
            math.cos(lat1) * math.sin(lat2)
            - math.sin(lat1) * math.cos(lat2) * math.cos(dlon),
        )
    )
    return f"{knots:05.1f}", f"{bearing % 360:06.2f}"


def _yy_position_payload(serial: str, now: datetime, position: GeoPosition) -> Opaque:
    lat_field, lat_hemisphere = degrees_to_ddmm(position.lat_deg, Axis.LAT)
    lon_field, lon_hemisphere = degrees_to_ddmm(position.lon_deg, Axis.LON)
    text = f"{serial}~{yy_stamp(now)},{lat_field},{lat_hemisphere},{lon_field},{lon_hemisphere}"
    return Opaque(data=text.encode("ascii"))


def _frame(state: TrackerState, now: datetime, kind: RecordKind, data: bytes) -> Outbound:
    return Outbound(
        ts=now, serial=state.serial, destination=state.server_addr, kind=kind, data=data
    )


def _position_frames(
    state: TrackerState, now: datetime, motion: tuple[str, str], alert: bool
) -> list[Outbound]:
    if state.protocol_family is ProtocolFamily.HQ:
        v1 = HqV1.from_position(
            state.serial,
            now,
            state.position,
            status_hex=ALERT_STATUS if alert else state.status_hex,
            speed_raw=motion[0],
            course_raw=motion[1],
        )
        kind = RecordKind.ALERT if alert else RecordKind.POSITION
        return [_frame(state, now, kind, serialize_hq(v1))]

    frame_type = TYPE_ALERT if alert else TYPE_POSITION
    frame = YyFrame.build(frame_type, _yy_position_payload(state.serial, now, state.position))
    kind = RecordKind.ALERT if alert else RecordKind.OPAQUE
    return [_frame(state, now, kind, serialize_yy(frame))]


def _cell_frames(state: TrackerState, now: datetime) -> list[Outbound]:
    nbr = HqNbr.build(state.serial, now, state.nbr_fields, state.status_hex)
    link = HqLink.build(state.serial, now, state.link_fields, state.status_hex)
    return [
        _frame(state, now, RecordKind.CELL_NBR, serialize_hq(nbr)),
        _frame(state, now, RecordKind.LINK, serialize_hq(link)),
    ]


# --- transitions ------------------------------------------------------------


def _evaluate_fences(
    state: TrackerState,
) -> tuple[tuple[bool, ...], list[Geofence]]:
    inside = tuple(fence.contains(state.position) for fence in state.geofences)
    exited = [
        fence
        for fence, was, now_in in zip(state.geofences, state.fence_inside, inside)
        if was and not now_in
    ]
    return inside, exited


def tick(state: TrackerState, now: datetime) -> tuple[TrackerState, list[Outbound]]:
    """
    Report if the interval has elapsed. The first report is sent from the
    first waypoint; every later one steps to the next waypoint, wrapping.
    """
    if state.last_report is not None:
        if (now - state.last_report).total_seconds() < state.report_interval_s:
            return state, []

    previous = state.position
    index = state.position_index
    if state.reports_sent > 0:
        index = (index + 1) % len(state.path)
    state = state.model_copy(update={"position_index": index})

    inside, exited = _evaluate_fences(state)
    engine_on = state.engine_on
    alerts = 0
    for fence in exited:
        if fence.action is FenceAction.STOP_ENGINE and state.engine_relay:
            engine_on = False
            logger.info(
                "Geofence exit stopped the engine",
                extra={"tracker.serial": state.serial, "event.time": format_iso(now)},
            )
        elif fence.action is FenceAction.ALERT:
            alerts += 1

    reports_sent = state.reports_sent + 1
    state = state.model_copy(
        update={
            "fence_inside": inside,
            "engine_on": engine_on,
            "last_report": now,
            "reports_sent": reports_sent,
        }
    )

    motion = _motion(state, previous)
    frames = _position_frames(state, now, motion, alert=False)
    for _ in range(alerts):
        frames += _position_frames(state, now, motion, alert=True)
    if state.protocol_family is ProtocolFamily.HQ and reports_sent % CELL_REPORT_EVERY == 0:
        frames += _cell_frames(state, now)
    return state, frames


def status_reply(state: TrackerState) -> str:
    return STATUS_REPLY.format(
        serial=state.serial,
        fix="A" if state.position.valid else "V",
        lat=state.position.lat_deg,
        lon=state.position.lon_deg,
        engine="ON" if state.engine_on else "OFF",
        server=state.server_addr,
    )


def _apply(state: TrackerState, cmd: SmsCommand) -> TrackerState:
    if isinstance(cmd, Reg):
        port = cmd.port if cmd.port is not None else state.factory_server.port
        return state.model_copy(
            update={"server_addr": Endpoint(host=cmd.server_ip, port=port)}
        )
    if isinstance(cmd, Master):
        identity = state.identity.model_copy(update={"master_phone": cmd.phone})
        return state.model_copy(update={"identity": identity})
    if isinstance(cmd, Reboot):
        return state.model_copy(update={"last_report": None, "reports_sent": 0})
    if isinstance(cmd, FactoryCode):
        identity = state.identity.model_copy(update={"master_phone": None})
        return state.model_copy(
            update={
                "identity": identity,
                "server_addr": state.factory_server,
                "geofences": (),
                "fence_inside": (),
            }
        )
    if isinstance(cmd, ImeiSet):
        if state.protocol_family is ProtocolFamily.YY and len(cmd.imei) != SERIAL_LEN:
            logger.warning(
                "imeiset refused, yy serials are 15 digits",
                extra={"tracker.serial": state.serial, "imei": cmd.imei},
            )
            return state
        identity = state.identity.model_copy(update={"serial": cmd.imei})
        return state.model_copy(update={"identity": identity})
    return state


def _sms_forward(state: TrackerState, msg: SmsMessage, now: datetime) -> list[Outbound]:
    serial, iccid = state.serial, state.identity.iccid
    if iccid is None or len(serial) != SERIAL_LEN or not serial.isdigit():
        logger.warning(
            "SMS forward dropped, identity does not fit the yy record",
            extra={"tracker.serial": serial, "sms.from": msg.sender},
        )
        return []
    try:
        forward = SmsForward.build(serial, iccid, now, msg.sender, msg.body)
        data = serialize_yy(YyFrame.sms_forward(forward))
    except ProtocolError as ex:
        logger.warning(
            f"SMS forward dropped: {ex}",
            extra={"tracker.serial": serial, "sms.from": msg.sender},
        )
        return []
    return [_frame(state, now, RecordKind.SMS_FORWARD, data)]


def on_sms(
    state: TrackerState, msg: SmsMessage, now: datetime
) -> tuple[TrackerState, list[Outbound], Optional[SmsMessage]]:
    """
    Handle one inbound text. yy devices forward every text they receive,
    commands included, to whatever server they point at once it is applied.
    """
    cmd = parse_sms_command(msg.body)
    verdict = authorize(cmd, msg.sender, state.identity)
    extra = {
        "tracker.serial": state.serial,
        "sms.from": msg.sender,
        "sms.command": cmd.kind,
        "backdoor": cmd.backdoor,
    }

    frames: list[Outbound] = []
    reply: Optional[SmsMessage] = None
    if verdict is Authorization.DENIED:
        logger.warning("SMS command denied", extra=extra)
    else:
        if cmd.backdoor:
            logger.warning("Firmware backdoor command accepted", extra=extra)
        elif cmd.kind != "Unknown":
            logger.info("SMS command accepted", extra=extra)
        state = _apply(state, cmd)
        if isinstance(cmd, Status):
            reply = SmsMessage(sender=state.identity.phone, to=msg.sender, body=status_reply(state))
            if state.protocol_family is ProtocolFamily.HQ:
                frames += _position_frames(state, now, ("000.0", "000.00"), alert=False)

    if state.protocol_family is ProtocolFamily.YY:
        frames += _sms_forward(state, msg, now)
    return state, frames, reply


def run_agps_session(state: TrackerState) -> Optional[AgpsLogin]:
    """The plaintext login a u-blox module sends, or None without credentials."""
    if state.agps_user is None or state.agps_pass is None:
        return None
    return AgpsLogin(
        cmd="full",
        user=state.agps_user,
        pwd=state.agps_pass,
        position=state.position,
        pacc=AGPS_PACC_M,
    )


def agps_outbound(state: TrackerState, now: datetime) -> Optional[Outbound]:
    login = run_agps_session(state)
    if login is None or state.agps_server is None:
        return None
    return Outbound(
        ts=now,
        serial=state.serial,
        destination=state.agps_server,
        kind=RecordKind.AGPS_LOGIN,
        data=frame_agps_login(login),
    )


def add_geofence(state: TrackerState, fence: Geofence) -> TrackerState:
    return state.model_copy(
        update={
            "geofences": (*state.geofences, fence),
            "fence_inside": (*state.fence_inside, fence.contains(state.position)),
        }
    )


def stop_engine(state: TrackerState) -> TrackerState:
    if not state.engine_relay:
        raise Unsupported(f"tracker {state.serial} has no engine relay")
    return state.model_copy(update={"engine_on": False})


def resume_engine(state: TrackerState) -> TrackerState:
    if not state.engine_relay:
        raise Unsupported(f"tracker {state.serial} has no engine relay")
    return state.model_copy(update={"engine_on": True})
