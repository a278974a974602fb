from datetime import timedelta

import pytest

from gpslab.codecs.hq import ALERT_STATUS, HqV1, parse_hq
from gpslab.codecs.yy import CRLF, REFERENCE_FRAME, SmsForward, TYPE_POSITION, parse_yy
from gpslab.emulator import state as machine
from gpslab.exceptions import Unsupported
from gpslab.models.fleetfile import parse_fleet
from gpslab.models.simclock import parse_iso
from gpslab.schemas.core import (
    Endpoint,
    FenceAction,
    Geofence,
    GeoPosition,
    RecordKind,
    SmsMessage,
)

FLEET = """
device serial=1700061234 family=HQ phone=+440025241 master=+447700900001 waypoints="22.680193,114.146846;22.681000,114.148000;22.682000,114.149000" engine_relay=yes agps_user=owner agps_pass=secret
device serial=690217122612463 family=YY phone=+440025240 iccid=8988211000000276405F master=+447700900002 home=22.543096,114.057865
device serial=1700098765 family=HQ phone=+440025277 home=22.396428,114.109497
"""
FLEET_CONFIG = parse_fleet(FLEET)
SERVER = Endpoint(host="127.0.0.1", port=8011)
AGPS = Endpoint(host="127.0.0.1", port=56447)
T0 = parse_iso("2019-01-09T10:54:17Z")


def at(seconds: int):
    return T0 + timedelta(seconds=seconds)


def hq_state():
    return machine.initial_state(FLEET_CONFIG.device("1700061234"), SERVER, AGPS)


def yy_state():
    return machine.initial_state(FLEET_CONFIG.device("690217122612463"), SERVER)


def sms(sender, body, to="+440025241"):
    return SmsMessage(sender=sender, to=to, body=body)


def test_first_report_is_from_the_first_waypoint():
    state, frames = machine.tick(hq_state(), at(0))
    assert [f.kind for f in frames] == [RecordKind.POSITION]
    msg = parse_hq(frames[0].data)
    assert isinstance(msg, HqV1)
    assert msg.serial == "1700061234"
    assert msg.lat_field == "2240.8116"
    assert msg.lon_field == "11408.8108"
    assert msg.speed_raw == "000.0"
    assert frames[0].destination == SERVER
    assert state.reports_sent == 1


def test_reports_wait_for_the_interval_and_walk_the_path():
    state, _ = machine.tick(hq_state(), at(0))
    state, frames = machine.tick(state, at(9))
    assert frames == []

    state, frames = machine.tick(state, at(10))
    assert state.position_index == 1
    assert parse_hq(frames[0].data).position.lat_deg == pytest.approx(22.681, abs=1e-6)
    assert parse_hq(frames[0].data).speed_raw != "000.0"

    state, _ = machine.tick(state, at(20))
    state, _ = machine.tick(state, at(30))
    assert state.position_index == 0


def test_cell_reports_every_third_position():
    state = hq_state()
    kinds = []
    for second in range(0, 60, 10):
        state, frames = machine.tick(state, at(second))
        kinds.append([f.kind for f in frames])
    assert kinds[2] == [RecordKind.POSITION, RecordKind.CELL_NBR, RecordKind.LINK]
    assert kinds[5] == [RecordKind.POSITION, RecordKind.CELL_NBR, RecordKind.LINK]
    assert kinds[3] == [RecordKind.POSITION]


def test_yy_reports_opaque_position_frames():
    _, frames = machine.tick(yy_state(), at(0))
    assert [f.kind for f in frames] == [RecordKind.OPAQUE]
    frame = parse_yy(frames[0].data)
    assert frame.frame_type == TYPE_POSITION
    assert frame.payload.serial_hint == "690217122612463"


def test_status_needs_no_master():
    state, frames, reply = machine.on_sms(hq_state(), sms("+449999999", "Status"), at(0))
    assert reply is not None
    assert reply.to == "+449999999"
    assert reply.sender == "+440025241"
    assert "1700061234" in reply.body and "ENGINE:ON" in reply.body
    assert [f.kind for f in frames] == [RecordKind.POSITION]


def test_reg_from_a_stranger_is_denied():
    state, frames, reply = machine.on_sms(hq_state(), sms("+449999999", "*reg 10.66.0.1 9000"), at(0))
    assert state.server_addr == SERVER
    assert frames == [] and reply is None


def test_reg_with_the_master_caller_id_moves_the_server():
    state, _, _ = machine.on_sms(hq_state(), sms("+447700900001", "*reg 10.66.0.1 9000"), at(0))
    assert state.server_addr == Endpoint(host="10.66.0.1", port=9000)

    state, _, _ = machine.on_sms(state, sms("+447700900001", "*reg 10.66.0.9"), at(1))
    assert state.server_addr == Endpoint(host="10.66.0.9", port=SERVER.port)


def test_unset_master_can_be_claimed_by_anyone():
    state = machine.initial_state(FLEET_CONFIG.device("1700098765"), SERVER)
    state, _, _ = machine.on_sms(state, sms("+448888888", "*master +448888888", to="+440025277"), at(0))
    assert state.identity.master_phone == "+448888888"

    state, _, _ = machine.on_sms(state, sms("+447777777", "*master +447777777", to="+440025277"), at(1))
    assert state.identity.master_phone == "+448888888"


def test_backdoor_commands():
    state, _, _ = machine.on_sms(hq_state(), sms("+447700900001", "*reg 10.66.0.1 9000"), at(0))
    state, _ = machine.tick(state, at(0))

    rebooted, _, _ = machine.on_sms(state, sms("+447700900001", "*reboot*"), at(1))
    assert rebooted.reports_sent == 0 and rebooted.last_report is None

    reset, _, _ = machine.on_sms(state, sms("+447700900001", "*3646655*"), at(1))
    assert reset.server_addr == SERVER
    assert reset.identity.master_phone is None

    cloned, _, _ = machine.on_sms(state, sms("+447700900001", "imeiset 353456789012345"), at(1))
    assert cloned.serial == "353456789012345"
    _, frames = machine.tick(cloned, at(20))
    assert parse_hq(frames[0].data).serial == "353456789012345"


def test_yy_imeiset_keeps_a_15_digit_serial():
    state, _, _ = machine.on_sms(
        yy_state(), sms("+447700900002", "imeiset 35345678901234", to="+440025240"), at(0)
    )
    assert state.serial == "690217122612463"
    state, _, _ = machine.on_sms(
        yy_state(), sms("+447700900002", "imeiset 353456789012345", to="+440025240"), at(0)
    )
    assert state.serial == "353456789012345"


def test_backdoor_needs_the_master():
    state, _, _ = machine.on_sms(hq_state(), sms("+449999999", "*3646655*"), at(0))
    assert state.identity.master_phone == "+447700900001"


def test_yy_forward_reproduces_the_captured_frame():
    msg = SmsMessage(sender="+440025239", to="+440025240", body="Status")
    state, frames, reply = machine.on_sms(yy_state(), msg, T0)
    assert reply is not None
    assert [f.kind for f in frames] == [RecordKind.SMS_FORWARD]
    data = frames[0].data
    # identical up to the check byte, which the generator cannot reproduce
    assert len(data) == len(REFERENCE_FRAME)
    assert data[:-3] == REFERENCE_FRAME[:-3]
    assert data.endswith(CRLF)


def test_yy_forwards_any_text_to_the_current_server():
    msg = SmsMessage(sender="+447700900002", to="+440025240", body="*reg 10.66.0.1 8841")
    state, frames, _ = machine.on_sms(yy_state(), msg, T0)
    assert state.server_addr == Endpoint(host="10.66.0.1", port=8841)
    assert frames[0].destination == state.server_addr

    msg = SmsMessage(sender="+441234", to="+440025240", body="see you at six")
    _, frames, reply = machine.on_sms(state, msg, T0)
    assert reply is None
    forward = parse_yy(frames[0].data).payload
    assert isinstance(forward, SmsForward)
    assert (forward.sender, forward.text) == ("+441234", "see you at six")


def test_alert_fence_exit_reports_once():
    state, _ = machine.tick(hq_state(), at(0))
    fence = Geofence(center=GeoPosition(lat_deg=22.680193, lon_deg=114.146846), radius_m=50)
    state = machine.add_geofence(state, fence)
    assert state.fence_inside == (True,)

    state, frames = machine.tick(state, at(10))
    assert [f.kind for f in frames] == [RecordKind.POSITION, RecordKind.ALERT]
    assert parse_hq(frames[1].data).status_hex == ALERT_STATUS

    state, frames = machine.tick(state, at(20))
    assert RecordKind.ALERT not in [f.kind for f in frames]
    assert state.engine_on


def test_stop_engine_fence_is_one_way():
    state, _ = machine.tick(hq_state(), at(0))
    fence = Geofence(
        center=GeoPosition(lat_deg=22.680193, lon_deg=114.146846),
        radius_m=50,
        action=FenceAction.STOP_ENGINE,
    )
    state = machine.add_geofence(state, fence)
    state, _ = machine.tick(state, at(10))
    assert not state.engine_on

    # back inside the fence: still off until resumed
    state, _ = machine.tick(state, at(20))
    state, _ = machine.tick(state, at(30))
    assert not state.engine_on
    assert machine.resume_engine(state).engine_on


def test_engine_commands_need_a_relay():
    state = machine.initial_state(FLEET_CONFIG.device("1700098765"), SERVER)
    with pytest.raises(Unsupported):
        machine.stop_engine(state)
    assert not machine.stop_engine(hq_state()).engine_on


def test_agps_login_is_plaintext():
    outbound = machine.agps_outbound(hq_state(), T0)
    assert outbound.destination == AGPS
    assert outbound.kind is RecordKind.AGPS_LOGIN
    assert outbound.data.startswith(b"cmd=full;user=owner;pwd=secret;lat=22.680193;lon=114.146846")
    assert outbound.data.endswith(b";pacc=100.00\n")
    assert machine.agps_outbound(yy_state(), T0) is None
