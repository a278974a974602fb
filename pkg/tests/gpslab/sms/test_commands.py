import unittest

import pytest
from hypothesis import given, settings, strategies as st

from gpslab.schemas.core import DeviceIdentity
from gpslab.sms.commands import (
    Authorization,
    FactoryCode,
    ImeiSet,
    Master,
    Reboot,
    Reg,
    Status,
    Unknown,
    authorize,
    parse_sms_command,
)

MASTER = "+441"
IDENTITY = DeviceIdentity(serial="690217122612463", phone="+440025240", master_phone=MASTER)
OPEN_IDENTITY = DeviceIdentity(serial="690217122612463", phone="+440025240")


@pytest.mark.parametrize(
    "body, expected",
    [
        ("*reg 10.0.0.5 8841", Reg(server_ip="10.0.0.5", port=8841)),
        ("* reg 10.0.0.9", Reg(server_ip="10.0.0.9")),
        ("*REG 127.0.0.1 9011", Reg(server_ip="127.0.0.1", port=9011)),
        ("Status", Status()),
        ("STATUS", Status()),
        ("  status ", Status()),
        ("*reboot*", Reboot()),
        ("*3646655*", FactoryCode()),
        ("imeiset 123456789012345", ImeiSet(imei="123456789012345")),
        ("*master +440025239", Master(phone="+440025239")),
        ("hello world", Unknown(body="hello world")),
        ("", Unknown(body="")),
    ],
)
def test_grammar(body, expected):
    assert parse_sms_command(body) == expected


@pytest.mark.parametrize(
    "body",
    [
        "*reg 10.0.0.256",
        "*reg my_ip",
        "*reg 10.0.0.5 70000",
        "*reg 10.0.0.5 0",
        "imeiset 1234",
        "imeiset 12345678901234567",
        "*reboot",
    ],
)
def test_near_misses_are_unknown(body):
    assert parse_sms_command(body) == Unknown(body=body)


def test_master_requirements():
    assert Reg(server_ip="10.0.0.5").requires_master
    assert Reboot().requires_master
    assert FactoryCode().requires_master
    assert ImeiSet(imei="123456789012345").requires_master
    assert not Status().requires_master
    assert not Unknown(body="x").requires_master


def test_backdoor_flags():
    assert Reboot().backdoor and FactoryCode().backdoor
    assert ImeiSet(imei="123456789012345").backdoor
    assert not Reg(server_ip="10.0.0.5").backdoor
    assert not Status().backdoor


class AuthorizeTestCase(unittest.TestCase):
    def test_status_without_master(self):
        assert authorize(Status(), "+000", IDENTITY) is Authorization.ALLOWED

    def test_legitimate_master(self):
        assert authorize(Reg(server_ip="10.0.0.5"), MASTER, IDENTITY) is Authorization.ALLOWED

    def test_spoofed_master_is_indistinguishable(self):
        # "+999" forging the master's caller id reaches us as MASTER
        spoofed_sender = MASTER
        assert (
            authorize(Reg(server_ip="10.0.0.5"), spoofed_sender, IDENTITY)
            is Authorization.ALLOWED
        )

    def test_other_sender_denied(self):
        assert authorize(Reboot(), "+999", IDENTITY) is Authorization.DENIED

    def test_unset_master_is_open(self):
        for cmd in (Reg(server_ip="10.0.0.5"), Reboot(), FactoryCode(), Master(phone="+999")):
            assert authorize(cmd, "+999", OPEN_IDENTITY) is Authorization.ALLOWED


phones = st.from_regex(r"\A\+?[0-9]{3,15}\Z")


@given(phones)
@settings(max_examples=200, deadline=None)
def test_status_is_allowed_for_every_sender(sender):
    assert authorize(Status(), sender, IDENTITY) is Authorization.ALLOWED


@given(st.text(alphabet=st.characters(min_codepoint=0, max_codepoint=127), max_size=160))
@settings(max_examples=500, deadline=None)
def test_parser_is_total(body):
    assert parse_sms_command(body).kind in {
        "Reg",
        "Status",
        "Master",
        "Reboot",
        "FactoryCode",
        "ImeiSet",
        "Unknown",
    }
