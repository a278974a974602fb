import pytest

from gpslab.exceptions import ConfigError
from gpslab.models.fleetfile import parse_fleet
from gpslab.schemas.core import ProtocolFamily

FLEET = """
# desk bench
platform host=127.0.0.1 hq_port=18011 yy_port=18841 agps_port=15647 http_port=18080 sms_port=17575
device serial=690217122612463 family=YY phone=+440025240 iccid=8988211000000276405F home=22.680193,114.146846
device serial=17000ABCDE family=HQ phone=+440025241 master=+441 \\
    waypoints="22.680193,114.146846;22.69,114.15" interval=5 engine_relay=yes
device serial=353456789012345 phone=+440025242 home=39.056417,126.2572,12.5 agps_user=u@example.com agps_pass=p portal_user=admin portal_pass=admin
"""


def test_parse_fleet():
    fleet = parse_fleet(FLEET.replace("\\\n    ", ""))
    assert fleet.platform.hq_port == 18011
    assert fleet.serials == ["690217122612463", "17000ABCDE", "353456789012345"]

    yy = fleet.device("690217122612463")
    assert yy.protocol_family is ProtocolFamily.YY
    assert yy.identity.portal_user == "2612463"
    assert yy.path == [yy.home]

    hq = fleet.device("17000ABCDE")
    assert hq.identity.master_phone == "+441"
    assert hq.engine_relay is True
    assert hq.report_interval_s == 5
    assert hq.home == hq.waypoints[0]
    assert len(hq.path) == 2

    agps = fleet.device("353456789012345")
    assert agps.home.alt_m == 12.5
    assert agps.agps_user == "u@example.com"
    assert agps.identity.portal_user == "admin"


def test_platform_defaults_when_absent():
    fleet = parse_fleet("device serial=1234567 phone=+4412 home=0,0")
    assert fleet.platform.hq_port == 8011
    assert fleet.platform.yy_port == 8841


@pytest.mark.parametrize(
    "text, line",
    [
        ("device serial=1234567 phone=+4412 home=0,0\ndevice serial=1234567 phone=+4413 home=0,0", 2),
        ("device serial=1234567 phone=+4412", 1),
        ("\n\ndevice serial=1234567 phone=+4412 home=95,0", 3),
        ("device serial=123 phone=+4412 home=0,0", 1),
        ("device serial=1234567 phone=+4412 home=0,0 interval=0", 1),
        ("device serial=1234567 phone=+4412 home=0,0 colour=red", 1),
        ("platform hq_port=1 yy_port=1\ndevice serial=1234567 phone=+4412 home=0,0", 1),
        ("device serial=12,34567 phone=+4412 home=0,0", 1),
        ("device serial=1234567 phone=+4412 home=0,0 engine_relay=maybe", 1),
        ("gateway x=1", 1),
        ('device serial="1234567 phone=+4412', 1),
    ],
)
def test_config_errors_name_the_line(text, line):
    with pytest.raises(ConfigError) as exc_info:
        parse_fleet(text, "bench.fleet")
    assert exc_info.value.line == line
    assert str(exc_info.value).startswith(f"bench.fleet:{line}:")


def test_empty_fleet_is_rejected():
    with pytest.raises(ConfigError):
        parse_fleet("# nothing here\nplatform")
