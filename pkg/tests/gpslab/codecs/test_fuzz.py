import random

import pytest

from gpslab.attacks.classify import Protocol, classify_traffic
from gpslab.codecs.agps import parse_agps_login, parse_agps_response
from gpslab.codecs.hq import PREFIX, parse_hq
from gpslab.codecs.yy import MAGIC, parse_yy
from gpslab.exceptions import ProtocolError

INPUTS = 100_000
MAX_SIZE = 1024


def random_inputs(seed: int, lead: bytes = b""):
    """Mostly noise; every fourth buffer starts with the protocol's magic to get past the first check."""
    rng = random.Random(seed)
    for index in range(INPUTS):
        data = rng.randbytes(rng.randint(0, MAX_SIZE))
        if lead and index % 4 == 0:
            data = (lead + data)[:MAX_SIZE]
        yield data


@pytest.mark.parametrize(
    "parser, lead",
    [
        (parse_hq, PREFIX),
        (parse_yy, MAGIC),
        (parse_agps_login, b"cmd="),
        (parse_agps_response, b"HTTP/1.1 200 OK\r\nContent-Length: "),
    ],
    ids=["hq", "yy", "agps_login", "agps_response"],
)
def test_parsers_are_total(parser, lead):
    parsed = 0
    for data in random_inputs(7, lead):
        try:
            parser(data)
            parsed += 1
        except ProtocolError:
            pass
    assert parsed < INPUTS


def test_classifier_is_total():
    for data in random_inputs(11, MAGIC):
        assert isinstance(classify_traffic(data), Protocol)
