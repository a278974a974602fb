import random
from datetime import timedelta

import pytest

from gpslab.attacks.classify import Protocol, classify_traffic
from gpslab.codecs.agps import (
    AgpsLogin,
    build_response,
    serialize_agps_login,
    serialize_agps_response,
)
from gpslab.codecs.hq import HqV1, serialize_hq
from gpslab.codecs.yy import REFERENCE_FRAME, Opaque, SmsForward, YyFrame, serialize_yy
from gpslab.models.simclock import parse_iso
from gpslab.schemas.core import GeoPosition

CORPUS_SIZE = 1000
NOISE_BUFFERS = 10_000
T0 = parse_iso("2019-01-09T10:54:17Z")


def random_position(rng: random.Random) -> GeoPosition:
    return GeoPosition(lat_deg=rng.uniform(-89.9, 89.9), lon_deg=rng.uniform(-179.9, 179.9))


def digits(rng: random.Random, n: int) -> str:
    return "".join(rng.choice("0123456789") for _ in range(n))


def hq_frame(rng: random.Random) -> bytes:
    ts = T0 + timedelta(seconds=rng.randint(0, 10**7))
    return serialize_hq(HqV1.from_position(digits(rng, 10), ts, random_position(rng)))


def yy_frame(rng: random.Random) -> bytes:
    if rng.random() < 0.5:
        payload = SmsForward.build(
            digits(rng, 15),
            digits(rng, 19) + "F",
            T0 + timedelta(seconds=rng.randint(0, 10**7)),
            "+44" + digits(rng, 9),
            "".join(rng.choice("abcdefgh *#0123") for _ in range(rng.randint(0, 60))),
        )
        return serialize_yy(YyFrame.sms_forward(payload))
    payload = Opaque(data=rng.randbytes(rng.randint(0, 200)))
    return serialize_yy(YyFrame.build(rng.choice([0xF1, 0xF4, 0x10, 0xA5]), payload))


def agps_login(rng: random.Random) -> bytes:
    login = AgpsLogin(user=f"user{digits(rng, 4)}", pwd=digits(rng, 8), position=random_position(rng))
    return serialize_agps_login(login)


def agps_response(rng: random.Random) -> bytes:
    return serialize_agps_response(build_response(random_position(rng), rng.randint(0, 4096)))


@pytest.mark.parametrize(
    "generate, expected",
    [
        (hq_frame, Protocol.HQ),
        (yy_frame, Protocol.YY),
        (agps_login, Protocol.AGPS_LOGIN),
        (agps_response, Protocol.AGPS_RESPONSE),
    ],
    ids=["hq", "yy", "agps_login", "agps_response"],
)
def test_generated_corpus_has_no_confusion(generate, expected):
    rng = random.Random(7)
    verdicts = {classify_traffic(generate(rng)) for _ in range(CORPUS_SIZE)}
    assert verdicts == {expected}


def test_noise_is_unknown():
    rng = random.Random(7)
    for _ in range(NOISE_BUFFERS):
        data = rng.randbytes(rng.randint(0, 1024))
        assert classify_traffic(data) is Protocol.UNKNOWN, data[:16].hex()


def test_captured_forward():
    assert classify_traffic(REFERENCE_FRAME) is Protocol.YY


def test_frame_start_is_enough():
    assert classify_traffic(b"*HQ,") is Protocol.HQ
    assert classify_traffic(REFERENCE_FRAME[:5]) is Protocol.YY
    assert classify_traffic(b"yy\x00\x10\x33") is Protocol.UNKNOWN
    assert classify_traffic(b"") is Protocol.UNKNOWN
