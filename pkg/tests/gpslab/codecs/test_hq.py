from datetime import date, datetime, time, timezone

import pytest
from hypothesis import given, settings, strategies as st

from gpslab.codecs.hq import (
    HqLink,
    HqNbr,
    HqStreamSplitter,
    HqV1,
    parse_hq,
    serialize_hq,
)
from gpslab.exceptions import (
    CoordinateError,
    FieldCount,
    IllegalSerial,
    MalformedFrame,
    UnknownVariant,
)
from gpslab.schemas.core import GeoPosition

V1_SAMPLE = b"*HQ,17000XXXXX,V1,115112,A,2240.8116,N,11408.8108,E,000.0,000.00,100119,FFFFFFFF#"
NBR_SAMPLE = b"*HQ,17000XXXXX,NBR,094111,310,26,02,1,1000,10,23,100119,FFFFFFFF#"
LINK_SAMPLE = b"*HQ,17000XXXXX,LINK,115112,22,0,6,0,0,100119,FFFFFFF#"


def test_parse_v1_sample():
    msg = parse_hq(V1_SAMPLE)
    assert isinstance(msg, HqV1)
    assert msg.serial == "17000XXXXX"
    assert msg.timestamp == datetime(2019, 1, 10, 11, 51, 12, tzinfo=timezone.utc)
    assert msg.fix == "A"
    assert msg.position.lat_deg == pytest.approx(22.680193, abs=1e-6)
    assert msg.position.lon_deg == pytest.approx(114.146846, abs=1e-6)
    assert msg.position.valid
    assert msg.status_hex == "FFFFFFFF"
    assert msg.speed_kn == 0
    assert str(msg.course_deg) == "0.00"


def test_parse_nbr_sample():
    msg = parse_hq(NBR_SAMPLE)
    assert isinstance(msg, HqNbr)
    assert msg.fields_raw == ["310", "26", "02", "1", "1000", "10", "23"]
    assert msg.timestamp.time() == time(9, 41, 11)
    assert msg.timestamp.date() == date(2019, 1, 10)


def test_parse_link_sample_keeps_short_status():
    msg = parse_hq(LINK_SAMPLE)
    assert isinstance(msg, HqLink)
    assert msg.fields_raw == ["22", "0", "6", "0", "0"]
    assert msg.status_hex == "FFFFFFF"


@pytest.mark.parametrize("sample", [V1_SAMPLE, NBR_SAMPLE, LINK_SAMPLE])
def test_samples_round_trip_byte_exact(sample):
    assert serialize_hq(parse_hq(sample)) == sample


def test_zero_position_uses_canonical_widths():
    msg = HqV1.from_position(
        "TEST",
        datetime(2000, 1, 1, tzinfo=timezone.utc),
        GeoPosition(lat_deg=0.0, lon_deg=0.0),
        status_hex="0",
    )
    assert serialize_hq(msg) == (
        b"*HQ,TEST,V1,000000,A,0000.0000,N,00000.0000,E,000.0,000.00,010100,0#"
    )


def test_v1_from_position_matches_sample():
    msg = HqV1.from_position(
        "17000XXXXX",
        datetime(2019, 1, 10, 11, 51, 12, tzinfo=timezone.utc),
        GeoPosition(lat_deg=22.680193, lon_deg=114.146846),
    )
    assert serialize_hq(msg) == V1_SAMPLE


@pytest.mark.parametrize(
    "frame, error",
    [
        (b"*HQ,X,V2,115112,A#", UnknownVariant),
        (b"*HQ,X,V1,115112,A,2240.8116,N#", FieldCount),
        (b"*HQ,X,NBR,094111,100119#", FieldCount),
        (V1_SAMPLE.replace(b"2240.8116", b"2260.8116"), CoordinateError),
        (V1_SAMPLE.replace(b",N,", b",E,"), MalformedFrame),
        (V1_SAMPLE.replace(b",A,", b",X,"), MalformedFrame),
        (V1_SAMPLE.replace(b"115112", b"256112"), MalformedFrame),
        (V1_SAMPLE.replace(b"FFFFFFFF", b"FFFFFFFFF"), MalformedFrame),
        (NBR_SAMPLE.replace(b",26,", b",2x,"), MalformedFrame),
        (V1_SAMPLE[:-1], MalformedFrame),
        (b"*HQ,17000#XXXXX,V1#", MalformedFrame),
        (b"$GPRMC,1#", MalformedFrame),
        (b"*HQ,,V1,115112#", IllegalSerial),
        (b"*HQ\xff,#", MalformedFrame),
    ],
)
def test_parse_errors(frame, error):
    with pytest.raises(error):
        parse_hq(frame)


def test_unknown_variant_carries_token():
    with pytest.raises(UnknownVariant) as exc_info:
        parse_hq(b"*HQ,X,V2,115112#")
    assert exc_info.value.token == "V2"


def test_serialize_rejects_embedded_delimiters():
    msg = parse_hq(V1_SAMPLE)
    for serial in ("170,00", "170#00"):
        with pytest.raises(IllegalSerial):
            serialize_hq(msg.model_copy(update={"serial": serial}))


def test_serialize_rejects_non_ascii_serials():
    msg = parse_hq(V1_SAMPLE)
    for serial in ("17000\u00e96123", "\u0661\u0662\u0663"):
        with pytest.raises(IllegalSerial):
            serialize_hq(msg.model_copy(update={"serial": serial}))


def test_with_position_reencodes_coordinates():
    moved = parse_hq(V1_SAMPLE).with_position(
        GeoPosition(lat_deg=23.180193, lon_deg=114.146846)
    )
    assert moved.lat_field == "2310.8116"
    assert moved.lon_field == "11408.8108"


class TestHqStreamSplitter:
    def test_splits_on_terminator_and_drops_line_breaks(self):
        splitter = HqStreamSplitter()
        assert splitter.feed(V1_SAMPLE + b"\r\n" + NBR_SAMPLE[:10]) == [V1_SAMPLE]
        assert splitter.feed(NBR_SAMPLE[10:] + b"\n") == [NBR_SAMPLE]
        assert splitter.close() is None

    def test_byte_at_a_time(self):
        splitter = HqStreamSplitter()
        frames = []
        for i in range(len(V1_SAMPLE)):
            frames += splitter.feed(V1_SAMPLE[i : i + 1])
        assert frames == [V1_SAMPLE]

    def test_leftover_and_overflow(self):
        splitter = HqStreamSplitter(limit=16)
        assert splitter.feed(b"*HQ,partial") == []
        assert splitter.close() == b"*HQ,partial"
        assert splitter.feed(b"x" * 20) == [b"x" * 20]


serials = st.text(
    alphabet="0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ", min_size=1, max_size=16
)
stamps = st.datetimes(
    min_value=datetime(2000, 1, 1), max_value=datetime(2099, 12, 31)
).map(lambda d: d.replace(microsecond=0, tzinfo=timezone.utc))
positions = st.builds(
    GeoPosition,
    lat_deg=st.floats(min_value=-90, max_value=90, allow_nan=False),
    lon_deg=st.floats(min_value=-180, max_value=180, allow_nan=False),
    valid=st.booleans(),
)
statuses = st.from_regex(r"\A[0-9A-F]{1,8}\Z")


@given(serials, stamps, positions, statuses)
@settings(max_examples=300, deadline=None)
def test_v1_structural_round_trip(serial, ts, position, status):
    msg = HqV1.from_position(serial, ts, position, status_hex=status)
    assert parse_hq(serialize_hq(msg)) == msg


@given(
    serials,
    stamps,
    st.lists(st.from_regex(r"\A[0-9]{1,5}\Z"), min_size=1, max_size=12),
    statuses,
    st.sampled_from([HqNbr, HqLink]),
)
@settings(max_examples=300, deadline=None)
def test_cell_structural_round_trip(serial, ts, fields, status, model):
    msg = model.build(serial, ts, fields, status)
    assert parse_hq(serialize_hq(msg)) == msg


def test_parse_v1_throughput(benchmark):
    msg = benchmark(parse_hq, V1_SAMPLE)
    assert msg.serial == "17000XXXXX"
