import asyncio
import unittest

import pytest
from pydantic import ValidationError

from gpslab.attacks.relay import (
    Relay,
    RelayConnection,
    RelaySpec,
    Transform,
    TransformKind,
    Transport,
    UdpRelay,
    run_relay,
)
from gpslab.codecs.hq import parse_hq
from gpslab.codecs.yy import REFERENCE_FRAME
from gpslab.exceptions import ConfigError
from gpslab.models.fleetfile import parse_fleet
from gpslab.models.simclock import SimClock, parse_iso
from gpslab.platform.listeners import Listener
from gpslab.platform.service import Platform
from gpslab.schemas.core import Endpoint, RecordKind

FLEET = parse_fleet(
    "device serial=1700061234 family=HQ phone=+440025241 home=22.680193,114.146846\n"
)
T0 = parse_iso("2019-01-09T10:54:17Z")
V1 = b"*HQ,1700061234,V1,105417,A,2240.8116,N,11408.8108,E,000.0,000.00,090119,FFFFFFFF#"
NBR = b"*HQ,1700061234,NBR,105417,310,26,02,1,1000,10,23,090119,FFFFFFFF#"
LISTEN = Endpoint(host="127.0.0.1", port=9000)
UPSTREAM = Endpoint(host="127.0.0.1", port=8011)


def spec(transform=Transform()):
    return RelaySpec(name="mitm", listen=LISTEN, upstream=UPSTREAM, transform=transform)


def test_relay_cannot_loop_onto_itself():
    with pytest.raises(ValidationError):
        RelaySpec(listen=LISTEN, upstream=LISTEN)


class RelayConnectionTestCase(unittest.TestCase):
    def setUp(self):
        self.clock = SimClock(T0)
        self.platform = Platform(FLEET, clock=self.clock)

    def relay(self, transform=Transform()):
        relay = Relay(spec(transform), self.clock)
        return relay, RelayConnection(relay, self.platform.hq_connection())

    def test_identity_is_byte_for_byte_and_recorded(self):
        relay, connection = self.relay()
        connection.receive(V1[:10])
        connection.receive(V1[10:] + NBR)
        connection.close()
        assert [r.raw for r in self.platform.store] == [V1, NBR]
        assert relay.stats["bytes_up"] == len(V1) + len(NBR)
        assert [r.raw for r in relay.transcript] == [V1, NBR]
        assert relay.stats["rewritten"] == 0

    def test_record_only_keeps_a_transcript(self):
        relay, connection = self.relay(Transform(kind=TransformKind.RECORD_ONLY))
        connection.receive(V1 + NBR)
        assert [r.raw for r in self.platform.store] == [V1, NBR]
        assert [r.kind for r in relay.transcript] == [RecordKind.POSITION, RecordKind.CELL_NBR]
        assert relay.stats["rewritten"] == 0

    def test_position_offset_rewrites_v1_only(self):
        relay, connection = self.relay(Transform.offset(0.5, -0.25))
        connection.receive(V1[:2])
        connection.receive(V1[2:] + b"\r\n" + NBR)
        connection.close()

        forwarded = self.platform.store.records()
        assert forwarded[1].raw == NBR
        moved = parse_hq(forwarded[0].raw)
        assert moved.position.lat_deg == pytest.approx(23.180193, abs=1e-5)
        assert moved.position.lon_deg == pytest.approx(113.896846, abs=1e-5)
        assert moved.time_raw == "105417"

        original, rewritten = relay.transcript.records(kind=RecordKind.POSITION)
        assert original.raw == V1
        assert rewritten.raw == forwarded[0].raw
        assert len(relay.transcript.records(kind=RecordKind.CELL_NBR)) == 1
        assert relay.stats["rewritten"] == 1
        assert relay.stats["connections"] == 1

    def test_unmovable_frame_passes_unmodified(self):
        relay, connection = self.relay(Transform.offset(80.0, 0.0))
        connection.receive(V1)
        assert self.platform.store.records()[0].raw == V1
        assert relay.stats["transform_failures"] == 1

    def test_yy_passes_through_untouched(self):
        relay = Relay(spec(Transform.offset(0.5, 0.5)), self.clock)
        connection = RelayConnection(relay, self.platform.yy_connection())
        connection.receive(REFERENCE_FRAME)
        assert self.platform.store.records()[0].raw == REFERENCE_FRAME
        assert relay.transcript.records()[0].kind is RecordKind.SMS_FORWARD
        assert relay.stats["rewritten"] == 0


def test_tcp_relay_offsets_positions():
    clock = SimClock(T0)
    platform = Platform(FLEET, clock=clock)

    async def scenario():
        listener = Listener("hq", platform.hq_connection, "127.0.0.1", 0)
        port = await listener.start()
        relay_spec = RelaySpec(
            name="mitm",
            listen=Endpoint(host="127.0.0.1", port=0),
            upstream=Endpoint(host="127.0.0.1", port=port),
            transform=Transform.offset(0.5, 0.0),
        )
        server = await run_relay(relay_spec, clock)
        reader, writer = await asyncio.open_connection("127.0.0.1", server.port)
        writer.write(V1)
        await writer.drain()
        writer.write_eof()
        for _ in range(500):
            if len(platform.store):
                break
            await asyncio.sleep(0.01)
        writer.close()
        await server.stop()
        await listener.stop()
        return server.relay

    relay = asyncio.run(scenario())
    assert parse_hq(platform.store.records()[0].raw).position.lat_deg == pytest.approx(
        23.180193, abs=1e-5
    )
    assert relay.stats["rewritten"] == 1


def test_relay_refuses_public_listen_address():
    relay_spec = RelaySpec(
        listen=Endpoint(host="192.0.2.10", port=9000), upstream=UPSTREAM
    )
    with pytest.raises(ConfigError):
        asyncio.run(run_relay(relay_spec))


class _Sink(asyncio.DatagramProtocol):
    def __init__(self):
        self.received = []

    def datagram_received(self, data, addr):
        self.received.append(data)


def test_udp_relay_forgets_idle_devices():
    async def scenario():
        loop = asyncio.get_running_loop()
        upstream, sink = await loop.create_datagram_endpoint(
            _Sink, local_addr=("127.0.0.1", 0)
        )
        relay_spec = RelaySpec(
            name="mitm",
            listen=Endpoint(host="127.0.0.1", port=0),
            upstream=Endpoint(host="127.0.0.1", port=upstream.get_extra_info("sockname")[1]),
            transport=Transport.UDP,
        )
        server = UdpRelay(Relay(relay_spec, SimClock(T0)), idle_timeout=0.05)
        port = await server.start()
        counts = []
        for frame in (V1, NBR):
            device, _ = await loop.create_datagram_endpoint(
                asyncio.DatagramProtocol, remote_addr=("127.0.0.1", port)
            )
            device.sendto(frame)
            for _ in range(500):
                if frame in sink.received:
                    break
                await asyncio.sleep(0.01)
            counts.append(server.peers)
            await asyncio.sleep(0.1)
            device.close()
        await server.stop()
        upstream.close()
        return sink.received, counts, server

    received, counts, server = asyncio.run(scenario())
    assert received == [V1, NBR]
    assert counts == [1, 1]
    assert server.peers == 0
    assert [r.raw for r in server.relay.transcript] == [V1, NBR]
