"""
Man-in-the-middle relay between trackers and their platform.

Bytes from the device side go through a transform pipe, bytes from the
platform side pass untouched. The transforms:

  identity         byte-for-byte passthrough
  record_only      the same passthrough, named for capture runs
  position_offset  `*HQ` V1 frames re-encoded with (dlat, dlon) added; all
                   other bytes, yy traffic included, pass unmodified

The transcript is a HistoryStore of the frames the devices sent, whatever
the transform. A rewritten V1 is followed by a second record holding the
frame actually forwarded.
"""

import asyncio
import logging
from collections import Counter
from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, model_validator

from gpslab.attacks.classify import Protocol, classify_traffic
from gpslab.codecs.hq import MAX_FRAME, TERMINATOR, HqV1, parse_hq, serialize_hq
from gpslab.config import RELAY_IDLE_S, UNSAFE_BIND
from gpslab.exceptions import ProtocolError
from gpslab.logconfig import hexdump
from gpslab.models.simclock import SimClock
from gpslab.platform import records
from gpslab.platform.handlers import (
    AgpsConnection,
    Collector,
    ConnectionHandler,
    HqConnection,
    YyConnection,
)
from gpslab.platform.listeners import READ_SIZE, check_bind
from gpslab.platform.store import HistoryStore
from gpslab.schemas.core import Endpoint

logger = logging.getLogger(__name__)

# bytes needed before a stream can be classified
SNIFF_LEN = 4


class Transport(str, Enum):
    TCP = "TCP"
    UDP = "UDP"


class TransformKind(str, Enum):
    IDENTITY = "identity"
    POSITION_OFFSET = "position_offset"
    RECORD_ONLY = "record_only"


class Transform(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: TransformKind = TransformKind.IDENTITY
    dlat: float = 0.0
    dlon: float = 0.0

    @classmethod
    def offset(cls, dlat: float, dlon: float) -> "Transform":
        return cls(kind=TransformKind.POSITION_OFFSET, dlat=dlat, dlon=dlon)


class RelaySpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str = "relay"
    listen: Endpoint
    upstream: Endpoint
    transport: Transport = Transport.TCP
    transform: Transform = Transform()

    @model_validator(mode="after")
    def distinct_ends(self) -> "RelaySpec":
        if self.listen == self.upstream:
            raise ValueError(f"relay would loop onto itself at {self.listen}")
        return self


_RECORDERS = {
    Protocol.HQ: HqConnection,
    Protocol.YY: YyConnection,
    Protocol.AGPS_LOGIN: AgpsConnection,
}


class TransformPipe:
    """Device-to-platform direction of one relayed connection."""

    def __init__(self, relay: "Relay"):
        self.relay = relay
        self.transform = relay.spec.transform
        self._sniff = bytearray()
        self._protocol: Optional[Protocol] = None
        self._recorder: Optional[ConnectionHandler] = None
        self._frame = bytearray()

    def feed(self, data: bytes) -> bytes:
        self.relay.stats["bytes_up"] += len(data)
        if self._protocol is None:
            self._sniff += data
            if len(self._sniff) < SNIFF_LEN:
                return b""
            data = self._identify()
        return self._process(data)

    def close(self) -> bytes:
        out = b""
        if self._protocol is None and self._sniff:
            out = self._process(self._identify())
        if self._frame:
            # an unterminated tail is forwarded as it is
            out += bytes(self._frame)
            self._frame.clear()
        if self._recorder is not None:
            self._recorder.close()
        return out

    def _identify(self) -> bytes:
        data = bytes(self._sniff)
        self._sniff.clear()
        self._protocol = classify_traffic(data)
        factory = _RECORDERS.get(self._protocol)
        if factory is not None:
            self._recorder = factory(self.relay.collector)
        logger.debug(
            "Relayed stream identified",
            extra={"relay": self.relay.spec.name, "protocol": self._protocol.value},
        )
        return data

    def _record(self, data: bytes) -> None:
        if self._recorder is not None:
            self._recorder.receive(data)

    def _process(self, data: bytes) -> bytes:
        self._record(data)
        if (
            self.transform.kind is not TransformKind.POSITION_OFFSET
            or self._protocol is not Protocol.HQ
        ):
            return data
        self._frame += data
        out = bytearray()
        while True:
            end = self._frame.find(TERMINATOR)
            if end < 0:
                break
            chunk = bytes(self._frame[: end + 1])
            del self._frame[: end + 1]
            out += self._rewrite(chunk)
        if len(self._frame) > MAX_FRAME:
            out += self._frame
            self._frame.clear()
        return bytes(out)

    def _rewrite(self, chunk: bytes) -> bytes:
        frame = chunk.lstrip(b"\r\n")
        lead = chunk[: len(chunk) - len(frame)]
        try:
            msg = parse_hq(frame)
            if not isinstance(msg, HqV1):
                return chunk
            moved = msg.with_position(
                msg.position.offset(self.transform.dlat, self.transform.dlon)
            )
            rewritten = serialize_hq(moved)
        except (ProtocolError, ValueError) as ex:
            self.relay.stats["transform_failures"] += 1
            logger.warning(
                f"Relay transform failed, frame passed unmodified: {ex}",
                extra={"relay": self.relay.spec.name, "frame.hex": hexdump(frame)},
            )
            return chunk

        self.relay.stats["rewritten"] += 1
        self.relay.transcript.append(
            records.from_hq(moved, rewritten, self.relay.clock.now())
        )
        logger.info(
            "Relay rewrote position",
            extra={
                "relay": self.relay.spec.name,
                "frame.original": frame.decode("ascii"),
                "frame.forwarded": rewritten.decode("ascii"),
            },
        )
        return lead + rewritten


class Relay:
    """Transcript and counters shared by every connection of one relay."""

    def __init__(
        self,
        spec: RelaySpec,
        clock: Optional[SimClock] = None,
        transcript: Optional[HistoryStore] = None,
    ):
        self.spec = spec
        self.clock = clock or SimClock()
        self.transcript = transcript if transcript is not None else HistoryStore()
        self.collector = Collector(spec.name, self.transcript, self.clock)
        self.stats: Counter[str] = Counter()

    def pipe(self) -> TransformPipe:
        self.stats["connections"] += 1
        return TransformPipe(self)

    def downstream(self, data: bytes) -> bytes:
        self.stats["bytes_down"] += len(data)
        return data


class RelayConnection:
    """
    Sans-IO relay leg for in-process networks: the handler a device talks to,
    wrapping the handler of the real upstream.
    """

    def __init__(self, relay: Relay, upstream: ConnectionHandler):
        self.relay = relay
        self.upstream = upstream
        self._pipe = relay.pipe()

    def receive(self, data: bytes) -> bytes:
        out = self._pipe.feed(data)
        reply = self.upstream.receive(out) if out else b""
        return self.relay.downstream(reply)

    def close(self) -> bytes:
        out = self._pipe.close()
        reply = self.upstream.receive(out) if out else b""
        reply += self.upstream.close()
        return self.relay.downstream(reply)


class TcpRelay:
    def __init__(self, relay: Relay, unsafe_bind: bool = UNSAFE_BIND):
        self.relay = relay
        self.host = check_bind(relay.spec.listen.host, unsafe_bind)
        self.port = relay.spec.listen.port
        self._server: Optional[asyncio.AbstractServer] = None

    async def start(self) -> int:
        self._server = await asyncio.start_server(self._serve, self.host, self.port)
        self.port = self._server.sockets[0].getsockname()[1]
        logger.info(
            "TCP relay listening",
            extra={
                "relay": self.relay.spec.name,
                "server.port": self.port,
                "upstream": str(self.relay.spec.upstream),
                "transform": self.relay.spec.transform.kind.value,
            },
        )
        return self.port

    async def stop(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
            self._server = None

    async def _serve(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        upstream = self.relay.spec.upstream
        try:
            up_reader, up_writer = await asyncio.open_connection(upstream.host, upstream.port)
        except OSError as ex:
            logger.warning(
                f"Upstream unreachable, dropping client: {ex}",
                extra={"relay": self.relay.spec.name, "upstream": str(upstream)},
            )
            writer.close()
            return

        pipe = self.relay.pipe()
        try:
            await asyncio.gather(
                self._pump(reader, up_writer, pipe.feed, pipe.close),
                self._pump(up_reader, writer, self.relay.downstream, None),
            )
        except ConnectionError as ex:
            logger.info(f"Relayed connection lost: {ex}", extra={"relay": self.relay.spec.name})
        finally:
            writer.close()
            up_writer.close()

    @staticmethod
    async def _pump(reader, writer, transform, flush) -> None:
        while True:
            data = await reader.read(READ_SIZE)
            if not data:
                break
            out = transform(data)
            if out:
                writer.write(out)
                await writer.drain()
        tail = flush() if flush is not None else b""
        if tail:
            writer.write(tail)
            await writer.drain()
        if writer.can_write_eof():
            writer.write_eof()


class _UpstreamProtocol(asyncio.DatagramProtocol):
    def __init__(self, relay: Relay, reply_to, downstream: asyncio.DatagramTransport):
        self.relay = relay
        self.reply_to = reply_to
        self.downstream_transport = downstream

    def datagram_received(self, data: bytes, addr) -> None:
        self.downstream_transport.sendto(self.relay.downstream(data), self.reply_to)


class _ListenProtocol(asyncio.DatagramProtocol):
    def __init__(self, udp: "UdpRelay"):
        self.udp = udp
        self.transport: Optional[asyncio.DatagramTransport] = None

    def connection_made(self, transport) -> None:
        self.transport = transport

    def datagram_received(self, data: bytes, addr) -> None:
        asyncio.ensure_future(self.udp.forward(data, addr))


class _Peer:
    def __init__(self, transport: asyncio.DatagramTransport, pipe: TransformPipe, now: float):
        self.transport = transport
        self.pipe = pipe
        self.last_seen = now

    def close(self) -> None:
        tail = self.pipe.close()
        if tail:
            self.transport.sendto(tail)
        self.transport.close()


class UdpRelay:
    """
    One upstream socket and one transform pipe per device address. Addresses
    silent for `idle_timeout` seconds are dropped on the next datagram.
    """

    def __init__(
        self,
        relay: Relay,
        unsafe_bind: bool = UNSAFE_BIND,
        idle_timeout: float = RELAY_IDLE_S,
    ):
        self.relay = relay
        self.host = check_bind(relay.spec.listen.host, unsafe_bind)
        self.port = relay.spec.listen.port
        self.idle_timeout = idle_timeout
        self._listen: Optional[_ListenProtocol] = None
        self._peers: dict[tuple, _Peer] = {}
        self._connecting = asyncio.Lock()

    @property
    def peers(self) -> int:
        return len(self._peers)

    async def start(self) -> int:
        loop = asyncio.get_running_loop()
        transport, protocol = await loop.create_datagram_endpoint(
            lambda: _ListenProtocol(self), local_addr=(self.host, self.port)
        )
        self._listen = protocol
        self.port = transport.get_extra_info("sockname")[1]
        logger.info(
            "UDP relay listening",
            extra={"relay": self.relay.spec.name, "server.port": self.port},
        )
        return self.port

    async def stop(self) -> None:
        for peer in self._peers.values():
            peer.close()
        self._peers.clear()
        if self._listen is not None and self._listen.transport is not None:
            self._listen.transport.close()
            self._listen = None

    def _evict_idle(self, now: float) -> None:
        idle = [a for a, p in self._peers.items() if now - p.last_seen > self.idle_timeout]
        for addr in idle:
            self._peers.pop(addr).close()
            logger.debug(
                "Idle relayed peer dropped",
                extra={"relay": self.relay.spec.name, "peer": str(addr)},
            )

    async def forward(self, data: bytes, addr) -> None:
        loop = asyncio.get_running_loop()
        async with self._connecting:
            now = loop.time()
            self._evict_idle(now)
            peer = self._peers.get(addr)
            if peer is None:
                upstream = self.relay.spec.upstream
                transport, _ = await loop.create_datagram_endpoint(
                    lambda: _UpstreamProtocol(self.relay, addr, self._listen.transport),
                    remote_addr=(upstream.host, upstream.port),
                )
                peer = self._peers[addr] = _Peer(transport, self.relay.pipe(), now)
            peer.last_seen = now
        out = peer.pipe.feed(data)
        if out:
            peer.transport.sendto(out)


async def run_relay(
    spec: RelaySpec,
    clock: Optional[SimClock] = None,
    transcript: Optional[HistoryStore] = None,
    unsafe_bind: bool = UNSAFE_BIND,
):
    """Start a relay for `spec` on real sockets; returns the running relay server."""
    relay = Relay(spec, clock, transcript)
    server = (
        TcpRelay(relay, unsafe_bind)
        if spec.transport is Transport.TCP
        else UdpRelay(relay, unsafe_bind)
    )
    await server.start()
    return server
