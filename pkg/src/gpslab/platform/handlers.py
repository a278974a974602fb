"""
Per-connection protocol handlers, free of any I/O.

A handler is fed whatever bytes arrived and returns the bytes to write back.
The asyncio listeners and the in-process loopback both drive the same
handlers, so what lands in the store does not depend on the transport.
Nothing here authenticates a device: any well-formed frame is stored under
the serial it claims.
"""

import logging
from collections import Counter
from typing import Callable, Protocol

from gpslab.codecs.agps import (
    build_response,
    parse_agps_login,
    serialize_agps_response,
)
from gpslab.codecs.hq import HqStreamSplitter, parse_hq
from gpslab.codecs.yy import YyStreamSplitter, parse_yy
from gpslab.exceptions import ProtocolError
from gpslab.logconfig import hexdump
from gpslab.models.simclock import SimClock
from gpslab.platform import records
from gpslab.platform.store import HistoryStore

logger = logging.getLogger(__name__)

MAX_LOGIN_LINE = 1024


class ConnectionHandler(Protocol):
    def receive(self, data: bytes) -> bytes: ...

    def close(self) -> bytes: ...


class Collector:
    """What every handler of one platform shares: store, clock and counters."""

    def __init__(self, name: str, store: HistoryStore, clock: SimClock):
        self.name = name
        self.store = store
        self.clock = clock
        self.stats: Counter[str] = Counter()

    def decode_error(self, listener: str, data: bytes, ex: Exception) -> None:
        self.stats["decode_errors"] += 1
        logger.warning(
            f"Cannot decode {listener} frame: {ex}",
            extra={
                "platform": self.name,
                "listener": listener,
                "frame.hex": hexdump(data),
            },
        )


class HqConnection:
    listener = "hq"

    def __init__(self, collector: Collector):
        self.collector = collector
        self._splitter = HqStreamSplitter()

    def receive(self, data: bytes) -> bytes:
        for chunk in self._splitter.feed(data):
            self._handle(chunk)
        return b""

    def close(self) -> bytes:
        leftover = self._splitter.close()
        if leftover:
            self._handle(leftover)
        return b""

    def _handle(self, chunk: bytes) -> None:
        try:
            msg = parse_hq(chunk)
        except ProtocolError as ex:
            self.collector.decode_error(self.listener, chunk, ex)
            return
        record = records.from_hq(msg, chunk, self.collector.clock.now())
        self.collector.store.append(record)
        self.collector.stats["frames"] += 1


class YyConnection:
    listener = "yy"

    def __init__(self, collector: Collector):
        self.collector = collector
        self._splitter = YyStreamSplitter()

    def receive(self, data: bytes) -> bytes:
        for chunk in self._splitter.feed(data):
            self._handle(chunk)
        return b""

    def close(self) -> bytes:
        leftover = self._splitter.close()
        if leftover:
            self._handle(leftover)
        return b""

    def _handle(self, chunk: bytes) -> None:
        try:
            frame = parse_yy(chunk)
        except ProtocolError as ex:
            self.collector.decode_error(self.listener, chunk, ex)
            return
        record = records.from_yy(frame, chunk, self.collector.clock.now())
        self.collector.store.append(record)
        self.collector.stats["frames"] += 1


class AgpsConnection:
    """
    One login line in, banner and blob out. Every credential pair is accepted
    and written to the log in clear.
    """

    listener = "agps"

    def __init__(self, collector: Collector):
        self.collector = collector
        self._buffer = bytearray()
        self.done = False

    def receive(self, data: bytes) -> bytes:
        if self.done:
            return b""
        self._buffer += data
        end = self._buffer.find(b"\n")
        if end < 0:
            if len(self._buffer) > MAX_LOGIN_LINE:
                return self._answer(bytes(self._buffer))
            return b""
        return self._answer(bytes(self._buffer[: end + 1]))

    def close(self) -> bytes:
        if self._buffer and not self.done:
            return self._answer(bytes(self._buffer))
        return b""

    def _answer(self, line: bytes) -> bytes:
        self.done = True
        self._buffer.clear()
        raw = line.rstrip(b"\r\n")
        try:
            login = parse_agps_login(raw)
        except ProtocolError as ex:
            self.collector.decode_error(self.listener, raw, ex)
            return b""

        logger.info(
            "AGPS login",
            extra={
                "platform": self.collector.name,
                "agps.user": login.user,
                "agps.password": login.pwd,
                "agps.lat": login.position.lat_deg,
                "agps.lon": login.position.lon_deg,
            },
        )
        self.collector.store.append(
            records.from_agps(login, raw, self.collector.clock.now())
        )
        self.collector.stats["agps_logins"] += 1
        return serialize_agps_response(build_response(login.position))


HandlerFactory = Callable[[], ConnectionHandler]
