"""
Line-oriented loopback service that lets other processes use one SmsBus.

Request, one per line:

    SEND <from> <to> <body...>

Response:

    DELIVERED | NOT_DELIVERED
    SMS <from> <to> <body...>      (zero or more; texts sent back to <from>)
    END

A malformed request is answered with `ERROR <reason>` then `END`.
"""

import asyncio
import logging
import socket
import threading
from typing import Optional

from pydantic import ValidationError

from gpslab.config import CONNECT_TIMEOUT
from gpslab.exceptions import NetworkError
from gpslab.schemas.core import SmsMessage
from gpslab.sms.bus import Delivery, SmsBus, Subscriber

logger = logging.getLogger(__name__)

MAX_LINE = 1024
_VERDICTS = {Delivery.DELIVERED: "DELIVERED", Delivery.NOT_DELIVERED: "NOT_DELIVERED"}


def format_sms(msg: SmsMessage) -> str:
    return f"SMS {msg.sender} {msg.to} {msg.body}"


def parse_sms_line(line: str, verb: str = "SMS") -> SmsMessage:
    parts = line.split(" ", 3)
    if len(parts) < 3 or parts[0] != verb:
        raise ValueError(f"expected '{verb} <from> <to> <body>'")
    body = parts[3] if len(parts) == 4 else ""
    try:
        return SmsMessage(sender=parts[1], to=parts[2], body=body)
    except ValidationError as ex:
        raise ValueError(ex.errors()[0]["msg"])


class SmsGateway:
    def __init__(self, bus: SmsBus, host: str, port: int):
        self.bus = bus
        self.host = host
        self.port = port
        self._server: Optional[asyncio.AbstractServer] = None

    async def start(self) -> int:
        self._server = await asyncio.start_server(
            self._handle, self.host, self.port, limit=MAX_LINE * 2
        )
        self.port = self._server.sockets[0].getsockname()[1]
        logger.info(
            "SMS gateway listening",
            extra={"server.address": self.host, "server.port": self.port},
        )
        return self.port

    async def stop(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
            self._server = None

    def exchange(self, msg: SmsMessage) -> tuple[Delivery, list[SmsMessage]]:
        """Send through the bus, collecting anything addressed back to the sender."""
        replies: list[SmsMessage] = []

        def collect(seen: SmsMessage) -> None:
            if seen.to == msg.sender and seen is not msg:
                replies.append(seen)

        self.bus.observe(collect)
        try:
            result = self.bus.send(msg)
        finally:
            self.bus.unobserve(collect)
        return result, replies

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        peer = writer.get_extra_info("peername")
        try:
            while True:
                raw = await reader.readline()
                if not raw:
                    break
                response = await self._respond(raw, peer)
                writer.write(response.encode("ascii"))
                await writer.drain()
        except (ConnectionError, asyncio.LimitOverrunError, ValueError) as ex:
            logger.warning(f"SMS gateway connection dropped: {ex}", extra={"peer": str(peer)})
        finally:
            writer.close()

    async def _respond(self, raw: bytes, peer) -> str:
        try:
            line = raw.decode("ascii").rstrip("\r\n")
            msg = parse_sms_line(line, verb="SEND")
        except (UnicodeDecodeError, ValueError) as ex:
            logger.warning(f"Bad SMS gateway request: {ex}", extra={"peer": str(peer)})
            return f"ERROR {ex}\nEND\n"

        result, replies = await asyncio.to_thread(self.exchange, msg)
        lines = [_VERDICTS[result], *(format_sms(reply) for reply in replies), "END"]
        return "\n".join(lines) + "\n"


class RemoteSmsBus:
    """
    SmsTransport speaking to an SmsGateway. Texts coming back from a send are
    handed to whatever subscriber is registered locally for their recipient.
    """

    def __init__(self, host: str, port: int, timeout: float = CONNECT_TIMEOUT):
        self.host = host
        self.port = port
        self.timeout = timeout
        self._lock = threading.Lock()
        self._subscribers: dict[str, Subscriber] = {}

    def register(self, phone: str, subscriber: Subscriber) -> None:
        self._subscribers[phone] = subscriber

    def unregister(self, phone: str) -> None:
        self._subscribers.pop(phone, None)

    def send(self, msg: SmsMessage) -> Delivery:
        request = f"SEND {msg.sender} {msg.to} {msg.body}\n".encode("ascii")
        with self._lock:
            try:
                with socket.create_connection(
                    (self.host, self.port), timeout=self.timeout
                ) as sock:
                    sock.sendall(request)
                    lines = self._read_response(sock)
            except OSError as ex:
                raise NetworkError(f"SMS gateway {self.host}:{self.port}: {ex}") from ex

        if lines[0].startswith("ERROR"):
            raise ValueError(lines[0][len("ERROR ") :])
        result = Delivery.DELIVERED if lines[0] == "DELIVERED" else Delivery.NOT_DELIVERED
        for line in lines[1:]:
            reply = parse_sms_line(line)
            subscriber = self._subscribers.get(reply.to)
            if subscriber is not None:
                subscriber(reply)
        return result

    @staticmethod
    def _read_response(sock: socket.socket) -> list[str]:
        buffer = b""
        while not (buffer == b"END\n" or buffer.endswith(b"\nEND\n")):
            chunk = sock.recv(4096)
            if not chunk:
                raise ConnectionResetError("gateway closed before END")
            buffer += chunk
        return buffer.decode("ascii").splitlines()[:-1]
