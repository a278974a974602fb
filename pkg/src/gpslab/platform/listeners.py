"""asyncio TCP listeners driving the sans-IO connection handlers."""

import asyncio
import ipaddress
import logging
from typing import Optional

from gpslab.config import UNSAFE_BIND
from gpslab.exceptions import ConfigError
from gpslab.platform.handlers import HandlerFactory

logger = logging.getLogger(__name__)

READ_SIZE = 4096


def check_bind(host: str, unsafe: bool = UNSAFE_BIND) -> str:
    """Refuse anything but loopback unless explicitly unlocked."""
    if unsafe:
        return host
    try:
        loopback = ipaddress.ip_address(host).is_loopback
    except ValueError:
        loopback = host == "localhost"
    if not loopback:
        raise ConfigError(f"refusing to bind {host}; pass --unsafe-bind to allow it")
    return host


class Listener:
    def __init__(
        self,
        name: str,
        factory: HandlerFactory,
        host: str,
        port: int,
        close_after_reply: bool = False,
    ):
        self.name = name
        self.factory = factory
        self.host = host
        self.port = port
        self.close_after_reply = close_after_reply
        self.connections = 0
        self._server: Optional[asyncio.AbstractServer] = None

    async def start(self) -> int:
        self._server = await asyncio.start_server(self._serve, self.host, self.port)
        self.port = self._server.sockets[0].getsockname()[1]
        logger.info(
            f"{self.name} listener ready",
            extra={"listener": self.name, "server.address": self.host, "server.port": self.port},
        )
        return self.port

    async def stop(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
            self._server = None

    async def _serve(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        handler = self.factory()
        peer = writer.get_extra_info("peername")
        self.connections += 1
        logger.debug("Connection opened", extra={"listener": self.name, "peer": str(peer)})
        try:
            while True:
                data = await reader.read(READ_SIZE)
                if not data:
                    reply = handler.close()
                    if reply:
                        writer.write(reply)
                        await writer.drain()
                    break
                reply = handler.receive(data)
                if reply:
                    writer.write(reply)
                    await writer.drain()
                    if self.close_after_reply:
                        break
        except ConnectionError as ex:
            logger.info(
                f"Connection lost: {ex}", extra={"listener": self.name, "peer": str(peer)}
            )
        finally:
            writer.close()
