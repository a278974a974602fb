"""Runs a Platform on real loopback sockets: three TCP listeners, HTTP, and optionally the SMS gateway."""

import asyncio
import logging
from typing import Optional

import uvicorn

from gpslab.config import UNSAFE_BIND
from gpslab.main import get_application
from gpslab.platform.listeners import Listener, check_bind
from gpslab.platform.service import Platform
from gpslab.sms.bus import SmsBus
from gpslab.sms.gateway import SmsGateway

logger = logging.getLogger(__name__)


class PlatformServer:
    def __init__(
        self,
        platform: Platform,
        unsafe_bind: bool = UNSAFE_BIND,
        sms_bus: Optional[SmsBus] = None,
        http: bool = True,
    ):
        self.platform = platform
        self.host = check_bind(platform.ports.host, unsafe_bind)
        ports = platform.ports
        self.listeners = {
            "hq": Listener("hq", platform.hq_connection, self.host, ports.hq_port),
            "yy": Listener("yy", platform.yy_connection, self.host, ports.yy_port),
            "agps": Listener(
                "agps",
                platform.agps_connection,
                self.host,
                ports.agps_port,
                close_after_reply=True,
            ),
        }
        self.gateway = (
            SmsGateway(sms_bus, self.host, ports.sms_port) if sms_bus is not None else None
        )
        self._http: Optional[uvicorn.Server] = None
        self._http_task: Optional[asyncio.Task] = None
        if http:
            self._http = uvicorn.Server(
                uvicorn.Config(
                    get_application(platform),
                    host=self.host,
                    port=ports.http_port,
                    log_config=None,
                    lifespan="on",
                )
            )

    @property
    def bound(self) -> dict[str, int]:
        """Actual ports once started (useful when the fleet asked for port 0)."""
        ports = {name: listener.port for name, listener in self.listeners.items()}
        if self._http is not None:
            ports["http"] = self.platform.ports.http_port
            if self._http.started and self._http.servers:
                ports["http"] = self._http.servers[0].sockets[0].getsockname()[1]
        if self.gateway is not None:
            ports["sms"] = self.gateway.port
        return ports

    async def start(self) -> dict[str, int]:
        for listener in self.listeners.values():
            await listener.start()
        if self.gateway is not None:
            await self.gateway.start()
        if self._http is not None:
            self._http_task = asyncio.create_task(self._http.serve())
            while not self._http.started:
                if self._http_task.done():
                    # serve() returns early when the port cannot be bound
                    await self._http_task
                    raise OSError(f"HTTP server failed to start on {self.host}")
                await asyncio.sleep(0.01)
        logger.info(
            f"Platform {self.platform.name} up",
            extra={"platform": self.platform.name, "ports": str(self.bound)},
        )
        return self.bound

    async def stop(self) -> None:
        if self._http is not None and self._http_task is not None:
            self._http.should_exit = True
            await self._http_task
            self._http_task = None
        if self.gateway is not None:
            await self.gateway.stop()
        for listener in self.listeners.values():
            await listener.stop()
        logger.info(f"Platform {self.platform.name} down", extra={"platform": self.platform.name})

    async def serve_forever(self) -> None:
        await self.start()
        try:
            await asyncio.Event().wait()
        finally:
            await self.stop()
