"""
In-process network for scenario runs. Endpoints are bound to handler
factories; a connection is one handler instance, driven synchronously on the
caller's thread, so a whole run happens on one timeline.
"""

import logging
import threading
from typing import Optional

from gpslab.emulator.network import Complete
from gpslab.exceptions import NetworkError
from gpslab.platform.handlers import ConnectionHandler, HandlerFactory
from gpslab.schemas.core import Endpoint

logger = logging.getLogger(__name__)


class LoopbackNetwork:
    def __init__(self):
        self._lock = threading.RLock()
        self._services: dict[Endpoint, HandlerFactory] = {}
        self._connections: dict[tuple[str, Endpoint], ConnectionHandler] = {}
        self.delivered: dict[Endpoint, int] = {}

    def bind(self, endpoint: Endpoint, factory: HandlerFactory) -> None:
        with self._lock:
            if endpoint in self._services:
                raise NetworkError(f"{endpoint} is already bound")
            self._services[endpoint] = factory
        logger.debug("Loopback endpoint bound", extra={"server": str(endpoint)})

    def unbind(self, endpoint: Endpoint) -> None:
        with self._lock:
            self._services.pop(endpoint, None)
            stale = [key for key in self._connections if key[1] == endpoint]
            handlers = [self._connections.pop(key) for key in stale]
        for handler in handlers:
            handler.close()

    def is_bound(self, endpoint: Endpoint) -> bool:
        with self._lock:
            return endpoint in self._services

    def connect(self, endpoint: Endpoint) -> ConnectionHandler:
        with self._lock:
            factory = self._services.get(endpoint)
        if factory is None:
            raise NetworkError(f"connection refused by {endpoint}")
        return factory()

    def send(self, source: str, destination: Endpoint, data: bytes) -> None:
        key = (source, destination)
        with self._lock:
            handler = self._connections.get(key)
            if handler is None:
                handler = self._connections[key] = self.connect(destination)
            self.delivered[destination] = self.delivered.get(destination, 0) + 1
            # devices ignore whatever the server writes back
            handler.receive(data)

    def request(
        self, source: str, destination: Endpoint, data: bytes, complete: Complete
    ) -> bytes:
        handler = self.connect(destination)
        with self._lock:
            self.delivered[destination] = self.delivered.get(destination, 0) + 1
        reply = handler.receive(data)
        if not complete(reply):
            reply += handler.close()
        else:
            handler.close()
        return reply

    def close(self, source: Optional[str] = None) -> None:
        with self._lock:
            stale = [key for key in self._connections if source is None or key[0] == source]
            handlers = [self._connections.pop(key) for key in stale]
        for handler in handlers:
            handler.close()
