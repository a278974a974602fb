"""Outbound transports for emulated trackers."""

import logging
import socket
import threading
from typing import Callable, Optional, Protocol

from gpslab.config import CONNECT_TIMEOUT
from gpslab.exceptions import NetworkError
from gpslab.schemas.core import Endpoint

logger = logging.getLogger(__name__)

# Decides whether a response buffer is complete.
Complete = Callable[[bytes], bool]


class Network(Protocol):
    def send(self, source: str, destination: Endpoint, data: bytes) -> None:
        """Push bytes on the source's long-lived connection to destination."""
        ...

    def request(
        self, source: str, destination: Endpoint, data: bytes, complete: Complete
    ) -> bytes:
        """One short exchange on a fresh connection."""
        ...


class TcpNetwork:
    """
    Real sockets. Each (source, destination) pair keeps one connection open,
    as trackers do with their platform; a failed send drops it.
    """

    def __init__(self, timeout: float = CONNECT_TIMEOUT):
        self.timeout = timeout
        self._lock = threading.Lock()
        self._connections: dict[tuple[str, Endpoint], socket.socket] = {}

    def _connect(self, destination: Endpoint) -> socket.socket:
        try:
            return socket.create_connection(
                (destination.host, destination.port), timeout=self.timeout
            )
        except OSError as ex:
            raise NetworkError(f"cannot reach {destination}: {ex}") from ex

    def send(self, source: str, destination: Endpoint, data: bytes) -> None:
        key = (source, destination)
        with self._lock:
            sock = self._connections.get(key)
            if sock is None:
                sock = self._connections[key] = self._connect(destination)
            try:
                sock.sendall(data)
            except OSError as ex:
                self._connections.pop(key, None)
                sock.close()
                raise NetworkError(f"send to {destination} failed: {ex}") from ex

    def request(
        self, source: str, destination: Endpoint, data: bytes, complete: Complete
    ) -> bytes:
        sock = self._connect(destination)
        buffer = b""
        try:
            with sock:
                sock.sendall(data)
                # nothing more to send; peers that answer at EOF can do so now
                sock.shutdown(socket.SHUT_WR)
                while not complete(buffer):
                    chunk = sock.recv(65536)
                    if not chunk:
                        break
                    buffer += chunk
        except OSError as ex:
            raise NetworkError(f"exchange with {destination} failed: {ex}") from ex
        return buffer

    def close(self, source: Optional[str] = None) -> None:
        with self._lock:
            for key in list(self._connections):
                if source is None or key[0] == source:
                    self._connections.pop(key).close()
