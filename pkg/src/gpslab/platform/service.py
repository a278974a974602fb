"""
The collection platform as a vendor would run it: listeners feeding one
history store, an HTTP API keyed by numeric device id, and a customer portal.

Kept deliberately as weak as the real thing: the API has no authentication,
portal reads accept any session for any serial, and fence and engine
commands need no session at all.
"""

import hmac
import logging
import secrets
import threading
from datetime import datetime
from decimal import Decimal
from typing import Optional, Protocol

from pydantic import BaseModel, ConfigDict

from gpslab.config import DEVICE_ID_BASE
from gpslab.exceptions import AuthFailed, NotFound, SessionRequired, Unsupported
from gpslab.models.simclock import SimClock, combine_hq, parse_hq_date, parse_hq_time
from gpslab.platform.handlers import AgpsConnection, Collector, HqConnection, YyConnection
from gpslab.platform.store import HistoryStore
from gpslab.schemas.core import Geofence, TrackRecord
from gpslab.schemas.fleet import FleetConfig, PlatformPorts

logger = logging.getLogger(__name__)

STATE_OK = "0"
STATE_ERROR = "1"
TRACKING_ICON = "27_0"


class DeviceLink(Protocol):
    """Platform-to-device configuration channel of a live tracker."""

    def push_geofence(self, fence: Geofence) -> None: ...

    def stop_engine(self) -> None: ...

    def resume_engine(self) -> None: ...


class PortalSession(BaseModel):
    model_config = ConfigDict(frozen=True)

    session_id: str
    # recorded at login, never consulted on reads
    bound_serial: str


class PortalAccount(BaseModel):
    serial: str
    user: str
    password: str


class Platform:
    def __init__(
        self,
        fleet: FleetConfig,
        name: str = "platform",
        clock: Optional[SimClock] = None,
        store: Optional[HistoryStore] = None,
        ports: Optional[PlatformPorts] = None,
    ):
        self.fleet = fleet
        self.name = name
        self.ports = ports or fleet.platform
        self.clock = clock or SimClock()
        self.store = store if store is not None else HistoryStore()
        self.collector = Collector(name, self.store, self.clock)
        self.device_ids = {
            DEVICE_ID_BASE + index: device.serial for index, device in enumerate(fleet.devices)
        }
        self._accounts = [
            PortalAccount(
                serial=device.serial,
                user=device.identity.portal_user,
                password=device.identity.portal_pass,
            )
            for device in fleet.devices
        ]
        self._sessions: dict[str, PortalSession] = {}
        self._links: dict[str, DeviceLink] = {}
        self._pending: dict[str, list[tuple[str, Optional[Geofence]]]] = {}
        self._lock = threading.Lock()

    # --- listeners ---------------------------------------------------------

    def hq_connection(self) -> HqConnection:
        return HqConnection(self.collector)

    def yy_connection(self) -> YyConnection:
        return YyConnection(self.collector)

    def agps_connection(self) -> AgpsConnection:
        return AgpsConnection(self.collector)

    @property
    def stats(self) -> dict[str, int]:
        return {"records": len(self.store), **self.collector.stats}

    # --- device links ------------------------------------------------------

    def attach(self, serial: str, link: DeviceLink) -> None:
        with self._lock:
            self._links[serial] = link
            pending = self._pending.pop(serial, [])
        for action, fence in pending:
            self._deliver(link, action, fence)

    def detach(self, serial: str) -> None:
        with self._lock:
            self._links.pop(serial, None)

    def _deliver(self, link: DeviceLink, action: str, fence: Optional[Geofence]) -> None:
        if action == "geofence":
            link.push_geofence(fence)
        elif action == "stop":
            link.stop_engine()
        else:
            link.resume_engine()

    def _command(self, serial: str, action: str, fence: Optional[Geofence] = None) -> bool:
        with self._lock:
            link = self._links.get(serial)
            if link is None:
                self._pending.setdefault(serial, []).append((action, fence))
                return False
        self._deliver(link, action, fence)
        return True

    # --- HTTP API ----------------------------------------------------------

    def _serial_for(self, device_id: int) -> Optional[str]:
        return self.device_ids.get(device_id)

    def api_get_tracking(self, device_id: int) -> dict[str, str]:
        """Latest position of any device, for anyone who asks."""
        serial = self._serial_for(device_id)
        record = self.store.latest_position(serial) if serial is not None else None
        if record is None:
            logger.info("GetTracking miss", extra={"api.device_id": device_id})
            return {"state": STATE_ERROR}

        latitude = f"{record.position.lat_deg:.6f}"
        longitude = f"{record.position.lon_deg:.6f}"
        speed = Decimal(record.meta.get("speed", "0"))
        course = Decimal(record.meta.get("course", "0"))
        return {
            "state": STATE_OK,
            "deviceUtcDate": _device_time(record).strftime("%Y-%m-%d %H:%M:%S"),
            "latitude": latitude,
            "longitude": longitude,
            "olatitude": latitude,
            "olongitude": longitude,
            "speed": f"{speed:.2f}",
            "course": str(int(course)),
            "isStop": "1" if speed == 0 else "0",
            "icon": TRACKING_ICON,
            "distance": "0",
            "acc": "0",
        }

    def api_get_device_detail(self, device_id: int) -> dict[str, str]:
        serial = self._serial_for(device_id)
        if serial is None:
            return {"state": STATE_ERROR}
        identity = self.fleet.device(serial).identity
        return {
            "state": STATE_OK,
            "deviceID": str(device_id),
            "name": serial,
            "sn": serial,
            "phone": identity.phone,
        }

    # --- portal ------------------------------------------------------------

    def portal_login(self, user: str, password: str) -> PortalSession:
        matched: Optional[PortalAccount] = None
        for account in self._accounts:
            user_ok = hmac.compare_digest(account.user.encode(), user.encode())
            pass_ok = hmac.compare_digest(account.password.encode(), password.encode())
            if user_ok and pass_ok and matched is None:
                matched = account
        if matched is None:
            logger.info("Portal login failed", extra={"portal.user": user})
            raise AuthFailed("bad user name or password")

        session = PortalSession(session_id=secrets.token_hex(16), bound_serial=matched.serial)
        with self._lock:
            self._sessions[session.session_id] = session
        logger.info(
            "Portal login", extra={"portal.user": user, "portal.serial": matched.serial}
        )
        return session

    def session(self, session_id: Optional[str]) -> PortalSession:
        with self._lock:
            session = self._sessions.get(session_id or "")
        if session is None:
            raise SessionRequired("a valid session is required")
        return session

    def _known(self, serial: str) -> None:
        if serial not in self.fleet.serials and not self.store.knows(serial):
            raise NotFound(f"unknown serial {serial}")

    def portal_history(self, session_id: Optional[str], serial: str) -> list[TrackRecord]:
        session = self.session(session_id)
        self._known(serial)
        if session.bound_serial != serial:
            logger.debug(
                "Cross-device history read",
                extra={"portal.serial": session.bound_serial, "target.serial": serial},
            )
        return self.store.records(serial)

    def portal_add_geofence(self, serial: str, fence: Geofence) -> dict:
        if serial not in self.fleet.serials:
            raise NotFound(f"unknown serial {serial}")
        delivered = self._command(serial, "geofence", fence)
        logger.info(
            "Geofence added",
            extra={"target.serial": serial, "fence.action": fence.action.value},
        )
        return {"serial": serial, "delivered": delivered}

    def _engine(self, serial: str, action: str) -> dict:
        if serial not in self.fleet.serials:
            raise NotFound(f"unknown serial {serial}")
        if not self.fleet.device(serial).engine_relay:
            raise Unsupported(f"{serial} has no engine relay")
        delivered = self._command(serial, action)
        logger.info(f"Engine {action}", extra={"target.serial": serial})
        return {"serial": serial, "delivered": delivered}

    def portal_engine_stop(self, serial: str) -> dict:
        return self._engine(serial, "stop")

    def portal_engine_resume(self, serial: str) -> dict:
        return self._engine(serial, "resume")

    def portal_change_password(
        self, session_id: Optional[str], old: str, new: str
    ) -> None:
        session = self.session(session_id)
        for account in self._accounts:
            if account.serial == session.bound_serial:
                if not hmac.compare_digest(account.password.encode(), old.encode()):
                    raise AuthFailed("current password does not match")
                account.password = new
                logger.info("Portal password changed", extra={"portal.serial": account.serial})
                return
        raise NotFound(f"no account for {session.bound_serial}")


def _device_time(record: TrackRecord) -> datetime:
    stamp = record.meta.get("device_time", "")
    if len(stamp) == 12:
        return combine_hq(parse_hq_date(stamp[6:]), parse_hq_time(stamp[:6]))
    return record.ts
