"""
Driver around the tracker state machine: owns the state, talks to the
network and the SMS plane, and keeps a transcript of everything it sent.
"""

import logging
import threading
from typing import Optional

from gpslab.codecs.agps import AgpsResponse, expected_size, parse_agps_response
from gpslab.emulator import state as machine
from gpslab.emulator.network import Network
from gpslab.emulator.state import Outbound, TrackerState
from gpslab.exceptions import NetworkError, ProtocolError
from gpslab.logconfig import hexdump
from gpslab.models.simclock import SimClock
from gpslab.schemas.core import Endpoint, Geofence, SmsMessage
from gpslab.schemas.fleet import DeviceConfig
from gpslab.sms.bus import SmsTransport

logger = logging.getLogger(__name__)


def _agps_complete(buffer: bytes) -> bool:
    size = expected_size(buffer)
    return size is not None and len(buffer) >= size


class TrackerEmulator:
    def __init__(
        self,
        device: DeviceConfig,
        server: Endpoint,
        clock: SimClock,
        network: Network,
        sms: Optional[SmsTransport] = None,
        agps_server: Optional[Endpoint] = None,
    ):
        self.device = device
        self.clock = clock
        self.network = network
        self.sms = sms
        self.state: TrackerState = machine.initial_state(device, server, agps_server)
        self.transcript: list[Outbound] = []
        self.dropped = 0
        self.replies_sent = 0
        self._lock = threading.RLock()
        # the phone stays fixed even if the serial is rewritten
        self.phone = device.identity.phone

    @property
    def serial(self) -> str:
        return self.state.serial

    def start(self) -> "TrackerEmulator":
        if self.sms is not None:
            self.sms.register(self.phone, self.on_sms)
        logger.info(
            "Tracker started",
            extra={
                "tracker.serial": self.serial,
                "tracker.family": self.state.protocol_family.value,
                "tracker.server": str(self.state.server_addr),
            },
        )
        return self

    def stop(self) -> None:
        if self.sms is not None:
            self.sms.unregister(self.phone)

    def step(self) -> list[Outbound]:
        with self._lock:
            self.state, frames = machine.tick(self.state, self.clock.now())
        self._emit(frames)
        return frames

    def on_sms(self, msg: SmsMessage) -> None:
        with self._lock:
            self.state, frames, reply = machine.on_sms(self.state, msg, self.clock.now())
        self._emit(frames)
        if reply is not None and self.sms is not None:
            self.sms.send(reply)
            self.replies_sent += 1

    def run_agps(self) -> Optional[AgpsResponse]:
        """Fetch assistance data; the blob itself is of no use to the emulator."""
        with self._lock:
            outbound = machine.agps_outbound(self.state, self.clock.now())
        if outbound is None:
            return None
        self.transcript.append(outbound)
        try:
            data = self.network.request(
                self.serial, outbound.destination, outbound.data, _agps_complete
            )
            return parse_agps_response(data)
        except (NetworkError, ProtocolError) as ex:
            logger.warning(
                f"AGPS session failed: {ex}",
                extra={"tracker.serial": self.serial, "server": str(outbound.destination)},
            )
            return None

    # platform -> device configuration

    def push_geofence(self, fence: Geofence) -> None:
        with self._lock:
            self.state = machine.add_geofence(self.state, fence)
        logger.info(
            "Geofence installed",
            extra={"tracker.serial": self.serial, "fence.action": fence.action.value},
        )

    def stop_engine(self) -> None:
        with self._lock:
            self.state = machine.stop_engine(self.state)
        logger.info("Engine stopped", extra={"tracker.serial": self.serial})

    def resume_engine(self) -> None:
        with self._lock:
            self.state = machine.resume_engine(self.state)
        logger.info("Engine resumed", extra={"tracker.serial": self.serial})

    def _emit(self, frames: list[Outbound]) -> None:
        for frame in frames:
            self.transcript.append(frame)
            try:
                self.network.send(self.phone, frame.destination, frame.data)
            except NetworkError as ex:
                # nothing is buffered; the frame is gone
                self.dropped += 1
                logger.warning(
                    f"Tracker frame dropped: {ex}",
                    extra={
                        "tracker.serial": frame.serial,
                        "server": str(frame.destination),
                        "frame.hex": hexdump(frame.data),
                    },
                )
