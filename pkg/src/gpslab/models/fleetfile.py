"""
Reader for fleet files.

    # comment
    platform host=127.0.0.1 hq_port=8011 yy_port=8841 agps_port=56447 http_port=8080 sms_port=7575
    device serial=690217122612463 family=YY phone=+440025240 iccid=8988211000000276405F home=22.680193,114.146846

One stanza per line, tokens split with shell quoting rules. Errors are
reported as ConfigError with the 1-based line number.
"""

import logging
import shlex
from pathlib import Path
from typing import Any, Iterable, Optional

from pydantic import ValidationError

from gpslab.exceptions import ConfigError, ProvisioningError
from gpslab.schemas.core import DeviceIdentity, GeoPosition, ProtocolFamily
from gpslab.schemas.fleet import DeviceConfig, FleetConfig, PlatformPorts

logger = logging.getLogger(__name__)

_PLATFORM_KEYS = {"host", "hq_port", "yy_port", "agps_port", "http_port", "sms_port"}
_DEVICE_KEYS = {
    "serial",
    "family",
    "phone",
    "iccid",
    "master",
    "home",
    "waypoints",
    "interval",
    "engine_relay",
    "agps_user",
    "agps_pass",
    "status",
    "nbr",
    "link",
    "portal_user",
    "portal_pass",
}
_YES = {"yes", "true", "1", "on"}
_NO = {"no", "false", "0", "off"}


def split_line(line: str, line_no: int, source: str) -> list[str]:
    try:
        return shlex.split(line, comments=True)
    except ValueError as ex:
        raise ConfigError(str(ex), line_no, source)


def split_pairs(tokens: Iterable[str], line_no: int, source: str) -> dict[str, str]:
    pairs: dict[str, str] = {}
    for token in tokens:
        key, sep, value = token.partition("=")
        if not sep or not key:
            raise ConfigError(f"expected key=value, got {token!r}", line_no, source)
        if key in pairs:
            raise ConfigError(f"duplicate key {key!r}", line_no, source)
        pairs[key] = value
    return pairs


def parse_position(text: str, line_no: int, source: str) -> GeoPosition:
    parts = text.split(",")
    if len(parts) not in (2, 3):
        raise ConfigError(f"position {text!r} must be lat,lon[,alt]", line_no, source)
    try:
        numbers = [float(part) for part in parts]
        return GeoPosition(
            lat_deg=numbers[0],
            lon_deg=numbers[1],
            alt_m=numbers[2] if len(numbers) == 3 else 0.0,
        )
    except (ValueError, ValidationError) as ex:
        raise ConfigError(f"bad position {text!r}: {ex}", line_no, source)


def _flag(value: str, key: str, line_no: int, source: str) -> bool:
    lowered = value.lower()
    if lowered in _YES:
        return True
    if lowered in _NO:
        return False
    raise ConfigError(f"{key} must be yes or no, got {value!r}", line_no, source)


class FleetBuilder:
    """
    Accumulates `platform` and `device` stanzas. Shared with the scenario
    reader, which allows the same stanzas inline.
    """

    def __init__(self, source: str = "<fleet>"):
        self.source = source
        self.platform: Optional[PlatformPorts] = None
        self.devices: list[DeviceConfig] = []
        self._platform_line: Optional[int] = None

    @property
    def empty(self) -> bool:
        return self.platform is None and not self.devices

    def feed(self, keyword: str, tokens: list[str], line_no: int) -> None:
        pairs = split_pairs(tokens, line_no, self.source)
        if keyword == "platform":
            self._platform(pairs, line_no)
        elif keyword == "device":
            self._device(pairs, line_no)
        else:
            raise ConfigError(f"unknown stanza {keyword!r}", line_no, self.source)

    def _platform(self, pairs: dict[str, str], line_no: int) -> None:
        if self.platform is not None:
            raise ConfigError(
                f"second platform stanza (first on line {self._platform_line})",
                line_no,
                self.source,
            )
        unknown = set(pairs) - _PLATFORM_KEYS
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}", line_no, self.source)
        try:
            self.platform = PlatformPorts(**pairs)
        except ValidationError as ex:
            raise ConfigError(_first_error(ex), line_no, self.source)
        self._platform_line = line_no

    def _device(self, pairs: dict[str, str], line_no: int) -> None:
        unknown = set(pairs) - _DEVICE_KEYS
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}", line_no, self.source)
        for required in ("serial", "phone"):
            if required not in pairs:
                raise ConfigError(f"device needs {required}=", line_no, self.source)
        if pairs["serial"] in {d.serial for d in self.devices}:
            raise ConfigError(
                f"duplicate serial {pairs['serial']!r}", line_no, self.source
            )

        waypoints = []
        if pairs.get("waypoints"):
            waypoints = [
                parse_position(chunk, line_no, self.source)
                for chunk in pairs["waypoints"].split(";")
                if chunk
            ]
        if "home" in pairs:
            home = parse_position(pairs["home"], line_no, self.source)
        elif waypoints:
            home = waypoints[0]
        else:
            raise ConfigError("device needs home= or waypoints=", line_no, self.source)

        identity: dict[str, Any] = {
            "serial": pairs["serial"],
            "phone": pairs["phone"],
            "iccid": pairs.get("iccid"),
            "master_phone": pairs.get("master"),
        }
        if "portal_user" in pairs or "portal_pass" in pairs:
            identity["portal_user"] = pairs.get("portal_user")
            identity["portal_pass"] = pairs.get("portal_pass")

        fields: dict[str, Any] = {
            "home": home,
            "waypoints": waypoints,
            "protocol_family": pairs.get("family", "HQ").upper(),
        }
        if "interval" in pairs:
            fields["report_interval_s"] = pairs["interval"]
        if "engine_relay" in pairs:
            fields["engine_relay"] = _flag(
                pairs["engine_relay"], "engine_relay", line_no, self.source
            )
        if "status" in pairs:
            fields["status_hex"] = pairs["status"]
        if "nbr" in pairs:
            fields["nbr_fields"] = pairs["nbr"].split(",")
        if "link" in pairs:
            fields["link_fields"] = pairs["link"].split(",")
        if "agps_user" in pairs or "agps_pass" in pairs:
            fields["agps_user"] = pairs.get("agps_user")
            fields["agps_pass"] = pairs.get("agps_pass")

        try:
            device = DeviceConfig(identity=DeviceIdentity(**identity), **fields)
        except ProvisioningError as ex:
            raise ConfigError(str(ex), line_no, self.source)
        except ValidationError as ex:
            raise ConfigError(_first_error(ex), line_no, self.source)
        self.devices.append(device)

    def build(self) -> FleetConfig:
        if not self.devices:
            raise ConfigError("fleet has no device stanza", None, self.source)
        try:
            return FleetConfig(
                platform=self.platform or PlatformPorts(), devices=self.devices
            )
        except ValidationError as ex:
            raise ConfigError(_first_error(ex), None, self.source)


def _first_error(ex: ValidationError) -> str:
    error = ex.errors()[0]
    where = ".".join(str(part) for part in error.get("loc", ()))
    return f"{where}: {error['msg']}" if where else error["msg"]


def parse_fleet(text: str, source: str = "<fleet>") -> FleetConfig:
    builder = FleetBuilder(source)
    for line_no, line in enumerate(text.splitlines(), start=1):
        tokens = split_line(line, line_no, source)
        if not tokens:
            continue
        builder.feed(tokens[0], tokens[1:], line_no)
    fleet = builder.build()
    logger.debug(
        "Fleet loaded", extra={"fleet.source": source, "fleet.devices": fleet.serials}
    )
    return fleet


def load_fleet(path: str | Path) -> FleetConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="ascii")
    except (OSError, UnicodeDecodeError) as ex:
        raise ConfigError(f"cannot read fleet file: {ex}", None, str(path))
    return parse_fleet(text, str(path))
