from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from gpslab.config import (
    AGPS_PORT,
    BIND_HOST,
    HQ_PORT,
    HTTP_PORT,
    SMS_GATEWAY_PORT,
    YY_PORT,
)
from gpslab.codecs.yy import SERIAL_LEN
from gpslab.schemas.core import DeviceIdentity, GeoPosition, ProtocolFamily

DEFAULT_NBR_FIELDS = ["310", "26", "02", "1", "1000", "10", "23"]
DEFAULT_LINK_FIELDS = ["22", "0", "6", "0", "0"]
_HEX = set("0123456789abcdefABCDEF")


class DeviceConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    identity: DeviceIdentity
    protocol_family: ProtocolFamily = ProtocolFamily.HQ
    home: GeoPosition
    waypoints: list[GeoPosition] = Field(default_factory=list)
    report_interval_s: int = Field(default=10, ge=1)
    engine_relay: bool = False
    status_hex: str = "FFFFFFFF"
    nbr_fields: list[str] = Field(default_factory=lambda: list(DEFAULT_NBR_FIELDS))
    link_fields: list[str] = Field(default_factory=lambda: list(DEFAULT_LINK_FIELDS))
    agps_user: Optional[str] = None
    agps_pass: Optional[str] = None

    @field_validator("status_hex")
    @classmethod
    def status_is_hex(cls, value: str) -> str:
        if not 1 <= len(value) <= 8 or not set(value) <= _HEX:
            raise ValueError(f"status {value!r} must be 1-8 hex characters")
        return value

    @field_validator("nbr_fields", "link_fields")
    @classmethod
    def fields_are_numeric(cls, value: list[str]) -> list[str]:
        if not value or not all(token.isdigit() for token in value):
            raise ValueError("cell and link fields must be non-empty numeric tokens")
        return value

    @model_validator(mode="after")
    def agps_pair(self) -> "DeviceConfig":
        if (self.agps_user is None) != (self.agps_pass is None):
            raise ValueError("agps_user and agps_pass go together")
        return self

    @model_validator(mode="after")
    def yy_identity(self) -> "DeviceConfig":
        # every yy record embeds the 15-digit serial and the iccid
        if self.protocol_family is ProtocolFamily.YY:
            serial = self.identity.serial
            if len(serial) != SERIAL_LEN or not serial.isdigit():
                raise ValueError(f"yy serial {serial!r} must be {SERIAL_LEN} digits")
            if self.identity.iccid is None:
                raise ValueError("yy devices need an iccid")
        return self

    @property
    def serial(self) -> str:
        return self.identity.serial

    @property
    def path(self) -> list[GeoPosition]:
        """Positions visited in order; a device without waypoints stays home."""
        return list(self.waypoints) or [self.home]


class PlatformPorts(BaseModel):
    """Where the collection platform listens. Port 0 asks the OS for any port."""

    model_config = ConfigDict(frozen=True)

    host: str = BIND_HOST
    hq_port: int = Field(default=HQ_PORT, ge=0, le=65535)
    yy_port: int = Field(default=YY_PORT, ge=0, le=65535)
    agps_port: int = Field(default=AGPS_PORT, ge=0, le=65535)
    http_port: int = Field(default=HTTP_PORT, ge=0, le=65535)
    sms_port: int = Field(default=SMS_GATEWAY_PORT, ge=0, le=65535)

    @model_validator(mode="after")
    def ports_distinct(self) -> "PlatformPorts":
        fixed = [p for p in self.as_dict().values() if p != 0]
        if len(fixed) != len(set(fixed)):
            raise ValueError(f"platform ports must be distinct: {self.as_dict()}")
        return self

    def as_dict(self) -> dict[str, int]:
        return {
            "hq": self.hq_port,
            "yy": self.yy_port,
            "agps": self.agps_port,
            "http": self.http_port,
            "sms": self.sms_port,
        }

    def port_for(self, family: ProtocolFamily) -> int:
        return self.hq_port if family is ProtocolFamily.HQ else self.yy_port


class FleetConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    platform: PlatformPorts = Field(default_factory=PlatformPorts)
    devices: list[DeviceConfig] = Field(min_length=1)

    @model_validator(mode="after")
    def serials_unique(self) -> "FleetConfig":
        seen: set[str] = set()
        for device in self.devices:
            if device.serial in seen:
                raise ValueError(f"duplicate serial {device.serial!r}")
            seen.add(device.serial)
        return self

    def device(self, serial: str) -> DeviceConfig:
        for device in self.devices:
            if device.serial == serial:
                return device
        raise KeyError(serial)

    @property
    def serials(self) -> list[str]:
        return [device.serial for device in self.devices]

    @property
    def phones(self) -> dict[str, str]:
        return {device.identity.phone: device.serial for device in self.devices}
