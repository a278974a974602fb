"""
.. See the NOTICE file distributed with this work for additional information
   regarding copyright ownership.
   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at
       http://www.apache.org/licenses/LICENSE-2.0
   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
"""

import re
from datetime import datetime
from enum import Enum
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from gpslab.models.geo import haversine_m
from gpslab.models.provisioning import default_credentials

_SERIAL_FORBIDDEN = re.compile(r"[,#\x00-\x1f\x7f]")
_ICCID = re.compile(r"^\d{19}[\dF]$")
_PHONE = re.compile(r"^\+?\d{3,15}$")


class ProtocolFamily(str, Enum):
    HQ = "HQ"
    YY = "YY"


class GeoPosition(BaseModel):
    model_config = ConfigDict(frozen=True)

    lat_deg: float = Field(ge=-90.0, le=90.0, allow_inf_nan=False)
    lon_deg: float = Field(ge=-180.0, le=180.0, allow_inf_nan=False)
    alt_m: float = Field(default=0.0, allow_inf_nan=False)
    valid: bool = True

    def offset(self, dlat: float, dlon: float) -> "GeoPosition":
        return GeoPosition(
            lat_deg=self.lat_deg + dlat,
            lon_deg=self.lon_deg + dlon,
            alt_m=self.alt_m,
            valid=self.valid,
        )

    def distance_m(self, other: "GeoPosition") -> float:
        return haversine_m(self.lat_deg, self.lon_deg, other.lat_deg, other.lon_deg)


def check_serial(serial: str) -> str:
    if not serial or not serial.isascii() or _SERIAL_FORBIDDEN.search(serial):
        raise ValueError(
            f"serial {serial!r} must be non-empty printable ASCII without ',' or '#'"
        )
    return serial


def check_phone(phone: str) -> str:
    if not _PHONE.match(phone):
        raise ValueError(f"{phone!r} is not an E.164-style number")
    return phone


class DeviceIdentity(BaseModel):
    """
    Everything a tracker is recognised by. Portal credentials default to the
    provisioning rule when not given explicitly.
    """

    model_config = ConfigDict(frozen=True)

    serial: str
    iccid: Optional[str] = None
    phone: str
    master_phone: Optional[str] = None
    portal_user: str
    portal_pass: str

    @model_validator(mode="before")
    @classmethod
    def provision_portal_account(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("serial"):
            if not data.get("portal_user") or not data.get("portal_pass"):
                user, password = default_credentials(data["serial"])
                data = {**data, "portal_user": user, "portal_pass": password}
        return data

    @field_validator("serial")
    @classmethod
    def serial_is_embeddable(cls, value: str) -> str:
        return check_serial(value)

    @field_validator("iccid")
    @classmethod
    def iccid_shape(cls, value: Optional[str]) -> Optional[str]:
        if value is not None and not _ICCID.match(value):
            raise ValueError(f"iccid {value!r} must be 19 digits plus a digit or 'F'")
        return value

    @field_validator("phone")
    @classmethod
    def phone_shape(cls, value: str) -> str:
        return check_phone(value)

    @field_validator("master_phone")
    @classmethod
    def master_shape(cls, value: Optional[str]) -> Optional[str]:
        return None if value is None else check_phone(value)


class SmsMessage(BaseModel):
    """
    One text on the simulated cellular plane. `sender` is whatever the sender
    claims; nothing on the bus checks it.
    """

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    sender: str = Field(alias="from")
    to: str
    body: str = Field(max_length=160)

    @field_validator("sender", "to")
    @classmethod
    def phone_shape(cls, value: str) -> str:
        return check_phone(value)

    @field_validator("body")
    @classmethod
    def body_is_ascii(cls, value: str) -> str:
        if not value.isascii():
            raise ValueError("SMS body must be ASCII")
        return value


class RecordKind(str, Enum):
    POSITION = "POSITION"
    CELL_NBR = "CELL_NBR"
    LINK = "LINK"
    SMS_FORWARD = "SMS_FORWARD"
    AGPS_LOGIN = "AGPS_LOGIN"
    ALERT = "ALERT"
    OPAQUE = "OPAQUE"


class TrackRecord(BaseModel):
    """One platform observation, kept with the verbatim bytes it came from."""

    model_config = ConfigDict(frozen=True)

    ts: datetime
    serial: str
    kind: RecordKind
    position: Optional[GeoPosition] = None
    raw: bytes
    meta: dict[str, str] = Field(default_factory=dict)


class FenceAction(str, Enum):
    ALERT = "ALERT"
    STOP_ENGINE = "STOP_ENGINE"


class Geofence(BaseModel):
    model_config = ConfigDict(frozen=True)

    center: GeoPosition
    radius_m: float = Field(gt=0, allow_inf_nan=False)
    action: FenceAction = FenceAction.ALERT

    def contains(self, position: GeoPosition) -> bool:
        return self.center.distance_m(position) <= self.radius_m


class Endpoint(BaseModel):
    """A host:port pair, as trackers store their server address."""

    model_config = ConfigDict(frozen=True)

    host: str
    port: int = Field(ge=0, le=65535)

    def __str__(self) -> str:
        return f"{self.host}:{self.port}"

    @classmethod
    def parse(cls, text: str) -> "Endpoint":
        host, sep, port = text.rpartition(":")
        if not sep or not host or not port.isdigit():
            raise ValueError(f"{text!r} is not host:port")
        return cls(host=host, port=int(port))
