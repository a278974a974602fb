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

from typing import Literal, Optional

from pydantic import BaseModel, Field, computed_field

from gpslab.models.simclock import format_iso
from gpslab.schemas.core import FenceAction, TrackRecord


class LoginRequest(BaseModel):
    user: str
    password: str


class SessionResponse(BaseModel):
    session_id: str
    serial: str


class PasswordRequest(BaseModel):
    old_password: str
    new_password: str = Field(min_length=1)


class GeofenceRequest(BaseModel):
    serial: str
    lat: float = Field(ge=-90.0, le=90.0)
    lon: float = Field(ge=-180.0, le=180.0)
    radius_m: float = Field(gt=0)
    action: FenceAction = FenceAction.ALERT


class EngineRequest(BaseModel):
    serial: str
    action: Literal["stop", "resume"] = "stop"


class CommandAck(BaseModel):
    serial: str
    delivered: bool


class HistoryEntry(BaseModel):
    ts: str
    serial: str
    kind: str
    lat: Optional[float] = None
    lon: Optional[float] = None
    raw: str
    meta: dict[str, str]

    @classmethod
    def from_record(cls, record: TrackRecord) -> "HistoryEntry":
        return cls(
            ts=format_iso(record.ts),
            serial=record.serial,
            kind=record.kind.value,
            lat=record.position.lat_deg if record.position else None,
            lon=record.position.lon_deg if record.position else None,
            raw=record.raw.hex().upper(),
            meta=record.meta,
        )


class HistoryResponse(BaseModel):
    serial: str
    records: list[HistoryEntry]

    @computed_field
    @property
    def count(self) -> int:
        return len(self.records)
