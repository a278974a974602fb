"""
Management grammar understood by the trackers over SMS.

    *reg <ipv4>[ <port>]   point the tracker at another platform server
    status                 ask for a status reply (no master needed)
    *master <phone>        set the master number
    *reboot*               firmware backdoor: restart reporting
    *3646655*              firmware backdoor: factory reset
    imeiset <digits>       firmware backdoor: rewrite the serial

Anything else parses as Unknown. The only "authentication" is comparing the
claimed caller id with the master number.
"""

import ipaddress
import logging
import re
from enum import Enum
from typing import ClassVar, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict

from gpslab.schemas.core import DeviceIdentity

logger = logging.getLogger(__name__)

_REG = re.compile(r"^\*\s*reg\s+(\S+)(?:\s+(\d{1,5}))?$", re.IGNORECASE)
_MASTER = re.compile(r"^\*\s*master\s+(\+?\d{3,15})$", re.IGNORECASE)
_IMEISET = re.compile(r"^imeiset\s+(\d{14,16})$", re.IGNORECASE)
_REBOOT = "*reboot*"
_FACTORY = "*3646655*"


class SmsCommandBase(BaseModel):
    model_config = ConfigDict(frozen=True)

    requires_master: ClassVar[bool] = True
    # strings recovered from firmware rather than documented commands
    backdoor: ClassVar[bool] = False


class Reg(SmsCommandBase):
    kind: Literal["Reg"] = "Reg"
    server_ip: str
    port: Optional[int] = None


class Status(SmsCommandBase):
    kind: Literal["Status"] = "Status"
    requires_master: ClassVar[bool] = False


class Master(SmsCommandBase):
    kind: Literal["Master"] = "Master"
    phone: str


class Reboot(SmsCommandBase):
    kind: Literal["Reboot"] = "Reboot"
    backdoor: ClassVar[bool] = True


class FactoryCode(SmsCommandBase):
    kind: Literal["FactoryCode"] = "FactoryCode"
    backdoor: ClassVar[bool] = True


class ImeiSet(SmsCommandBase):
    kind: Literal["ImeiSet"] = "ImeiSet"
    imei: str
    backdoor: ClassVar[bool] = True


class Unknown(SmsCommandBase):
    kind: Literal["Unknown"] = "Unknown"
    body: str
    requires_master: ClassVar[bool] = False


SmsCommand = Union[Reg, Status, Master, Reboot, FactoryCode, ImeiSet, Unknown]


class Authorization(str, Enum):
    ALLOWED = "Allowed"
    DENIED = "Denied"


def _ipv4(text: str) -> Optional[str]:
    try:
        return str(ipaddress.IPv4Address(text))
    except ValueError:
        return None


def parse_sms_command(body: str) -> SmsCommand:
    text = body.strip()
    lowered = text.lower()

    match = _REG.match(text)
    if match:
        server_ip = _ipv4(match.group(1))
        port = int(match.group(2)) if match.group(2) else None
        if server_ip is not None and (port is None or 1 <= port <= 65535):
            return Reg(server_ip=server_ip, port=port)
        return Unknown(body=body)

    if lowered == "status":
        return Status()
    if lowered == _REBOOT:
        return Reboot()
    if lowered == _FACTORY:
        return FactoryCode()

    match = _IMEISET.match(text)
    if match:
        return ImeiSet(imei=match.group(1))
    match = _MASTER.match(text)
    if match:
        return Master(phone=match.group(1))
    return Unknown(body=body)


def authorize(cmd: SmsCommand, sender: str, identity: DeviceIdentity) -> Authorization:
    """
    Allowed when the command needs no master, the master is unset, or the
    claimed sender equals it. Caller ids are taken at face value.
    """
    if not cmd.requires_master:
        return Authorization.ALLOWED
    if identity.master_phone is None or sender == identity.master_phone:
        return Authorization.ALLOWED
    return Authorization.DENIED
