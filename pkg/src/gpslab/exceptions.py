"""Exception hierarchy shared by every gpslab component."""

from typing import Optional


class LabError(Exception):
    """Root of all gpslab errors."""


# --- wire protocol errors -------------------------------------------------


class ProtocolError(LabError, ValueError):
    """A frame or line could not be decoded or encoded."""


class MalformedFrame(ProtocolError):
    pass


class UnknownVariant(ProtocolError):
    def __init__(self, token: str):
        super().__init__(f"unknown *HQ variant {token!r}")
        self.token = token


class FieldCount(ProtocolError):
    def __init__(self, variant: str, expected: str, got: int):
        super().__init__(f"{variant} frame needs {expected} fields, got {got}")
        self.variant = variant
        self.expected = expected
        self.got = got


class CoordinateError(ProtocolError):
    def __init__(self, field: str, reason: str):
        super().__init__(f"bad coordinate field {field!r}: {reason}")
        self.field = field
        self.reason = reason


class IllegalSerial(ProtocolError):
    def __init__(self, serial: str):
        super().__init__(f"serial {serial!r} cannot be embedded in a frame")
        self.serial = serial


class NotYy(ProtocolError):
    pass


class Truncated(ProtocolError):
    def __init__(self, declared: int, available: int):
        super().__init__(f"declared {declared} body bytes, only {available} available")
        self.declared = declared
        self.available = available


class BadTerminator(ProtocolError):
    pass


class MalformedSmsForward(ProtocolError):
    pass


class TextTooLong(ProtocolError):
    pass


class FrameTooLong(ProtocolError):
    pass


class MissingKey(ProtocolError):
    def __init__(self, name: str):
        super().__init__(f"missing key {name!r}")
        self.name = name


class DuplicateKey(ProtocolError):
    def __init__(self, name: str):
        super().__init__(f"duplicate key {name!r}")
        self.name = name


class BadNumber(ProtocolError):
    def __init__(self, name: str, value: str):
        super().__init__(f"key {name!r} has non-numeric value {value!r}")
        self.name = name
        self.value = value


class MalformedLogin(ProtocolError):
    pass


class MalformedResponse(ProtocolError):
    pass


class MalformedEnvelope(ProtocolError):
    pass


class LengthMismatch(ProtocolError):
    def __init__(self, declared: int, actual: int):
        super().__init__(f"Content-Length {declared} but {actual} blob bytes")
        self.declared = declared
        self.actual = actual


# --- domain errors ----------------------------------------------------------


class RangeError(LabError, ValueError):
    pass


class ProvisioningError(LabError, ValueError):
    pass


class ConfigError(LabError):
    def __init__(self, message: str, line: Optional[int] = None, source: str = ""):
        where = f"{source}:{line}: " if line is not None else ""
        super().__init__(f"{where}{message}")
        self.line = line
        self.source = source


class NetworkError(LabError, OSError):
    pass


# --- portal errors ----------------------------------------------------------


class PortalError(LabError):
    status = 400


class AuthFailed(PortalError):
    status = 401


class SessionRequired(PortalError):
    status = 401


class NotFound(PortalError):
    status = 404


class Unsupported(PortalError):
    status = 501
