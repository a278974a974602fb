"""
Coordinate conversions between the decimal degrees used by the API and the
`ddmm.mmmm` / `dddmm.mmmm` fields carried on the `*HQ` wire.

Both directions are fixed-width: latitude fields have two degree digits,
longitude fields three, and minutes always render as `mm.mmmm`.
"""

import logging
import math
import re
from enum import Enum

from gpslab.exceptions import CoordinateError, RangeError

logger = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_000.0
MINUTE_QUANTUM_DEG = 1e-4 / 60


class Axis(str, Enum):
    LAT = "LAT"
    LON = "LON"


_FIELD_PATTERNS = {
    Axis.LAT: re.compile(r"^(\d{2})(\d{2}\.\d{4})$"),
    Axis.LON: re.compile(r"^(\d{3})(\d{2}\.\d{4})$"),
}
_AXIS_LIMIT = {Axis.LAT: 90.0, Axis.LON: 180.0}
_HEMISPHERES = {"N": Axis.LAT, "S": Axis.LAT, "E": Axis.LON, "W": Axis.LON}


def axis_of(hemisphere: str) -> Axis:
    try:
        return _HEMISPHERES[hemisphere]
    except KeyError:
        raise CoordinateError(hemisphere, "hemisphere must be one of N, S, E, W")


def ddmm_to_degrees(field: str, hemisphere: str) -> float:
    """
    Convert a wire coordinate to signed decimal degrees.

    Example:
        ddmm_to_degrees("2240.8116", "N") -> 22.680193...
    """
    axis = axis_of(hemisphere)
    match = _FIELD_PATTERNS[axis].match(field)
    if match is None:
        width = 2 if axis is Axis.LAT else 3
        raise CoordinateError(
            field, f"expected {width} degree digits and mm.mmmm minutes"
        )
    degrees = int(match.group(1))
    minutes = float(match.group(2))
    if minutes >= 60.0:
        raise CoordinateError(field, "minutes must be below 60")

    value = degrees + minutes / 60.0
    if value > _AXIS_LIMIT[axis]:
        raise CoordinateError(field, f"outside the {axis.value} range")
    return -value if hemisphere in ("S", "W") else value


def degrees_to_ddmm(deg: float, axis: Axis) -> tuple[str, str]:
    """Inverse of `ddmm_to_degrees`, rounding minutes to four decimals."""
    axis = Axis(axis)
    limit = _AXIS_LIMIT[axis]
    if not math.isfinite(deg) or abs(deg) > limit:
        raise RangeError(f"{deg!r} is outside the {axis.value} range")

    # copysign keeps a southern or western zero on its own hemisphere
    negative = math.copysign(1.0, deg) < 0
    if axis is Axis.LAT:
        hemisphere = "S" if negative else "N"
    else:
        hemisphere = "W" if negative else "E"

    magnitude = abs(deg)
    whole = int(magnitude)
    minutes = round((magnitude - whole) * 60.0, 4)
    if minutes >= 60.0:
        whole += 1
        minutes = 0.0

    width = 2 if axis is Axis.LAT else 3
    return f"{whole:0{width}d}{minutes:07.4f}", hemisphere


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in meters on a spherical earth."""
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = phi2 - phi1
    dlambda = math.radians(lon2 - lon1)
    a = (
        math.sin(dphi / 2) ** 2
        + math.cos(phi1) * math.cos(phi2) * math.sin(dlambda / 2) ** 2
    )
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))
