"""
Simulated clock and the two wire renderings of a timestamp.

`*HQ` frames split a timestamp into HHMMSS and DDMMYY tokens, yy frames carry
one YYMMDDHHMMSS string. Both use two-digit years, read as 2000-2099.
"""

import time
from datetime import date, datetime, time as dtime, timedelta, timezone
from typing import Optional

from gpslab.exceptions import MalformedFrame

# Type alias used across schemas: a timezone-aware UTC datetime, 1 s resolution.
SimTimestamp = datetime


def parse_iso(value: str) -> datetime:
    """Parse an ISO-8601 instant; a trailing Z and naive values are read as UTC."""
    if value.endswith("Z"):
        value = value[:-1] + "+00:00"
    parsed = datetime.fromisoformat(value)
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return parsed.astimezone(timezone.utc).replace(microsecond=0)


def format_iso(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class SimClock:
    """
    Injectable clock. In deterministic mode time only moves on `advance`; in
    live mode `now` follows the wall clock from the moment the clock was built,
    offset so that it starts at `start`.
    """

    def __init__(self, start: Optional[datetime] = None, deterministic: bool = True):
        self.deterministic = deterministic
        self._start = (start or datetime.now(timezone.utc)).replace(microsecond=0)
        self._offset = timedelta(0)
        self._wall_origin = time.monotonic()

    def now(self) -> datetime:
        if self.deterministic:
            return self._start + self._offset
        elapsed = timedelta(seconds=int(time.monotonic() - self._wall_origin))
        return self._start + elapsed

    def advance(self, seconds: int = 1) -> datetime:
        if not self.deterministic:
            raise RuntimeError("a live clock cannot be advanced by hand")
        if seconds < 0:
            raise ValueError("the simulated clock is monotone")
        self._offset += timedelta(seconds=seconds)
        return self.now()

    def advance_to(self, instant: datetime) -> datetime:
        delta = int((instant - self.now()).total_seconds())
        return self.advance(max(delta, 0))

    @property
    def start(self) -> datetime:
        return self._start

    def elapsed_s(self) -> int:
        return int((self.now() - self._start).total_seconds())


# --- *HQ rendering ----------------------------------------------------------


def hq_time(ts: datetime) -> str:
    return ts.strftime("%H%M%S")


def hq_date(ts: datetime) -> str:
    return ts.strftime("%d%m%y")


def parse_hq_time(token: str) -> dtime:
    if len(token) != 6 or not token.isdigit():
        raise MalformedFrame(f"time token {token!r} is not HHMMSS")
    try:
        return dtime(int(token[0:2]), int(token[2:4]), int(token[4:6]))
    except ValueError as ex:
        raise MalformedFrame(f"time token {token!r}: {ex}")


def parse_hq_date(token: str) -> date:
    if len(token) != 6 or not token.isdigit():
        raise MalformedFrame(f"date token {token!r} is not DDMMYY")
    try:
        return date(2000 + int(token[4:6]), int(token[2:4]), int(token[0:2]))
    except ValueError as ex:
        raise MalformedFrame(f"date token {token!r}: {ex}")


def combine_hq(day: date, clock: dtime) -> datetime:
    return datetime.combine(day, clock, tzinfo=timezone.utc)


# --- yy rendering -----------------------------------------------------------


def yy_stamp(ts: datetime) -> str:
    return ts.strftime("%y%m%d%H%M%S")


def parse_yy_stamp(token: str) -> datetime:
    if len(token) != 12 or not token.isdigit():
        raise MalformedFrame(f"datetime {token!r} is not YYMMDDHHMMSS")
    try:
        return datetime(
            2000 + int(token[0:2]),
            int(token[2:4]),
            int(token[4:6]),
            int(token[6:8]),
            int(token[8:10]),
            int(token[10:12]),
            tzinfo=timezone.utc,
        )
    except ValueError as ex:
        raise MalformedFrame(f"datetime {token!r}: {ex}")
