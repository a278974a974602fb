"""
Predicates for `assert` steps.

Every assert key is either a filter (it narrows what is looked at) or an
expectation. An expectation `k=v` wants the observed value of k rendered as
v; `min_k=n` and `max_k=n` bound a numeric value.
"""

from datetime import datetime, timedelta
from typing import Any, Iterable, Optional

from gpslab.emulator.state import Outbound
from gpslab.models.geo import MINUTE_QUANTUM_DEG
from gpslab.schemas.core import RecordKind, SmsMessage, TrackRecord

RECORD_FILTERS = {"serial", "kind", "after", "before"}
META_PREFIX = "meta."
POSITION_KEYS = {"lat", "lon", "tol"}


def render(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def _number(text: str) -> Optional[float]:
    try:
        return float(text)
    except (TypeError, ValueError):
        return None


def check_values(observed: dict[str, Any], expected: dict[str, str]) -> list[str]:
    """Failures, one line each; empty when every expectation holds."""
    failures = []
    for key, want in expected.items():
        bound = key[:4] if key[:4] in ("min_", "max_") else ""
        name = key[len(bound) :]
        if name not in observed:
            failures.append(f"nothing observed for {name}")
            continue
        got = observed[name]
        if bound:
            got_n, want_n = _number(render(got)), _number(want)
            if got_n is None or want_n is None:
                failures.append(f"{key}: {render(got)!r} or {want!r} is not a number")
            elif bound == "min_" and got_n < want_n:
                failures.append(f"{name} is {render(got)}, wanted at least {want}")
            elif bound == "max_" and got_n > want_n:
                failures.append(f"{name} is {render(got)}, wanted at most {want}")
        elif render(got) != want:
            failures.append(f"{name} is {render(got)!r}, wanted {want!r}")
    return failures


def _window(ts: datetime, start: datetime, params: dict[str, str]) -> bool:
    if "after" in params and ts <= start + timedelta(seconds=int(params["after"])):
        return False
    if "before" in params and ts > start + timedelta(seconds=int(params["before"])):
        return False
    return True


def select_records(
    records: Iterable[TrackRecord], params: dict[str, str], start: datetime
) -> list[TrackRecord]:
    meta = {
        key[len(META_PREFIX) :]: value
        for key, value in params.items()
        if key.startswith(META_PREFIX)
    }
    kind = RecordKind(params["kind"]) if "kind" in params else None
    return [
        record
        for record in records
        if ("serial" not in params or record.serial == params["serial"])
        and (kind is None or record.kind is kind)
        and _window(record.ts, start, params)
        and all(record.meta.get(key) == value for key, value in meta.items())
    ]


def check_position(selected: list[TrackRecord], params: dict[str, str]) -> list[str]:
    """lat/lon of the newest selected record, within `tol` degrees."""
    if not {"lat", "lon"} & set(params):
        return []
    with_position = [record for record in selected if record.position is not None]
    if not with_position:
        return ["no selected record carries a position"]
    position = max(enumerate(with_position), key=lambda item: (item[1].ts, item[0]))[1].position
    tol = float(params.get("tol", MINUTE_QUANTUM_DEG))
    failures = []
    for key, got in (("lat", position.lat_deg), ("lon", position.lon_deg)):
        if key in params and abs(got - float(params[key])) > tol:
            failures.append(f"{key} is {got:.7f}, wanted {params[key]} within {tol:g}")
    return failures


def select_frames(
    frames: Iterable[Outbound], params: dict[str, str], start: datetime, to: Optional[str]
) -> list[Outbound]:
    kind = RecordKind(params["kind"]) if "kind" in params else None
    return [
        frame
        for frame in frames
        if (to is None or str(frame.destination) == to)
        and (kind is None or frame.kind is kind)
        and _window(frame.ts, start, params)
    ]


def select_messages(messages: Iterable[SmsMessage], params: dict[str, str]) -> list[SmsMessage]:
    return [
        msg
        for msg in messages
        if ("from" not in params or msg.sender == params["from"])
        and ("contains" not in params or params["contains"] in msg.body)
    ]


def expectations(params: dict[str, str], consumed: set[str]) -> dict[str, str]:
    """Whatever is left once the store and the filters are taken out."""
    return {
        key: value
        for key, value in params.items()
        if key != "store" and key not in consumed and not key.startswith(META_PREFIX)
    }


def flatten(value: Any, prefix: str = "") -> dict[str, Any]:
    """Nested documents as dotted keys; lists turn into their length."""
    if isinstance(value, dict):
        flat: dict[str, Any] = {}
        for key, inner in value.items():
            flat.update(flatten(inner, f"{prefix}{key}."))
        return flat
    key = prefix[:-1]
    if isinstance(value, (list, tuple)):
        return {key: len(value)}
    return {key: value}
