"""
Append-only history of everything the platform received.

On disk one record is one line:

    <ISO-8601 ts> TAB <serial> TAB <kind> TAB <HEX raw> TAB <key=value ...>

Values are percent-encoded so a line never holds a stray TAB, space or
newline. Position fields use the reserved keys lat, lon, alt and valid.
"""

import logging
import threading
from pathlib import Path
from typing import Iterable, Iterator, Optional, TextIO
from urllib.parse import quote, unquote

from gpslab.exceptions import ConfigError, ProtocolError
from gpslab.models.simclock import format_iso, parse_iso
from gpslab.platform.records import rederive
from gpslab.schemas.core import GeoPosition, RecordKind, TrackRecord

logger = logging.getLogger(__name__)

_POSITION_KEYS = ("lat", "lon", "alt", "valid")


def format_record(record: TrackRecord) -> str:
    pairs: list[tuple[str, str]] = []
    if record.position is not None:
        pairs += [
            ("lat", repr(record.position.lat_deg)),
            ("lon", repr(record.position.lon_deg)),
            ("alt", repr(record.position.alt_m)),
            ("valid", "1" if record.position.valid else "0"),
        ]
    pairs += sorted(record.meta.items())
    canonical = " ".join(f"{key}={quote(value, safe='')}" for key, value in pairs)
    columns = [
        format_iso(record.ts),
        record.serial,
        record.kind.value,
        record.raw.hex().upper(),
        canonical,
    ]
    return "\t".join(columns)


def parse_record(line: str) -> TrackRecord:
    parts = line.rstrip("\n").split("\t")
    if len(parts) != 5:
        raise ValueError(f"expected 5 tab-separated columns, got {len(parts)}")
    ts, serial, kind, raw_hex, canonical = parts
    pairs = dict(pair.split("=", 1) for pair in canonical.split(" ") if pair)
    values = {key: unquote(value) for key, value in pairs.items()}

    position = None
    present = [key for key in _POSITION_KEYS if key in values]
    if present and len(present) != len(_POSITION_KEYS):
        missing = ", ".join(key for key in _POSITION_KEYS if key not in values)
        raise ProtocolError(f"position without {missing}: {line.rstrip()!r}")
    if present:
        position = GeoPosition(
            lat_deg=float(values["lat"]),
            lon_deg=float(values["lon"]),
            alt_m=float(values["alt"]),
            valid=values["valid"] == "1",
        )
    meta = {key: value for key, value in values.items() if key not in _POSITION_KEYS}
    return TrackRecord(
        ts=parse_iso(ts),
        serial=serial,
        kind=RecordKind(kind),
        position=position,
        raw=bytes.fromhex(raw_hex),
        meta=meta,
    )


class HistoryStore:
    """
    Records in append order, with a per-serial index and the phone->serial
    index learnt from forwarded texts. Appends are serialized by one lock;
    readers get a snapshot.
    """

    def __init__(self, sink: Optional[TextIO] = None):
        self._lock = threading.Lock()
        self._records: list[TrackRecord] = []
        self._by_serial: dict[str, list[int]] = {}
        self._phones: dict[str, str] = {}
        self._sink = sink

    def append(self, record: TrackRecord) -> TrackRecord:
        with self._lock:
            self._by_serial.setdefault(record.serial, []).append(len(self._records))
            self._records.append(record)
            if record.kind is RecordKind.SMS_FORWARD and "sender" in record.meta:
                self._phones[record.meta["sender"]] = record.serial
            if self._sink is not None:
                self._sink.write(format_record(record) + "\n")
                self._sink.flush()
        logger.debug(
            "Record stored",
            extra={"record.serial": record.serial, "record.kind": record.kind.value},
        )
        return record

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    def __iter__(self) -> Iterator[TrackRecord]:
        return iter(self.records())

    def records(
        self, serial: Optional[str] = None, kind: Optional[RecordKind] = None
    ) -> list[TrackRecord]:
        with self._lock:
            if serial is None:
                selected = list(self._records)
            else:
                selected = [self._records[i] for i in self._by_serial.get(serial, [])]
        if kind is not None:
            selected = [record for record in selected if record.kind is kind]
        return selected

    def serials(self) -> list[str]:
        with self._lock:
            return list(self._by_serial)

    def knows(self, serial: str) -> bool:
        with self._lock:
            return serial in self._by_serial

    def latest_position(self, serial: str) -> Optional[TrackRecord]:
        """Newest POSITION by receive time; ties go to the later append."""
        positions = self.records(serial, RecordKind.POSITION)
        if not positions:
            return None
        return max(enumerate(positions), key=lambda item: (item[1].ts, item[0]))[1]

    def serial_for_phone(self, phone: str) -> Optional[str]:
        with self._lock:
            return self._phones.get(phone)

    @property
    def phone_index(self) -> dict[str, str]:
        with self._lock:
            return dict(self._phones)

    def verify_integrity(self) -> list[str]:
        """Records whose raw bytes no longer decode to the stored fields."""
        problems = []
        for index, record in enumerate(self.records()):
            try:
                rebuilt = rederive(record)
            except ProtocolError as ex:
                problems.append(f"record {index}: raw bytes do not parse: {ex}")
                continue
            if rebuilt != record:
                problems.append(f"record {index}: stored fields differ from raw bytes")
        return problems

    def dump(self, out: TextIO, serial: Optional[str] = None) -> int:
        records = self.records(serial)
        for record in records:
            out.write(format_record(record) + "\n")
        return len(records)

    def extend(self, records: Iterable[TrackRecord]) -> None:
        for record in records:
            self.append(record)

    @classmethod
    def load(cls, path: str | Path) -> "HistoryStore":
        store = cls()
        with open(path, encoding="ascii") as handle:
            for line_no, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    store.append(parse_record(line))
                except ValueError as ex:
                    raise ConfigError(str(ex), line_no, str(path))
        return store
