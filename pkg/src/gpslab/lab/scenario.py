"""
Reader for scenario files.

    name redirect_mitm
    fleet ../fleets/lab.fleet
    at 0 start_platform name=vendor
    at 0 start_tracker serial=1700061234 platform=vendor
    at 12 reg_redirect serial=1700061234 target=relay:mitm
    at 60 assert store=history:vendor serial=1700061234 after=12 count=0

A scenario either names a fleet file or carries `platform`/`device`
stanzas inline. A suite file lists scenarios to run in order:

    suite all
    scenario redirect_mitm.scn
"""

import logging
from enum import Enum
from pathlib import Path
from typing import Optional, Union

from pydantic import BaseModel, ConfigDict

from gpslab.exceptions import ConfigError
from gpslab.models.fleetfile import FleetBuilder, load_fleet, split_line, split_pairs
from gpslab.schemas.fleet import FleetConfig

logger = logging.getLogger(__name__)


class Action(str, Enum):
    START_PLATFORM = "start_platform"
    START_TRACKER = "start_tracker"
    TICK = "tick"
    SMS = "sms"
    SPOOF = "spoof"
    RELAY = "relay"
    REG_REDIRECT = "reg_redirect"
    AGPS = "agps"
    ENUM = "enum"
    API_CALL = "api_call"
    PORTAL_CALL = "portal_call"
    ASSERT = "assert"


class StoreKind(str, Enum):
    HISTORY = "history"
    TRACKER = "tracker"
    MAILBOX = "mailbox"
    RELAY = "relay"
    RESULT = "result"
    STATS = "stats"


# every action also takes as=<var> and expect=ok|error
_COMMON = {"as", "expect"}
# action -> (required keys, optional keys)
ACTION_KEYS: dict[Action, tuple[set[str], set[str]]] = {
    Action.START_PLATFORM: (
        set(),
        {"name", "host", "hq_port", "yy_port", "agps_port", "http_port", "sms_port"},
    ),
    Action.START_TRACKER: ({"serial"}, {"platform", "server", "agps_server"}),
    Action.TICK: (set(), set()),
    Action.SMS: ({"from", "to", "body"}, set()),
    Action.SPOOF: ({"serial", "lat", "lon"}, {"target", "alt"}),
    Action.RELAY: (
        {"name", "listen", "upstream"},
        {"transport", "transform", "dlat", "dlon"},
    ),
    Action.REG_REDIRECT: ({"serial", "target"}, {"master", "port"}),
    Action.AGPS: ({"serial"}, set()),
    Action.ENUM: ({"prefix", "start", "count", "source"}, {"width", "platform"}),
    Action.API_CALL: (
        {"operation"},
        {"platform", "device_id", "serial", "mode"},
    ),
    Action.PORTAL_CALL: (
        {"op"},
        {
            "platform",
            "user",
            "password",
            "session",
            "serial",
            "lat",
            "lon",
            "radius",
            "action",
            "old",
            "new",
        },
    ),
}


class StoreRef(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: StoreKind
    name: str

    def __str__(self) -> str:
        return f"{self.kind.value}:{self.name}"


class Step(BaseModel):
    model_config = ConfigDict(frozen=True)

    line: int
    at: int
    action: Action
    params: dict[str, str]

    @property
    def store(self) -> Optional[StoreRef]:
        if self.action is not Action.ASSERT:
            return None
        kind, _, name = self.params["store"].partition(":")
        return StoreRef(kind=StoreKind(kind), name=name)

    def describe(self) -> str:
        args = " ".join(f"{key}={value}" for key, value in self.params.items())
        return f"at {self.at} {self.action.value} {args}".rstrip()


class Scenario(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    source: str
    fleet: FleetConfig
    steps: list[Step]


class Suite(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    source: str
    scenarios: list[Path]


def _store_ref(value: str, line_no: int, source: str) -> None:
    kind, sep, name = value.partition(":")
    if not sep or not name:
        raise ConfigError(f"store {value!r} must be <kind>:<name>", line_no, source)
    try:
        StoreKind(kind)
    except ValueError:
        kinds = ", ".join(k.value for k in StoreKind)
        raise ConfigError(f"unknown store kind {kind!r} (one of {kinds})", line_no, source)


def _step(tokens: list[str], line_no: int, source: str, last_at: int) -> Step:
    if len(tokens) < 3:
        raise ConfigError("expected 'at <t> <action> key=value ...'", line_no, source)
    if not tokens[1].isdigit():
        raise ConfigError(f"time {tokens[1]!r} must be whole seconds", line_no, source)
    at = int(tokens[1])
    if at < last_at:
        raise ConfigError(f"time {at} goes back from {last_at}", line_no, source)
    try:
        action = Action(tokens[2])
    except ValueError:
        raise ConfigError(f"unknown action {tokens[2]!r}", line_no, source)

    params = split_pairs(tokens[3:], line_no, source)
    if action is Action.ASSERT:
        if "store" not in params:
            raise ConfigError("assert must name its store=", line_no, source)
        _store_ref(params["store"], line_no, source)
    else:
        required, optional = ACTION_KEYS[action]
        missing = required - set(params)
        if missing:
            raise ConfigError(f"{action.value} needs {sorted(missing)}", line_no, source)
        unknown = set(params) - required - optional - _COMMON
        if unknown:
            raise ConfigError(f"{action.value} does not take {sorted(unknown)}", line_no, source)
    if params.get("expect", "ok") not in ("ok", "error"):
        raise ConfigError("expect must be ok or error", line_no, source)
    return Step(line=line_no, at=at, action=action, params=params)


def parse_scenario(text: str, source: str = "<scenario>", base: Optional[Path] = None) -> Scenario:
    base = base or Path(".")
    name: Optional[str] = None
    fleet: Optional[FleetConfig] = None
    inline = FleetBuilder(source)
    steps: list[Step] = []

    for line_no, line in enumerate(text.splitlines(), start=1):
        tokens = split_line(line, line_no, source)
        if not tokens:
            continue
        keyword = tokens[0]
        if keyword == "name":
            if name is not None or len(tokens) != 2:
                raise ConfigError("exactly one 'name <identifier>' line", line_no, source)
            name = tokens[1]
        elif keyword == "fleet":
            if fleet is not None or len(tokens) != 2:
                raise ConfigError("exactly one 'fleet <path>' line", line_no, source)
            try:
                fleet = load_fleet(base / tokens[1])
            except ConfigError as ex:
                raise ConfigError(f"in fleet file: {ex}", line_no, source)
        elif keyword in ("platform", "device"):
            inline.feed(keyword, tokens[1:], line_no)
        elif keyword == "at":
            steps.append(_step(tokens, line_no, source, steps[-1].at if steps else 0))
        else:
            raise ConfigError(f"unknown keyword {keyword!r}", line_no, source)

    if name is None:
        raise ConfigError("scenario has no name", None, source)
    if fleet is not None and not inline.empty:
        raise ConfigError("use either a fleet file or inline stanzas, not both", None, source)
    if fleet is None:
        fleet = inline.build()
    return Scenario(name=name, source=source, fleet=fleet, steps=steps)


def parse_suite(text: str, source: str = "<suite>", base: Optional[Path] = None) -> Suite:
    base = base or Path(".")
    name: Optional[str] = None
    scenarios: list[Path] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        tokens = split_line(line, line_no, source)
        if not tokens:
            continue
        if tokens[0] == "suite" and len(tokens) == 2 and name is None:
            name = tokens[1]
        elif tokens[0] == "scenario" and len(tokens) == 2:
            scenarios.append(base / tokens[1])
        else:
            raise ConfigError("expected 'suite <name>' or 'scenario <path>'", line_no, source)
    if name is None:
        raise ConfigError("suite has no name", None, source)
    return Suite(name=name, source=source, scenarios=scenarios)


def load(path: Union[str, Path]) -> Union[Scenario, Suite]:
    """A scenario or a suite, told apart by the first keyword."""
    path = Path(path)
    try:
        text = path.read_text(encoding="ascii")
    except (OSError, UnicodeDecodeError) as ex:
        raise ConfigError(f"cannot read scenario file: {ex}", None, str(path))
    for line_no, line in enumerate(text.splitlines(), start=1):
        tokens = split_line(line, line_no, str(path))
        if tokens:
            if tokens[0] == "suite":
                return parse_suite(text, str(path), path.parent)
            break
    return parse_scenario(text, str(path), path.parent)
