"""
Scenario runner.

Everything runs in one process on one simulated timeline: platforms and
relays are bound on a LoopbackNetwork, trackers share one SmsBus, and the
HTTP surfaces are called in-process. Before each step the clock is moved to
the step's time one second at a time, every started tracker ticking once per
second in start order.
"""

import logging
import random
from pathlib import Path
from typing import Any, Optional

import ujson
from fastapi.testclient import TestClient
from pydantic import BaseModel, ValidationError, computed_field

from gpslab.attacks.enumerate import Verdict, enumerate_numbers, number_range
from gpslab.attacks.inject import inject_sms, reg_redirect
from gpslab.attacks.relay import (
    Relay,
    RelayConnection,
    RelaySpec,
    Transform,
    TransformKind,
    Transport,
)
from gpslab.attacks.replay import envelope, parse_result
from gpslab.attacks.spoof import spoof_position
from gpslab.config import API_PATH, DEFAULT_SEED, SIM_START
from gpslab.emulator.device import TrackerEmulator
from gpslab.exceptions import LabError, ProtocolError
from gpslab.lab import checks
from gpslab.lab.loopback import LoopbackNetwork
from gpslab.lab.scenario import Action, Scenario, Step, StoreKind, Suite, load
from gpslab.main import get_application
from gpslab.models.simclock import SimClock, format_iso, parse_iso
from gpslab.platform.service import Platform
from gpslab.platform.store import HistoryStore
from gpslab.schemas.core import Endpoint, GeoPosition, ProtocolFamily
from gpslab.schemas.fleet import PlatformPorts
from gpslab.sms.bus import Mailbox, SmsBus

logger = logging.getLogger(__name__)

DEFAULT_PLATFORM = "platform"
TRACKER_PREFIX = "tracker:"
RELAY_PREFIX = "relay:"
_LISTENERS = ("hq", "yy", "agps")
# errors a step may raise on purpose
STEP_ERRORS = (LabError, ValueError, KeyError)
RELAY_STATS = ("bytes_up", "bytes_down", "connections", "rewritten", "transform_failures")
PLATFORM_STATS = ("records", "frames", "decode_errors", "agps_logins")


class StepFailed(Exception):
    pass


class Outcome(BaseModel):
    line: int
    at: int
    step: str
    passed: bool
    detail: str = ""


class ScenarioReport(BaseModel):
    name: str
    source: str
    outcomes: list[Outcome] = []

    @computed_field
    @property
    def passed(self) -> bool:
        return all(outcome.passed for outcome in self.outcomes)

    @property
    def checks(self) -> str:
        good = sum(outcome.passed for outcome in self.outcomes)
        return f"{good}/{len(self.outcomes)}"

    def render(self) -> str:
        lines = [f"scenario {self.name} ({self.source})"]
        for outcome in self.outcomes:
            verdict = "PASS" if outcome.passed else "FAIL"
            line = f"  {verdict}  line {outcome.line:<3} {outcome.step}"
            if outcome.detail:
                line += f"\n        {outcome.detail}"
            lines.append(line)
        lines.append(f"{self.name}: {'PASS' if self.passed else 'FAIL'} ({self.checks} checks)")
        return "\n".join(lines)

    def to_json(self) -> str:
        return ujson.dumps(self.model_dump(), sort_keys=True, escape_forward_slashes=False)


class SuiteReport(BaseModel):
    name: str
    reports: list[ScenarioReport]

    @computed_field
    @property
    def passed(self) -> bool:
        return all(report.passed for report in self.reports)

    def render(self) -> str:
        width = max([len(report.name) for report in self.reports] + [8])
        lines = [f"{'scenario':<{width}}  result  checks"]
        for report in self.reports:
            verdict = "PASS" if report.passed else "FAIL"
            lines.append(f"{report.name:<{width}}  {verdict:<6}  {report.checks}")
        lines.append(f"suite {self.name}: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


class Result(BaseModel):
    """What a step left behind under `as=<var>`."""

    raw: Any = None
    flat: dict[str, Any] = {}


class ScenarioRunner:
    def __init__(
        self,
        scenario: Scenario,
        seed: int = DEFAULT_SEED,
        out_dir: Optional[Path] = None,
    ):
        self.scenario = scenario
        self.fleet = scenario.fleet
        self.seed = seed
        self.out_dir = out_dir
        self.clock = SimClock(parse_iso(SIM_START), deterministic=True)
        self.rng = random.Random(seed)
        self.network = LoopbackNetwork()
        self.bus = SmsBus()
        self.platforms: dict[str, Platform] = {}
        self.clients: dict[str, TestClient] = {}
        self.trackers: dict[str, TrackerEmulator] = {}
        self.relays: dict[str, Relay] = {}
        self.mailboxes: dict[str, Mailbox] = {}
        self.results: dict[str, Result] = {}
        self.report = ScenarioReport(name=scenario.name, source=scenario.source)

    # --- driving -------------------------------------------------------------

    def run(self) -> ScenarioReport:
        logger.info(
            "Scenario started",
            extra={"scenario": self.scenario.name, "seed": self.seed},
        )
        try:
            for step in self.scenario.steps:
                self._advance_to(step.at)
                self._execute(step)
        finally:
            self._shutdown()
        if self.out_dir is not None:
            self.write_outputs(self.out_dir)
        logger.info(
            "Scenario finished",
            extra={"scenario": self.scenario.name, "passed": self.report.passed},
        )
        return self.report

    def _advance_to(self, at: int) -> None:
        while self.clock.elapsed_s() < at:
            self.clock.advance(1)
            for tracker in self.trackers.values():
                tracker.step()

    def _execute(self, step: Step) -> None:
        if step.action is Action.ASSERT:
            failures = self._assert(step)
            self._outcome(step, not failures, "; ".join(failures))
            return

        expect_error = step.params.get("expect") == "error"
        try:
            result = getattr(self, f"_do_{step.action.value}")(step.params)
        except STEP_ERRORS as ex:
            detail = f"{type(ex).__name__}: {ex}"
            if not expect_error:
                logger.warning(f"Scenario step failed: {detail}", extra={"scenario.line": step.line})
            self._keep(step, Result(raw=detail, flat={"error": type(ex).__name__}))
            self._outcome(step, expect_error, detail)
            return

        if result is not None:
            self._keep(step, result)
        if expect_error:
            self._outcome(step, False, "step was expected to fail but succeeded")

    def _keep(self, step: Step, result: Result) -> None:
        if "as" in step.params:
            self.results[step.params["as"]] = result

    def _outcome(self, step: Step, passed: bool, detail: str = "") -> None:
        self.report.outcomes.append(
            Outcome(line=step.line, at=step.at, step=step.describe(), passed=passed, detail=detail)
        )

    def _shutdown(self) -> None:
        for tracker in self.trackers.values():
            tracker.stop()
        for client in self.clients.values():
            client.close()
        self.network.close()

    # --- naming --------------------------------------------------------------

    def _platform(self, name: Optional[str]) -> Platform:
        if name is None:
            if not self.platforms:
                raise LabError("no platform has been started")
            return next(iter(self.platforms.values()))
        if name not in self.platforms:
            raise LabError(f"platform {name!r} is not started")
        return self.platforms[name]

    def _tracker(self, serial: str) -> TrackerEmulator:
        if serial not in self.trackers:
            raise LabError(f"tracker {serial!r} is not started")
        return self.trackers[serial]

    def resolve(self, text: str) -> Endpoint:
        """`relay:<name>`, `<platform>:<hq|yy|agps>` or a literal host:port."""
        if text.startswith(RELAY_PREFIX):
            name = text[len(RELAY_PREFIX) :]
            if name not in self.relays:
                raise LabError(f"relay {name!r} is not running")
            return self.relays[name].spec.listen
        name, _, listener = text.rpartition(":")
        if name in self.platforms and listener in _LISTENERS:
            ports = self.platforms[name].ports
            return Endpoint(host=ports.host, port=getattr(ports, f"{listener}_port"))
        return Endpoint.parse(text)

    def phone(self, text: str) -> str:
        if text.startswith(TRACKER_PREFIX):
            return self.fleet.device(text[len(TRACKER_PREFIX) :]).identity.phone
        return text

    def _mailbox(self, phone: str) -> Optional[Mailbox]:
        """A mailbox for a phone no tracker owns, so replies have somewhere to land."""
        if phone in self.mailboxes:
            return self.mailboxes[phone]
        if self.bus.is_registered(phone):
            return None
        self.mailboxes[phone] = Mailbox(phone).attach(self.bus)
        return self.mailboxes[phone]

    # --- actions -------------------------------------------------------------

    def _do_start_platform(self, params: dict[str, str]) -> Result:
        name = params.get("name", DEFAULT_PLATFORM)
        if name in self.platforms:
            raise LabError(f"platform {name!r} already started")
        overrides = {key: params[key] for key in PlatformPorts.model_fields if key in params}
        ports = PlatformPorts(**{**self.fleet.platform.model_dump(), **overrides})
        platform = Platform(self.fleet, name, self.clock, HistoryStore(), ports)
        for listener in _LISTENERS:
            endpoint = Endpoint(host=ports.host, port=getattr(ports, f"{listener}_port"))
            self.network.bind(endpoint, getattr(platform, f"{listener}_connection"))
        self.platforms[name] = platform
        self.clients[name] = TestClient(get_application(platform))
        return Result(raw=name, flat=ports.as_dict())

    def _do_start_tracker(self, params: dict[str, str]) -> Result:
        platform = self._platform(params.get("platform"))
        serials = self.fleet.serials if params["serial"] == "all" else [params["serial"]]
        for serial in serials:
            if serial in self.trackers:
                raise LabError(f"tracker {serial!r} already started")
            device = self.fleet.device(serial)
            family = "hq" if device.protocol_family is ProtocolFamily.HQ else "yy"
            server = self.resolve(params.get("server", f"{platform.name}:{family}"))
            agps = self.resolve(params.get("agps_server", f"{platform.name}:agps"))
            tracker = TrackerEmulator(device, server, self.clock, self.network, self.bus, agps)
            self.trackers[serial] = tracker.start()
            platform.attach(serial, tracker)
        return Result(raw=serials, flat={"started": len(serials)})

    def _do_tick(self, params: dict[str, str]) -> None:
        return None

    def _do_sms(self, params: dict[str, str]) -> Result:
        sender, to = self.phone(params["from"]), self.phone(params["to"])
        self._mailbox(sender)
        delivery = inject_sms(self.bus, sender, to, params["body"])
        return Result(raw=delivery.value, flat={"delivery": delivery.value})

    def _do_spoof(self, params: dict[str, str]) -> Result:
        target = self.resolve(params.get("target", f"{self._platform(None).name}:hq"))
        position = GeoPosition(
            lat_deg=float(params["lat"]),
            lon_deg=float(params["lon"]),
            alt_m=float(params.get("alt", 0.0)),
        )
        frame = spoof_position(target, params["serial"], position, self.clock.now(), self.network)
        return Result(raw=frame, flat={"frame": frame.decode("ascii")})

    def _do_relay(self, params: dict[str, str]) -> Result:
        name = params["name"]
        if name in self.relays:
            raise LabError(f"relay {name!r} already running")
        kind = TransformKind(params.get("transform", "identity"))
        if "dlat" in params or "dlon" in params:
            kind = TransformKind.POSITION_OFFSET
        transform = Transform(
            kind=kind,
            dlat=float(params.get("dlat", 0.0)),
            dlon=float(params.get("dlon", 0.0)),
        )
        spec = RelaySpec(
            name=name,
            listen=Endpoint.parse(params["listen"]),
            upstream=self.resolve(params["upstream"]),
            transport=Transport(params.get("transport", "TCP").upper()),
            transform=transform,
        )
        relay = Relay(spec, self.clock)
        self.network.bind(
            spec.listen, lambda: RelayConnection(relay, self.network.connect(spec.upstream))
        )
        self.relays[name] = relay
        return Result(raw=name, flat={"listen": str(spec.listen), "upstream": str(spec.upstream)})

    def _do_reg_redirect(self, params: dict[str, str]) -> Result:
        tracker = self._tracker(params["serial"])
        master = params.get("master") or tracker.state.identity.master_phone
        if master is None:
            raise LabError(f"tracker {tracker.serial} has no master number to impersonate")
        target = self.resolve(params["target"])
        if "port" in params:
            target = Endpoint(host=target.host, port=int(params["port"]))
        self._mailbox(master)
        delivery = reg_redirect(self.bus, master, tracker.phone, target)
        return Result(raw=delivery.value, flat={"delivery": delivery.value, "target": str(target)})

    def _do_agps(self, params: dict[str, str]) -> Result:
        response = self._tracker(params["serial"]).run_agps()
        if response is None:
            return Result(raw=None, flat={"ok": False})
        return Result(
            raw=response.banner,
            flat={"ok": True, "banner": response.banner, "content_length": response.content_length},
        )

    def _do_enum(self, params: dict[str, str]) -> Result:
        numbers = number_range(
            params["prefix"],
            int(params["start"]),
            int(params["count"]),
            int(params.get("width", 0)),
        )
        source = self.phone(params["source"])
        known = self._platform(params["platform"]).store if "platform" in params else None
        report = enumerate_numbers(
            self.bus, numbers, source, self._mailbox(source), known, self.rng
        )
        verdicts = [ping.verdict for ping in report.pings]
        return Result(
            raw=report,
            flat={
                "pings": len(report.pings),
                "hits": len(report.hits),
                "hit_phones": ",".join(ping.phone for ping in report.hits),
                "hit_serials": ",".join(ping.serial or "?" for ping in report.hits),
                "silent": verdicts.count(Verdict.SILENT),
                "not_delivered": verdicts.count(Verdict.NOT_DELIVERED),
            },
        )

    def _device_id(self, platform: Platform, params: dict[str, str]) -> int:
        if "device_id" in params:
            return int(params["device_id"])
        serial = params.get("serial")
        for device_id, known in platform.device_ids.items():
            if known == serial:
                return device_id
        raise LabError(f"no device id for serial {serial!r}")

    def _do_api_call(self, params: dict[str, str]) -> Result:
        platform = self._platform(params.get("platform"))
        client = self.clients[platform.name]
        operation = params["operation"]
        device_id = self._device_id(platform, params)
        if params.get("mode", "soap") == "soap":
            response = client.post(
                API_PATH,
                content=envelope(operation, device_id),
                headers={"Content-Type": "text/xml; charset=utf-8"},
            )
        else:
            response = client.get(f"{API_PATH}/{operation}", params={"DeviceID": device_id})
        payload: dict = {}
        if response.status_code == 200:
            try:
                payload = parse_result(response.content)
            except ProtocolError as ex:
                raise LabError(f"unreadable API answer: {ex}")
        return Result(raw=payload, flat={"http_status": response.status_code, **payload})

    def _session_header(self, params: dict[str, str]) -> dict[str, str]:
        if "session" not in params:
            return {}
        result = self.results.get(params["session"])
        session_id = result.flat.get("session_id") if result is not None else None
        # an unknown var is sent verbatim, which lets a scenario try forged ids
        return {"X-Session": str(session_id or params["session"])}

    def _do_portal_call(self, params: dict[str, str]) -> Result:
        platform = self._platform(params.get("platform"))
        client = self.clients[platform.name]
        client.cookies.clear()
        headers = self._session_header(params)
        op = params["op"]
        if op == "login":
            response = client.post(
                "/login", json={"user": params.get("user"), "password": params.get("password")}
            )
        elif op == "history":
            response = client.get(
                "/history", params={"serial": params.get("serial")}, headers=headers
            )
        elif op == "geofence":
            response = client.post(
                "/geofence",
                json={
                    "serial": params.get("serial"),
                    "lat": float(params.get("lat", 0.0)),
                    "lon": float(params.get("lon", 0.0)),
                    "radius_m": float(params.get("radius", 100.0)),
                    "action": params.get("action", "ALERT"),
                },
            )
        elif op == "engine":
            response = client.post(
                "/engine",
                json={"serial": params.get("serial"), "action": params.get("action", "stop")},
            )
        elif op == "password":
            response = client.post(
                "/password",
                json={"old_password": params.get("old"), "new_password": params.get("new")},
                headers=headers,
            )
        else:
            raise LabError(f"unknown portal op {op!r}")

        try:
            body = ujson.loads(response.text)
        except ValueError:
            body = {"text": response.text}
        raw = body.get("records", body) if isinstance(body, dict) else body
        return Result(raw=raw, flat={"status": response.status_code, **checks.flatten(body)})

    # --- asserts -------------------------------------------------------------

    def _assert(self, step: Step) -> list[str]:
        store = step.store
        params = step.params
        try:
            handler = getattr(self, f"_check_{store.kind.value}")
            return handler(store.name, params)
        except STEP_ERRORS as ex:
            return [f"{type(ex).__name__}: {ex}"]

    def _check_records(self, store: HistoryStore, params: dict[str, str]) -> list[str]:
        selected = checks.select_records(store, params, self.clock.start)
        observed: dict[str, Any] = {"count": len(selected)}
        if "integrity" in params:
            observed["integrity"] = "ok" if not store.verify_integrity() else "broken"
        consumed = checks.RECORD_FILTERS | checks.POSITION_KEYS
        failures = checks.check_values(observed, checks.expectations(params, consumed))
        return failures + checks.check_position(selected, params)

    def _check_history(self, name: str, params: dict[str, str]) -> list[str]:
        store = self._platform(name).store
        failures = []
        if "phone" in params:
            failures += checks.check_values(
                {"phone_serial": store.serial_for_phone(params["phone"])},
                {"phone_serial": params.get("phone_serial", "none")},
            )
            params = {k: v for k, v in params.items() if k not in ("phone", "phone_serial")}
        return failures + self._check_records(store, params)

    def _check_relay(self, name: str, params: dict[str, str]) -> list[str]:
        if name not in self.relays:
            raise LabError(f"relay {name!r} is not running")
        relay = self.relays[name]
        stats = {k[5:]: v for k, v in params.items() if k.startswith("stat.")}
        observed = {**dict.fromkeys(RELAY_STATS, 0), **relay.stats}
        failures = checks.check_values(observed, stats) if stats else []
        rest = {k: v for k, v in params.items() if not k.startswith("stat.")}
        return failures + self._check_records(relay.transcript, rest)

    def _check_tracker(self, name: str, params: dict[str, str]) -> list[str]:
        tracker = self._tracker(name)
        state = tracker.state
        frames = checks.select_frames(
            tracker.transcript, params, self.clock.start, params.get("frames_to")
        )
        observed = {
            "engine_on": state.engine_on,
            "server": str(state.server_addr),
            "geofences": len(state.geofences),
            "master": state.identity.master_phone,
            "reported_serial": state.serial,
            "reports": state.reports_sent,
            "dropped": tracker.dropped,
            "replies": tracker.replies_sent,
            "count": len(frames),
        }
        consumed = {"frames_to", "kind", "after", "before"}
        return checks.check_values(observed, checks.expectations(params, consumed))

    def _check_mailbox(self, name: str, params: dict[str, str]) -> list[str]:
        phone = self.phone(name)
        mailbox = self.mailboxes.get(phone)
        messages = mailbox.messages if mailbox is not None else []
        if "from" in params:
            params = {**params, "from": self.phone(params["from"])}
        selected = checks.select_messages(messages, params)
        return checks.check_values(
            {"count": len(selected)}, checks.expectations(params, {"from", "contains"})
        )

    def _check_result(self, name: str, params: dict[str, str]) -> list[str]:
        if name not in self.results:
            raise LabError(f"no result named {name!r}")
        result = self.results[name]
        failures = []
        if "same_as" in params:
            other = self.results.get(params["same_as"])
            if other is None or other.raw != result.raw:
                failures.append(f"{name} differs from {params['same_as']}")
        return failures + checks.check_values(
            result.flat, checks.expectations(params, {"same_as"})
        )

    def _check_stats(self, name: str, params: dict[str, str]) -> list[str]:
        observed = {**dict.fromkeys(PLATFORM_STATS, 0), **self._platform(name).stats}
        return checks.check_values(observed, checks.expectations(params, set()))

    # --- outputs -------------------------------------------------------------

    def transcript_lines(self) -> list[str]:
        """Every frame any tracker sent, in time order, trackers in start order."""
        frames = [frame for tracker in self.trackers.values() for frame in tracker.transcript]
        frames.sort(key=lambda frame: frame.ts)
        return [
            "\t".join(
                (
                    format_iso(frame.ts),
                    frame.serial,
                    frame.kind.value,
                    str(frame.destination),
                    frame.data.hex().upper(),
                )
            )
            for frame in frames
        ]

    def write_outputs(self, out_dir: Path) -> list[Path]:
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = self.scenario.name
        written = []
        for name, platform in self.platforms.items():
            path = out_dir / f"{stem}.history.{name}.tsv"
            with open(path, "w", encoding="ascii", newline="\n") as handle:
                platform.store.dump(handle)
            written.append(path)
        for name, relay in self.relays.items():
            path = out_dir / f"{stem}.relay.{name}.tsv"
            with open(path, "w", encoding="ascii", newline="\n") as handle:
                relay.transcript.dump(handle)
            written.append(path)
        path = out_dir / f"{stem}.transcript.tsv"
        path.write_text("".join(line + "\n" for line in self.transcript_lines()), encoding="ascii")
        written.append(path)
        path = out_dir / f"{stem}.report.txt"
        path.write_text(self.report.render() + "\n", encoding="ascii")
        written.append(path)
        return written


def run_scenario(
    scenario: Scenario, seed: int = DEFAULT_SEED, out_dir: Optional[Path] = None
) -> ScenarioReport:
    return ScenarioRunner(scenario, seed, out_dir).run()


def run_suite(suite: Suite, seed: int = DEFAULT_SEED, out_dir: Optional[Path] = None) -> SuiteReport:
    reports = []
    for path in suite.scenarios:
        scenario = load(path)
        if not isinstance(scenario, Scenario):
            raise LabError(f"{path} is a suite; suites do not nest")
        reports.append(run_scenario(scenario, seed, out_dir))
    return SuiteReport(name=suite.name, reports=reports)
