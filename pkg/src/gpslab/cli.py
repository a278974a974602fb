"""
`gpslab` command line.

Exit codes: 0 on success, 1 when an assertion or an operation fails, 2 on a
configuration error (including click's own usage errors).
"""

import asyncio
import io
import logging
import random
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Optional

import click
from pydantic import BaseModel, ValidationError

from gpslab import config
from gpslab.attacks.classify import classify_traffic
from gpslab.attacks.enumerate import enumerate_numbers, number_range
from gpslab.attacks.inject import inject_sms
from gpslab.attacks.relay import RelaySpec, Transform, Transport, run_relay
from gpslab.attacks.replay import ApiReplayer
from gpslab.attacks.spoof import spoof_position
from gpslab.emulator.device import TrackerEmulator
from gpslab.emulator.network import TcpNetwork
from gpslab.exceptions import ConfigError, LabError
from gpslab.lab.runner import run_scenario, run_suite
from gpslab.lab.scenario import Scenario, load
from gpslab.logconfig import configure_logging
from gpslab.models.fleetfile import load_fleet
from gpslab.models.simclock import SimClock, parse_iso
from gpslab.platform.listeners import check_bind
from gpslab.platform.runtime import PlatformServer
from gpslab.platform.service import Platform
from gpslab.platform.store import HistoryStore
from gpslab.schemas.core import Endpoint, GeoPosition
from gpslab.sms.bus import Delivery, Mailbox, SmsBus
from gpslab.sms.gateway import RemoteSmsBus, SmsGateway

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


class LabOptions(BaseModel):
    deterministic: bool = False
    seed: int = config.DEFAULT_SEED
    unsafe_bind: bool = config.UNSAFE_BIND

    def clock(self) -> SimClock:
        if self.deterministic:
            return SimClock(parse_iso(config.SIM_START), deterministic=True)
        return SimClock(deterministic=False)


@contextmanager
def lab_errors():
    try:
        yield
    except (ConfigError, ValidationError) as ex:
        click.echo(f"configuration error: {ex}", err=True)
        sys.exit(EXIT_CONFIG)
    except (LabError, OSError) as ex:
        click.echo(f"error: {ex}", err=True)
        sys.exit(EXIT_FAILURE)


def _endpoint(ctx, param, value: Optional[str]) -> Optional[Endpoint]:
    if value is None:
        return None
    try:
        return Endpoint.parse(value)
    except ValueError as ex:
        raise click.BadParameter(str(ex))


def _gateway_option(function):
    return click.option(
        "--gateway",
        default=f"{config.BIND_HOST}:{config.SMS_GATEWAY_PORT}",
        show_default=True,
        callback=_endpoint,
        help="SMS gateway of a running `emulate`.",
    )(function)


@click.group()
@click.option(
    "--deterministic",
    is_flag=True,
    help="Simulated clock from the fixed start instant instead of the wall clock.",
)
@click.option("--seed", type=int, default=config.DEFAULT_SEED, show_default=True)
@click.option(
    "--unsafe-bind",
    is_flag=True,
    default=config.UNSAFE_BIND,
    help="Allow listening on non-loopback addresses.",
)
@click.version_option(config.VERSION, prog_name=config.SERVICE_NAME)
@click.pass_context
def main(ctx: click.Context, deterministic: bool, seed: int, unsafe_bind: bool):
    """Desk-scale GPS tracker security lab."""
    ctx.obj = LabOptions(deterministic=deterministic, seed=seed, unsafe_bind=unsafe_bind)
    configure_logging(
        config.LOGGING_LEVEL,
        config.SERVICE_NAME,
        mode="deterministic" if deterministic else "live",
        seed=seed,
    )


# --- servers and devices -----------------------------------------------------


@main.command()
@click.option("--config", "config_file", required=True, type=click.Path(dir_okay=False))
@click.option("--name", default="platform", show_default=True)
@click.option(
    "--history", default=config.HISTORY_FILE, show_default=True, type=click.Path(dir_okay=False)
)
@click.pass_obj
def serve(options: LabOptions, config_file: str, name: str, history: str):
    """Run the collection platform: *HQ, yy and AGPS listeners plus HTTP."""
    with lab_errors():
        fleet = load_fleet(config_file)
        Path(history).parent.mkdir(parents=True, exist_ok=True)
        with open(history, "a", encoding="ascii", newline="\n") as sink:
            platform = Platform(fleet, name, options.clock(), HistoryStore(sink))
            server = PlatformServer(platform, options.unsafe_bind)
            try:
                asyncio.run(server.serve_forever())
            except KeyboardInterrupt:
                pass


async def _emulate(
    trackers: list[TrackerEmulator],
    clock: SimClock,
    gateway: Optional[SmsGateway],
    ticks: int = 0,
    pace: float = 1.0,
) -> None:
    if gateway is not None:
        await gateway.start()
    assisted = [tracker for tracker in trackers if tracker.state.agps_user is not None]
    try:
        elapsed = 0
        while not ticks or elapsed < ticks:
            if elapsed % config.AGPS_REFRESH_S == 0:
                for tracker in assisted:
                    await asyncio.to_thread(tracker.run_agps)
            await asyncio.sleep(pace)
            if clock.deterministic:
                clock.advance(1)
            for tracker in trackers:
                await asyncio.to_thread(tracker.step)
            elapsed += 1
    finally:
        if gateway is not None:
            await gateway.stop()


@main.command()
@click.option("--config", "config_file", required=True, type=click.Path(dir_okay=False))
@click.option("--device", "serials", multiple=True, help="Serial to run; all when omitted.")
@click.option("--server", callback=_endpoint, help="Override the platform address.")
@click.option("--no-gateway", is_flag=True, help="Do not expose the cellular plane.")
@click.option(
    "--ticks",
    default=0,
    type=click.IntRange(min=0),
    help="Stop after this many ticks; 0 runs until interrupted.",
)
@click.option(
    "--pace",
    default=1.0,
    type=click.FloatRange(min=0),
    show_default=True,
    help="Wall-clock seconds between ticks.",
)
@click.pass_obj
def emulate(
    options: LabOptions,
    config_file: str,
    serials: tuple[str, ...],
    server: Optional[Endpoint],
    no_gateway: bool,
    ticks: int,
    pace: float,
):
    """Run trackers against a platform; their SMS plane is served on the gateway port."""
    with lab_errors():
        fleet = load_fleet(config_file)
        ports = fleet.platform
        clock = options.clock()
        bus = SmsBus()
        network = TcpNetwork()
        trackers = []
        for serial in serials or fleet.serials:
            try:
                device = fleet.device(serial)
            except KeyError:
                raise ConfigError(f"no device {serial} in the fleet", None, config_file)
            target = server or Endpoint(
                host=ports.host, port=ports.port_for(device.protocol_family)
            )
            agps = Endpoint(host=ports.host, port=ports.agps_port)
            trackers.append(TrackerEmulator(device, target, clock, network, bus, agps).start())

        gateway = None
        if not no_gateway:
            host = check_bind(ports.host, options.unsafe_bind)
            gateway = SmsGateway(bus, host, ports.sms_port)
        try:
            asyncio.run(_emulate(trackers, clock, gateway, ticks, pace))
        except KeyboardInterrupt:
            pass
        finally:
            for tracker in trackers:
                tracker.stop()
            network.close()


# --- attacks -----------------------------------------------------------------


@main.group()
def sms():
    """Cellular plane."""


@sms.command("send")
@click.option("--from", "sender", required=True)
@click.option("--to", required=True)
@click.option("--body", required=True)
@_gateway_option
def sms_send(sender: str, to: str, body: str, gateway: Endpoint):
    """Send one text with any caller id; prints the delivery and any reply."""
    with lab_errors():
        bus = RemoteSmsBus(gateway.host, gateway.port)
        mailbox = Mailbox(sender).attach(bus)
        delivery = inject_sms(bus, sender, to, body)
        click.echo(delivery.value)
        for reply in mailbox.messages:
            click.echo(f"{reply.sender}: {reply.body}")
        if delivery is not Delivery.DELIVERED:
            sys.exit(EXIT_FAILURE)


@main.command()
@click.option("--server", required=True, callback=_endpoint)
@click.option("--serial", required=True)
@click.option("--lat", required=True, type=float)
@click.option("--lon", required=True, type=float)
@click.option("--alt", default=0.0, type=float)
@click.pass_obj
def spoof(options: LabOptions, server: Endpoint, serial: str, lat: float, lon: float, alt: float):
    """Report a forged position for any serial."""
    with lab_errors():
        position = GeoPosition(lat_deg=lat, lon_deg=lon, alt_m=alt)
        frame = spoof_position(server, serial, position, options.clock().now())
        click.echo(frame.decode("ascii"))


@main.command()
@click.option("--listen", required=True, callback=_endpoint)
@click.option("--upstream", required=True, callback=_endpoint)
@click.option("--dlat", type=float, help="Latitude offset for *HQ position reports.")
@click.option("--dlon", type=float, help="Longitude offset for *HQ position reports.")
@click.option("--udp", is_flag=True)
@click.option("--name", default="relay", show_default=True)
@click.option("--transcript", type=click.Path(dir_okay=False), help="Append decoded traffic here.")
@click.pass_obj
def relay(
    options: LabOptions,
    listen: Endpoint,
    upstream: Endpoint,
    dlat: Optional[float],
    dlon: Optional[float],
    udp: bool,
    name: str,
    transcript: Optional[str],
):
    """Sit between trackers and a platform, optionally moving every reported position."""
    with lab_errors():
        transform = Transform()
        if dlat is not None or dlon is not None:
            transform = Transform.offset(dlat or 0.0, dlon or 0.0)
        spec = RelaySpec(
            name=name,
            listen=listen,
            upstream=upstream,
            transport=Transport.UDP if udp else Transport.TCP,
            transform=transform,
        )
        sink = open(transcript, "a", encoding="ascii", newline="\n") if transcript else None

        async def _run():
            server = await run_relay(spec, options.clock(), HistoryStore(sink), options.unsafe_bind)
            try:
                await asyncio.Event().wait()
            finally:
                await server.stop()

        try:
            asyncio.run(_run())
        except KeyboardInterrupt:
            pass
        finally:
            if sink is not None:
                sink.close()


@main.command("enum")
@click.option("--prefix", required=True)
@click.option("--count", required=True, type=click.IntRange(min=1))
@click.option("--start", default=0, type=click.IntRange(min=0), show_default=True)
@click.option("--width", default=0, type=click.IntRange(min=0), help="Zero-pad the suffix.")
@click.option("--source", required=True, help="Phone the pings come from.")
@_gateway_option
@click.pass_obj
def enum_command(
    options: LabOptions,
    prefix: str,
    count: int,
    start: int,
    width: int,
    source: str,
    gateway: Endpoint,
):
    """Find trackers in a number range by who answers a status request."""
    with lab_errors():
        bus = RemoteSmsBus(gateway.host, gateway.port)
        numbers = number_range(prefix, start, count, width)
        report = enumerate_numbers(bus, numbers, source, rng=random.Random(options.seed))
        for ping in report.pings:
            click.echo(f"{ping.phone}\t{ping.verdict.value}")
        click.echo(f"{len(report.hits)} of {len(report.pings)} numbers answered")


@main.command()
@click.option("--file", "path", type=click.File("rb"))
@click.option("--hex", "hex_text", help="Bytes as hex instead of a file.")
def classify(path, hex_text: Optional[str]):
    """Name the protocol of a captured buffer."""
    if (path is None) == (hex_text is None):
        raise click.UsageError("give exactly one of --file or --hex")
    try:
        data = path.read() if path is not None else bytes.fromhex(hex_text)
    except ValueError as ex:
        raise click.BadParameter(str(ex), param_hint="--hex")
    click.echo(classify_traffic(data).value)


@main.command()
@click.option("--url", required=True, help="Base URL of the platform HTTP server.")
@click.option("--first", required=True, type=int, help="First device id to try.")
@click.option("--count", default=10, type=click.IntRange(min=1), show_default=True)
def replay(url: str, first: int, count: int):
    """Replay GetTracking over a range of device ids."""
    with lab_errors():
        found = ApiReplayer(url).sweep(list(range(first, first + count)))
        for device_id, payload in sorted(found.items()):
            click.echo(f"{device_id}\t{payload.get('latitude')}\t{payload.get('longitude')}")
        click.echo(f"{len(found)} of {count} ids answered with a position")


# --- platform admin ----------------------------------------------------------


@main.command()
@click.option("--config", "config_file", required=True, type=click.Path(dir_okay=False))
def devices(config_file: str):
    """Device ids the platform hands out, one line per device."""
    with lab_errors():
        fleet = load_fleet(config_file)
        platform = Platform(fleet)
        for device_id, serial in platform.device_ids.items():
            device = fleet.device(serial)
            click.echo(
                f"{device_id}\t{serial}\t{device.protocol_family.value}\t{device.identity.phone}"
            )


@main.group()
def history():
    """Stored track records."""


@history.command("dump")
@click.option("--serial")
@click.option(
    "--file", "path", default=config.HISTORY_FILE, show_default=True, type=click.Path(dir_okay=False)
)
@click.option("--verify", is_flag=True, help="Fail when a record no longer matches its raw bytes.")
def history_dump(serial: Optional[str], path: str, verify: bool):
    with lab_errors():
        store = HistoryStore.load(path)
        out = io.StringIO()
        store.dump(out, serial)
        click.echo(out.getvalue(), nl=False)
        if verify:
            broken = store.verify_integrity()
            for line in broken:
                click.echo(f"integrity: {line}", err=True)
            if broken:
                sys.exit(EXIT_FAILURE)


# --- scenarios ---------------------------------------------------------------


@main.group()
def scenario():
    """Scripted reproductions."""


@scenario.command("run")
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False), help="Write history, transcripts and report here.")
@click.option("--json", "as_json", is_flag=True, help="Machine-readable report.")
@click.pass_obj
def scenario_run(options: LabOptions, path: str, out: Optional[str], as_json: bool):
    """Run a scenario or a suite of them; scenarios always run on the simulated clock."""
    with lab_errors():
        loaded = load(path)
        out_dir = Path(out) if out else None
        if isinstance(loaded, Scenario):
            report = run_scenario(loaded, options.seed, out_dir)
            click.echo(report.to_json() if as_json else report.render())
        else:
            report = run_suite(loaded, options.seed, out_dir)
            if as_json:
                click.echo(report.model_dump_json())
            else:
                for scenario_report in report.reports:
                    if not scenario_report.passed:
                        click.echo(scenario_report.render())
                click.echo(report.render())
    sys.exit(EXIT_OK if report.passed else EXIT_FAILURE)


if __name__ == "__main__":
    main()
