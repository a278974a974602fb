import asyncio
import logging
from pathlib import Path

import pytest
import ujson
from click.testing import CliRunner

from gpslab.cli import EXIT_CONFIG, EXIT_FAILURE, EXIT_OK, main
from gpslab.codecs.hq import parse_hq
from gpslab.codecs.yy import REFERENCE_FRAME
from gpslab.models.fleetfile import parse_fleet
from gpslab.models.simclock import parse_iso
from gpslab.platform import records
from gpslab.platform.runtime import PlatformServer
from gpslab.platform.service import Platform
from gpslab.platform.store import HistoryStore, format_record

ROOT = Path(__file__).parents[2]
FLEET = ROOT / "fleets" / "lab.fleet"
SCENARIOS = ROOT / "scenarios"
V1 = b"*HQ,1700061234,V1,105417,A,2240.8116,N,11408.8108,E,000.0,000.00,090119,FFFFFFFF#"

runner = CliRunner()


@pytest.fixture(autouse=True)
def keep_log_handlers():
    # the CLI points the root handler at the runner's stderr, which closes after invoke
    root = logging.getLogger()
    handlers = list(root.handlers)
    yield
    root.handlers = handlers


def test_version():
    result = runner.invoke(main, ["--version"])
    assert result.exit_code == EXIT_OK
    assert "0.1.0" in result.stdout


def test_classify_file(tmp_path):
    capture = tmp_path / "forward.bin"
    capture.write_bytes(REFERENCE_FRAME)
    result = runner.invoke(main, ["classify", "--file", str(capture)])
    assert result.exit_code == EXIT_OK
    assert result.stdout.strip() == "YY"


@pytest.mark.parametrize(
    "data, expected",
    [
        (V1, "HQ"),
        (b"cmd=full;user=a;pwd=b;lat=0;lon=0;alt=0;pacc=1", "AGPS_LOGIN"),
        (b"\x00\x01\x02\x03", "UNKNOWN"),
    ],
)
def test_classify_hex(data, expected):
    result = runner.invoke(main, ["classify", "--hex", data.hex()])
    assert result.stdout.strip() == expected


def test_classify_needs_one_input():
    result = runner.invoke(main, ["classify"])
    assert result.exit_code == EXIT_CONFIG
    result = runner.invoke(main, ["classify", "--hex", "zz"])
    assert result.exit_code == EXIT_CONFIG


def test_devices():
    result = runner.invoke(main, ["devices", "--config", str(FLEET)])
    assert result.exit_code == EXIT_OK
    lines = result.stdout.splitlines()
    assert lines[0] == "82383\t1700061234\tHQ\t+440025241"
    assert lines[1] == "82384\t690217122612463\tYY\t+440025240"
    assert len(lines) == 4


def test_devices_with_a_broken_fleet(tmp_path):
    fleet = tmp_path / "broken.fleet"
    fleet.write_text("device serial=1700061234 family=XX phone=+440025241 home=1,1\n")
    result = runner.invoke(main, ["devices", "--config", str(fleet)])
    assert result.exit_code == EXIT_CONFIG
    assert "broken.fleet:1:" in result.stderr


def test_history_dump(tmp_path):
    t0 = parse_iso("2019-01-09T10:54:17Z")
    position = records.from_hq(parse_hq(V1), V1, t0)
    path = tmp_path / "history.tsv"
    path.write_text(format_record(position) + "\n", encoding="ascii")

    result = runner.invoke(main, ["history", "dump", "--file", str(path), "--verify"])
    assert result.exit_code == EXIT_OK
    assert result.stdout == format_record(position) + "\n"

    result = runner.invoke(main, ["history", "dump", "--file", str(path), "--serial", "1"])
    assert result.stdout == ""


def test_history_dump_detects_tampering(tmp_path):
    t0 = parse_iso("2019-01-09T10:54:17Z")
    tampered = records.from_hq(parse_hq(V1), V1, t0).model_copy(update={"serial": "1700000000"})
    path = tmp_path / "history.tsv"
    store = HistoryStore()
    store.append(tampered)
    with open(path, "w", encoding="ascii") as out:
        store.dump(out)

    result = runner.invoke(main, ["history", "dump", "--file", str(path), "--verify"])
    assert result.exit_code == EXIT_FAILURE
    assert "integrity: record 0" in result.stderr

    path.write_text("garbage\n", encoding="ascii")
    result = runner.invoke(main, ["history", "dump", "--file", str(path)])
    assert result.exit_code == EXIT_CONFIG


def test_scenario_run_passing(tmp_path):
    out = tmp_path / "out"
    result = runner.invoke(
        main, ["--seed", "7", "scenario", "run", str(SCENARIOS / "forge_position.scn"), "--out", str(out)]
    )
    assert result.exit_code == EXIT_OK, result.output
    assert "forge_position: PASS" in result.stdout
    assert (out / "forge_position.report.txt").exists()


def test_scenario_run_json():
    result = runner.invoke(main, ["scenario", "run", str(SCENARIOS / "status_bypass.scn"), "--json"])
    assert result.exit_code == EXIT_OK
    assert ujson.loads(result.stdout)["passed"] is True


def test_scenario_run_failing(tmp_path):
    scenario = tmp_path / "fails.scn"
    scenario.write_text(
        f"name fails\nfleet {FLEET}\nat 0 start_platform\nat 1 assert store=stats:platform records=5\n"
    )
    result = runner.invoke(main, ["scenario", "run", str(scenario)])
    assert result.exit_code == EXIT_FAILURE
    assert "fails: FAIL (0/1 checks)" in result.stdout


def test_scenario_run_config_errors(tmp_path):
    scenario = tmp_path / "bad.scn"
    scenario.write_text("name bad\nat 0 launch\n")
    result = runner.invoke(main, ["scenario", "run", str(scenario)])
    assert result.exit_code == EXIT_CONFIG
    assert "bad.scn:2:" in result.stderr

    result = runner.invoke(main, ["scenario", "run", str(tmp_path / "missing.scn")])
    assert result.exit_code == EXIT_CONFIG


def test_scenario_suite():
    result = runner.invoke(main, ["scenario", "run", str(SCENARIOS / "all")])
    assert result.exit_code == EXIT_OK, result.output
    assert result.stdout.rstrip().endswith("suite all: PASS")


ASSISTED_DEVICE = (
    "device serial=1700061234 family=HQ phone=+440025241 home=22.680193,114.146846 "
    "agps_user=owner agps_pass=secret\n"
)


def test_emulate_fetches_assistance_at_start(tmp_path):
    platform = Platform(
        parse_fleet("platform host=127.0.0.1 hq_port=0 yy_port=0 agps_port=0\n" + ASSISTED_DEVICE)
    )

    async def scenario():
        server = PlatformServer(platform, http=False)
        bound = await server.start()
        fleet = tmp_path / "assisted.fleet"
        fleet.write_text(
            f"platform host=127.0.0.1 hq_port={bound['hq']} yy_port={bound['yy']} "
            f"agps_port={bound['agps']}\n" + ASSISTED_DEVICE
        )
        args = ["--deterministic", "emulate", "--config", str(fleet)]
        args += ["--ticks", "1", "--pace", "0", "--no-gateway"]
        try:
            return await asyncio.to_thread(runner.invoke, main, args)
        finally:
            await server.stop()

    result = asyncio.run(scenario())
    assert result.exit_code == EXIT_OK
    assert platform.stats["agps_logins"] == 1
    logins = [record for record in platform.store.records() if record.serial == "owner"]
    assert len(logins) == 1
