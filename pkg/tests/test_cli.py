"""Command-line interface: subcommands, file outputs, and exit codes."""

import json
import os
import threading

import pytest
import yaml

from dronecorridor.cli import main
from dronecorridor.utm import UtmAuthority, UtmServer


def write_yaml(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(payload, fh)
    return str(path)


@pytest.fixture
def request_file(tmp_path):
    return write_yaml(tmp_path / "request.yaml", {
        "start": {"east": 0, "north": 0, "up": 0},
        "destination": {"east": 600, "north": 0, "up": 0},
        "altitude": 60,
        "expected_throughput": 400,
        "utility": "LastMile",
        "desired_duration": 120,
        "time_of_day": "09:00",
    })


@pytest.fixture
def scenario_file(tmp_path):
    return write_yaml(tmp_path / "scenario.yaml", {
        "version": 1,
        "environment": {"wind": 1.0},
    })


class TestPlan:
    def test_table_output(self, request_file, scenario_file, capsys):
        code = main(["plan", "--scenario", scenario_file,
                     "--request", request_file])
        assert code == 0
        out = capsys.readouterr().out
        assert "OPT1" in out and "BasicB" in out
        assert "OPTION" in out.splitlines()[0]

    def test_json_output(self, request_file, capsys):
        code = main(["plan", "--request", request_file, "--json"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["options"][0]["option_id"] == "OPT1"
        assert payload["options"][0]["required_cl"] == "CL1"

    def test_infeasible_exit_code(self, tmp_path, capsys):
        request = write_yaml(tmp_path / "r.yaml", {
            "start": {"east": 0, "north": 0, "up": 0},
            "destination": {"east": 3000, "north": 0, "up": 0},
            "altitude": 60,
            "expected_throughput": 400,
            "desired_duration": 150,
        })
        code = main(["plan", "--request", request])
        assert code == 1
        assert "VMinExceedsVMax" in capsys.readouterr().err

    def test_bad_request_file_exit_code(self, tmp_path, capsys):
        missing = str(tmp_path / "nope.yaml")
        assert main(["plan", "--request", missing]) == 2
        bad = write_yaml(tmp_path / "bad.yaml", {"start": "not-a-point"})
        assert main(["plan", "--request", bad]) == 2

    def test_bad_scenario_exit_code(self, tmp_path, request_file):
        scenario = write_yaml(tmp_path / "s.yaml", {"version": 99})
        assert main(["plan", "--scenario", scenario,
                     "--request", request_file]) == 2


class TestSimulate:
    def test_writes_reports(self, tmp_path, request_file, capsys):
        data = str(tmp_path / "data")
        code = main(["simulate", "--request", request_file, "--data", data])
        assert code == 0
        out = capsys.readouterr().out
        assert "Released via" in out or "Released" in out
        journal = os.path.join(data, "missions", "M0001.journal")
        assert os.path.exists(journal)
        report = os.path.join(data, "missions", "M0001.report.json")
        with open(report, encoding="utf-8") as fh:
            payload = json.load(fh)
        assert payload["status"] == "Released"
        assert payload["metrics"]["breaches"]["CoreOverlap"] == 0

    def test_explicit_option(self, tmp_path, request_file, capsys):
        data = str(tmp_path / "data")
        code = main(["simulate", "--request", request_file,
                     "--data", data, "--option", "OPT3"])
        assert code == 0
        assert "OPT3" in capsys.readouterr().out


class TestReplay:
    def test_replay_after_simulate(self, tmp_path, request_file, capsys):
        data = str(tmp_path / "data")
        main(["simulate", "--request", request_file, "--data", data])
        capsys.readouterr()
        journal = os.path.join(data, "missions", "M0001.journal")
        code = main(["replay", "--journal", journal])
        assert code == 0
        out = capsys.readouterr().out
        assert "Released" in out
        assert "Draft -> OptionsReady" in out

    def test_replay_json(self, tmp_path, request_file, capsys):
        data = str(tmp_path / "data")
        main(["simulate", "--request", request_file, "--data", data])
        capsys.readouterr()
        journal = os.path.join(data, "missions", "M0001.journal")
        code = main(["replay", "--journal", journal, "--json"])
        assert code == 0
        view = json.loads(capsys.readouterr().out)
        assert view["status"] == "Released"
        assert view["selected_option_id"] == "OPT1"

    def test_missing_journal_exit_code(self, tmp_path):
        assert main(["replay", "--journal", str(tmp_path / "none.journal")]) == 2


class TestTcpUtmIntegration:
    def test_simulate_against_tcp_authority(self, tmp_path, request_file,
                                            capsys):
        registry_path = str(tmp_path / "registry.json")
        authority = UtmAuthority(persist_path=registry_path)
        server = UtmServer(authority, "127.0.0.1", 0)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            scenario = write_yaml(tmp_path / "scenario.yaml", {
                "version": 1,
                "utm": {"mode": "tcp", "host": "127.0.0.1",
                        "port": server.port},
            })
            data = str(tmp_path / "data")
            code = main(["simulate", "--scenario", scenario,
                         "--request", request_file, "--data", data])
            assert code == 0
            assert authority.registry.records == {}
            with open(registry_path, encoding="utf-8") as fh:
                assert json.load(fh) == {"allocations": [], "noflyzones": []}
        finally:
            server.shutdown()
            server.server_close()

    def test_dead_endpoint_exit_code(self, tmp_path, request_file, capsys):
        scenario = write_yaml(tmp_path / "scenario.yaml", {
            "version": 1,
            "utm": {"mode": "tcp", "host": "127.0.0.1", "port": 1},
        })
        code = main(["simulate", "--scenario", scenario,
                     "--request", request_file,
                     "--data", str(tmp_path / "data")])
        assert code == 3
        assert "transport" in capsys.readouterr().err


class TestParser:
    def test_unknown_command_exits_nonzero(self):
        with pytest.raises(SystemExit):
            main(["warp-drive"])

    def test_plan_requires_request(self):
        with pytest.raises(SystemExit):
            main(["plan"])
