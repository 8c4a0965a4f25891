"""Command-line entry points.

Subcommands:
  plan       rank corridor options for a mission request file
  simulate   run a full mission headless and write report files
  serve      HTTP API with embedded simulation stepping
  utm-serve  stand-alone airspace authority over TCP
  replay     rebuild a mission record from its journal

Exit codes: 0 success, 1 mission infeasible, 2 invalid input, 3 transport
failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import List, Optional

import yaml

from .geometry import GeometryError
from .lanes import PlanningError
from .scenario import ScenarioConfig, ScenarioError, load_scenario
from .service import (
    GcsService,
    Infeasible,
    NegotiationFailed,
    ServiceError,
    StartMission,
    ValidationFailed,
    generate_candidate_options,
    load_mission,
    request_from_raw,
)
from .utm import (
    TcpTransport,
    TransportFailure,
    UtmAuthority,
    UtmClient,
    UtmServer,
    load_registry,
)

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_VALIDATION = 2
EXIT_TRANSPORT = 3


def _load_request_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read request file: {exc}") from None
    except yaml.YAMLError as exc:
        raise ScenarioError(f"request file is not valid YAML/JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ScenarioError("request file must hold a mapping")
    return raw


def _scenario(path: Optional[str]) -> ScenarioConfig:
    return load_scenario(path) if path else ScenarioConfig()


def _service(scenario: ScenarioConfig, data_dir: str) -> GcsService:
    client = None
    if scenario.utm.mode == "tcp":
        client = UtmClient(TcpTransport(scenario.utm.host, scenario.utm.port))
    return GcsService(scenario, data_dir, utm_client=client)


def cmd_plan(args: argparse.Namespace) -> int:
    scenario = _scenario(args.scenario)
    request = request_from_raw(_load_request_file(args.request), scenario.origin)
    options = generate_candidate_options(request, scenario)
    if args.json:
        print(json.dumps({"options": [o.to_dict() for o in options]}, indent=2))
        return EXIT_OK
    header = (f"{'OPTION':<8}{'CONFIG':<22}{'LANES':<7}{'CL':<5}"
              f"{'RADIUS':<8}{'SPEED':<13}{'SCORE':<7}")
    print(header)
    for o in options:
        config = (f"{o.lane_plan.distribution.name}/"
                  f"{type(o.lane_plan.layout).__name__}")
        speed = f"{o.v_bounds[0]:.1f}-{o.v_bounds[1]:.1f}"
        print(f"{o.option_id:<8}{config:<22}{len(o.lane_plan.lanes):<7}"
              f"{o.required_cl.value:<5}{o.corridor.outer_radius:<8.1f}"
              f"{speed:<13}{o.score:<7.2f}")
        print(f"        {o.rationale}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    scenario = _scenario(args.scenario)
    request = request_from_raw(_load_request_file(args.request), scenario.origin)
    svc = _service(scenario, args.data)
    mission_id = svc.ingest_mission(request)
    options = svc.generate_options(mission_id)
    option_id = args.option or options[0].option_id
    svc.select_and_negotiate(mission_id, option_id)
    runner = svc.handle_command(mission_id, StartMission())
    runner.run()
    record = svc.complete_and_release(mission_id)
    print(f"mission {mission_id} {record.status.value} via {option_id}")
    print(json.dumps(record.metrics, indent=2, sort_keys=True))
    base = f"{svc.missions_dir}/{mission_id}"
    for suffix in (".journal", ".events.jsonl", ".telemetry.csv",
                   ".report.json"):
        print(f"wrote {base}{suffix}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .api import create_app

    scenario = _scenario(args.scenario)
    svc = _service(scenario, args.data)
    interval = scenario.sim.dt if args.step_interval is None else args.step_interval
    app = create_app(svc, step_interval=interval)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def cmd_utm_serve(args: argparse.Namespace) -> int:
    registry = load_registry(args.registry) if args.registry else None
    authority = UtmAuthority(registry, persist_path=args.registry)
    server = UtmServer(authority, args.host, args.port)
    print(f"utm authority listening on {args.host}:{server.port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        server.server_close()
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    try:
        record = load_mission(args.journal)
    except OSError as exc:
        raise ScenarioError(f"cannot read journal: {exc}") from None
    if args.json:
        from .api import record_view
        print(json.dumps(record_view(record), indent=2, sort_keys=True))
        return EXIT_OK
    print(f"mission  {record.id}")
    print(f"status   {record.status.value}")
    print(f"history  {' -> '.join(s.value for s in record.status_history)}")
    print(f"utility  {record.request.utility.value}")
    if record.selected_option_id:
        print(f"option   {record.selected_option_id}")
    if record.allocation is not None:
        print(f"volume   {record.allocation.allocation_id} "
              f"({record.allocation.state.value}, "
              f"cost {record.allocation.cost:.2f}, "
              f"round {record.allocation.negotiation_round})")
    sim_events = sum(1 for e in record.journal if e.kind == "sim_event")
    print(f"journal  {len(record.journal)} events ({sim_events} from the sim, "
          f"{len(record.acknowledged)} warnings acknowledged)")
    if record.metrics:
        print("metrics  " + json.dumps(record.metrics, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dronecorridor",
        description="Plan, negotiate, and simulate multi-lane drone corridors",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    plan = sub.add_parser("plan", help="rank corridor options for a request")
    plan.add_argument("--scenario", help="scenario YAML file")
    plan.add_argument("--request", required=True, help="mission request file")
    plan.add_argument("--json", action="store_true", help="machine output")
    plan.set_defaults(fn=cmd_plan)

    simulate = sub.add_parser("simulate", help="run one mission headless")
    simulate.add_argument("--scenario", help="scenario YAML file")
    simulate.add_argument("--request", required=True, help="mission request file")
    simulate.add_argument("--option", help="option id (default: top ranked)")
    simulate.add_argument("--data", default="./gcs-data",
                          help="journal/report directory")
    simulate.set_defaults(fn=cmd_simulate)

    serve = sub.add_parser("serve", help="run the HTTP API")
    serve.add_argument("--scenario", help="scenario YAML file")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--data", default="./gcs-data",
                       help="journal/report directory")
    serve.add_argument("--step-interval", type=float, default=None,
                       help="wall seconds per sim step (default: sim dt; "
                            "0 runs missions flat out)")
    serve.set_defaults(fn=cmd_serve)

    utm = sub.add_parser("utm-serve", help="run the airspace authority")
    utm.add_argument("--host", default="127.0.0.1")
    utm.add_argument("--port", type=int, default=7700)
    utm.add_argument("--registry", help="registry persistence file")
    utm.set_defaults(fn=cmd_utm_serve)

    replay = sub.add_parser("replay", help="rebuild a mission from its journal")
    replay.add_argument("--journal", required=True, help="journal file")
    replay.add_argument("--json", action="store_true", help="machine output")
    replay.set_defaults(fn=cmd_replay)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Infeasible as exc:
        print(f"infeasible: {', '.join(exc.reasons)}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NegotiationFailed as exc:
        print(f"negotiation failed after {len(exc.failure.rounds)} round(s)",
              file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ValidationFailed, ScenarioError, GeometryError, PlanningError,
            ServiceError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except TransportFailure as exc:
        print(f"transport failure: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT


if __name__ == "__main__":
    sys.exit(main())
