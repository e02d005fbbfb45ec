"""Command line entry points.

    gridgate run --plan vvc_swap_demo --out results.csv
    gridgate summarize --in results.csv
    gridgate inverter --listen 127.0.0.1:1502 [--scenario profile.csv]
    gridgate cloud --listen 127.0.0.1:8440 --operator-token T --gateway-token id=T
    gridgate gateway --config gateway.json

``run`` exits 0 only when every plan step (boot, playback, swap) succeeds.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time

from .cloud import AuthTokens, CloudTwin
from .cloud_client import HttpCloudClient
from .cloud_http import CloudHttpApi
from .gateway import Gateway, load_config, parse_endpoint
from .harness import HarnessError, emit, load_plan, load_series, run, summarize
from .inverter import InverterNameplate, SimulatedInverter
from .modbus_io import ModbusTcpClient


def _cmd_run(args) -> int:
    plan = load_plan(args.plan)
    series = run(plan, wall_clock=args.wall_clock)
    emit(series, args.out, args.format)
    print(f"wrote {len(series.rows)} rows to {args.out}")
    print(json.dumps(summarize(series), indent=2))
    return 0


def _cmd_summarize(args) -> int:
    series = load_series(args.infile)
    print(json.dumps(summarize(series), indent=2))
    return 0


def _cmd_inverter(args) -> int:
    host, port = parse_endpoint(args.listen)
    nameplate = InverterNameplate(args.rated_va, args.rated_w, args.nominal_voltage)
    inverter = SimulatedInverter(nameplate, q_lag_tau=args.tau,
                                 initial_voltage=args.nominal_voltage, initial_pv_w=args.pv)
    if args.scenario:
        from .harness import ScenarioProfile

        profile = ScenarioProfile.from_file(args.scenario)
    else:
        profile = None
    server = inverter.serve(host, port)
    print(f"inverter serving modbus on {server.address[0]}:{server.address[1]}")
    t0 = time.time()
    try:
        while True:
            time.sleep(args.step_interval)
            t = time.time() - t0
            if profile is not None:
                inverter.step(profile.voltage_at(t), profile.pv_at(t), args.step_interval)
            else:
                inverter.step(args.nominal_voltage, args.pv, args.step_interval)
    except KeyboardInterrupt:
        return 0
    finally:
        server.stop()


def _cmd_cloud(args) -> int:
    gateways = {}
    for member in args.gateway_token or []:
        gateway_id, _, token = member.partition("=")
        if not token:
            print(f"--gateway-token expects id=token, got {member!r}", file=sys.stderr)
            return 2
        gateways[gateway_id] = token
    tokens = AuthTokens(operator=args.operator_token, gateways=gateways)
    twin = CloudTwin(tokens, db_path=args.db, default_heartbeat_interval=args.heartbeat_interval)
    host, port = parse_endpoint(args.listen)
    api = CloudHttpApi(twin, host, port).start()
    print(f"cloud twin listening on {api.base_url}")
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        return 0
    finally:
        api.stop()
        twin.close()


def _cmd_gateway(args) -> int:
    config = load_config(args.config)
    host, port = parse_endpoint(config.inverter_endpoint)
    gateway = Gateway(
        config,
        ModbusTcpClient(host, port),
        HttpCloudClient(config.cloud_base_url, config.auth_token, config.gateway_id),
    )
    gateway.start()
    state = "degraded" if gateway.degraded else "provisioned"
    print(f"gateway {config.gateway_id} running ({state}), cloud {config.cloud_base_url}")
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        return 0
    finally:
        gateway.stop()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridgate", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment plan")
    p.add_argument("--plan", required=True, help="plan JSON path or bundled name (vvc_swap_demo)")
    p.add_argument("--out", required=True, help="output file for the result series")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--wall-clock", action="store_true", help="real time instead of virtual")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("summarize", help="summarize a result series")
    p.add_argument("--in", dest="infile", required=True)
    p.set_defaults(fn=_cmd_summarize)

    p = sub.add_parser("inverter", help="serve a simulated inverter over Modbus TCP")
    p.add_argument("--listen", default="127.0.0.1:1502")
    p.add_argument("--rated-va", type=float, default=5000.0)
    p.add_argument("--rated-w", type=float, default=5000.0)
    p.add_argument("--nominal-voltage", type=float, default=230.0)
    p.add_argument("--tau", type=float, default=1.0, help="reactive power lag time constant")
    p.add_argument("--pv", type=float, default=4000.0, help="available PV power (W)")
    p.add_argument("--scenario", help="CSV/JSON profile to play back (t,voltage,available_pv_w)")
    p.add_argument("--step-interval", type=float, default=1.0)
    p.set_defaults(fn=_cmd_inverter)

    p = sub.add_parser("cloud", help="serve the cloud twin REST API")
    p.add_argument("--listen", default="127.0.0.1:8440")
    p.add_argument("--db", default=":memory:", help="sqlite path (default in-memory)")
    p.add_argument("--operator-token", default="operator-token")
    p.add_argument("--gateway-token", action="append", metavar="ID=TOKEN")
    p.add_argument("--heartbeat-interval", type=float, default=5.0)
    p.set_defaults(fn=_cmd_cloud)

    p = sub.add_parser("gateway", help="run the edge gateway")
    p.add_argument("--config", required=True, help="JSON config file (GRIDGATE_* env overrides)")
    p.set_defaults(fn=_cmd_gateway)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.fn(args)
    except (HarnessError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
