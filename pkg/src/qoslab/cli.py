"""Command line entry point.

``qoslab run`` executes one scenario and prints a short summary; ``--out``
additionally writes the per-tick CSV. Flag precedence: explicit flags beat the
config file, the config file beats built-in defaults.
"""
from __future__ import annotations

import argparse
import sys
from typing import Optional

from .errors import ServiceError
from .harness import build_scenario_spec, emit_csv, load_config_file, run_scenario

EXIT_OK = 0
EXIT_USAGE = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qoslab",
        description="Emulated 5G cell with northbound QoS APIs and an adaptive client.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario and print a summary")
    run.add_argument("--scenario", type=int, default=None, help="1, 2 or 3 (default 3)")
    run.add_argument(
        "--position",
        default=None,
        help="video user radio position: centre or edge (default centre)",
    )
    run.add_argument("--capacity", type=float, default=None, help="cell capacity units (default 12)")
    run.add_argument("--ticks", type=int, default=None, help="run length in ticks (default 100)")
    run.add_argument(
        "--threshold",
        type=float,
        default=None,
        help="rate below which the client counts a bad sample (default 4.2)",
    )
    run.add_argument(
        "--ramp-interval",
        type=int,
        default=None,
        help="ticks between background flow arrivals (default 20)",
    )
    run.add_argument("--seed", type=int, default=None, help="reserved for randomized schedules")
    run.add_argument("--config", default=None, help="key=value config file")
    run.add_argument("--out", default=None, help="write the per-tick CSV here")
    run.add_argument(
        "--live",
        action="store_true",
        default=None,
        help="run the parts as local HTTP services instead of in-process calls",
    )
    run.add_argument("--ccf", default=None, help="live mode: registry bind address host:port")
    run.add_argument("--nef", default=None, help="live mode: exposure bind address host:port")
    return parser


def _merged_values(args: argparse.Namespace) -> dict:
    values: dict = {}
    if args.config is not None:
        values.update(load_config_file(args.config))
    flag_values = {
        "scenario": args.scenario,
        "position": args.position,
        "capacity": args.capacity,
        "ticks": args.ticks,
        "threshold": args.threshold,
        "ramp_interval": args.ramp_interval,
        "seed": args.seed,
        "out": args.out,
        "live": args.live,
        "ccf": args.ccf,
        "nef": args.nef,
    }
    values.update({k: v for k, v in flag_values.items() if v is not None})
    return values


def _print_summary(result) -> None:
    summary = result.summary
    print(f"scenario:        {summary.scenario.value}")
    print(f"ticks:           {summary.ticks}")
    print(f"final phase:     {summary.final_phase}")
    print(f"video rate:      min {summary.min_video_rate:.3f} final {summary.final_video_rate:.3f} Mbps")
    print(f"peak cell load:  {summary.peak_load:.3f}")
    if summary.request_tick is not None:
        print(f"qos requested:   tick {summary.request_tick}")
    if summary.guaranteed_tick is not None:
        print(f"qos guaranteed:  tick {summary.guaranteed_tick}")
    if summary.rejected:
        print("qos rejected:    yes")
    if summary.exhausted_deliveries:
        print(f"dropped notifications: {summary.exhausted_deliveries}")


def main(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        values = _merged_values(args)
        spec = build_scenario_spec(values)
        live = values.get("live")
        if isinstance(live, str):  # config file value
            live = live.lower() in ("1", "true", "yes", "on")
        if live:
            from .live import run_scenario_live

            result = run_scenario_live(spec, values.get("ccf"), values.get("nef"))
        else:
            result = run_scenario(spec)
        _print_summary(result)
        out = values.get("out")
        if out:
            emit_csv(result.records, out)
            print(f"wrote {len(result.records)} ticks to {out}")
    except ServiceError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
