# -*- coding: utf-8 -*-
import argparse
import json
import logging
import sys
from datetime import date

from trex import ALGORITHMS
from trex import TrexError
from trex import snapshot
from trex.bench import run_bench
from trex.bench import summarize
from trex.bench import write_csv
from trex.config import parse_clock
from trex.customize import rank_histogram
from trex.partition import build_layout_graph
from trex.partition import cut_weights
from trex.query import ProfileQuery
from trex.query import Query
from trex.query import Router
from trex.query import stop_id
from trex.refkit import SyntheticSpec
from trex.refkit import geo_rank_queries
from trex.refkit import random_queries
from trex.snapshot import MissingStageError
from trex.workflow import Workflow

logger = logging.getLogger()

QUERY_STAGES = {
    "tb": ("ingest", "transfers"),
    "trex": ("ingest", "transfers", "partition", "customize"),
    "trex-overlay": ("ingest", "transfers", "partition", "customize"),
}


def _algorithms(value):
    algorithms = [name.strip() for name in value.split(",") if name.strip()]
    for name in algorithms:
        if name not in ALGORITHMS:
            raise argparse.ArgumentTypeError(f"unknown algorithm {name}")
    return algorithms


def _clock(value):
    try:
        return parse_clock(value)
    except AssertionError as error:
        raise argparse.ArgumentTypeError(str(error))


def build_parser():
    parser = argparse.ArgumentParser("trex", description="Trip-based transit routing engine")
    commands = parser.add_subparsers(dest="command", required=True)

    def _command(name, help, snapshot_flag="--in"):
        command = commands.add_parser(name, help=help)
        command.add_argument(
            "--configuration", type=str, help="Local YAML engine configuration"
        )
        if snapshot_flag:
            command.add_argument(
                snapshot_flag, dest="snapshot", type=str, required=True, help="Snapshot file"
            )
        return command

    ingest = _command("ingest", "Build a timetable snapshot", snapshot_flag="--out")
    source = ingest.add_mutually_exclusive_group(required=True)
    source.add_argument("--gtfs", type=str, help="Unpacked GTFS feed directory")
    source.add_argument("--network", type=str, help="YAML network description")
    ingest.add_argument("--day", type=date.fromisoformat, help="First service day, YYYY-MM-DD")
    ingest.add_argument("--days", type=int, default=1, help="Consecutive service days (1 or 2)")
    ingest.add_argument("--buffer", type=str, help="Buffer time subtracted from departures")

    transfers = _command("transfers", "Generate and prune transfers")
    transfers.add_argument("--threads", type=int, help="Worker threads")
    transfers.add_argument("--no-uturn", dest="uturn", action="store_false", default=None)
    transfers.add_argument(
        "--no-latest-exit", dest="latest_exit", action="store_false", default=None
    )

    partition = _command("partition", "Compute the nested bipartition")
    partition.add_argument("--levels", type=int, help="Number of levels K")
    partition.add_argument("--imbalance", type=float, help="Allowed imbalance ε")
    partition.add_argument("--seed", type=int, help="Partitioner seed")
    partition.add_argument("--import", dest="import_path", type=str, help="stopId cellId file")

    customize = _command("customize", "Compute transfer ranks and overlays")
    customize.add_argument("--threads", type=int, help="Worker threads")

    for name, help in (("query", "Fixed departure query"), ("profile", "Profile query")):
        command = _command(name, help)
        command.add_argument("--from", dest="source", type=str, required=True)
        command.add_argument("--to", dest="target", type=str, required=True)
        if name == "query":
            command.add_argument("--dep", type=_clock, required=True, help="HH:MM:SS")
        else:
            command.add_argument("--start", type=_clock, required=True, help="HH:MM:SS")
            command.add_argument("--end", type=_clock, required=True, help="HH:MM:SS")
        command.add_argument("--algo", choices=ALGORITHMS, default="tb")
        command.add_argument("--json", action="store_true", help="Machine-readable output")

    bench = _command("bench", "Run a query workload with several algorithms")
    bench.add_argument("--queries", type=int, default=100, help="Query (or source) count")
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--algos", type=_algorithms, default=list(ALGORITHMS))
    bench.add_argument("--georank", action="store_true", help="Geo-rank workload")
    bench.add_argument("--csv", type=str, required=True, help="Output CSV path")
    bench.add_argument("--no-verify", dest="verify", action="store_false")

    gen = _command("gen", "Generate a synthetic network snapshot", snapshot_flag="--out")
    gen.add_argument("--spec", type=str, help="YAML synthetic spec")
    gen.add_argument("--stops", type=int)
    gen.add_argument("--lines", type=int)
    gen.add_argument("--trips-per-line", type=int)
    gen.add_argument("--clusters", type=int)
    gen.add_argument("--inter-cluster-fraction", type=float)
    gen.add_argument("--footpath-density", type=float)
    gen.add_argument("--horizon", type=str)
    gen.add_argument("--seed", type=int)

    stats = _command("stats", "Print snapshot statistics")
    stats.add_argument("--json", action="store_true", help="Machine-readable output")

    return parser


def _journey_json(tt, journey):
    return {
        "departure": journey.departure,
        "arrival": journey.arrival,
        "trips": journey.trips,
        "initial_walk": journey.initial_walk,
        "final_walk": journey.final_walk,
        "legs": [
            {
                "trip": tt.trip_names[leg.trip],
                "from": tt.stops[tt.event_stop[leg.enter]].name,
                "to": tt.stops[tt.event_stop[leg.exit]].name,
                "departure": tt.event_dep[leg.enter],
                "arrival": tt.event_arr[leg.exit],
            }
            for leg in journey.legs
        ],
    }


def _print_journeys(tt, journeys):
    for journey in journeys:
        print(f"{journey.trips} trips, {journey.departure} -> {journey.arrival}")
        for leg in _journey_json(tt, journey)["legs"]:
            print(
                f"  {leg['trip']}: {leg['from']} {leg['departure']}"
                f" -> {leg['to']} {leg['arrival']}"
            )


def cmd_query(args):
    state = snapshot.load(args.snapshot, required=QUERY_STAGES[args.algo])
    tt = state.timetable
    query = Query(stop_id(tt, args.source), stop_id(tt, args.target), args.dep)
    result = Router(state).query(query, args.algo)
    if args.json:
        output = {
            "front": [entry._asdict() for entry in result.front],
            "journeys": [_journey_json(tt, journey) for journey in result.journeys],
            "metrics": vars(result.metrics),
        }
        print(json.dumps(output, indent=2))
    else:
        _print_journeys(tt, result.journeys)
        if not result.front:
            print("unreachable")


def cmd_profile(args):
    state = snapshot.load(args.snapshot, required=QUERY_STAGES[args.algo])
    tt = state.timetable
    query = ProfileQuery(stop_id(tt, args.source), stop_id(tt, args.target), args.start, args.end)
    result = Router(state).profile(query, args.algo)
    if args.json:
        output = {
            "entries": [
                {
                    "departure": entry.departure,
                    "arrival": entry.arrival,
                    "trips": entry.trips,
                    "journey": _journey_json(tt, entry.journey),
                }
                for entry in result.entries
            ],
            "metrics": vars(result.metrics),
        }
        print(json.dumps(output, indent=2))
    else:
        for entry in result.entries:
            print(f"depart {entry.departure}: arrive {entry.arrival} with {entry.trips} trips")


def cmd_bench(args):
    required = set()
    for algorithm in args.algos:
        required.update(QUERY_STAGES[algorithm])
    state = snapshot.load(args.snapshot, required=required)
    if args.georank:
        queries = geo_rank_queries(state.timetable, args.queries, args.seed)
    else:
        queries = random_queries(state.timetable, args.queries, args.seed)
    records = run_bench(state, queries, args.algos, verify=args.verify)
    write_csv(records, args.csv)

    summary = summarize(records)
    logger.info(f"Bench summary:\n{summary['algorithms']}")
    for algorithm, factors in summary["reduction"].items():
        logger.info(f"Reduction of {algorithm} relative to tb: {factors}")
    if summary["ordering"] is not None:
        logger.info(f"Queries respecting the search space ordering: {summary['ordering']:.1%}")


def cmd_stats(args):
    state = snapshot.load(args.snapshot, required=("ingest",))
    output = {"stages": state.stages, "timetable": state.timetable.stats()}
    if state.transfers is not None:
        output["transfers"] = len(state.transfers)
    if state.partition is not None:
        layout = build_layout_graph(state.timetable)
        output["levels"] = state.partition.levels
        output["cut_weights"] = cut_weights(layout, state.partition)
    if "customize" in state.stages:
        output["rank_histogram"] = rank_histogram(state.transfers)
        output["overlay_sizes"] = state.overlays.sizes()

    if args.json:
        print(json.dumps(output, indent=2))
    else:
        for key, value in output.items():
            print(f"{key}: {value}")


def run(args):
    workflow = Workflow()
    overrides = {
        key: getattr(args, key, None)
        for key in ("levels", "imbalance", "threads", "buffer", "uturn", "latest_exit")
    }
    if args.command == "partition":
        overrides["seed"] = args.seed
    workflow.configure(local_path=args.configuration, **overrides)

    if args.command == "ingest":
        workflow.ingest(
            args.snapshot, gtfs=args.gtfs, network=args.network, day=args.day, days=args.days
        )
    elif args.command == "gen":
        fields = (
            "stops",
            "lines",
            "trips_per_line",
            "clusters",
            "inter_cluster_fraction",
            "footpath_density",
            "horizon",
            "seed",
        )
        flags = {key: getattr(args, key) for key in fields if getattr(args, key) is not None}
        spec = SyntheticSpec.from_file(args.spec, **flags) if args.spec else SyntheticSpec(flags)
        workflow.generate(args.snapshot, spec)
    elif args.command == "transfers":
        workflow.transfers(args.snapshot)
    elif args.command == "partition":
        workflow.partition(args.snapshot, import_path=args.import_path)
    elif args.command == "customize":
        workflow.customize(args.snapshot)
    elif args.command == "query":
        cmd_query(args)
    elif args.command == "profile":
        cmd_profile(args)
    elif args.command == "bench":
        cmd_bench(args)
    elif args.command == "stats":
        cmd_stats(args)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        run(args)
    except MissingStageError as error:
        logger.error(str(error))
        print(f"missing stage: {error.stage}", file=sys.stderr)
        return 1
    except TrexError as error:
        logger.error(str(error))
        return 1
    except AssertionError as error:
        logger.error(f"Invalid configuration: {error}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
