"""``web3db-sim`` command line entry point."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import vrf
from .errors import Web3DBError
from .orchestrator import (
    STATUS_DENIED,
    STATUS_INCOMPLETE,
    STATUS_NO_MASTER,
    STATUS_OK,
    Simulation,
    SimulationConfig,
    read_keyfile,
    simulate,
    sortition_stats,
    write_keyfile,
)

EXIT_CODES = {STATUS_OK: 0, STATUS_DENIED: 2, STATUS_NO_MASTER: 3, STATUS_INCOMPLETE: 4}
EXIT_ERROR = 1


def _worst_status(statuses) -> str:
    worst = STATUS_OK
    for s in statuses:
        if EXIT_CODES[s] > EXIT_CODES[worst]:
            worst = s
    return worst


def cmd_run(args) -> int:
    config = SimulationConfig.from_dict(json.loads(Path(args.config).read_text()))
    if args.db:
        sim = Simulation(config)
        sim.run_workload()
        report = sim.report()
        sim.save(args.db)
    else:
        report = simulate(config)
    text = report.to_json() + "\n"
    if args.report:
        Path(args.report).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_CODES[_worst_status(lc["status"] for lc in report.data["lifecycles"])]


def cmd_query(args) -> int:
    sim = Simulation.load(args.db)
    keys = read_keyfile(args.user)
    lc = sim.submit(keys, args.sql)
    sim.save(args.db)
    out = {"round": lc.round, "status": lc.status, "error": lc.error}
    if lc.result is not None:
        out["columns"] = list(lc.result.columns)
        out["rows"] = lc.result.json_rows()
    if lc.master_pk is not None:
        out["master"] = sim.node_index[lc.master_pk]
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_CODES[lc.status]


def cmd_sortition_stats(args) -> int:
    stats = sortition_stats(args.nodes, args.rounds, args.weight, args.total)
    print(json.dumps(stats, indent=2, sort_keys=True))
    return 0


def cmd_keygen(args) -> int:
    keys = vrf.keygen(os.urandom(vrf.KEY_SIZE))
    write_keyfile(args.out, keys)
    print(keys.pk.hex())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="web3db-sim", description="Decentralized SQL query simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a configured workload")
    run.add_argument("--config", required=True)
    run.add_argument("--report", help="write the report JSON here instead of stdout")
    run.add_argument("--db", help="also persist the final state to this directory")
    run.set_defaults(func=cmd_run)

    query = sub.add_parser("query", help="run one query against a persisted database")
    query.add_argument("--db", required=True)
    query.add_argument("--user", required=True, help="keyfile written by keygen or run --db")
    query.add_argument("--sql", required=True)
    query.set_defaults(func=cmd_query)

    stats = sub.add_parser("sortition-stats", help="empirical sortition selection rates")
    stats.add_argument("--nodes", type=int, required=True)
    stats.add_argument("--rounds", type=int, required=True)
    stats.add_argument("--weight", type=int, default=1)
    stats.add_argument("--total", type=int)
    stats.set_defaults(func=cmd_sortition_stats)

    keygen = sub.add_parser("keygen", help="write a fresh keypair")
    keygen.add_argument("--out", required=True)
    keygen.set_defaults(func=cmd_keygen)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (Web3DBError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
