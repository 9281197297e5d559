"""
Command-line front end::

    rrcslice run       --scenario S.cfg --out DIR [--seed N] [--mode det|bench]
    rrcslice benchmark --scenario S.cfg --out DIR
    rrcslice oracle    --scenario S.cfg [--trace T.csv] [--ue ID] [--out DIR]
    rrcslice validate  --scenario S.cfg

Exit status is 0 on success, 1 when the scenario is rejected and 2 on I/O
errors. ``CIOT_SIM_THREADS`` caps how many slices run concurrently in the
benchmark.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .errors import InvalidScenario
from .qlearn import ACTIONS
from .scenario import Scenario, load_scenario

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2
ORACLE_HEADER = ("rank", "action", "idx_c", "idx_on", "idx_in", "n_c", "n_on", "n_in", "f_ed")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rrcslice",
                                description="RAN slicing simulator with learned DRX settings")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, need_out=False):
        sp.add_argument("--scenario", required=True, type=Path, help="scenario file")
        sp.add_argument("--out", type=Path, required=need_out, help="output directory")
        sp.add_argument("--seed", type=int, help="override the scenario seed")
        sp.add_argument("--mode", choices=("det", "bench"), help="override the scenario mode")
        sp.add_argument("--quiet", action="store_true", help="suppress the summary")
        sp.add_argument("-v", "--verbose", action="count", default=0)

    common(sub.add_parser("run", help="simulate a scenario"), need_out=True)
    common(sub.add_parser("benchmark", help="time slice procedures"), need_out=True)
    o = sub.add_parser("oracle", help="replay a trace under every action")
    common(o)
    o.add_argument("--trace", type=Path, help="trace CSV (ue_id, arrival_ms, size_bytes)")
    o.add_argument("--ue", type=int, help="UE whose trace to replay (default: lowest id)")
    common(sub.add_parser("validate", help="check a scenario file"))
    return p


def _scenario(args) -> Scenario:
    sc = load_scenario(args.scenario)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.mode is not None:
        changes["mode"] = args.mode
    return replace(sc, **changes) if changes else sc


def _cmd_run(args, out) -> int:
    from .sim import run
    sc = _scenario(args)
    rep = run(sc, args.out)
    if not args.quiet:
        print(rep.summary(), file=out)
        print(f"outputs           : {args.out}", file=out)
    return EXIT_OK


def _cmd_benchmark(args, out) -> int:
    from .bench import benchmark_rows, benchmark_slicing, format_table
    from .sim import BENCHMARK_HEADER, _atomic_write, begin_report
    sc = replace(_scenario(args), mode="bench")
    dest = begin_report(args.out, sc)
    table = benchmark_slicing(list(sc.bench.slice_counts), sc.bench.repetitions)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCHMARK_HEADER)
    w.writerows(benchmark_rows(table))
    _atomic_write(dest / "benchmark.csv", buf.getvalue())
    meta = json.loads((dest / "run_meta.json").read_text())
    meta["status"] = "complete"
    _atomic_write(dest / "run_meta.json", json.dumps(meta, indent=2) + "\n")
    if not args.quiet:
        print(format_table(table), file=out)
    return EXIT_OK


def _cmd_oracle(args, out) -> int:
    from .sim import oracle_sweep
    from .traffic import generate_trace, read_trace
    sc = _scenario(args)
    if args.trace is not None:
        traces = read_trace(args.trace)
        if not traces:
            raise InvalidScenario("trace", "trace file holds no packets")
    else:
        traces = {u.ue_id: generate_trace(u.schedule, sc.duration, sc.seed, u.ue_id)
                  for u in sc.ues}
        if not traces:
            raise InvalidScenario("ues", "scenario has no UE to generate a trace for")
    ue = args.ue if args.ue is not None else min(traces)
    if ue not in traces:
        raise InvalidScenario("ue", f"no trace for ue {ue}")
    values = oracle_sweep(traces[ue], sc.controller, sc.service_rate)
    # descending by f_ED; equal values keep the lowest action first
    order = sorted(range(len(ACTIONS)), key=lambda i: (-values[i], i))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ORACLE_HEADER)
    for rank, i in enumerate(order, 1):
        a = ACTIONS[i]
        p = a.to_params()
        w.writerow((rank, i, a.idx_c, a.idx_on, a.idx_in, p.n_c, p.n_on, p.n_in,
                    repr(float(values[i]))))
    if args.out is not None:
        from .sim import _atomic_write
        args.out.mkdir(parents=True, exist_ok=True)
        _atomic_write(args.out / "oracle.csv", buf.getvalue())
        if not args.quiet:
            best = ACTIONS[order[0]]
            print(f"best action ({best.idx_c},{best.idx_on},{best.idx_in}) "
                  f"f_ED {values[order[0]]:.4f}; table in {args.out / 'oracle.csv'}", file=out)
    else:
        out.write(buf.getvalue())
    return EXIT_OK


def _cmd_validate(args, out) -> int:
    sc = _scenario(args)
    if not args.quiet:
        print(f"{args.scenario}: ok ({len(sc.slices)} slices, {len(sc.ues)} UEs, "
              f"{sc.duration} ms)", file=out)
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "benchmark": _cmd_benchmark, "oracle": _cmd_oracle,
            "validate": _cmd_validate}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, out)
    except InvalidScenario as exc:
        print(f"error: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
