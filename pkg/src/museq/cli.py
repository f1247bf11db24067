"""Command-line front end.

Subcommands: simulate, allocate, fit-duration, fit-noshow, size-kiosks,
replay, report. Every module error maps to a distinct diagnostic and a
nonzero exit status; the MUSEQ_OUT environment variable supplies the
default output directory.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import persist, reports
from .allocator import solve_allocation
from .durations import fit_duration_matrix
from .errors import ConfigError, MuseqError, ParseError
from .kiosk import KioskFleet, min_kiosks, worst_case_wait
from .mapek import replay_log, tickets_from_events, visits_from_events
from .noshow import daily_rate_from_counts, fit_noshow
from .scenario import PolicyConfig, default_scenario, load_scenario
from .simulator import build_knowledge_base, run_days

EXIT_OK = 0
EXIT_PARSE = 3
EXIT_PRECONDITION = 4


def _out_dir(args, required: bool = True) -> Path | None:
    out = args.out or os.environ.get("MUSEQ_OUT")
    if out is None:
        if required:
            raise ConfigError("no output directory; pass --out or set MUSEQ_OUT")
        return None
    return Path(out)


def _load_cfg(args):
    cfg = load_scenario(args.scenario) if args.scenario else default_scenario()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "policy", None):
        cfg = replace(
            cfg, policy=replace(cfg.policy, release=args.policy)
        )
    return cfg


def cmd_simulate(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    kb = build_knowledge_base(cfg)
    results = []
    from .simulator import run_day

    for day in range(args.days):
        results.append(run_day(cfg, kb=kb, day_index=day))
    bundle = reports.write_bundle(out, cfg, results, kb)
    for res in results:
        rate = res.noshows / res.issued if res.issued else float("nan")
        print(
            f"day {res.day_index}: issued={res.issued} shows={res.shows} "
            f"noshows={res.noshows} noshow_rate={rate:.4f} "
            f"rejections={res.rejections}"
        )
    print(f"bundle: {bundle}")
    return EXIT_OK


def cmd_allocate(args) -> int:
    problem = persist.load_problem(args.problem)
    plan = solve_allocation(problem)
    text = persist.plan_to_text(plan)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"plan: {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_fit_duration(args) -> int:
    cfg = load_scenario(args.scenario) if args.scenario else default_scenario()
    events = persist.load_events(args.events)
    visits = visits_from_events(events)
    matrix = fit_duration_matrix(
        visits,
        cfg.grid,
        d_max=cfg.d_max,
        min_row_samples=cfg.min_row_samples,
        classes=cfg.classes,
    )
    persist.write_duration_matrix(matrix, args.out)
    print(f"duration matrix: {args.out} ({len(visits)} visits)")
    return EXIT_OK


def cmd_fit_noshow(args) -> int:
    if args.table3 or (args.events and args.events.endswith(".csv")):
        path = args.events or str(_bundled_table3())
        rows = _read_count_table(path)
        for date, issued, noshow in rows:
            rate = daily_rate_from_counts(issued, noshow)
            print(f"{date},{issued},{noshow},{rate:.4f}")
        return EXIT_OK
    cfg = load_scenario(args.scenario) if args.scenario else default_scenario()
    events = persist.load_events(args.events)
    tickets = tickets_from_events(events)
    model = fit_noshow(tickets, cfg.noshow_bucket_edges)
    persist.write_noshow_model(model, args.out)
    print(f"noshow model: {args.out} ({len(tickets)} tickets)")
    return EXIT_OK


def _bundled_table3() -> Path:
    return Path(__file__).parent / "data" / "table3_noshow.csv"


def _read_count_table(path) -> list[tuple[str, int, int]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != "date,issued,no_show":
        raise ParseError("expected header 'date,issued,no_show'", line=1)
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            date, issued, noshow = line.split(",")
            rows.append((date, int(issued), int(noshow)))
        except ValueError as exc:
            raise ParseError(f"bad count row: {exc}", line=lineno) from exc
    return rows


def cmd_size_kiosks(args) -> int:
    k = min_kiosks(args.arrivals, args.service_time, args.max_wait)
    print(k)
    print("k,worst_wait_s,within_limit")
    for kk in (max(k - 1, 1), k, k + 1):
        wait = worst_case_wait(args.arrivals, KioskFleet(kk, args.service_time))
        verdict = "yes" if wait <= args.max_wait else "no"
        print(f"{kk},{wait:.1f},{verdict}")
    return EXIT_OK


def cmd_replay(args) -> int:
    cfg = _load_cfg(args)
    events = persist.load_events(args.events)
    kb = build_knowledge_base(cfg)
    trace = replay_log(kb, events)
    out = _out_dir(args, required=False)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "replay_trace.csv", "w", encoding="utf-8") as fh:
            fh.write("boundary,verdict,version,feasible,available_total\n")
            for row in trace:
                fh.write(
                    f"{row['boundary']},{row['verdict']},{row['version']},"
                    f"{str(row['feasible']).lower()},{row['available_total']}\n"
                )
        print(f"trace: {out / 'replay_trace.csv'}")
    print(f"events: {len(events)}")
    print(f"final_version: {kb.version}")
    print(f"state_digest: {kb.state_digest()}")
    return EXIT_OK


def cmd_report(args) -> int:
    out = _out_dir(args)
    written = reports.emit_report(args.bundle, out)
    print(f"report: {written}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="museq",
        description="Occupancy-constrained ticket-slot allocation, kiosk "
        "sizing, and adaptive queue management with a built-in simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run simulated days, emit a bundle")
    sim.add_argument("--scenario", help="scenario YAML (default: built-in)")
    sim.add_argument("--seed", type=int, help="override the scenario seed")
    sim.add_argument("--days", type=int, default=1)
    sim.add_argument("--policy", choices=("all_at_open", "spread_over_day"))
    sim.add_argument("--out", help="bundle directory (or MUSEQ_OUT)")
    sim.set_defaults(func=cmd_simulate)

    alloc = sub.add_parser("allocate", help="solve an allocation problem file")
    alloc.add_argument("--problem", required=True)
    alloc.add_argument("--out", help="plan file; stdout when omitted")
    alloc.set_defaults(func=cmd_allocate)

    fd = sub.add_parser("fit-duration", help="fit a duration matrix from an event log")
    fd.add_argument("--events", required=True)
    fd.add_argument("--scenario", help="grid/classes source (default: built-in)")
    fd.add_argument("--out", required=True)
    fd.set_defaults(func=cmd_fit_duration)

    fn = sub.add_parser(
        "fit-noshow",
        help="fit a no-show model from an event log, or rate a count table",
    )
    fn.add_argument("--events", help="event log, or a date,issued,no_show CSV")
    fn.add_argument("--table3", action="store_true", help="use the bundled fixture")
    fn.add_argument("--scenario")
    fn.add_argument("--out")
    fn.set_defaults(func=cmd_fit_noshow)

    sk = sub.add_parser("size-kiosks", help="smallest fleet meeting a wait bound")
    sk.add_argument("arrivals", type=int, help="peak simultaneous arrivals")
    sk.add_argument("service_time", type=float, help="seconds per booking")
    sk.add_argument("max_wait", type=float, help="worst-case wait bound, seconds")
    sk.set_defaults(func=cmd_size_kiosks)

    rp = sub.add_parser("replay", help="fold an event log into a knowledge base")
    rp.add_argument("--events", required=True)
    rp.add_argument("--scenario")
    rp.add_argument("--seed", type=int)
    rp.add_argument("--out")
    rp.set_defaults(func=cmd_replay)

    rep = sub.add_parser("report", help="summary tables from a bundle")
    rep.add_argument("--bundle", required=True)
    rep.add_argument("--out")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"museq: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ConfigError as exc:
        print(f"museq: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except FileNotFoundError as exc:
        print(f"museq: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_PARSE
    except MuseqError as exc:
        print(f"museq: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
