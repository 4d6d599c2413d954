"""Command-line front end: run, compare, validate, sweep."""

from __future__ import annotations

import argparse
import json
import logging
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import BUNDLED, ConfigError, ScenarioConfig, load_config, precheck
from .report import build_report, compare, format_compare, format_text, to_json
from .simkernel import InvariantError
from .topology import Network

EXIT_CONFIG = 1
EXIT_BMCA = 3
EXIT_INVARIANT = 4


def _add_scenario_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("scenario", nargs="?", help=f"config file or bundled scenario ({', '.join(BUNDLED)})")
    p.add_argument("--config", help="path to a scenario config (same as the positional argument)")
    p.add_argument("--seed", type=int)
    p.add_argument("--endpoints", type=int)
    p.add_argument("--channel", choices=["ideal", "fading"])
    p.add_argument("--scheduler", choices=["maxci", "pf", "rr"])


def _load(args) -> ScenarioConfig:
    source = args.config or args.scenario
    if source is None:
        raise ConfigError(["<cli>: give a scenario name or --config PATH"])
    return load_config(
        source,
        seed=args.seed,
        endpoints=args.endpoints,
        channel=args.channel,
        scheduler=getattr(args, "scheduler", None),
    )


def simulate(cfg: ScenarioConfig, *, grant_trace: bool = False) -> tuple[Network, dict]:
    net = Network(cfg, grant_trace=grant_trace)
    net.run()
    return net, build_report(net)


def _cmd_run(args) -> int:
    cfg = _load(args)
    bmca = precheck(cfg)
    if not bmca.ok:
        for e in bmca.errors:
            print(f"clock hierarchy: {e.code}: {e.message}", file=sys.stderr)
        if not args.force:
            print("aborting (use --force to run anyway)", file=sys.stderr)
            return EXIT_BMCA
    net, report = simulate(cfg, grant_trace=args.grant_trace)
    text = format_text(report)
    print(text, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(to_json(report))
        (out / "report.txt").write_text(text)
        for d in net.dstt:
            d.write_residence_csv(out / f"residence_{d.endpoint_id}.csv")
        if args.lineage_dump:
            net.write_lineage_csv(out / "lineage.csv")
        if args.grant_trace:
            net.write_grant_trace(out / "grant_trace.csv")
    return 0


def _report_for(source: str, args) -> dict:
    p = Path(source)
    if p.is_file() and p.suffix == ".json":
        data = json.loads(p.read_text())
        if "flows" in data and "residence" in data:
            return data
    cfg = load_config(source, seed=args.seed)
    return simulate(cfg)[1]


def _cmd_compare(args) -> int:
    a, b = _report_for(args.a, args), _report_for(args.b, args)
    cmp = compare(a, b)
    print(format_compare(cmp), end="")
    if args.out:
        Path(args.out).write_text(json.dumps(cmp, sort_keys=True, indent=2) + "\n")
    return 0


def _cmd_validate(args) -> int:
    cfg = _load(args)
    report = precheck(cfg)
    print(f"config {cfg.name}: schema ok, {cfg.endpoint_count} endpoint(s), scheduler {cfg.ran.scheduler.value}")
    print(json.dumps(report.as_dict(), indent=2, sort_keys=True))
    return 0 if report.ok else EXIT_BMCA


def _sweep_one(job: tuple[dict, int]) -> dict:
    data, seed = job
    cfg = ScenarioConfig.model_validate({**data, "seed": seed})
    report = simulate(cfg)[1]
    return {
        "seed": seed,
        "delivered": {k: v["delivered"] for k, v in report["flow_totals"].items()},
        "mean_delay_ns": {k: v["delay_after_warmup"].get("mean_ns") for k, v in report["flow_totals"].items()},
        "residence_spread_ns": report["residence"]["all"].get("spread_ns"),
        "residence_mean_ns": report["residence"]["all"].get("mean_ns"),
        "violations": report["af"]["violation_count"],
        "dropped": report["components"]["dropped_total"],
    }


def _summary(values: list) -> dict:
    values = [v for v in values if v is not None]
    if not values:
        return {"count": 0}
    return {
        "count": len(values),
        "min": min(values),
        "max": max(values),
        "mean": round(statistics.fmean(values), 3),
        "stdev": round(statistics.stdev(values), 3) if len(values) > 1 else 0.0,
    }


def _cmd_sweep(args) -> int:
    cfg = _load(args)
    seeds = list(range(args.seed_start, args.seed_start + args.seeds))
    data = cfg.model_dump(mode="json")
    jobs = [(data, s) for s in seeds]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            runs = list(pool.map(_sweep_one, jobs))
    else:
        runs = [_sweep_one(j) for j in jobs]
    flows = sorted(runs[0]["delivered"]) if runs else []
    aggregate = {
        "scenario": cfg.name,
        "seeds": seeds,
        "runs": runs,
        "delivered": {f: _summary([r["delivered"][f] for r in runs]) for f in flows},
        "mean_delay_ns": {f: _summary([r["mean_delay_ns"][f] for r in runs]) for f in flows},
        "residence_spread_ns": _summary([r["residence_spread_ns"] for r in runs]),
        "violations": _summary([r["violations"] for r in runs]),
    }
    for f in flows:
        d, m = aggregate["delivered"][f], aggregate["mean_delay_ns"][f]
        print(f"{f:>14}: delivered {d['mean']} (min {d['min']}, max {d['max']}); mean delay {m.get('mean')} ns")
    s = aggregate["residence_spread_ns"]
    print(f"residence spread: min {s.get('min')} ns, max {s.get('max')} ns over {len(runs)} seed(s)")
    if args.out:
        Path(args.out).write_text(json.dumps(aggregate, sort_keys=True, indent=2) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsnbridge", description="5G logical TSN bridge simulator")
    parser.add_argument("-v", "--verbose", action="store_true", help="log component warnings")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one simulation")
    _add_scenario_args(run)
    run.add_argument("--out", help="directory for report.json, report.txt and residence CSVs")
    run.add_argument("--lineage-dump", action="store_true", help="write per-packet lineage.csv")
    run.add_argument("--grant-trace", action="store_true", help="write per-slot grant_trace.csv")
    run.add_argument("--force", action="store_true", help="run even if the clock hierarchy is invalid")
    run.set_defaults(func=_cmd_run)

    cmp = sub.add_parser("compare", help="compare two reports or scenarios")
    cmp.add_argument("a", help="report.json or scenario")
    cmp.add_argument("b", help="report.json or scenario")
    cmp.add_argument("--seed", type=int)
    cmp.add_argument("--out", help="write the comparison as JSON")
    cmp.set_defaults(func=_cmd_compare)

    val = sub.add_parser("validate", help="check a config and its clock hierarchy")
    _add_scenario_args(val)
    val.set_defaults(func=_cmd_validate)

    sweep = sub.add_parser("sweep", help="run a range of seeds and aggregate")
    _add_scenario_args(sweep)
    sweep.add_argument("--seed-start", type=int, default=1)
    sweep.add_argument("--seeds", type=int, default=5, help="number of seeds")
    sweep.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    sweep.add_argument("--out", help="write the aggregate as JSON")
    sweep.set_defaults(func=_cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        for line in exc.errors:
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantError as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
