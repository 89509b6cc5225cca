"""Command-line entry point: run, sweep, validate, report.

Exit codes: 0 success, 1 a bound failed validation, 2 bad configuration,
3 a run failed.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import os
import sys
from importlib import resources
from statistics import fmean

from . import bounds
from .config import ConfigError, apply_overrides, get_dotted, load_config, parse_value, set_dotted
from .harness import (
    SUMMARY_COLUMNS,
    RunConfig,
    aggregate,
    atomic_write,
    phase_stats,
    run_experiment,
    to_csv,
    write_reports,
)

log = logging.getLogger("glovesim")

EXIT_OK, EXIT_BOUND, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def shipped_configs() -> list[str]:
    root = resources.files("glovesim").joinpath("configs")
    return sorted(p.name.rsplit(".", 1)[0] for p in root.iterdir() if p.name.endswith(".yaml"))


def resolve_config(name: str | None) -> dict:
    """A file path, or the name of a shipped config (with or without extension)."""
    if name is None:
        return load_config()
    if os.path.exists(name):
        return load_config(name)
    stem = os.path.basename(name).rsplit(".", 1)[0]
    if stem in shipped_configs():
        text = resources.files("glovesim").joinpath("configs", f"{stem}.yaml").read_text()
        return load_config(text=text)
    raise ConfigError(f"no config file {name!r} (shipped: {', '.join(shipped_configs())})")


def _seeds(args) -> list[int] | None:
    if args.seed_list:
        try:
            return [int(s) for s in args.seed_list.split(",") if s.strip()]
        except ValueError:
            raise ConfigError(f"bad --seed-list {args.seed_list!r}") from None
    if args.seeds is not None:
        if args.seeds < 1:
            raise ConfigError("--seeds must be >= 1")
        return list(range(args.seeds))
    return None


def build_config(args) -> RunConfig:
    raw = apply_overrides(resolve_config(args.config), args.set)
    seeds = _seeds(args)
    if seeds is not None:
        raw["seeds"] = seeds
    return RunConfig.from_dict(raw)


def out_dir(args, default_name: str) -> str:
    if args.out:
        return args.out
    return os.path.join(os.environ.get("GLOVE_OUT", "glove_out"), default_name)


def _print_table(rows, columns) -> None:
    sys.stdout.write(to_csv(rows, columns))


# -- subcommands ---------------------------------------------------------------


def cmd_run(args) -> int:
    cfg = build_config(args)
    reports = run_experiment(cfg, jobs=args.jobs)
    dest = out_dir(args, cfg.raw["name"])
    write_reports(cfg, reports, dest)
    failed = [r for r in reports if r.failed is not None]
    for r in failed:
        print(f"seed {r.seed} failed: {r.failed}", file=sys.stderr)
    if len(failed) < len(reports):
        _print_table([vars(s) for s in aggregate(cfg, reports)], SUMMARY_COLUMNS)
    log.info("reports written to %s", dest)
    return EXIT_RUNTIME if failed else EXIT_OK


def parse_grid(items) -> list[tuple[str, list]]:
    grid = []
    for item in items or ():
        key, sep, values = item.partition("=")
        if not sep or not values:
            raise ConfigError(f"grid entry {item!r} must look like KEY=v1,v2")
        grid.append((key.strip(), [parse_value(v) for v in values.split(",")]))
    return grid


SWEEP_COLUMNS = ("point", "seed", "phase", "success_rate", "mean_score", "mean_probes")


def cmd_sweep(args) -> int:
    base = apply_overrides(resolve_config(args.config), args.set)
    seeds = _seeds(args)
    if seeds is not None:
        base["seeds"] = seeds
    grid = parse_grid(args.grid)
    for key, _ in grid:
        get_dotted(base, key)  # unknown keys fail before anything runs
    rows = []
    failed = 0
    dest = out_dir(args, base["name"] + "-sweep")
    for combo in itertools.product(*[vals for _, vals in grid]):
        raw = json.loads(json.dumps(base))
        label = []
        for (key, _), v in zip(grid, combo):
            set_dotted(raw, key, v)
            label.append(f"{key}={v}")
        point = " ".join(label) or "base"
        cfg = RunConfig.from_dict(raw)
        reports = run_experiment(cfg, jobs=args.jobs)
        failed += sum(r.failed is not None for r in reports)
        ok = [r for r in reports if r.failed is None]
        for r in ok:
            for s in phase_stats(cfg, r):
                rows.append({"point": point, "seed": r.seed, **_stat_fields(s)})
        if ok:
            for s in aggregate(cfg, ok):
                rows.append({"point": point, "seed": "mean", **_stat_fields(s)})
        if args.keep_runs:
            write_reports(cfg, reports, os.path.join(dest, _slug(point)))
    table = to_csv(rows, SWEEP_COLUMNS)
    os.makedirs(dest, exist_ok=True)
    atomic_write(os.path.join(dest, "sweep.csv"), table)
    sys.stdout.write(table)
    return EXIT_RUNTIME if failed else EXIT_OK


def _stat_fields(s) -> dict:
    return {"phase": s.phase, "success_rate": s.success_rate, "mean_score": s.mean_score,
            "mean_probes": s.mean_probes}


def _slug(text: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in text)


def cmd_validate(args) -> int:
    results = []
    if args.bound in ("all", "detection"):
        results += bounds.validate_detection(delta=args.delta, trials=args.detection_trials,
                                             seed=args.seed, epsilon=args.epsilon, jobs=args.jobs)
    if args.bound in ("all", "coverage"):
        results += bounds.validate_coverage(trials=args.coverage_trials, seed=args.seed,
                                            alpha=args.alpha, jobs=args.jobs)
    for r in results:
        print(r.line())
    bad = [r for r in results if not r.passed]
    for r in bad:
        print(f"bound violated at {r.bound} {r.point}", file=sys.stderr)
    return EXIT_BOUND if bad else EXIT_OK


def cmd_report(args) -> int:
    path = args.dir
    summary = os.path.join(path, "summary.csv")
    events = os.path.join(path, "events.jsonl")
    if not os.path.exists(summary):
        raise ConfigError(f"{path} has no summary.csv")
    with open(summary, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    width = max((len(r["phase"]) for r in rows), default=5)
    print(f"{'method':<10} {'phase':<{width}} {'success':>8} {'score':>9} {'probes':>8}")
    for r in rows:
        print(f"{r['method']:<10} {r['phase']:<{width}} {float(r['success_rate']):>8.3f} "
              f"{float(r['mean_score']):>9.3f} {float(r['mean_probes']):>8.3f}")
    if os.path.exists(events):
        kinds: dict[str, int] = {}
        eps = []
        with open(events, encoding="utf-8") as fh:
            for line in fh:
                e = json.loads(line)
                if e.get("type") == "cycle":
                    kinds[e["kind"]] = kinds.get(e["kind"], 0) + 1
                elif e.get("type") == "episode":
                    eps.append(e)
        print("conflict cycles: " + (", ".join(f"{k}={v}" for k, v in sorted(kinds.items())) or "none"))
        if eps:
            print(f"episodes: {len(eps)}  mean probes/episode: {fmean(e['probe_count'] for e in eps):.3f}")
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="glovesim", description="Experience-bank verification under drift.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    # -v is also accepted after the subcommand; SUPPRESS keeps it from resetting the count
    sub_v = {"action": "count", "default": argparse.SUPPRESS}
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="config file or shipped config name")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
        sp.add_argument("--out", help="output directory (default: $GLOVE_OUT/<name>)")
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--seeds", type=int, help="run seeds 0..N-1")
        g.add_argument("--seed-list", help="comma-separated seeds")
        sp.add_argument("--jobs", type=int, default=1)
        sp.add_argument("-v", "--verbose", **sub_v)

    sp = sub.add_parser("run", help="run one configuration over its seeds")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="run the cross-product of a parameter grid")
    common(sp)
    sp.add_argument("--grid", action="append", default=[], metavar="KEY=v1,v2")
    sp.add_argument("--keep-runs", action="store_true", help="also write full reports per grid point")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("validate", help="Monte Carlo checks of the detection and budget bounds")
    sp.add_argument("--bound", choices=("all", "detection", "coverage"), default="all")
    sp.add_argument("--delta", type=float, default=0.05)
    sp.add_argument("--epsilon", type=float, help="force the detection threshold")
    sp.add_argument("--alpha", type=int, help="force the probe budget")
    sp.add_argument("--detection-trials", type=int, default=10_000)
    sp.add_argument("--coverage-trials", type=int, default=5_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("-v", "--verbose", **sub_v)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("report", help="summarise an output directory")
    sp.add_argument("dir")
    sp.add_argument("-v", "--verbose", **sub_v)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, KeyError, TypeError) as exc:
        # bad values that slipped past the schema surface while building the run
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - the exit code is the contract
        log.debug("run failed", exc_info=True)
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
