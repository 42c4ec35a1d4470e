"""Command-line front end for single runs and adaptive/static comparisons.

Exit codes: 0 success, 2 invalid scenario or arguments, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from adaptsim import __version__
from adaptsim.arch_graph import to_dot, validate
from adaptsim.errors import AdaptSimError
from adaptsim.scenario import load_scenario
from adaptsim.sim_engine import SimTrace, compare, run

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2
MODES = ("adaptive", "static", "compare")
EVENTS_CSV_HEADER = ("time_s", "link", "gr_a", "gr_b", "rate")
REPORT_CSV_HEADER = (
    "seed", "node", "static_s", "adaptive_s", "delta_s", "delta_min", "delta_pct",
)


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    out_dir: Path
    mode: str = "compare"
    seeds: tuple = ()
    style: Optional[str] = None
    curves: bool = True
    jobs: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if len(self.seeds) < 1:
            raise ValueError("at least one seed is required")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    @classmethod
    def from_range(cls, scenario, out_dir, mode, base_seed, count, **kw) -> "RunConfig":
        if count < 1:
            raise ValueError("seed count must be >= 1")
        return cls(scenario, Path(out_dir), mode, tuple(range(base_seed, base_seed + count)), **kw)


def emit_curves(trace: SimTrace, path) -> Path:
    """Write ``time_s`` plus one energy column per node, unresampled."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("time_s", *trace.node_ids))
        for t, row in zip(trace.time.tolist(), trace.energy.tolist()):
            w.writerow((repr(t), *map(repr, row)))
    return path


def write_events(trace: SimTrace, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENTS_CSV_HEADER)
        for t, lid, a, b, r in trace.events:
            w.writerow((repr(t), lid, repr(a), repr(b), repr(r)))
    return path


def _stem(trace: SimTrace) -> str:
    m = trace.meta
    return f"{m['scenario']}_seed{m['seed']}_{'adaptive' if m['adaptive'] else 'static'}"


def write_trace(trace: SimTrace, out_dir: Path, curves: bool = True) -> list:
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = out_dir / _stem(trace)
    paths = [Path(f"{stem}_nodes.csv"), Path(f"{stem}_links.csv")]
    trace.write_nodes_csv(paths[0])
    trace.write_links_csv(paths[1])
    paths.append(write_events(trace, f"{stem}_events.csv"))
    if curves:
        paths.append(emit_curves(trace, f"{stem}_curves.csv"))
    return paths


def _one(args) -> SimTrace:
    # top-level so it pickles for the process pool
    config, seed, adaptive = args
    scenario = load_scenario(config.scenario, style=config.style).with_seed(seed).with_adaptive(adaptive)
    trace = run(scenario)
    write_trace(trace, config.out_dir, config.curves)
    return trace


def _map(fn, items, jobs):
    if jobs == 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def run_single(config: RunConfig) -> list:
    """Adaptive-only or static-only runs: one trace per seed, no report."""
    adaptive = config.mode == "adaptive"
    return _map(_one, [(config, s, adaptive) for s in config.seeds], config.jobs)


@dataclass
class BatchReport:
    reports: list = field(default_factory=list)  # LifetimeReport per seed

    @property
    def node_ids(self) -> list:
        return sorted(self.reports[0].nodes) if self.reports else []

    def deltas(self, node: str, attr: str = "delta_percent") -> list:
        return [getattr(r.nodes[node], attr) for r in self.reports]

    def median_percent(self, node: str) -> float:
        return statistics.median(self.deltas(node))

    def median_minutes(self, node: str) -> float:
        return statistics.median(self.deltas(node, "delta_seconds")) / 60.0

    def fraction_positive(self, node: str) -> float:
        d = self.deltas(node, "delta_seconds")
        return sum(x > 0 for x in d) / len(d)

    def summary_rows(self) -> list:
        return [
            (n, self.median_minutes(n), self.median_percent(n), self.fraction_positive(n))
            for n in self.node_ids
        ]


def write_report(batch: BatchReport, out_dir: Path) -> tuple:
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path, txt_path = out_dir / "report.csv", out_dir / "report.txt"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_CSV_HEADER)
        for rep in batch.reports:
            for node, st, ad, ds, dp in rep.rows():
                w.writerow((rep.seed, node, repr(st), repr(ad), repr(ds), repr(ds / 60.0), repr(dp)))
        for node, mins, pct, frac in batch.summary_rows():
            w.writerow(("median", node, "", "", repr(mins * 60.0), repr(mins), repr(pct)))
    lines = [f"Lifetime gain of adaptive over static operation, {len(batch.reports)} seed(s)", ""]
    lines.append(f"{'seed':>6} {'node':<6} {'static min':>11} {'adaptive min':>13} {'gain min':>9} {'gain %':>8}")
    for rep in batch.reports:
        for node, st, ad, ds, dp in rep.rows():
            lines.append(f"{rep.seed:>6} {node:<6} {st / 60:>11.1f} {ad / 60:>13.1f} {ds / 60:>9.1f} {dp:>8.2f}")
    lines += ["", f"{'node':<6} {'median gain min':>16} {'median gain %':>14} {'seeds with gain':>16}"]
    for node, mins, pct, frac in batch.summary_rows():
        lines.append(f"{node:<6} {mins:>16.1f} {pct:>14.2f} {frac:>16.0%}")
    txt_path.write_text("\n".join(lines) + "\n")
    return txt_path, csv_path


def run_compare(config: RunConfig) -> BatchReport:
    """Adaptive and static run per seed, both traces written, then one report."""
    jobs = [(config, s, a) for s in config.seeds for a in (True, False)]
    traces = _map(_one, jobs, config.jobs)
    batch = BatchReport([compare(traces[i], traces[i + 1]) for i in range(0, len(traces), 2)])
    write_report(batch, config.out_dir)
    return batch


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True, help="scenario file, or a bundled name such as ema4")
    common.add_argument("--style", choices=("direct", "mediated"), help="override the scenario's refinement style")

    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--seed", type=int, help="base seed (default: the scenario's seed)")
    sim.add_argument("--seeds", type=int, default=1, metavar="N", help="run N consecutive seeds")
    sim.add_argument("--out", default=os.environ.get("ADAPTSIM_OUT", "adaptsim-out"), metavar="DIR",
                     help="output directory (default: $ADAPTSIM_OUT or ./adaptsim-out)")
    sim.add_argument("--jobs", type=int, default=1, help="worker processes for batch seeds")
    sim.add_argument("--no-curves", action="store_true", help="skip the per-node energy curve CSVs")

    p = argparse.ArgumentParser(prog="adaptsim", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common, sim], help="adaptive-only or static-only runs")
    mode = r.add_mutually_exclusive_group()
    mode.add_argument("--adaptive", dest="mode", action="store_const", const="adaptive")
    mode.add_argument("--static", dest="mode", action="store_const", const="static")
    r.set_defaults(mode=None)

    sub.add_parser("compare", parents=[common, sim], help="adaptive vs static lifetime report")
    sub.add_parser("validate", parents=[common], help="check a scenario file and its refined graph")
    d = sub.add_parser("export-dot", parents=[common], help="write the refined graph in dot format")
    d.add_argument("--out", metavar="FILE", help="output file (default: stdout)")
    return p


def _config(args, scenario, mode) -> RunConfig:
    base = scenario.seed if args.seed is None else args.seed
    return RunConfig.from_range(
        args.scenario, args.out, mode, base, args.seeds,
        style=args.style, curves=not args.no_curves, jobs=args.jobs,
    )


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    try:
        scenario = load_scenario(args.scenario, style=args.style)
    except AdaptSimError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        if args.command == "validate":
            problems = validate(scenario.graph)
            for v in problems:
                print(f"{v.code}: {v.element}: {v.message}", file=sys.stderr)
            if problems:
                return EXIT_INVALID
            print(f"{args.scenario}: ok ({len(scenario.graph.nodes)} nodes, "
                  f"{len(scenario.graph.inter_links())} inter-node links, {scenario.graph.style.value})")
            return EXIT_OK
        if args.command == "export-dot":
            dot = to_dot(scenario.graph)
            if args.out:
                Path(args.out).write_text(dot)
            else:
                sys.stdout.write(dot)
            return EXIT_OK
        if args.seeds < 1 or args.jobs < 1:
            print("error: --seeds and --jobs must be >= 1", file=sys.stderr)
            return EXIT_INVALID
        if args.command == "run":
            mode = args.mode or ("adaptive" if scenario.adaptive else "static")
            run_single(_config(args, scenario, mode))
            print(f"wrote {args.seeds} {mode} trace set(s) to {args.out}")
            return EXIT_OK
        run_compare(_config(args, scenario, "compare"))
        print((Path(args.out) / "report.txt").read_text(), end="")
        return EXIT_OK
    except (AdaptSimError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
