"""Command-line entry point: ``delayopt {tune,run,plot,braess,diameter}``."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .experiments import AXES, csv_text, run_braess, run_experiment, summarize, tune_config
from .graph import GraphError, time_diameter
from .svgplot import Series, line_plot

EXIT_OK, EXIT_CONFIG, EXIT_CERT, EXIT_DIVERGED = 0, 2, 3, 4
AXIS_LABELS = {"time": "continuous time", "updates": "accepted updates in the graph", "energy": "energy spent"}
AXIS_METRIC = {"updates": "updates_accepted", "energy": "energy"}


def _parse_seeds(text: str | None):
    if text is None:
        return None
    text = text.strip()
    if "," in text or text.startswith("["):
        return [int(s) for s in text.strip("[]").split(",") if s.strip()]
    return list(range(int(text)))


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get("DELAYOPT_OUT", "delayopt_out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_tune(args) -> int:
    cfg = load_config(args.config)
    net = cfg.build_network()
    tp = tune_config(cfg, net)
    text = tp.report(net.graph)
    print(text)
    if args.out or os.environ.get("DELAYOPT_OUT"):
        out = _out_dir(args)
        (out / f"{cfg.name}_tune.txt").write_text(text + "\n")
        params = {"K_comm": tp.K_comm.tolist(), "K_comp": tp.K_comp.tolist(), "gamma": tp.gamma,
                  "tau_max": tp.tau_max, "rho": tp.rho, "mean_stable": tp.mean_stable,
                  "capacity_feasible": tp.capacity_feasible}
        (out / f"{cfg.name}_params.json").write_text(json.dumps(params, indent=2) + "\n")
    return EXIT_OK if tp.certified else EXIT_CERT


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    results = run_experiment(cfg, _parse_seeds(args.seeds), args.mode, args.workers)
    out = _out_dir(args)
    path = out / f"{cfg.name}.csv"
    path.write_text(csv_text(results))
    summary = summarize(results)
    (out / f"{cfg.name}_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    for kind, agg in summary["aggregate"].items():
        print(f"{kind}: final err2 {agg['final_err2_mean']:.6g} +- {agg['final_err2_se']:.3g} over {agg['runs']} runs")
    print(f"wrote {path}")
    if any(r.diverged for r in results):
        print("divergence detected in: " + ", ".join(f"{r.kind}/seed {r.seed}" for r in results if r.diverged),
              file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def read_csv(path) -> dict:
    """``{(kind, seed): {metric: (times, values)}}`` from a trace CSV."""
    data: dict = defaultdict(lambda: defaultdict(lambda: ([], [])))
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["kind", "seed", "time", "metric", "value"]:
            raise ConfigError(f"{path}: not a trace CSV")
        for row in reader:
            t, v = data[(row["kind"], int(row["seed"]))][row["metric"]]
            t.append(float(row["time"]))
            v.append(float(row["value"]))
    return {k: {m: (np.array(t), np.array(v)) for m, (t, v) in d.items()} for k, d in data.items()}


def plot_series(paths, x_axis: str, metric: str = "err2", bound: bool = False) -> list[Series]:
    """Mean and standard error over seeds, one series per (file, kind)."""
    series = []
    metric_sets = []
    for p in paths:
        data = read_csv(p)
        metric_sets.append(frozenset(m for d in data.values() for m in d))
        kinds = sorted({k for k, _ in data})
        for kind in kinds:
            runs = [d for (k, _), d in sorted(data.items()) if k == kind]
            if any(metric not in d for d in runs):
                raise ConfigError(f"{p}: metric {metric!r} missing for kind {kind!r}")
            label = f"{Path(p).stem}:{kind}" if len(paths) > 1 else kind
            for name, dashed in ((metric, False),) + ((("bound_rhs", True),) if bound else ()):
                if name not in runs[0]:
                    continue
                t = runs[0][name][0]
                vals = np.array([d[name][1] for d in runs])
                if x_axis == "time":
                    x = t
                else:
                    xm = AXIS_METRIC[x_axis]
                    tx = runs[0][xm][0]
                    x = np.interp(t, tx, np.mean([d[xm][1] for d in runs], axis=0))
                mean = vals.mean(axis=0)
                se = vals.std(axis=0, ddof=1) / np.sqrt(len(runs)) if len(runs) > 1 else np.zeros_like(mean)
                series.append(Series(label if name == metric else f"{label} bound", x, mean,
                                     None if dashed else se, dashed))
    if len(set(metric_sets)) > 1:
        raise ConfigError("input files carry different metric sets")
    return series


def cmd_plot(args) -> int:
    series = plot_series(args.csv, args.x_axis, args.metric, args.bound)
    svg = line_plot(series, AXIS_LABELS[args.x_axis], args.metric)
    out = Path(args.output) if args.output else _out_dir(args) / f"plot_{args.x_axis}.svg"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(svg)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_braess(args) -> int:
    cfg = load_config(args.config)
    try:
        rep = run_braess(cfg, _parse_seeds(args.seeds), args.mode, args.workers)
    except GraphError as exc:
        print(f"sparsification refused: {exc}", file=sys.stderr)
        return EXIT_CERT
    out = _out_dir(args)
    csv_path = out / f"{cfg.name}_braess.csv"
    csv_path.write_text(csv_text(rep.results))
    text = rep.text()
    (out / f"{cfg.name}_braess.txt").write_text(text + "\n")
    print(text)
    for axis in AXES:
        svg = line_plot(plot_series([csv_path], axis), AXIS_LABELS[axis], "err2", f"{cfg.name}: dense vs pruned")
        (out / f"{cfg.name}_braess_{axis}.svg").write_text(svg)
    print(f"wrote {csv_path}")
    if any(r.diverged for r in rep.results):
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_diameter(args) -> int:
    cfg = load_config(args.config)
    net = cfg.build_network()
    print(repr(time_diameter(net.graph, net.delays)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="delayopt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seeds=True):
        p.add_argument("--config", required=True, help="YAML file or preset name")
        p.add_argument("--out", help="output directory (default $DELAYOPT_OUT or ./delayopt_out)")
        if seeds:
            p.add_argument("--seeds", help="seed count N (seeds 0..N-1) or comma-separated list")
            p.add_argument("--mode", choices=["oracle", "protocol"], help="gossip scheduling mode")
            p.add_argument("--workers", type=int, default=1, help="parallel worker processes")

    common(sub.add_parser("tune", help="print step sizes and certificates"), seeds=False)
    common(sub.add_parser("run", help="simulate and write a trace CSV"))
    common(sub.add_parser("braess", help="sparsify and compare dense vs pruned graphs"))
    common(sub.add_parser("diameter", help="print the time diameter"), seeds=False)
    p = sub.add_parser("plot", help="plot trace CSVs to SVG")
    p.add_argument("csv", nargs="+")
    p.add_argument("--x-axis", choices=list(AXES), default="time")
    p.add_argument("--metric", default="err2")
    p.add_argument("--bound", action="store_true", help="overlay bound_rhs as a dashed series")
    p.add_argument("--output", help="SVG path")
    p.add_argument("--out", help="output directory when --output is not given")
    return parser


COMMANDS = {"tune": cmd_tune, "run": cmd_run, "plot": cmd_plot, "braess": cmd_braess, "diameter": cmd_diameter}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, GraphError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
