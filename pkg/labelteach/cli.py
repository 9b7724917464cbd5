#!/usr/bin/env python3
"""
labelteach/cli.py

Command-line front door.

  gen-data        build the configured pool and save it (.npz)
  teach           run a greedy / theory teacher over every seed; trace CSVs + SVG charts
  train-teacher   train a parameterized teacher; checkpoint + training log CSV
  eval-teacher    roll a trained teacher and plain SGD from a frozen init (batch sizes 1 and 128)
  theorem-suite   executable convergence checks (et, armijo, super_et, monotonicity, cost)
  plot            chart trace CSVs against iterations or wall time

Every command prints its resolved config banner to stdout before running.

Exit codes: 0 success, 1 invalid config / input / missing file, 2 runtime failure.

Run:
  python -m labelteach teach --config data/lsr.cfg --set teacher.kind=last_nc --seed 7
"""

import argparse
import difflib
import re
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from labelteach import console
from labelteach.config import ExperimentConfig
from labelteach.console import log, stdout
from labelteach.data import save_pool
from labelteach.errors import ConfigError, DataFormatError, LabelTeachError
from labelteach.harness import aggregate, build_pool, eval_teacher, run_teaching, train_teacher
from labelteach.param_teachers import EVAL_BATCH_SIZES
from labelteach.reporting import (
    ChartAxes,
    Curve,
    print_table,
    read_csv,
    write_csv,
    write_rows,
    write_svg_chart,
)
from labelteach.teacher_net import load_checkpoint, save_checkpoint
from labelteach.theorems import SUITES, theorem_suite

COMMANDS = ("gen-data", "teach", "train-teacher", "eval-teacher", "theorem-suite", "plot")
EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, with close-match hints for flags."""

    def error(self, message: str):
        hint = ""
        if "unrecognized arguments" in message:
            known = [s for a in self._actions for s in a.option_strings]
            bad = message.split(":", 1)[1].split()
            near = sorted({m for b in bad for m in difflib.get_close_matches(b.split("=")[0], known, n=2)})
            if near:
                hint = f" (did you mean {', '.join(near)}?)"
        elif "invalid choice" in message:
            quoted = re.findall(r"'([^']+)'", message)
            near = difflib.get_close_matches(quoted[0], quoted[1:] or COMMANDS, n=2) if quoted else []
            if near:
                hint = f" (did you mean {', '.join(near)}?)"
        raise ConfigError(f"{self.prog}: {message}{hint}")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=None, help="Config file (key = value lines)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="Override a config key (repeatable, last writer wins)")
    p.add_argument("--seed", type=int, default=None, help="Run a single seed")
    p.add_argument("--out-dir", default=None, help="Output directory (default: run.out_dir / LABELTEACH_OUT_DIR)")
    p.add_argument("--quiet", action="store_true", help="Only print errors to stderr")
    return p


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="labelteach", description="Label synthesis teaching experiments")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _common()

    sub.add_parser("gen-data", parents=[common], help="Generate / load the pool and save it")
    sub.add_parser("teach", parents=[common], help="Run a greedy or theory-driven teacher")
    sub.add_parser("train-teacher", parents=[common], help="Train a parameterized teacher")

    ev = sub.add_parser("eval-teacher", parents=[common], help="Evaluate a trained teacher against SGD")
    ev.add_argument("--checkpoint", default=None, help="Teacher checkpoint (.npz); defaults to teacher.checkpoint")
    ev.add_argument("--batch-sizes", default=",".join(str(b) for b in EVAL_BATCH_SIZES))

    th = sub.add_parser("theorem-suite", parents=[common], help="Run a convergence check")
    th.add_argument("--kind", required=True, choices=SUITES)
    th.add_argument("--runs", type=int, default=None, help="Override the number of runs / seeds")

    pl = sub.add_parser("plot", parents=[common], help="Chart one or more trace CSVs")
    pl.add_argument("traces", nargs="+", help="Trace CSV files")
    pl.add_argument("--column", default="dist", help="Trace column on the y axis")
    pl.add_argument("--x", choices=("t", "time"), default="t", help="Iterations or cumulative wall time")
    pl.add_argument("--log", action="store_true", help="Log-scale y axis")
    pl.add_argument("--output", default=None, help="SVG path (default: <out-dir>/plot.svg)")
    return ap


def resolve_config(args, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    """defaults (or `base`) -> --config -> --set -> --seed -> --out-dir."""
    cfg = base if base is not None else ExperimentConfig()
    if args.config and base is None:
        cfg = ExperimentConfig.from_file(args.config)
    cfg = cfg.with_overrides(args.set)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.out_dir:
        cfg = cfg.with_value("run.out_dir", args.out_dir)
    return cfg.validated()


def _run_dir(cfg: ExperimentConfig) -> Path:
    return cfg.out_dir / cfg.run.name


# =====================================================
# COMMANDS
# =====================================================

def cmd_gen_data(cfg: ExperimentConfig, args) -> int:
    pool = build_pool(cfg.dataset)
    path = save_pool(pool, _run_dir(cfg) / "pool.npz")
    log("DATA", f"pool n={len(pool)} d={pool.d} labels={pool.label_kind} -> {path}")
    return EXIT_OK


def cmd_teach(cfg: ExperimentConfig, args) -> int:
    traces = run_teaching(cfg)
    out = _run_dir(cfg)
    for seed, tr in zip(cfg.run.seeds, traces):
        write_csv(tr, out / f"trace_seed{seed}.csv", timing=cfg.run.timing)

    rows = [(seed, len(tr) - 1, tr.dist[-1], tr.objective[-1], tr.acc[-1]) for seed, tr in zip(cfg.run.seeds, traces)]
    print_table(f"{cfg.teacher.kind} on {cfg.dataset.kind}", ("seed", "steps", "dist", "objective", "acc"), rows)

    same_grid = all(tr.t == traces[0].t for tr in traces)
    if not same_grid:
        log("WARN", "seeds stopped at different iterations; charting the first seed only")
        traces = traces[:1]
    for column, log_y in (("dist", True), ("objective", True), ("acc", False)):
        agg = aggregate(traces, column)
        curve = Curve(agg.t.astype(np.float64), agg.mean, agg.stderr if agg.n > 1 else None)
        axes = ChartAxes(f"{cfg.teacher.kind}: {column}", "iteration", column, log_y=log_y)
        write_svg_chart({cfg.teacher.kind: curve}, out / f"{column}.svg", axes)
    return EXIT_OK


def cmd_train_teacher(cfg: ExperimentConfig, args) -> int:
    ckpt, result = train_teacher(cfg)
    out = _run_dir(cfg)
    save_checkpoint(out / "teacher.npz", ckpt)
    write_rows(out / "train_log.csv", ("episode", "objective", "eval_metric"),
               [{k: repr(float(v)) if k != "episode" else int(v) for k, v in row.items()} for row in result.log])
    log("TRAIN", f"best eval score {result.best_score:.6g}; checkpoint -> {out / 'teacher.npz'}")
    return EXIT_OK


def cmd_eval_teacher(cfg: ExperimentConfig, args) -> int:
    path = args.checkpoint or cfg.teacher.checkpoint
    if not path:
        raise ConfigError("eval-teacher needs --checkpoint or teacher.checkpoint")
    if not Path(path).exists():
        raise ConfigError(f"checkpoint not found: {path}", path=str(path))
    ckpt = load_checkpoint(path)
    base = ExperimentConfig.parse(str(ckpt.meta.get("config", "")), source=f"{path}[config]")
    cfg = resolve_config(args, base)
    stdout().print(cfg.render(), markup=False, end="")

    sizes = [int(b) for b in str(args.batch_sizes).split(",") if b.strip()]
    results = eval_teacher(cfg, ckpt, sizes)
    out = _run_dir(cfg)
    rows = []
    for b, runs in results.items():
        steps = len(runs["sgd"].dist)
        table = [{"t": t, **{name: repr(float(r.dist[t])) for name, r in runs.items()},
                  **{f"{name}_holdout_loss": repr(float(r.holdout_loss[t])) for name, r in runs.items()}}
                 for t in range(steps)]
        names = list(runs)
        write_rows(out / f"eval_batch{b}.csv", ["t", *names, *[f"{n}_holdout_loss" for n in names]], table)
        curves = {name: Curve(np.arange(steps, dtype=np.float64), r.dist) for name, r in runs.items()}
        write_svg_chart(curves, out / f"eval_batch{b}.svg",
                        ChartAxes(f"{cfg.teacher.kind} vs SGD (batch {b})", "iteration", "distance to target", True))
        rows.append((b, runs["teacher"].final("dist"), runs["sgd"].final("dist"),
                     runs["teacher"].final("holdout_acc"), runs["sgd"].final("holdout_acc")))
    print_table("evaluation", ("batch", "teacher dist", "sgd dist", "teacher acc", "sgd acc"), rows)
    return EXIT_OK


def cmd_theorem_suite(cfg: ExperimentConfig, args) -> int:
    report = theorem_suite(args.kind, args.runs, cfg.run.seeds[0])
    report.render()
    return EXIT_OK if report.passed else EXIT_RUNTIME


def cmd_plot(cfg: ExperimentConfig, args) -> int:
    curves = {}
    for p in args.traces:
        path = Path(p)
        if not path.exists():
            raise ConfigError(f"trace file not found: {path}", path=str(path))
        tr = read_csv(path)
        x = tr.wall_seconds() if args.x == "time" else tr.column("t")
        curves[path.stem] = Curve(x, tr.column(args.column))
    xlabel = "wall time (s)" if args.x == "time" else "iteration"
    output = Path(args.output) if args.output else _run_dir(cfg) / "plot.svg"
    write_svg_chart(curves, output, ChartAxes(args.column, xlabel, args.column, log_y=args.log))
    return EXIT_OK


HANDLERS = {
    "gen-data": cmd_gen_data,
    "teach": cmd_teach,
    "train-teacher": cmd_train_teacher,
    "eval-teacher": cmd_eval_teacher,
    "theorem-suite": cmd_theorem_suite,
    "plot": cmd_plot,
}


# =====================================================
# MAIN
# =====================================================

def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        if args.quiet:
            console.set_quiet(True)
        cfg = resolve_config(args)
        if args.command != "eval-teacher":
            stdout().print(cfg.render(), markup=False, end="")
            log("RUN", f"{args.command} seeds={list(cfg.run.seeds)}")
        return HANDLERS[args.command](cfg, args)
    except (ConfigError, DataFormatError, FileNotFoundError) as e:
        log("ERROR", str(e))
        return EXIT_INVALID
    except (LabelTeachError, OSError, ArithmeticError, np.linalg.LinAlgError) as e:
        log("ERROR", f"{type(e).__name__}: {e}")
        return EXIT_RUNTIME


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
