# labelteach/reporting.py
"""
Run artifacts: convergence traces, their CSV files, SVG line charts and
console tables.

Trace CSV columns (fixed order, one row per recorded iteration):
  t, objective, dist, acc, micros, teacher_micros, learner_micros, example_id, label_0 .. label_{K-1}

Floats are written with repr(), which round-trips float64 exactly. `dist` is
nan when no target weight is known; `example_id` is -1 when the step used no
single pool example (full-pool Newton steps, the initial row).
"""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from rich.table import Table

from labelteach.console import log, stdout
from labelteach.errors import DataFormatError, DimensionError
from labelteach.numerics import FloatArray

# =====================================================
# CONFIG
# =====================================================

TRACE_FIELDS = ("t", "objective", "dist", "acc", "micros", "teacher_micros", "learner_micros", "example_id")
TIMING_FIELDS = ("micros", "teacher_micros", "learner_micros")
CHART_SIZE = (6.4, 4.0)


# =====================================================
# TRACE
# =====================================================

@dataclass
class ConvergenceTrace:
    label_dim: int
    t: List[int] = field(default_factory=list)
    objective: List[float] = field(default_factory=list)
    dist: List[float] = field(default_factory=list)
    acc: List[float] = field(default_factory=list)
    teacher_micros: List[float] = field(default_factory=list)
    learner_micros: List[float] = field(default_factory=list)
    example_id: List[int] = field(default_factory=list)
    labels: List[FloatArray] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.t)

    def record(
        self,
        t: int,
        objective: float,
        dist: float,
        acc: float,
        teacher_micros: float = 0.0,
        learner_micros: float = 0.0,
        example_id: int = -1,
        label=None,
    ) -> None:
        if self.t and t <= self.t[-1]:
            raise DataFormatError("trace iterations must increase", last=self.t[-1], got=t)
        lab = np.full(self.label_dim, np.nan) if label is None else np.ravel(np.asarray(label, dtype=np.float64))
        if lab.shape != (self.label_dim,):
            raise DimensionError("trace label dimension mismatch", got=lab.shape, want=self.label_dim)
        self.t.append(int(t))
        self.objective.append(float(objective))
        self.dist.append(float(dist))
        self.acc.append(float(acc))
        self.teacher_micros.append(float(teacher_micros))
        self.learner_micros.append(float(learner_micros))
        self.example_id.append(int(example_id))
        self.labels.append(lab)

    def column(self, name: str) -> FloatArray:
        if name == "micros":
            return np.asarray(self.teacher_micros) + np.asarray(self.learner_micros)
        if name not in TRACE_FIELDS:
            raise DataFormatError(f"unknown trace column '{name}'", columns=TRACE_FIELDS)
        return np.asarray(getattr(self, name), dtype=np.float64)

    def wall_seconds(self) -> FloatArray:
        """Cumulative teacher + learner time in seconds."""
        return np.cumsum(self.column("micros")) * 1e-6

    def fieldnames(self) -> List[str]:
        return list(TRACE_FIELDS) + [f"label_{k}" for k in range(self.label_dim)]

    def rows(self, timing: bool = True) -> List[Dict[str, Any]]:
        out = []
        for i in range(len(self)):
            tm, lm = self.teacher_micros[i], self.learner_micros[i]
            row: Dict[str, Any] = {
                "t": self.t[i],
                "objective": repr(self.objective[i]),
                "dist": repr(self.dist[i]),
                "acc": repr(self.acc[i]),
                "micros": repr(tm + lm) if timing else "0.0",
                "teacher_micros": repr(tm) if timing else "0.0",
                "learner_micros": repr(lm) if timing else "0.0",
                "example_id": self.example_id[i],
            }
            for k, v in enumerate(self.labels[i]):
                row[f"label_{k}"] = repr(float(v))
            out.append(row)
        return out

    def same_values(self, other: "ConvergenceTrace") -> bool:
        """Equality of every recorded column except wall-clock timings."""
        if len(self) != len(other) or self.label_dim != other.label_dim:
            return False
        return (
            self.t == other.t
            and self.example_id == other.example_id
            and np.array_equal(self.objective, other.objective, equal_nan=True)
            and np.array_equal(self.dist, other.dist, equal_nan=True)
            and np.array_equal(self.acc, other.acc, equal_nan=True)
            and all(np.array_equal(a, b, equal_nan=True) for a, b in zip(self.labels, other.labels))
        )


# =====================================================
# CSV
# =====================================================

def write_rows(path, fieldnames: Sequence[str], rows: Sequence[Mapping[str, Any]]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as f:
            w = csv.DictWriter(f, fieldnames=list(fieldnames), extrasaction="ignore", lineterminator="\n")
            w.writeheader()
            for row in rows:
                w.writerow({k: row.get(k, "") for k in fieldnames})
    except OSError as e:
        raise OSError(f"cannot write {path}: {e}") from e
    return path


def read_rows(path) -> Tuple[List[str], List[Dict[str, str]]]:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8", newline="") as f:
            reader = csv.DictReader(f)
            rows = list(reader)
            return list(reader.fieldnames or []), rows
    except OSError as e:
        raise OSError(f"cannot read {path}: {e}") from e


def write_csv(trace: ConvergenceTrace, path, timing: bool = True) -> Path:
    """`timing=False` zeroes the wall-clock columns so reruns are byte-identical."""
    path = write_rows(path, trace.fieldnames(), trace.rows(timing))
    log("IO", f"trace -> {path} ({len(trace)} rows)")
    return path


def read_csv(path) -> ConvergenceTrace:
    fields, rows = read_rows(path)
    if fields[:len(TRACE_FIELDS)] != list(TRACE_FIELDS):
        raise DataFormatError("not a trace CSV (unexpected header)", path=str(path), header=fields)
    label_cols = fields[len(TRACE_FIELDS):]
    if label_cols != [f"label_{k}" for k in range(len(label_cols))]:
        raise DataFormatError("trace CSV label columns are out of order", path=str(path))
    trace = ConvergenceTrace(label_dim=len(label_cols))
    try:
        for row in rows:
            trace.record(
                int(row["t"]),
                float(row["objective"]),
                float(row["dist"]),
                float(row["acc"]),
                float(row["teacher_micros"]),
                float(row["learner_micros"]),
                int(row["example_id"]),
                [float(row[c]) for c in label_cols],
            )
    except (KeyError, ValueError) as e:
        raise DataFormatError(f"malformed trace CSV row: {e}", path=str(path)) from e
    return trace


# =====================================================
# SVG CHARTS
# =====================================================

@dataclass(frozen=True)
class ChartAxes:
    title: str = ""
    xlabel: str = "iteration"
    ylabel: str = "distance to target"
    log_y: bool = False


@dataclass(frozen=True)
class Curve:
    x: FloatArray
    y: FloatArray
    band: Optional[FloatArray] = None


def write_svg_chart(curves: Mapping[str, Curve], path, axes: ChartAxes = ChartAxes()) -> Path:
    """Static line chart, one line per curve, optional ±band shading."""
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams.update(
        {
            "font.family": "DejaVu Sans",
            "axes.unicode_minus": False,
            "svg.hashsalt": "labelteach",
        }
    )
    import matplotlib.pyplot as plt

    path = Path(path)
    fig, ax = plt.subplots(figsize=CHART_SIZE, constrained_layout=True)
    for name, c in curves.items():
        x = np.asarray(c.x, dtype=np.float64)
        y = np.asarray(c.y, dtype=np.float64)
        if x.shape != y.shape:
            plt.close(fig)
            raise DimensionError("curve x/y length mismatch", curve=name, x=x.shape, y=y.shape)
        line = ax.plot(x, y, label=name, linewidth=1.2)[0]
        if c.band is not None:
            band = np.asarray(c.band, dtype=np.float64)
            lo = y - band
            if axes.log_y:
                lo = np.maximum(lo, np.nextafter(0.0, 1.0))
            ax.fill_between(x, lo, y + band, color=line.get_color(), alpha=0.2, linewidth=0)
    if axes.log_y:
        ax.set_yscale("log")
    ax.set_title(axes.title)
    ax.set_xlabel(axes.xlabel)
    ax.set_ylabel(axes.ylabel)
    ax.grid(True, alpha=0.3)
    if curves:
        ax.legend(loc="best", fontsize=8)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as e:
        raise OSError(f"cannot write chart to {path}: {e}") from e
    finally:
        plt.close(fig)
    log("IO", f"chart -> {path}")
    return path


# =====================================================
# TABLES
# =====================================================

def _cell(v: Any) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return f"{v:.6g}"
    return str(v)


def print_table(title: str, columns: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    """Rich table on stdout."""
    table = Table(title=title)
    for c in columns:
        table.add_column(c)
    for row in rows:
        table.add_row(*[_cell(v) for v in row])
    stdout().print(table)
