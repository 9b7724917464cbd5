# labelteach/config.py
"""
Experiment configuration.

Config files are flat `key = value` text with `#` comments. Keys are dotted
into five namespaces (dataset, learner, teacher, train, run); every key and
its default is listed in the dataclasses below. Resolution order:

  defaults -> config file -> --set key=value (last writer wins) -> --seed

`ExperimentConfig.render()` prints every resolved key; parsing that text back
gives the same config, so a run can be reproduced from its banner alone.

Environment:
  LABELTEACH_OUT_DIR   default for run.out_dir (a .env file is honoured)
"""

import difflib
import math
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Iterable, List, Tuple

from dotenv import load_dotenv

from labelteach.errors import ConfigError

load_dotenv()

# =====================================================
# CONFIG
# =====================================================

DEFAULT_OUT_DIR = os.getenv("LABELTEACH_OUT_DIR", "runs")

DATASET_KINDS = ("linreg", "clusters", "moons", "mnist", "file")
LEARNER_KINDS = ("lsr", "lr", "multiclass", "mlp2")
INIT_SCHEMES = ("normal", "zeros", "around_target")
SCHEDULES = ("constant", "inverse")

GREEDY_TEACHERS = ("sgd", "imt", "last", "mixed", "et", "armijo", "newton")
PARAM_TEACHERS = ("unrolled", "pg", "blast_unrolled", "blast_pg")
TEACHER_KINDS = GREEDY_TEACHERS + PARAM_TEACHERS

# shorthand teacher kinds -> (kind, constraint)
TEACHER_ALIASES = {
    "last_nc": ("last", "none"),
    "last_onehot": ("last", "onehot"),
    "last_simplex": ("last", "simplex"),
    "last_mag": ("last", "magnitude"),
}
CONSTRAINT_KINDS = ("none", "onehot", "simplex", "magnitude")


# =====================================================
# SECTIONS
# =====================================================

@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "linreg"
    n: int = 800
    d: int = 4
    noise_sd: float = 0.02
    intercept: float = 0.0
    n_per_class: int = 400
    offset: float = 0.2
    moon_noise: float = 0.2
    mnist_dir: str = ""
    digits: Tuple[int, ...] = (3, 5)
    proj_dim: int = 24
    subset: int = 1000
    path: str = ""
    split: Tuple[float, ...] = (1.0, 0.0, 0.0)
    seed: int = 0


@dataclass(frozen=True)
class LearnerSpec:
    kind: str = "lsr"
    lam: float = 5e-5
    eta: float = 1e-3
    schedule: str = "constant"
    decay: float = 0.0
    bias: bool = False
    hidden: int = 32
    activation: str = "leaky_relu"
    init: str = "normal"
    init_sd: float = 1.0
    reg_mlp: bool = True


@dataclass(frozen=True)
class TeacherSpec:
    kind: str = "sgd"
    constraint: str = "none"
    radius: float = 1.0
    p_norm: float = 2.0
    anchor: str = "prediction"
    subsample: int = 0
    c1: float = 1.0
    c2: float = 0.5
    backtrack: float = 0.5
    g_max: float = 1e4
    alpha: float = 0.0
    beta: float = 1.0
    checkpoint: str = ""


@dataclass(frozen=True)
class TrainSpec:
    hidden: Tuple[int, ...] = (32,)
    activation: str = "relu"
    episodes: int = 1000
    horizon: int = 100
    gamma: float = 0.999
    baseline: float = -0.1
    students: int = 10
    reset_rate: float = 0.2
    unroll: int = 20
    decay: float = 0.95
    eta: float = 5e-4
    batch_size: int = 1
    init_sd: float = 5e-2
    eval_every: int = 10
    eval_steps: int = 300
    eval_batch: int = 1
    reward: str = "accuracy"
    zeta: float = 0.9
    p_source: str = "uniform"
    assess_batch: int = 20
    lr: float = 1e-3
    weight_decay: float = 1e-4
    alpha_residual: float = 0.5
    actions: str = "augmented"
    mu_points: int = 6


@dataclass(frozen=True)
class RunSpec:
    iterations: int = 1000
    epsilon: float = 0.0
    batch_size: int = 1
    seeds: Tuple[int, ...] = (0,)
    out_dir: str = DEFAULT_OUT_DIR
    name: str = "run"
    timing: bool = True


SECTIONS = ("dataset", "learner", "teacher", "train", "run")


# =====================================================
# VALUE PARSING
# =====================================================

def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _coerce(default: Any, text: str) -> Any:
    """Parse `text` into the type of `default`; tuples are comma lists, ints allow a..b ranges."""
    text = text.strip()
    if isinstance(default, bool):
        return _parse_bool(text)
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        elem = type(default[0]) if default else str
        out: List[Any] = []
        for p in (q for q in text.replace(" ", "").split(",") if q):
            if elem is int and ".." in p:
                lo, hi = p.split("..", 1)
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(elem(p))
        return tuple(out)
    return text


def _render_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(_render_value(x) for x in v)
    return str(v)


# =====================================================
# EXPERIMENT CONFIG
# =====================================================

@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    learner: LearnerSpec = field(default_factory=LearnerSpec)
    teacher: TeacherSpec = field(default_factory=TeacherSpec)
    train: TrainSpec = field(default_factory=TrainSpec)
    run: RunSpec = field(default_factory=RunSpec)

    # ---------------------------
    # keys
    # ---------------------------

    @staticmethod
    def keys() -> List[str]:
        cfg = ExperimentConfig()
        return [f"{s}.{f.name}" for s in SECTIONS for f in fields(getattr(cfg, s))]

    def get(self, key: str) -> Any:
        section, name = self._split_key(key)
        return getattr(getattr(self, section), name)

    def _split_key(self, key: str) -> Tuple[str, str]:
        key = key.strip()
        known = self.keys()
        if key not in known:
            hint = difflib.get_close_matches(key, known, n=3)
            extra = f" (did you mean {', '.join(hint)}?)" if hint else ""
            raise ConfigError(f"unknown config key '{key}'{extra}", suggestions=hint)
        section, name = key.split(".", 1)
        return section, name

    def with_value(self, key: str, text: str) -> "ExperimentConfig":
        section, name = self._split_key(key)
        if (section, name) == ("teacher", "kind") and text.strip() in TEACHER_ALIASES:
            kind, constraint = TEACHER_ALIASES[text.strip()]
            teacher = replace(self.teacher, kind=kind, constraint=constraint)
            return replace(self, teacher=teacher)
        block = getattr(self, section)
        try:
            value = _coerce(getattr(getattr(ExperimentConfig(), section), name), text)
        except ValueError as e:
            raise ConfigError(f"bad value for {key}: {e}", key=key, value=text) from e
        return replace(self, **{section: replace(block, **{name: value})})

    def with_overrides(self, items: Iterable[str]) -> "ExperimentConfig":
        cfg = self
        for item in items:
            if "=" not in item:
                raise ConfigError(f"override must look like key=value: {item!r}")
            k, v = item.split("=", 1)
            cfg = cfg.with_value(k, v)
        return cfg

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, run=replace(self.run, seeds=(int(seed),)))

    # ---------------------------
    # text form
    # ---------------------------

    @classmethod
    def parse(cls, text: str, source: str = "<text>") -> "ExperimentConfig":
        cfg = cls()
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value'", line=raw)
            k, v = line.split("=", 1)
            try:
                cfg = cfg.with_value(k, v)
            except ConfigError as e:
                raise ConfigError(f"{source}:{lineno}: {e.message}", **e.context) from e
        return cfg.validated()

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {path}", path=str(path)) from e
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e}", path=str(path)) from e
        return cls.parse(text, source=str(path))

    def render(self) -> str:
        lines = ["# labelteach resolved config"]
        for s in SECTIONS:
            block = getattr(self, s)
            for f in fields(block):
                lines.append(f"{s}.{f.name} = {_render_value(getattr(block, f.name))}")
        return "\n".join(lines) + "\n"

    # ---------------------------
    # validation
    # ---------------------------

    def validated(self) -> "ExperimentConfig":
        ds, ln, te, tr, rn = self.dataset, self.learner, self.teacher, self.train, self.run
        checks = [
            (ds.kind in DATASET_KINDS, f"dataset.kind must be one of {DATASET_KINDS}"),
            (len(ds.split) == 3 and all(f >= 0 for f in ds.split) and abs(sum(ds.split) - 1.0) < 1e-9,
             "dataset.split must be three non-negative fractions summing to 1"),
            (ln.kind in LEARNER_KINDS, f"learner.kind must be one of {LEARNER_KINDS}"),
            (ln.lam >= 0, "learner.lam must be non-negative"),
            (ln.eta > 0, "learner.eta must be positive"),
            (ln.schedule in SCHEDULES, f"learner.schedule must be one of {SCHEDULES}"),
            (ln.init in INIT_SCHEMES, f"learner.init must be one of {INIT_SCHEMES}"),
            (te.kind in TEACHER_KINDS, f"teacher.kind must be one of {TEACHER_KINDS + tuple(TEACHER_ALIASES)}"),
            (te.constraint in CONSTRAINT_KINDS, f"teacher.constraint must be one of {CONSTRAINT_KINDS}"),
            (te.p_norm in (1.0, 2.0) or math.isinf(te.p_norm), "teacher.p_norm must be 1, 2 or inf"),
            (te.subsample >= 0, "teacher.subsample must be >= 0"),
            (te.radius > 0, "teacher.radius must be positive"),
            (te.c1 > 0, "teacher.c1 must be positive"),
            (0.5 <= te.c2 < 1.0, "teacher.c2 must lie in [0.5, 1)"),
            (0.0 < te.backtrack < 1.0, "teacher.backtrack must lie in (0, 1)"),
            (te.g_max > 0, "teacher.g_max must be positive"),
            (0.0 <= te.alpha <= 1.0, "teacher.alpha must lie in [0, 1]"),
            (te.beta >= 0, "teacher.beta must be non-negative"),
            (len(tr.hidden) >= 1 and all(h > 0 for h in tr.hidden), "train.hidden needs positive widths"),
            (tr.actions in ("augmented", "simplex"), "train.actions must be augmented or simplex"),
            (rn.iterations > 0, "run.iterations must be positive"),
            (rn.batch_size > 0, "run.batch_size must be positive"),
            (len(rn.seeds) > 0, "run.seeds must not be empty"),
            (rn.epsilon >= 0, "run.epsilon must be non-negative"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self

    @property
    def out_dir(self) -> Path:
        return Path(self.run.out_dir)
