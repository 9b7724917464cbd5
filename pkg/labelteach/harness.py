# labelteach/harness.py
"""
Experiment runner: turns an ExperimentConfig into pools, a learner, a target
weight w* and a teacher, runs the teaching loop per seed and summarizes the
resulting traces.

Per-seed randomness: SeededRng(seed).spawn(2) gives (init stream, draw
stream). The init stream draws w0; the draw stream feeds example draws and
subsampled pool scans. Nothing else consumes randomness, so a seed fixes the
whole trace (wall-clock columns aside).
"""

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, optimize, stats
from scipy.special import expit, softmax

from labelteach.config import GREEDY_TEACHERS, PARAM_TEACHERS, DatasetSpec, ExperimentConfig, LearnerSpec
from labelteach.console import log
from labelteach.data import (
    Pool,
    gen_gaussian_clusters,
    gen_half_moon,
    gen_linreg,
    load_mnist_projected,
    load_pool,
    with_splits,
)
from labelteach.errors import ConfigError, DataFormatError, SingularHessianError, TeachingError
from labelteach.greedy_teachers import (
    LabelConstraint,
    LsrPoolObjective,
    armijo_teacher,
    et_gain_teacher,
    gain_label,
    imt_select,
    mixed_teach_step,
    newton_last_teacher,
    synth_label,
)
from labelteach.learners import Learner, LearnerKind, StepSchedule
from labelteach.numerics import FloatArray, SeededRng
from labelteach.param_teachers import (
    ActionPolicy,
    ActionSpace,
    EpisodeConfig,
    EvalTrace,
    IdentityPolicy,
    MuPolicy,
    NetLabelPolicy,
    TrainResult,
    blast_pg,
    blast_unrolled,
    evaluate_policy,
    init_students,
    omniscient_layout,
    pg_layout,
    train_pg_omniscient,
    train_unrolled_omniscient,
)
from labelteach.reporting import ConvergenceTrace
from labelteach.teacher_net import AdamState, Checkpoint, TeacherNet

# =====================================================
# CONFIG
# =====================================================

WSTAR_GRAD_TOL = 1e-8
WSTAR_NEWTON_ITERS = 200
WSTAR_LBFGS_ITERS = 20000
WSTAR_MLP_SEED = 1234
WSTAR_MLP_INIT_SD = 0.1
ARMIJO_SUFFICIENT = 1e-4

MNIST_FILES = {
    "images": ("train-images-idx3-ubyte", "train-images-idx3-ubyte.gz", "train-images.idx3-ubyte"),
    "labels": ("train-labels-idx1-ubyte", "train-labels-idx1-ubyte.gz", "train-labels.idx1-ubyte"),
}

LEARNER_KINDS = {
    "lsr": LearnerKind.LSR,
    "lr": LearnerKind.LR,
    "multiclass": LearnerKind.MULTICLASS,
    "mlp2": LearnerKind.MLP2,
}


# =====================================================
# POOLS / LEARNERS
# =====================================================

def _mnist_file(root: Path, which: str) -> Path:
    for name in MNIST_FILES[which]:
        p = root / name
        if p.exists():
            return p
    raise DataFormatError(f"no MNIST {which} file in {root}", tried=list(MNIST_FILES[which]))


def build_pool(spec: DatasetSpec) -> Pool:
    """Generate or load the configured pool and attach train/val/test splits."""
    if spec.kind == "linreg":
        pool = gen_linreg(spec.n, spec.d, None, spec.noise_sd, spec.seed, spec.intercept)
    elif spec.kind == "clusters":
        pool = gen_gaussian_clusters(spec.n_per_class, spec.d, spec.offset, spec.seed)
    elif spec.kind == "moons":
        pool = gen_half_moon(spec.n_per_class, spec.moon_noise, spec.seed)
    elif spec.kind == "mnist":
        if not spec.mnist_dir:
            raise ConfigError("dataset.kind=mnist needs dataset.mnist_dir")
        root = Path(spec.mnist_dir)
        pool = load_mnist_projected(_mnist_file(root, "images"), _mnist_file(root, "labels"),
                                    spec.digits, spec.proj_dim, spec.seed, spec.subset or None)
    else:
        if not spec.path:
            raise ConfigError("dataset.kind=file needs dataset.path")
        pool = load_pool(spec.path)
        if pool.splits:
            return pool
    return with_splits(pool, spec.split, SeededRng(spec.seed).spawn(1)[0])


def prepare_pool(pool: Pool, spec: LearnerSpec) -> Pool:
    """Convert label kinds to what the learner expects and add the bias feature."""
    kind = LEARNER_KINDS[spec.kind]
    if kind == LearnerKind.LSR:
        if pool.label_kind == "onehot":
            raise ConfigError("least-squares regression needs scalar labels")
    elif kind == LearnerKind.LR:
        if pool.label_kind == "regression":
            raise ConfigError("logistic regression needs a classification pool")
        pool = pool.as_binary()
    else:
        if pool.label_kind == "regression":
            raise ConfigError("softmax learners need a classification pool")
        pool = pool.as_onehot()
    return pool.with_bias() if spec.bias else pool


def build_learner(spec: LearnerSpec, pool: Pool) -> Learner:
    kind = LEARNER_KINDS[spec.kind]
    n_classes = pool.n_classes if kind in (LearnerKind.MULTICLASS, LearnerKind.MLP2) else 1
    return Learner(
        kind,
        pool.d,
        n_classes=n_classes,
        hidden=spec.hidden if kind == LearnerKind.MLP2 else 0,
        lam=spec.lam,
        bias=spec.bias,
        activation=spec.activation,
        reg_mlp=spec.reg_mlp,
    )


def pool_part(pool: Pool, name: str) -> Pool:
    """A named split, or the whole pool when that split is absent or empty."""
    if name in pool.splits and len(pool.splits[name]) > 0:
        return pool.split_pool(name)
    return pool


@dataclass
class Setup:
    learner: Learner
    teach: Pool
    val: Pool
    test: Pool
    w_star: FloatArray
    schedule: StepSchedule


def setup(cfg: ExperimentConfig, pool: Optional[Pool] = None, w_star=None) -> Setup:
    pool = prepare_pool(pool if pool is not None else build_pool(cfg.dataset), cfg.learner)
    learner = build_learner(cfg.learner, pool)
    teach = pool_part(pool, "train")
    ws = compute_wstar(teach, learner) if w_star is None else np.asarray(w_star, dtype=np.float64)
    schedule = StepSchedule(cfg.learner.schedule, cfg.learner.eta, cfg.learner.decay)
    return Setup(learner, teach, pool_part(pool, "val"), pool_part(pool, "test"), ws, schedule)


# =====================================================
# TARGET WEIGHTS
# =====================================================

def _lsr_hessian(X: FloatArray, learner: Learner) -> FloatArray:
    return X.T @ X / X.shape[0] + learner.lam * np.diag(learner.reg_mask)


def _convex_hessian(learner: Learner, w, X, Y) -> FloatArray:
    n = X.shape[0]
    reg = learner.lam * np.diag(learner.reg_mask)
    if learner.kind == LearnerKind.LR:
        m = X @ w
        s = expit(m) * expit(-m)
        return (X * s[:, None]).T @ X / n + reg
    (W,) = learner.split(w)
    P = softmax(X @ W, axis=1)
    c = np.asarray(Y).sum(axis=1)
    A = c[:, None, None] * (P[:, :, None] * np.eye(P.shape[1])[None] - P[:, :, None] * P[:, None, :])
    H = np.einsum("ni,nj,nkl->ikjl", X, X, A) / n
    d, K = W.shape
    return H.reshape(d * K, d * K) + reg


def _newton_wstar(learner: Learner, X, Y) -> FloatArray:
    """Damped Newton on the convex pool objective (LR, multiclass)."""
    w = np.zeros(learner.n_params)
    f = learner.objective(w, X, Y)
    g = learner.objective_grad(w, X, Y)
    for it in range(WSTAR_NEWTON_ITERS):
        gnorm = float(np.linalg.norm(g))
        if gnorm < WSTAR_GRAD_TOL:
            break
        step = linalg.lstsq(_convex_hessian(learner, w, X, Y), g)[0]
        t = 1.0
        while t > 1e-12:
            w_new = w - t * step
            f_new = learner.objective(w_new, X, Y)
            g_new = learner.objective_grad(w_new, X, Y)
            if f_new <= f - ARMIJO_SUFFICIENT * t * float(g @ step) or np.linalg.norm(g_new) < gnorm:
                break
            t *= 0.5
        else:
            log("WARN", f"w*: line search stalled at iteration {it}, |grad|={gnorm:.3g}")
            break
        w, f, g = w_new, f_new, g_new
    return w


def _lbfgs_wstar(learner: Learner, X, Y) -> FloatArray:
    """Fixed-seed full-batch L-BFGS; the endpoint is the reference MLP."""
    w0 = learner.init_weights(SeededRng(WSTAR_MLP_SEED), scale=WSTAR_MLP_INIT_SD)

    def fun(w):
        return learner.objective(w, X, Y), learner.objective_grad(w, X, Y)

    res = optimize.minimize(
        fun, w0, jac=True, method="L-BFGS-B",
        options={"maxiter": WSTAR_LBFGS_ITERS, "gtol": WSTAR_GRAD_TOL, "ftol": 0.0},
    )
    return np.asarray(res.x, dtype=np.float64)


def compute_wstar(pool: Pool, learner: Learner) -> FloatArray:
    """
    Minimizer of the pool-mean objective. LSR: ridge normal equations.
    LR / multiclass: damped Newton to |grad| < 1e-8. MLP2: fixed-seed L-BFGS.
    """
    if len(pool) == 0:
        raise DataFormatError("cannot fit w* on an empty pool")
    X, Y = pool.X, pool.Y
    if learner.kind == LearnerKind.LSR:
        if Y.ndim != 1:
            raise ConfigError("least-squares w* needs scalar labels")
        A = _lsr_hessian(X, learner)
        if np.linalg.matrix_rank(A) < A.shape[0]:
            raise SingularHessianError("normal equations are singular; set learner.lam > 0",
                                       rank=int(np.linalg.matrix_rank(A)), dim=A.shape[0])
        w = linalg.solve(A, X.T @ Y / X.shape[0], assume_a="pos")
    elif learner.kind in (LearnerKind.LR, LearnerKind.MULTICLASS):
        w = _newton_wstar(learner, X, Y)
    else:
        w = _lbfgs_wstar(learner, X, Y)
    gnorm = float(np.linalg.norm(learner.objective_grad(w, X, Y)))
    log("RUN", f"w* ({learner.kind.value}, n={len(pool)}): |w*|={np.linalg.norm(w):.6g} |grad|={gnorm:.3g}")
    return w


# =====================================================
# TEACHING LOOP
# =====================================================

def constraint_from(cfg: ExperimentConfig) -> LabelConstraint:
    te = cfg.teacher
    if te.constraint == "magnitude":
        return LabelConstraint.magnitude(te.radius, te.p_norm, te.anchor)
    return LabelConstraint(te.constraint)


def initial_weights(cfg: ExperimentConfig, learner: Learner, w_star, rng: SeededRng) -> FloatArray:
    scheme, sd = cfg.learner.init, cfg.learner.init_sd
    if scheme == "zeros":
        return np.zeros(learner.n_params)
    if scheme == "around_target":
        return np.asarray(w_star, dtype=np.float64) + rng.normal(size=learner.n_params, scale=sd)
    return rng.normal(size=learner.n_params, scale=sd)


def preflight(cfg: ExperimentConfig, learner: Learner) -> None:
    kind, b = cfg.teacher.kind, cfg.run.batch_size
    if kind in PARAM_TEACHERS:
        raise ConfigError(f"teacher '{kind}' is trained with train-teacher and run with eval-teacher")
    if kind not in GREEDY_TEACHERS:
        raise ConfigError(f"unknown teacher '{kind}'")
    if kind in ("imt", "mixed", "et", "armijo", "newton") and b != 1:
        raise ConfigError(f"teacher '{kind}' takes one example per step", batch_size=b)
    if kind == "newton" and learner.kind != LearnerKind.LSR:
        raise ConfigError("the Newton teacher is defined for least-squares learners")
    if kind in ("last", "mixed"):
        c = cfg.teacher.constraint
        if learner.kind == LearnerKind.LSR and c in ("onehot", "simplex"):
            raise ConfigError(f"constraint '{c}' does not apply to regression labels")


@dataclass
class _Step:
    w: FloatArray
    example_id: int
    label: Optional[FloatArray]
    teacher_ns: int
    learner_ns: int


class _Teacher:
    """One configured greedy teacher bound to a run."""

    def __init__(self, cfg: ExperimentConfig, s: Setup, draw: SeededRng):
        self.cfg = cfg
        self.s = s
        self.draw = draw
        self.constraint = constraint_from(cfg)
        self.subsample = cfg.teacher.subsample or None
        self.newton_f = None
        if cfg.teacher.kind == "newton":
            self.newton_f = LsrPoolObjective(s.teach.X, s.teach.Y, s.learner.lam, s.learner.reg_mask)

    def _y_true(self, i: int):
        y = self.s.teach.Y[i]
        return float(y) if self.s.learner.is_scalar else y

    def _update(self, w, idx, labels, eta) -> Tuple[FloatArray, int]:
        t0 = time.perf_counter_ns()
        grads = self.s.learner.grad_batch(w, self.s.teach.X[idx], labels)
        w = w - eta * grads.mean(axis=0)
        return w, time.perf_counter_ns() - t0

    def step(self, w, eta: float) -> _Step:
        kind = self.cfg.teacher.kind
        s, te = self.s, self.cfg.teacher
        n = len(s.teach)
        t0 = time.perf_counter_ns()

        if kind == "newton":
            w_new = newton_last_teacher(self.newton_f, w, s.w_star, eta, te.alpha)
            return _Step(w_new, -1, None, time.perf_counter_ns() - t0, 0)

        if kind in ("et", "armijo"):
            i = int(self.draw.integers(n))
            x, yt = s.teach.X[i], self._y_true(i)
            if kind == "et":
                w_new = et_gain_teacher(x, yt, w, s.w_star, eta, te.c1, s.learner)
                g = te.c1 * float(np.linalg.norm(np.asarray(w) - s.w_star))
            else:
                st = armijo_teacher(x, yt, w, eta, s.learner, te.c2, te.backtrack, te.g_max)
                w_new, g = st.w, st.g
            teacher_ns = time.perf_counter_ns() - t0
            label = None
            if s.learner.is_scalar:
                label = np.array([gain_label(g, x, yt, w, s.w_star, eta, s.learner)])
            return _Step(w_new, i, label, teacher_ns, 0)

        if kind == "imt":
            i, _ = imt_select(s.teach, w, s.w_star, eta, s.learner, self.subsample, self.draw)
            idx = np.array([i])
            labels = s.teach.Y[idx]
        elif kind == "mixed":
            i, lab = mixed_teach_step(s.teach, w, s.w_star, eta, s.learner, self.constraint,
                                      self.subsample, self.draw, te.beta)
            idx = np.array([i])
            labels = lab[None, :] if not s.learner.is_scalar else lab
        else:
            idx = self.draw.integers(n, size=self.cfg.run.batch_size)
            if kind == "sgd":
                labels = s.teach.Y[idx]
            else:
                rows = [synth_label(s.teach.X[i], self._y_true(i), w, s.w_star, eta, s.learner, self.constraint,
                                    te.beta)
                        for i in idx]
                labels = np.concatenate(rows) if s.learner.is_scalar else np.vstack(rows)
        teacher_ns = time.perf_counter_ns() - t0
        w_new, learner_ns = self._update(w, idx, labels, eta)
        first = np.atleast_1d(np.asarray(labels, dtype=np.float64)[0])
        return _Step(w_new, int(idx[0]), first, teacher_ns, learner_ns)


def run_seed(cfg: ExperimentConfig, s: Setup, seed: int) -> ConvergenceTrace:
    init_rng, draw_rng = SeededRng(seed).spawn(2)
    learner = s.learner
    w = initial_weights(cfg, learner, s.w_star, init_rng)
    teacher = _Teacher(cfg, s, draw_rng)
    trace = ConvergenceTrace(label_dim=learner.label_dim)

    def record(t: int, step: Optional[_Step]) -> float:
        dist = float(np.linalg.norm(w - s.w_star))
        trace.record(
            t,
            learner.objective(w, s.teach.X, s.teach.Y),
            dist,
            learner.accuracy(w, s.test.X, s.test.Y),
            (step.teacher_ns / 1000.0) if step else 0.0,
            (step.learner_ns / 1000.0) if step else 0.0,
            step.example_id if step else -1,
            step.label if step else None,
        )
        return dist

    record(0, None)
    for t in range(1, cfg.run.iterations + 1):
        step = teacher.step(w, s.schedule.rate(t - 1))
        w = step.w
        if not np.all(np.isfinite(w)):
            raise TeachingError(
                "learner weights became non-finite",
                dump={"t": t, "seed": seed, "last_dist": trace.dist[-1], "eta": s.schedule.rate(t - 1)},
                t=t,
                seed=seed,
            )
        if record(t, step) < cfg.run.epsilon:
            break
    return trace


def run_teaching(cfg: ExperimentConfig, pool: Optional[Pool] = None, w_star=None) -> List[ConvergenceTrace]:
    """One trace per configured seed, in seed order."""
    cfg = cfg.validated()
    s = setup(cfg, pool, w_star)
    preflight(cfg, s.learner)
    traces = []
    for seed in cfg.run.seeds:
        trace = run_seed(cfg, s, seed)
        log("TEACH", f"{cfg.teacher.kind} seed={seed} steps={len(trace) - 1} final_dist={trace.dist[-1]:.6g}")
        traces.append(trace)
    return traces


# =====================================================
# AGGREGATION / COMPARISON
# =====================================================

@dataclass(frozen=True)
class Aggregate:
    t: np.ndarray
    mean: FloatArray
    stderr: FloatArray
    n: int


def _stack(traces: Sequence[ConvergenceTrace], column: str) -> Tuple[np.ndarray, FloatArray]:
    if not traces:
        raise DataFormatError("nothing to aggregate")
    t0 = traces[0].t
    for tr in traces[1:]:
        if tr.t != t0:
            raise DataFormatError("traces are ragged (different iteration grids)",
                                  lengths=sorted({len(x) for x in traces}))
    return np.asarray(t0), np.vstack([tr.column(column) for tr in traces])


def aggregate(traces: Sequence[ConvergenceTrace], column: str = "dist") -> Aggregate:
    t, M = _stack(traces, column)
    n = M.shape[0]
    mean = M.mean(axis=0)
    se = M.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    return Aggregate(t, mean, se, n)


@dataclass(frozen=True)
class PairComparison:
    better: str
    worse: str
    wins: int
    losses: int
    ties: int
    p_value: float
    frac_t: float


@dataclass
class CompareReport:
    column: str
    order: List[str]
    finals: Dict[str, float]
    pairs: List[PairComparison] = field(default_factory=list)

    def pair(self, a: str, b: str) -> PairComparison:
        for p in self.pairs:
            if {p.better, p.worse} == {a, b}:
                return p
        raise KeyError(f"no comparison between {a} and {b}")

    def rows(self) -> List[Tuple]:
        return [(p.better, p.worse, p.wins, p.losses, p.ties, p.p_value, p.frac_t) for p in self.pairs]


def compare(runs: Mapping[str, Sequence[ConvergenceTrace]], column: str = "dist", start: int = 0) -> CompareReport:
    """
    Order runs by final mean (lower first) and compare every pair with a
    one-sided paired sign test on per-seed final values. `frac_t` is the share
    of iterations t >= start where the better run's mean is not above the other's.
    """
    aggs = {name: aggregate(tr, column) for name, tr in runs.items()}
    sizes = {a.n for a in aggs.values()}
    if len(sizes) != 1:
        raise DataFormatError("paired comparison needs the same number of seeds per run", sizes=sorted(sizes))
    finals = {name: float(a.mean[-1]) for name, a in aggs.items()}
    order = sorted(finals, key=lambda k: (finals[k], k))
    report = CompareReport(column, order, finals)
    for i, a in enumerate(order):
        for b in order[i + 1:]:
            fa = np.array([tr.column(column)[-1] for tr in runs[a]])
            fb = np.array([tr.column(column)[-1] for tr in runs[b]])
            wins, losses = int(np.sum(fa < fb)), int(np.sum(fa > fb))
            ties = len(fa) - wins - losses
            p = stats.binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue if wins + losses else 1.0
            ta, tb = aggs[a], aggs[b]
            if ta.t.shape != tb.t.shape or np.any(ta.t != tb.t):
                raise DataFormatError("runs use different iteration grids", a=a, b=b)
            sel = ta.t >= start
            frac = float(np.mean(ta.mean[sel] <= tb.mean[sel])) if np.any(sel) else math.nan
            report.pairs.append(PairComparison(a, b, wins, losses, ties, float(p), frac))
    return report


# =====================================================
# PARAMETERIZED TEACHERS
# =====================================================

def episode_config(cfg: ExperimentConfig) -> EpisodeConfig:
    tr = cfg.train
    return EpisodeConfig(
        horizon=tr.horizon,
        gamma=tr.gamma,
        baseline=tr.baseline,
        n_students=tr.students,
        reset_rate=tr.reset_rate,
        unroll=tr.unroll,
        decay=tr.decay,
        episodes=tr.episodes,
        eta=tr.eta,
        batch_size=tr.batch_size,
        init_sd=tr.init_sd,
        eval_every=tr.eval_every,
        eval_steps=tr.eval_steps,
        eval_batch=tr.eval_batch,
        eval_seed=cfg.run.seeds[0],
        reward_mode=tr.reward,
        zeta=tr.zeta,
        p_source=tr.p_source,
        assess_batch=tr.assess_batch,
    )


def action_space(cfg: ExperimentConfig, learner: Learner) -> ActionSpace:
    if cfg.teacher.kind == "blast_pg":
        return ActionSpace.mu_grid(points=cfg.train.mu_points)
    if learner.n_classes != 2:
        raise ConfigError("label action spaces are defined for two classes", K=learner.n_classes)
    return ActionSpace.augmented_binary() if cfg.train.actions == "augmented" else ActionSpace.simplex_binary()


def build_teacher_net(cfg: ExperimentConfig, learner: Learner) -> TeacherNet:
    kind = cfg.teacher.kind
    d, K, n = learner.dim, learner.n_classes, learner.n_params
    if kind == "unrolled":
        in_dim, out_dim, head = omniscient_layout(d, K, n).size, K, "label"
    elif kind == "pg":
        M = len(action_space(cfg, learner))
        in_dim, out_dim, head = pg_layout(n, M).size, M, "action"
    elif kind == "blast_unrolled":
        in_dim, out_dim, head = omniscient_layout(d, K, n, with_target=False).size, K, "residual"
    elif kind == "blast_pg":
        in_dim, out_dim, head = omniscient_layout(d, K, n, with_target=False).size, cfg.train.mu_points, "mu"
    else:
        raise ConfigError(f"teacher '{kind}' has no trainable policy", trainable=PARAM_TEACHERS)
    return TeacherNet.build(in_dim, cfg.train.hidden, out_dim, head=head, activation=cfg.train.activation)


def train_teacher(cfg: ExperimentConfig, pool: Optional[Pool] = None) -> Tuple[Checkpoint, TrainResult]:
    """Train the configured parameterized teacher; the checkpoint holds the best evaluated weights."""
    cfg = cfg.validated()
    s = setup(cfg, pool)
    kind = cfg.teacher.kind
    net = build_teacher_net(cfg, s.learner)
    ep = episode_config(cfg)
    rng = SeededRng(cfg.run.seeds[0])
    theta = net.init_theta(rng.spawn(1)[0])
    adam = AdamState.zeros(net.n_params, lr=cfg.train.lr, weight_decay=cfg.train.weight_decay)

    if kind == "unrolled":
        result = train_unrolled_omniscient(net, theta, s.learner, s.teach, s.w_star, ep, rng, adam)
    elif kind == "pg":
        result = train_pg_omniscient(net, theta, s.learner, s.teach, s.w_star, action_space(cfg, s.learner),
                                     ep, rng, adam)
    elif kind == "blast_unrolled":
        result = blast_unrolled(net, theta, s.learner, s.teach, s.val, ep, rng, s.w_star,
                                cfg.train.alpha_residual, adam)
    else:
        result = blast_pg(net, theta, s.learner, s.teach, s.val, action_space(cfg, s.learner), ep, rng,
                          s.w_star, adam)

    meta = {"kind": kind, "best_score": result.best_score, "config": cfg.render()}
    return Checkpoint(net, result.best_theta, result.adam, meta), result


def _policy(cfg: ExperimentConfig, ckpt: Checkpoint, s: Setup):
    kind = cfg.teacher.kind
    if kind == "unrolled":
        return NetLabelPolicy(ckpt.net, ckpt.theta, s.learner, s.w_star)
    if kind == "blast_unrolled":
        return NetLabelPolicy(ckpt.net, ckpt.theta, s.learner, None, cfg.train.alpha_residual)
    if kind == "pg":
        return ActionPolicy(ckpt.net, ckpt.theta, s.learner, s.w_star, action_space(cfg, s.learner), cfg.train.eta)
    return MuPolicy(s.learner, action_space(cfg, s.learner), cfg.train.p_source, ckpt.net, ckpt.theta)


def eval_teacher(
    cfg: ExperimentConfig,
    ckpt: Checkpoint,
    batch_sizes: Sequence[int] = (1, 128),
    pool: Optional[Pool] = None,
) -> Dict[int, Dict[str, EvalTrace]]:
    """Frozen-init rollouts of the teacher and of plain SGD for each batch size."""
    s = setup(cfg, pool)
    policy = _policy(cfg, ckpt, s)
    seed = cfg.run.seeds[0]
    w0 = init_students(s.w_star, 1, cfg.train.init_sd, [SeededRng(seed)])[0]
    out: Dict[int, Dict[str, EvalTrace]] = {}
    for b in batch_sizes:
        runs = {}
        for name, pol in (("teacher", policy), ("sgd", IdentityPolicy())):
            runs[name] = evaluate_policy(pol, s.learner, s.teach, w0, cfg.train.eta, cfg.train.eval_steps,
                                         b, seed, w_star=s.w_star, holdout=s.val)
        log("EVAL", f"batch={b} final_dist teacher={runs['teacher'].final('dist'):.6g} "
                    f"sgd={runs['sgd'].final('dist'):.6g}")
        out[b] = runs
    return out


# =====================================================
# TEACHER COST
# =====================================================

@dataclass(frozen=True)
class CostFit:
    sizes: Tuple[int, ...]
    mean_micros: Tuple[float, ...]
    slope: float
    r2: float
    p_value: float


def measure_teacher_cost(
    kinds: Sequence[str] = ("imt", "last"),
    pool_sizes: Sequence[int] = (100, 1000, 10000),
    iterations: int = 200,
    seed: int = 0,
    warmup: int = 10,
) -> Dict[str, CostFit]:
    """
    Mean per-iteration teacher time vs pool size on least-squares pools.
    slope / r2 come from a line through the means; p_value from a fit on
    every timed iteration.
    """
    fits = {}
    for kind in kinds:
        means, xs, ys = [], [], []
        for n in pool_sizes:
            cfg = ExperimentConfig().with_overrides(
                [f"dataset.n={n}", f"teacher.kind={kind}", f"run.iterations={iterations + warmup}"]
            )
            s = setup(cfg)
            init_rng, draw_rng = SeededRng(seed).spawn(2)
            w = initial_weights(cfg, s.learner, s.w_star, init_rng)
            teacher = _Teacher(cfg, s, draw_rng)
            times = []
            for t in range(iterations + warmup):
                st = teacher.step(w, s.schedule.rate(t))
                w = st.w
                if t >= warmup:
                    times.append(st.teacher_ns / 1000.0)
            means.append(float(np.mean(times)))
            xs.extend([n] * len(times))
            ys.extend(times)
        line = stats.linregress(np.asarray(pool_sizes, dtype=np.float64), means)
        full = stats.linregress(np.asarray(xs, dtype=np.float64), ys)
        fits[kind] = CostFit(tuple(pool_sizes), tuple(means), float(line.slope), float(line.rvalue ** 2),
                             float(full.pvalue))
        log("SUITE", f"cost {kind}: means={[round(m, 2) for m in means]} us slope={line.slope:.4g} r2={line.rvalue ** 2:.3f}")
    return fits
