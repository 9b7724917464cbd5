# labelteach/param_teachers.py
"""
Learned teaching policies.

  omniscient  the teacher state may contain w*
    - train_unrolled_omniscient  differentiate sum_t decay^(v-t) ||w_t - w*||^2 through v SGD steps
    - train_pg_omniscient        REINFORCE over a discrete label action space, reward -||w_t - w*||^2
  black-box   no w* anywhere in the state or the objective
    - blast_unrolled             residual labels a*y_true + (1-a)*y', outer loss = cross-entropy on an assessment pool
    - blast_pg                   REINFORCE over smoothing weights mu, y = mu*y_true + (1-mu)*p, terminal hold-out reward

Learners are softmax learners (MULTICLASS or MLP2) on one-hot pools. Every
policy is evaluated through `evaluate_policy`, which steps the learner with
the same numpy code as plain SGD, so an identity policy reproduces SGD exactly.

Batches: the teacher labels each example of a batch from its own state
(shared weights, per-example x / y_true / prediction); the learner steps on the
mean gradient.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from labelteach.console import log
from labelteach.data import Pool
from labelteach.errors import ConfigError, DataFormatError, DimensionError, NonFiniteError, TeachingError
from labelteach.learners import Learner, LearnerKind, activation_deriv
from labelteach.numerics import FloatArray, SeededRng
from labelteach.tape import Tape
from labelteach.teacher_net import AdamState, TeacherNet, adam_step

# =====================================================
# CONFIG
# =====================================================

HORIZON = 100
GAMMA = 0.999
PG_BASELINE = -0.1
N_STUDENTS = 10
RESET_RATE = 0.2
UNROLL = 20
DECAY = 0.95
EPISODES = 1000
OMNISCIENT_ETA = 5e-4
BLAST_ETA = 1e-3
BLAST_BATCH = 20
INIT_SD_LINEAR = 5e-2
INIT_SD_MLP = 1e-1
EVAL_STEPS = 300
EVAL_BATCH_SIZES = (1, 128)
EVAL_EVERY = 10
MU_LOW, MU_HIGH, MU_POINTS = 0.5, 1.0, 6
ZETA = 0.9
ALPHA_RESIDUAL = 0.5

REWARD_MODES = ("accuracy", "iterations")
P_SOURCES = ("uniform", "prediction")

AUGMENTED_BINARY = (
    (0.0, 1.0), (0.25, 0.75), (0.5, 0.5), (0.75, 0.25), (1.0, 0.0),
    (0.0, 2.0), (0.5, 1.5), (1.0, 1.0), (1.5, 0.5), (2.0, 0.0),
)
SIMPLEX_BINARY = AUGMENTED_BINARY[:5]


# =====================================================
# ACTION SPACES / EPISODE CONFIG
# =====================================================

@dataclass(frozen=True)
class ActionSpace:
    """Ordered label vectors (kind "label") or smoothing weights (kind "mu")."""

    values: FloatArray
    kind: str = "label"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if self.kind not in ("label", "mu"):
            raise ConfigError(f"unknown action kind '{self.kind}'")
        if vals.shape[0] == 0:
            raise ConfigError("action space is empty")
        if not np.all(np.isfinite(vals)):
            raise NonFiniteError("action space has non-finite entries")
        if self.kind == "label" and vals.ndim != 2:
            raise DimensionError("label actions must be a (M, K) matrix", shape=vals.shape)
        if self.kind == "mu" and vals.ndim != 1:
            raise DimensionError("mu actions must be a vector", shape=vals.shape)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.shape[0]

    @classmethod
    def augmented_binary(cls) -> "ActionSpace":
        return cls(np.array(AUGMENTED_BINARY))

    @classmethod
    def simplex_binary(cls) -> "ActionSpace":
        return cls(np.array(SIMPLEX_BINARY))

    @classmethod
    def mu_grid(cls, low: float = MU_LOW, high: float = MU_HIGH, points: int = MU_POINTS) -> "ActionSpace":
        if not 0.0 <= low < high <= 1.0 or points < 2:
            raise ConfigError("mu grid needs 0 <= low < high <= 1 and at least 2 points", low=low, high=high)
        return cls(np.linspace(low, high, points), kind="mu")

    def candidate_labels(self, y_true, p) -> FloatArray:
        """(M, K) labels each action would assign to one example."""
        if self.kind == "label":
            return np.asarray(self.values)
        mu = self.values[:, None]
        return mu * np.asarray(y_true, dtype=np.float64)[None, :] + (1.0 - mu) * np.asarray(p)[None, :]


@dataclass(frozen=True)
class EpisodeConfig:
    horizon: int = HORIZON
    gamma: float = GAMMA
    baseline: float = PG_BASELINE
    n_students: int = N_STUDENTS
    reset_rate: float = RESET_RATE
    unroll: int = UNROLL
    decay: float = DECAY
    episodes: int = EPISODES
    eta: float = OMNISCIENT_ETA
    batch_size: int = 1
    init_sd: float = INIT_SD_LINEAR
    eval_every: int = EVAL_EVERY
    eval_steps: int = EVAL_STEPS
    eval_batch: int = 1
    eval_seed: int = 0
    reward_mode: str = "accuracy"
    zeta: float = ZETA
    p_source: str = "uniform"
    assess_batch: int = BLAST_BATCH

    def __post_init__(self):
        if self.horizon <= 0 or self.unroll < 1 or self.episodes < 1:
            raise ConfigError("horizon, unroll and episodes must be positive",
                              horizon=self.horizon, unroll=self.unroll, episodes=self.episodes)
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must lie in (0, 1]", gamma=self.gamma)
        if not 0.0 < self.decay <= 1.0:
            raise ConfigError("decay must lie in (0, 1]", decay=self.decay)
        if self.n_students < 1 or not 0.0 <= self.reset_rate <= 1.0:
            raise ConfigError("need at least one student and a reset rate in [0, 1]",
                              n_students=self.n_students, reset_rate=self.reset_rate)
        if not self.eta > 0 or self.batch_size < 1 or self.eval_batch < 1 or self.assess_batch < 1:
            raise ConfigError("step size and batch sizes must be positive", eta=self.eta)
        if self.init_sd < 0 or self.eval_every < 1 or self.eval_steps < 1:
            raise ConfigError("invalid evaluation or init settings", init_sd=self.init_sd)
        if self.reward_mode not in REWARD_MODES:
            raise ConfigError(f"unknown reward mode '{self.reward_mode}'", modes=REWARD_MODES)
        if self.p_source not in P_SOURCES:
            raise ConfigError(f"unknown label source '{self.p_source}'", sources=P_SOURCES)
        if not 0.0 < self.zeta <= 1.0:
            raise ConfigError("target accuracy must lie in (0, 1]", zeta=self.zeta)

    @property
    def n_reset(self) -> int:
        return int(math.ceil(self.reset_rate * self.n_students))


def _require_softmax(learner: Learner, pool: Pool) -> None:
    if learner.kind not in (LearnerKind.MULTICLASS, LearnerKind.MLP2):
        raise ConfigError("parameterized teachers need a softmax learner", kind=learner.kind.value)
    if pool.label_kind != "onehot":
        raise ConfigError("parameterized teachers need one-hot labels (use Pool.as_onehot)")
    if pool.n_classes != learner.n_classes or pool.d != learner.dim:
        raise DimensionError("pool does not match the learner", pool=(pool.d, pool.n_classes),
                             learner=(learner.dim, learner.n_classes))


def init_students(w_center, n: int, sd: float, rngs: Sequence[SeededRng]) -> List[FloatArray]:
    w_center = np.asarray(w_center, dtype=np.float64)
    return [w_center + rngs[i].normal(size=w_center.shape, scale=sd) for i in range(n)]


# =====================================================
# STATES
# =====================================================

@dataclass(frozen=True)
class StateLayout:
    blocks: Tuple[Tuple[str, int], ...]

    @property
    def size(self) -> int:
        return sum(n for _, n in self.blocks)

    def slices(self) -> Dict[str, slice]:
        out, off = {}, 0
        for name, n in self.blocks:
            out[name] = slice(off, off + n)
            off += n
        return out

    def split(self, state) -> Dict[str, FloatArray]:
        state = np.asarray(state)
        if state.shape[-1] != self.size:
            raise DimensionError("state does not match the layout", got=state.shape[-1], want=self.size)
        return {name: state[..., s] for name, s in self.slices().items()}


def omniscient_layout(d: int, K: int, n_params: int, with_target: bool = True) -> StateLayout:
    """x | y_true | w | w* (omniscient only) | prediction."""
    blocks = [("x", d), ("y_true", K), ("w", n_params)]
    if with_target:
        blocks.append(("w_star", n_params))
    blocks.append(("prediction", K))
    return StateLayout(tuple(blocks))


def pg_layout(n_params: int, n_actions: int) -> StateLayout:
    return StateLayout((("w", n_params), ("alignment", n_actions)))


def build_state_omniscient(x, y_true, w, w_star, prediction) -> FloatArray:
    """Concatenate per `omniscient_layout`; pass w_star=None for the black-box state."""
    parts = [np.ravel(x), np.ravel(y_true), np.ravel(w)]
    if w_star is not None:
        if np.size(w_star) != np.size(w):
            raise DimensionError("w and w* sizes differ", w=np.size(w), w_star=np.size(w_star))
        parts.append(np.ravel(w_star))
    parts.append(np.ravel(prediction))
    return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts])


def _stack_omniscient(X, Y, w, w_star, preds) -> FloatArray:
    B = X.shape[0]
    parts = [X, Y, np.tile(w, (B, 1))]
    if w_star is not None:
        parts.append(np.tile(w_star, (B, 1)))
    parts.append(preds)
    return np.hstack(parts)


def build_state_pg(w, w_star, x, y_true, eta: float, action_space: ActionSpace, learner: Learner) -> FloatArray:
    """[w ; <w* - w, -eta * grad l(x, a | w)> for each action a]."""
    w = np.asarray(w, dtype=np.float64)
    w_star = np.asarray(w_star, dtype=np.float64)
    if w.shape != w_star.shape:
        raise DimensionError("w and w* sizes differ", w=w.shape, w_star=w_star.shape)
    p = learner.predict(w, x) if action_space.kind == "mu" else None
    labels = action_space.candidate_labels(y_true, p)
    X = np.tile(np.asarray(x, dtype=np.float64), (labels.shape[0], 1))
    grads = learner.grad_batch(w, X, labels)
    return np.concatenate([w, -eta * (grads @ (w_star - w))])


def _blast_sources(learner: Learner, w, X, p_source: str) -> FloatArray:
    if p_source == "uniform":
        return np.full((X.shape[0], learner.n_classes), 1.0 / learner.n_classes)
    return learner.predict(w, X)


# =====================================================
# POLICIES + EVALUATION
# =====================================================

class LabelPolicy(Protocol):
    def labels(self, X: FloatArray, Y: FloatArray, w: FloatArray) -> FloatArray: ...


class IdentityPolicy:
    """Ground-truth labels: plain SGD."""

    def labels(self, X, Y, w):
        return np.asarray(Y, dtype=np.float64)


@dataclass(frozen=True)
class NetLabelPolicy:
    """Soft labels from a label/residual head; w_star=None gives the black-box state."""

    net: TeacherNet
    theta: FloatArray
    learner: Learner
    w_star: Optional[FloatArray] = None
    alpha: Optional[float] = None

    def labels(self, X, Y, w):
        S = _stack_omniscient(X, Y, w, self.w_star, self.learner.predict(w, X))
        soft = self.net.probs(self.theta, S)
        if self.alpha is None:
            return soft
        return self.alpha * np.asarray(Y) + (1.0 - self.alpha) * soft


@dataclass(frozen=True)
class ActionPolicy:
    """Argmax over a label action space (evaluation mode of the PG teacher)."""

    net: TeacherNet
    theta: FloatArray
    learner: Learner
    w_star: FloatArray
    actions: ActionSpace
    eta: float

    def labels(self, X, Y, w):
        S = np.vstack([build_state_pg(w, self.w_star, X[i], Y[i], self.eta, self.actions, self.learner)
                       for i in range(X.shape[0])])
        a = np.argmax(self.net.probs(self.theta, S), axis=1)
        return self.actions.values[a]


@dataclass(frozen=True)
class MuPolicy:
    """Argmax smoothing weight from a mu head, or a fixed mu when net is None."""

    learner: Learner
    actions: ActionSpace
    p_source: str = "uniform"
    net: Optional[TeacherNet] = None
    theta: Optional[FloatArray] = None
    fixed_mu: Optional[float] = None

    def mus(self, X, Y, w) -> FloatArray:
        if self.net is None:
            return np.full(X.shape[0], 1.0 if self.fixed_mu is None else float(self.fixed_mu))
        S = _stack_omniscient(X, Y, w, None, self.learner.predict(w, X))
        return self.actions.values[np.argmax(self.net.probs(self.theta, S), axis=1)]

    def labels(self, X, Y, w):
        mu = self.mus(X, Y, w)[:, None]
        return mu * np.asarray(Y) + (1.0 - mu) * _blast_sources(self.learner, w, X, self.p_source)


@dataclass
class EvalTrace:
    dist: Optional[FloatArray]
    holdout_loss: Optional[FloatArray]
    holdout_acc: Optional[FloatArray]
    final_w: FloatArray

    def final(self, metric: str) -> float:
        arr = {"dist": self.dist, "holdout_loss": self.holdout_loss, "holdout_acc": self.holdout_acc}[metric]
        if arr is None:
            raise ConfigError(f"evaluation did not record '{metric}'")
        return float(arr[-1])

    def terminal_reward(self, mode: str, zeta: float = ZETA) -> float:
        """Final hold-out accuracy, or -(first step with accuracy >= zeta) and -steps when never reached."""
        if mode not in REWARD_MODES:
            raise ConfigError(f"unknown reward mode '{mode}'", modes=REWARD_MODES)
        if mode == "accuracy":
            return self.final("holdout_acc")
        if self.holdout_acc is None:
            raise ConfigError("evaluation did not record 'holdout_acc'")
        hits = np.flatnonzero(self.holdout_acc[1:] >= zeta)
        return -float(hits[0] + 1) if hits.size else -float(len(self.holdout_acc) - 1)


def _maybe_array(values):
    return None if values is None else np.asarray(values)


def evaluate_policy(
    policy: LabelPolicy,
    learner: Learner,
    pool: Pool,
    w0,
    eta: float,
    steps: int = EVAL_STEPS,
    batch_size: int = 1,
    seed: int = 0,
    w_star=None,
    holdout: Optional[Pool] = None,
) -> EvalTrace:
    """
    Fixed-seed rollout: uniform batches, policy labels, one SGD step on the
    mean gradient per iteration. Index 0 of every curve is the initial state.
    """
    if len(pool) == 0:
        raise DataFormatError("cannot evaluate on an empty pool")
    rng = SeededRng(seed)
    w = np.asarray(w0, dtype=np.float64).copy()
    ws = None if w_star is None else np.asarray(w_star, dtype=np.float64)
    dist = [] if ws is not None else None
    h_loss = [] if holdout is not None else None
    h_acc = [] if holdout is not None else None

    def record():
        if dist is not None:
            dist.append(float(np.linalg.norm(w - ws)))
        if holdout is not None:
            h_loss.append(learner.objective(w, holdout.X, holdout.Y))
            h_acc.append(learner.accuracy(w, holdout.X, holdout.Y))

    record()
    for t in range(1, steps + 1):
        idx = rng.integers(len(pool), size=batch_size)
        X, Y = pool.X[idx], pool.Y[idx]
        L = policy.labels(X, Y, w)
        w = w - eta * learner.grad_batch(w, X, L).mean(axis=0)
        if not np.all(np.isfinite(w)):
            raise TeachingError("learner weights diverged during evaluation", dump={"t": t, "eta": eta}, t=t)
        record()

    return EvalTrace(_maybe_array(dist), _maybe_array(h_loss), _maybe_array(h_acc), w)


# =====================================================
# TAPE: LEARNER STEP
# =====================================================

def _tape_probs(tape: Tape, learner: Learner, blocks: Sequence[int], x: int):
    """Softmax output (+ hidden pre/post activations for MLP2)."""
    if learner.kind == LearnerKind.MULTICLASS:
        return tape.softmax(tape.affine(x, blocks[0])), None, None
    U = tape.affine(x, blocks[0])
    P = tape.relu(U) if learner.activation == "relu" else tape.leaky_relu(U, learner.slope)
    return tape.softmax(tape.affine(P, blocks[1])), U, P


def _tape_grad(tape: Tape, learner: Learner, blocks: Sequence[int], x: int, y: int, probs, U, P) -> List[int]:
    """grad of l(x, y | w) per weight block, recorded on the tape (y may depend on theta)."""
    e = tape.sub(tape.mul(tape.sum(y), probs), y)
    if learner.kind == LearnerKind.MULTICLASS:
        (W,) = blocks
        g = tape.outer(x, e)
        if learner.lam:
            mask = tape.constant(learner.reg_mask.reshape(tape.value(W).shape))
            g = tape.add(g, tape.scale(tape.mul(W, mask), learner.lam))
        return [g]
    V, W = blocks
    gW = tape.outer(P, e)
    back = tape.affine(e, tape.transpose(W))
    # step-function derivative: zero almost everywhere, so it enters as a constant
    dU = tape.mul(back, tape.constant(activation_deriv(tape.value(U), learner.activation, learner.slope)))
    gV = tape.outer(x, dU)
    if learner.lam and learner.reg_mlp:
        gV = tape.add(gV, tape.scale(V, learner.lam))
        gW = tape.add(gW, tape.scale(W, learner.lam))
    return [gV, gW]


def _tape_assess_loss(tape: Tape, learner: Learner, blocks: Sequence[int], X, Y) -> int:
    probs, _, _ = _tape_probs(tape, learner, blocks, tape.constant(X))
    return tape.scale(tape.cross_entropy(probs, tape.constant(Y)), 1.0 / X.shape[0])


@dataclass(frozen=True)
class UnrollDraws:
    """Pre-drawn indices: teach (n_students, v, batch), assess (n_students, v, assess_batch)."""

    teach: np.ndarray
    assess: Optional[np.ndarray] = None


@dataclass
class UnrolledOutcome:
    loss: float
    grad: FloatArray
    students: List[FloatArray]


def unrolled_objective(
    net: TeacherNet,
    theta,
    learner: Learner,
    pool: Pool,
    students: Sequence[FloatArray],
    draws: UnrollDraws,
    cfg: EpisodeConfig,
    w_star=None,
    assess: Optional[Pool] = None,
    alpha: Optional[float] = None,
) -> UnrolledOutcome:
    """
    Unroll cfg.unroll SGD steps per student with teacher labels on the tape.

    Omniscient (w_star given): sum_t decay^(v-t) ||w_t - w*||^2.
    Black-box (assess given): sum_t decay^(v-t) CE(w_t; assessment batch).
    `alpha` switches the head to residual labels alpha*y_true + (1-alpha)*y'.
    The loss is averaged over students.
    """
    blackbox = w_star is None
    if blackbox and (assess is None or draws.assess is None):
        raise ConfigError("black-box unrolling needs an assessment pool and draws")
    tape = Tape()
    params = net.tape_params(tape, theta)
    w_star_node = None if blackbox else tape.constant(np.asarray(w_star, dtype=np.float64))
    v = cfg.unroll
    total = None
    finals: List[int] = []

    for s, w0 in enumerate(students):
        blocks = [tape.constant(b) for b in learner.split(w0)]
        for t in range(v):
            batch = draws.teach[s, t]
            g_sum = None
            for i in batch:
                x = tape.constant(pool.X[i])
                yt = tape.constant(pool.Y[i])
                probs, U, P = _tape_probs(tape, learner, blocks, x)
                parts = [x, yt, tape.concat(blocks)]
                if not blackbox:
                    parts.append(w_star_node)
                parts.append(probs)
                y = tape.softmax(net.tape_logits(tape, params, tape.concat(parts)))
                if alpha is not None:
                    y = tape.add(tape.scale(yt, alpha), tape.scale(y, 1.0 - alpha))
                g = _tape_grad(tape, learner, blocks, x, y, probs, U, P)
                g_sum = g if g_sum is None else [tape.add(a, b) for a, b in zip(g_sum, g)]
            step = cfg.eta / len(batch)
            blocks = [tape.sub(b, tape.scale(g, step)) for b, g in zip(blocks, g_sum)]

            if blackbox:
                idx = draws.assess[s, t]
                term = _tape_assess_loss(tape, learner, blocks, assess.X[idx], assess.Y[idx])
            else:
                term = tape.sq_norm(tape.sub(tape.concat(blocks), w_star_node))
            term = tape.scale(term, cfg.decay ** (v - (t + 1)))
            total = term if total is None else tape.add(total, term)
        finals.append(tape.concat(blocks))

    root = tape.scale(total, 1.0 / len(students))
    loss = float(tape.value(root))
    if not math.isfinite(loss):
        return UnrolledOutcome(loss, np.full(net.n_params, np.nan), [tape.value(f).copy() for f in finals])
    grads = tape.backward(root)
    return UnrolledOutcome(loss, net.flat_grad(grads, params), [tape.value(f).copy() for f in finals])


def draw_unroll(
    rngs: Sequence[SeededRng],
    pool_size: int,
    cfg: EpisodeConfig,
    assess_size: Optional[int] = None,
) -> UnrollDraws:
    teach = np.stack([r.integers(pool_size, size=(cfg.unroll, cfg.batch_size)) for r in rngs])
    assess = None
    if assess_size is not None:
        assess = np.stack([r.integers(assess_size, size=(cfg.unroll, cfg.assess_batch)) for r in rngs])
    return UnrollDraws(teach, assess)


# =====================================================
# TRAINING RESULTS
# =====================================================

@dataclass
class TrainResult:
    theta: FloatArray
    adam: AdamState
    best_theta: FloatArray
    best_score: float
    log: List[Dict[str, float]] = field(default_factory=list)


def _better(score: float, best: float, higher_is_better: bool) -> bool:
    return score > best if higher_is_better else score < best


def _abort(what: str, episode: int, theta, **extra) -> TeachingError:
    dump = {"episode": episode, "theta_norm": float(np.linalg.norm(theta)), **extra}
    return TeachingError(f"{what} at episode {episode}", dump=dump, episode=episode)


# =====================================================
# OMNISCIENT: UNROLLING
# =====================================================

def train_unrolled_omniscient(
    net: TeacherNet,
    theta,
    learner: Learner,
    pool: Pool,
    w_star,
    cfg: EpisodeConfig,
    rng: SeededRng,
    adam: Optional[AdamState] = None,
    on_episode: Optional[Callable[[Dict[str, float]], None]] = None,
) -> TrainResult:
    _require_softmax(learner, pool)
    if net.head != "label":
        raise ConfigError("unrolled omniscient teaching needs a label head", head=net.head)
    w_star = np.asarray(w_star, dtype=np.float64)
    layout = omniscient_layout(learner.dim, learner.n_classes, learner.n_params)
    if net.in_dim != layout.size or net.out_dim != learner.n_classes:
        raise DimensionError("teacher does not match the state layout", net=(net.in_dim, net.out_dim),
                             want=(layout.size, learner.n_classes))

    theta = np.asarray(theta, dtype=np.float64).copy()
    adam = adam or AdamState.zeros(net.n_params)
    streams = rng.spawn(cfg.n_students)
    students = init_students(w_star, cfg.n_students, cfg.init_sd, streams)
    w_eval = init_students(w_star, 1, cfg.init_sd, [SeededRng(cfg.eval_seed)])[0]

    def score(th) -> float:
        policy = NetLabelPolicy(net, th, learner, w_star)
        return evaluate_policy(policy, learner, pool, w_eval, cfg.eta, cfg.eval_steps,
                               cfg.eval_batch, cfg.eval_seed, w_star=w_star).final("dist")

    best_theta, best_score = theta.copy(), score(theta)
    result = TrainResult(theta, adam, best_theta, best_score)
    log("TRAIN", f"unrolled omniscient: v={cfg.unroll} students={cfg.n_students} episode 0 eval_dist={best_score:.6g}")

    for ep in range(1, cfg.episodes + 1):
        draws = draw_unroll(streams, len(pool), cfg)
        out = unrolled_objective(net, theta, learner, pool, students, draws, cfg, w_star=w_star)
        if not math.isfinite(out.loss):
            raise _abort("non-finite unrolled loss", ep, theta, loss=out.loss)
        theta, adam = adam_step(theta, out.grad, adam)

        students = out.students
        for i in range(cfg.n_reset):
            students[i] = init_students(w_star, 1, cfg.init_sd, [streams[i]])[0]

        row = {"episode": ep, "objective": out.loss, "eval_metric": math.nan}
        if ep % cfg.eval_every == 0 or ep == cfg.episodes:
            row["eval_metric"] = score(theta)
            if _better(row["eval_metric"], best_score, higher_is_better=False):
                best_theta, best_score = theta.copy(), row["eval_metric"]
            log("TRAIN", f"episode {ep} loss={out.loss:.6g} eval_dist={row['eval_metric']:.6g}")
        result.log.append(row)
        if on_episode:
            on_episode(row)

    result.theta, result.adam, result.best_theta, result.best_score = theta, adam, best_theta, best_score
    return result


# =====================================================
# POLICY GRADIENT
# =====================================================

def discounted_returns(rewards, gamma: float, baseline: float = 0.0) -> FloatArray:
    """G_t = sum_{tau >= t} gamma^tau (r_tau - b), tau = 1..T."""
    r = np.asarray(rewards, dtype=np.float64)
    if not np.all(np.isfinite(r)):
        raise NonFiniteError("non-finite reward")
    T = r.shape[0]
    terms = gamma ** np.arange(1, T + 1) * (r - baseline)
    return np.cumsum(terms[::-1])[::-1]


def policy_gradient_estimate(net: TeacherNet, theta, states, actions, weights, n_traj: int) -> FloatArray:
    """
    (1/N) sum_k weight_k * grad log pi(a_k | s_k), one row per (trajectory, step, example).
    Computed as minus the gradient of the weighted cross-entropy against one-hot actions.
    """
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    actions = np.asarray(actions, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    if not (states.shape[0] == actions.shape[0] == weights.shape[0]):
        raise DimensionError("states, actions and weights disagree",
                             states=states.shape[0], actions=actions.shape[0], weights=weights.shape[0])
    target = np.zeros((states.shape[0], net.out_dim))
    target[np.arange(states.shape[0]), actions] = weights / n_traj

    tape = Tape()
    params = net.tape_params(tape, theta)
    probs = tape.softmax(net.tape_logits(tape, params, tape.constant(states)))
    root = tape.cross_entropy(probs, tape.constant(target))
    return -net.flat_grad(tape.backward(root), params)


def _pg_checks(net: TeacherNet, actions: ActionSpace, head: str, kind: str) -> None:
    if net.head != head:
        raise ConfigError(f"this teacher needs a '{head}' head", head=net.head)
    if actions.kind != kind:
        raise ConfigError(f"this teacher needs '{kind}' actions", kind=actions.kind)
    if net.out_dim != len(actions):
        raise DimensionError("teacher outputs do not match the action space", out=net.out_dim, actions=len(actions))


def train_pg_omniscient(
    net: TeacherNet,
    theta,
    learner: Learner,
    pool: Pool,
    w_star,
    actions: ActionSpace,
    cfg: EpisodeConfig,
    rng: SeededRng,
    adam: Optional[AdamState] = None,
    on_episode: Optional[Callable[[Dict[str, float]], None]] = None,
) -> TrainResult:
    """
    REINFORCE with per-step reward -||w_t - w*||^2; actions sampled from the
    softmax during training, argmax at evaluation. All students are reset
    every episode. The best evaluated checkpoint is kept.
    """
    _require_softmax(learner, pool)
    _pg_checks(net, actions, "action", "label")
    if net.in_dim != pg_layout(learner.n_params, len(actions)).size:
        raise DimensionError("teacher does not match the PG state", got=net.in_dim)
    w_star = np.asarray(w_star, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64).copy()
    adam = adam or AdamState.zeros(net.n_params)
    streams = rng.spawn(cfg.n_students)
    w_eval = init_students(w_star, 1, cfg.init_sd, [SeededRng(cfg.eval_seed)])[0]

    def score(th) -> float:
        policy = ActionPolicy(net, th, learner, w_star, actions, cfg.eta)
        return evaluate_policy(policy, learner, pool, w_eval, cfg.eta, cfg.eval_steps,
                               cfg.eval_batch, cfg.eval_seed, w_star=w_star).final("dist")

    best_theta, best_score = theta.copy(), score(theta)
    result = TrainResult(theta, adam, best_theta, best_score)
    log("TRAIN", f"PG omniscient: T={cfg.horizon} actions={len(actions)} episode 0 eval_dist={best_score:.6g}")

    for ep in range(1, cfg.episodes + 1):
        states, acts, weights, totals = [], [], [], []
        for s, srng in enumerate(streams):
            w = init_students(w_star, 1, cfg.init_sd, [srng])[0]
            traj_states, traj_acts, rewards = [], [], []
            for _ in range(cfg.horizon):
                idx = srng.integers(len(pool), size=cfg.batch_size)
                X, Y = pool.X[idx], pool.Y[idx]
                S = np.vstack([build_state_pg(w, w_star, X[i], Y[i], cfg.eta, actions, learner)
                               for i in range(len(idx))])
                P = net.probs(theta, S)
                a = np.array([srng.categorical(p) for p in P])
                w = w - cfg.eta * learner.grad_batch(w, X, actions.values[a]).mean(axis=0)
                r = -float(np.sum((w - w_star) ** 2))
                if not math.isfinite(r):
                    raise _abort("non-finite reward", ep, theta, student=s)
                traj_states.append(S)
                traj_acts.append(a)
                rewards.append(r)
            G = discounted_returns(rewards, cfg.gamma, cfg.baseline)
            for t in range(cfg.horizon):
                states.append(traj_states[t])
                acts.extend(traj_acts[t].tolist())
                weights.extend([G[t]] * len(traj_acts[t]))
            totals.append(float(np.sum(rewards)))

        grad_J = policy_gradient_estimate(net, theta, np.vstack(states), acts, weights, cfg.n_students)
        theta, adam = adam_step(theta, -grad_J, adam)

        row = {"episode": ep, "objective": float(np.mean(totals)), "eval_metric": math.nan}
        if ep % cfg.eval_every == 0 or ep == cfg.episodes:
            row["eval_metric"] = score(theta)
            if _better(row["eval_metric"], best_score, higher_is_better=False):
                best_theta, best_score = theta.copy(), row["eval_metric"]
            log("TRAIN", f"episode {ep} return={row['objective']:.6g} eval_dist={row['eval_metric']:.6g}")
        result.log.append(row)
        if on_episode:
            on_episode(row)

    result.theta, result.adam, result.best_theta, result.best_score = theta, adam, best_theta, best_score
    return result


# =====================================================
# BLACK-BOX
# =====================================================

def blast_unrolled(
    net: TeacherNet,
    theta,
    learner: Learner,
    train_pool: Pool,
    assess_pool: Pool,
    cfg: EpisodeConfig,
    rng: SeededRng,
    w_center,
    alpha_residual: float = ALPHA_RESIDUAL,
    adam: Optional[AdamState] = None,
    on_episode: Optional[Callable[[Dict[str, float]], None]] = None,
) -> TrainResult:
    """
    Residual labels alpha*y_true + (1-alpha)*softmax(teacher); the outer loss is
    the learner's cross-entropy on assessment batches. `w_center` only seeds
    student initialization; the teacher never sees it.
    """
    _require_softmax(learner, train_pool)
    if len(assess_pool) == 0:
        raise DataFormatError("assessment pool is empty")
    if not 0.0 < alpha_residual < 1.0:
        raise ConfigError("alpha_residual must lie in (0, 1)", alpha=alpha_residual)
    if net.head != "residual":
        raise ConfigError("black-box unrolling needs a residual head", head=net.head)
    layout = omniscient_layout(learner.dim, learner.n_classes, learner.n_params, with_target=False)
    if net.in_dim != layout.size or net.out_dim != learner.n_classes:
        raise DimensionError("teacher does not match the black-box state", got=(net.in_dim, net.out_dim),
                             want=(layout.size, learner.n_classes))

    theta = np.asarray(theta, dtype=np.float64).copy()
    adam = adam or AdamState.zeros(net.n_params)
    streams = rng.spawn(cfg.n_students)
    students = init_students(w_center, cfg.n_students, cfg.init_sd, streams)
    w_eval = init_students(w_center, 1, cfg.init_sd, [SeededRng(cfg.eval_seed)])[0]

    def score(th) -> float:
        policy = NetLabelPolicy(net, th, learner, None, alpha_residual)
        return evaluate_policy(policy, learner, train_pool, w_eval, cfg.eta, cfg.eval_steps,
                               cfg.eval_batch, cfg.eval_seed, holdout=assess_pool).final("holdout_loss")

    best_theta, best_score = theta.copy(), score(theta)
    result = TrainResult(theta, adam, best_theta, best_score)
    log("TRAIN", f"black-box unrolled: v={cfg.unroll} alpha={alpha_residual} episode 0 eval_loss={best_score:.6g}")

    for ep in range(1, cfg.episodes + 1):
        draws = draw_unroll(streams, len(train_pool), cfg, assess_size=len(assess_pool))
        out = unrolled_objective(net, theta, learner, train_pool, students, draws, cfg,
                                 assess=assess_pool, alpha=alpha_residual)
        if not math.isfinite(out.loss):
            raise _abort("non-finite black-box loss", ep, theta, loss=out.loss)
        theta, adam = adam_step(theta, out.grad, adam)
        students = out.students
        for i in range(cfg.n_reset):
            students[i] = init_students(w_center, 1, cfg.init_sd, [streams[i]])[0]

        row = {"episode": ep, "objective": out.loss, "eval_metric": math.nan}
        if ep % cfg.eval_every == 0 or ep == cfg.episodes:
            row["eval_metric"] = score(theta)
            if _better(row["eval_metric"], best_score, higher_is_better=False):
                best_theta, best_score = theta.copy(), row["eval_metric"]
            log("TRAIN", f"episode {ep} loss={out.loss:.6g} eval_loss={row['eval_metric']:.6g}")
        result.log.append(row)
        if on_episode:
            on_episode(row)

    result.theta, result.adam, result.best_theta, result.best_score = theta, adam, best_theta, best_score
    return result


@dataclass
class BlastEpisode:
    states: FloatArray
    actions: np.ndarray
    owners: np.ndarray
    rewards: FloatArray


def blast_rollout(
    net: TeacherNet,
    theta,
    learner: Learner,
    train_pool: Pool,
    holdout: Pool,
    actions: ActionSpace,
    cfg: EpisodeConfig,
    students: Sequence[FloatArray],
    streams: Sequence[SeededRng],
) -> BlastEpisode:
    """
    One sampled episode per student. Terminal reward: hold-out accuracy after
    T steps, or -(steps to reach accuracy zeta) with -T when never reached.
    """
    states, acts, owners, rewards = [], [], [], []
    for s, (w, srng) in enumerate(zip(students, streams)):
        w = np.asarray(w, dtype=np.float64).copy()
        reward = -float(cfg.horizon)
        for t in range(cfg.horizon):
            idx = srng.integers(len(train_pool), size=cfg.batch_size)
            X, Y = train_pool.X[idx], train_pool.Y[idx]
            S = _stack_omniscient(X, Y, w, None, learner.predict(w, X))
            a = np.array([srng.categorical(p) for p in net.probs(theta, S)])
            mu = actions.values[a][:, None]
            L = mu * Y + (1.0 - mu) * _blast_sources(learner, w, X, cfg.p_source)
            w = w - cfg.eta * learner.grad_batch(w, X, L).mean(axis=0)
            states.append(S)
            acts.extend(a.tolist())
            owners.extend([s] * len(a))
            if cfg.reward_mode == "iterations" and learner.accuracy(w, holdout.X, holdout.Y) >= cfg.zeta:
                reward = -float(t + 1)
                break
        if cfg.reward_mode == "accuracy":
            reward = learner.accuracy(w, holdout.X, holdout.Y)
        if not math.isfinite(reward):
            raise NonFiniteError("non-finite terminal reward", student=s)
        rewards.append(reward)
    return BlastEpisode(np.vstack(states), np.asarray(acts), np.asarray(owners), np.asarray(rewards))


def blast_pg(
    net: TeacherNet,
    theta,
    learner: Learner,
    train_pool: Pool,
    holdout: Pool,
    actions: ActionSpace,
    cfg: EpisodeConfig,
    rng: SeededRng,
    w_center,
    adam: Optional[AdamState] = None,
    on_episode: Optional[Callable[[Dict[str, float]], None]] = None,
) -> TrainResult:
    """REINFORCE over mu with the episode's mean terminal reward as baseline."""
    _require_softmax(learner, train_pool)
    if len(holdout) == 0:
        raise DataFormatError("hold-out pool is empty")
    _pg_checks(net, actions, "mu", "mu")
    layout = omniscient_layout(learner.dim, learner.n_classes, learner.n_params, with_target=False)
    if net.in_dim != layout.size:
        raise DimensionError("teacher does not match the black-box state", got=net.in_dim, want=layout.size)

    theta = np.asarray(theta, dtype=np.float64).copy()
    adam = adam or AdamState.zeros(net.n_params)
    streams = rng.spawn(cfg.n_students)
    w_eval = init_students(w_center, 1, cfg.init_sd, [SeededRng(cfg.eval_seed)])[0]

    def score(th) -> float:
        policy = MuPolicy(learner, actions, cfg.p_source, net, th)
        trace = evaluate_policy(policy, learner, train_pool, w_eval, cfg.eta, cfg.eval_steps,
                                cfg.eval_batch, cfg.eval_seed, holdout=holdout)
        return trace.terminal_reward(cfg.reward_mode, cfg.zeta)

    best_theta, best_score = theta.copy(), score(theta)
    result = TrainResult(theta, adam, best_theta, best_score)
    log("TRAIN", f"black-box PG: reward={cfg.reward_mode} mu={actions.values.tolist()} episode 0 eval_score={best_score:.4f}")

    for ep in range(1, cfg.episodes + 1):
        students = init_students(w_center, cfg.n_students, cfg.init_sd, streams)
        episode = blast_rollout(net, theta, learner, train_pool, holdout, actions, cfg, students, streams)
        advantage = episode.rewards - float(np.mean(episode.rewards))
        grad_J = policy_gradient_estimate(net, theta, episode.states, episode.actions,
                                          advantage[episode.owners], cfg.n_students)
        theta, adam = adam_step(theta, -grad_J, adam)

        row = {"episode": ep, "objective": float(np.mean(episode.rewards)), "eval_metric": math.nan}
        if ep % cfg.eval_every == 0 or ep == cfg.episodes:
            row["eval_metric"] = score(theta)
            if _better(row["eval_metric"], best_score, higher_is_better=True):
                best_theta, best_score = theta.copy(), row["eval_metric"]
            log("TRAIN", f"episode {ep} reward={row['objective']:.4g} eval_score={row['eval_metric']:.4f}")
        result.log.append(row)
        if on_episode:
            on_episode(row)

    result.theta, result.adam, result.best_theta, result.best_score = theta, adam, best_theta, best_score
    return result
