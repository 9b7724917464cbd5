# labelteach/greedy_teachers.py
"""
Omniscient per-step teachers.

  - discrepancy_G           G(x, y | w) = ||w - eta * grad l(x, y | w) - w*||^2 and its (T1, T2) split
  - synth_label_*           greedy label synthesis (closed form, 1-D search, quadratic-in-y solvers)
  - imt_select              pool scan with ground-truth labels (example selection)
  - mixed_teach_step        selection, then synthesis on the selected example
  - g_scalar / g_vector     gradient rescaling factors induced by a label change
  - et_gain_teacher         rescale by c1 * ||w - w*||
  - armijo_teacher          backtracking on the rescaling factor, no w* needed
  - newton_last_teacher     Hessian-preconditioned step on the full-pool LSR objective

Softmax learners: the label enters the gradient only through the logit residual
e = sum(y) * p - y, so one SGD step is linear in y and G is a quadratic in y.
`LabelQuadratic` holds that quadratic; every vector-label constraint is solved
on it.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, NamedTuple, Optional, Protocol, Tuple

import numpy as np
from scipy import linalg
from scipy.special import expit, softmax

from labelteach.data import Pool
from labelteach.errors import (
    ConfigError,
    ConstraintError,
    DataFormatError,
    DegenerateError,
    DimensionError,
    SingularHessianError,
)
from labelteach.learners import (
    LOGIT_CLAMP,
    Learner,
    LearnerKind,
    LEAKY_SLOPE,
    activation_deriv,
    lr_grad,
    mlp_forward,
    mlp_loss_grad,
)
from labelteach.numerics import FloatArray, SeededRng, minimize_1d, project_ball, project_simplex

# =====================================================
# CONFIG
# =====================================================

SIMPLEX_PGD_ITERS = 100
SIMPLEX_PGD_STEP = 0.1          # times 1 / L_hat
LR_BRACKET_MIN = 10.0
LR_BRACKET_SCALE = 10.0
ARMIJO_G_MAX = 1e4
ARMIJO_MAX_TRIALS = 60
ARMIJO_ETA_MIN = 1e-6
DEGENERATE_TOL = 1e-14


# =====================================================
# CONSTRAINTS / THEORY KNOBS
# =====================================================

class ConstraintKind(str, Enum):
    NONE = "none"
    ONEHOT = "onehot"
    SIMPLEX = "simplex"
    MAGNITUDE = "magnitude"


ANCHORS = ("prediction", "ground_truth")


@dataclass(frozen=True)
class LabelConstraint:
    """
    Admissible label set. MAGNITUDE is the p-norm ball of `radius` around the
    learner's prediction or around the ground-truth label.
    """

    kind: ConstraintKind = ConstraintKind.NONE
    p: float = 2.0
    radius: float = 1.0
    anchor: str = "prediction"

    def __post_init__(self):
        object.__setattr__(self, "kind", ConstraintKind(self.kind))
        if self.kind == ConstraintKind.MAGNITUDE:
            if not self.radius > 0:
                raise ConstraintError("magnitude radius must be positive", radius=self.radius)
            if self.p not in (1.0, 2.0) and not math.isinf(self.p):
                raise ConstraintError("magnitude p-norm must be 1, 2 or inf", p=self.p)
            if self.anchor not in ANCHORS:
                raise ConstraintError(f"unknown magnitude anchor '{self.anchor}'", anchors=ANCHORS)

    @classmethod
    def none(cls) -> "LabelConstraint":
        return cls(ConstraintKind.NONE)

    @classmethod
    def onehot(cls) -> "LabelConstraint":
        return cls(ConstraintKind.ONEHOT)

    @classmethod
    def simplex(cls) -> "LabelConstraint":
        return cls(ConstraintKind.SIMPLEX)

    @classmethod
    def magnitude(cls, radius: float, p: float = 2.0, anchor: str = "prediction") -> "LabelConstraint":
        return cls(ConstraintKind.MAGNITUDE, p=p, radius=radius, anchor=anchor)

    def in_ball(self, y, center) -> bool:
        diff = np.atleast_1d(np.asarray(y, dtype=np.float64) - np.asarray(center, dtype=np.float64))
        return float(np.linalg.norm(diff, ord=self.p)) <= self.radius


def _check_eta(eta: float) -> None:
    if not eta > 0:
        raise ConfigError("step size must be positive", eta=eta)


# =====================================================
# DISCREPANCY
# =====================================================

class Discrepancy(NamedTuple):
    G: float
    T1: float
    T2: float


def discrepancy_G(x, y, w, w_star, eta: float, learner: Learner) -> Discrepancy:
    """G = ||w - w*||^2 + eta^2 * T1 - 2 * eta * T2 with T1 = ||grad||^2, T2 = <w - w*, grad>."""
    w = np.asarray(w, dtype=np.float64)
    w_star = np.asarray(w_star, dtype=np.float64)
    if w.shape != w_star.shape:
        raise DimensionError("w and w* dimensions differ", w=w.shape, w_star=w_star.shape)
    grad = learner.grad(w, x, y)
    r = w - eta * grad - w_star
    return Discrepancy(float(r @ r), float(grad @ grad), float((w - w_star) @ grad))


def _pool_discrepancies(X, Y, w, w_star, eta: float, learner: Learner) -> FloatArray:
    grads = learner.grad_batch(w, X, Y)
    diff = (np.asarray(w) - np.asarray(w_star))[None, :] - eta * grads
    return np.einsum("ij,ij->i", diff, diff)


# =====================================================
# SCALAR LABELS (LSR / LR)
# =====================================================

def synth_label_lsr(x, w, w_star, eta: float, lam: float = 0.0, mask=None) -> float:
    """
    Closed-form greedy label: (1 - k) <w,x> + k <w*,x>, k = 1 / (eta <x,x>).
    With ridge lam the regularizer's share of the step is cancelled by
    + lam <w_reg, x> / <x,x>.
    """
    _check_eta(eta)
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    w_star = np.asarray(w_star, dtype=np.float64)
    xx = float(x @ x)
    if xx <= 0.0:
        raise DegenerateError("zero feature vector has no label-controlled gradient")
    k = 1.0 / (eta * xx)
    y = (1.0 - k) * float(w @ x) + k * float(w_star @ x)
    if lam:
        w_reg = w if mask is None else w * mask
        y += lam * float(w_reg @ x) / xx
    return y


def magnitude_radius_from_labels(X, Y, w) -> float:
    """r = max_i |y_i - <w, x_i>|: the largest residual of the current regressor."""
    r = np.abs(np.ravel(Y) - np.asarray(X, dtype=np.float64) @ np.asarray(w, dtype=np.float64))
    if r.size == 0:
        raise DataFormatError("cannot derive a radius from an empty pool")
    return float(r.max())


def _lsr_label(x, y_true, w, w_star, eta, constraint: LabelConstraint, lam, mask) -> float:
    y = synth_label_lsr(x, w, w_star, eta, lam, mask)
    if constraint.kind == ConstraintKind.NONE:
        return y
    if constraint.kind != ConstraintKind.MAGNITUDE:
        raise ConstraintError(f"constraint '{constraint.kind.value}' does not apply to regression labels")
    center = _scalar_center(constraint, x, w, y_true, LearnerKind.LSR)
    # 1-D convex quadratic: clipping the minimizer is exact
    return float(np.clip(y, center - constraint.radius, center + constraint.radius))


def _scalar_center(constraint, x, w, y_true, kind: LearnerKind) -> float:
    if constraint.anchor == "ground_truth":
        if y_true is None:
            raise ConstraintError("ground-truth anchored constraint needs the ground-truth label")
        return float(np.ravel(y_true)[0])
    m = float(np.dot(x, w))
    if kind == LearnerKind.LR:
        return 2.0 * float(expit(np.clip(m, -LOGIT_CLAMP, LOGIT_CLAMP))) - 1.0
    return m


def synth_label_lr(
    x,
    w,
    w_star,
    eta: float,
    constraint: Optional[LabelConstraint] = None,
    y_true: Optional[float] = None,
    lam: float = 0.0,
    mask=None,
) -> float:
    """
    Greedy scalar label for logistic regression by bounded 1-D search.

    Admissible intervals: onehot -> {-1, +1} (ties to +1), simplex -> [-1, 1]
    (2p - 1 of the binary distribution (p, 1 - p)), magnitude -> ball around
    the anchor, none -> [-B, B] with B = max(10, 10 |y_true|). The ground-truth
    label is returned when admissible and at least as good.
    """
    _check_eta(eta)
    constraint = constraint or LabelConstraint.none()
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    d = w - np.asarray(w_star, dtype=np.float64)
    yt = None if y_true is None else float(np.ravel(y_true)[0])

    def G(y: float) -> float:
        r = d - eta * lr_grad(x, y, w, lam, mask)
        return float(r @ r)

    if constraint.kind == ConstraintKind.ONEHOT:
        candidates = (1.0, -1.0)
        return candidates[int(np.argmin([G(c) for c in candidates]))]

    if constraint.kind == ConstraintKind.SIMPLEX:
        lo, hi = -1.0, 1.0
    elif constraint.kind == ConstraintKind.MAGNITUDE:
        center = _scalar_center(constraint, x, w, yt, LearnerKind.LR)
        lo, hi = center - constraint.radius, center + constraint.radius
    else:
        B = max(LR_BRACKET_MIN, LR_BRACKET_SCALE * abs(yt or 0.0))
        lo, hi = -B, B
    if not lo < hi:
        raise ConstraintError("admissible label interval is empty", lo=lo, hi=hi)

    y = minimize_1d(G, lo, hi, tol=min(1e-8, (hi - lo) * 1e-3))
    if yt is not None and lo <= yt <= hi and G(yt) <= G(y):
        y = yt
    return y


# =====================================================
# VECTOR LABELS (softmax heads)
# =====================================================

class LabelQuadratic(NamedTuple):
    """G(y) = const + eta^2 e^T Q e - 2 eta b^T e, e = (p 1^T - I) y."""

    Q: FloatArray
    b: FloatArray
    probs: FloatArray
    const: float
    eta: float

    def residual(self, y) -> FloatArray:
        y = np.asarray(y, dtype=np.float64)
        return float(y.sum()) * self.probs - y

    def value(self, y) -> float:
        e = self.residual(y)
        return self.const + self.eta ** 2 * float(e @ self.Q @ e) - 2.0 * self.eta * float(self.b @ e)

    def grad(self, y) -> FloatArray:
        ge = 2.0 * self.eta ** 2 * (self.Q @ self.residual(y)) - 2.0 * self.eta * self.b
        # M^T v with M = p 1^T - I
        return float(self.probs @ ge) - ge

    def hessian(self) -> FloatArray:
        K = self.probs.shape[0]
        M = np.outer(self.probs, np.ones(K)) - np.eye(K)
        return 2.0 * self.eta ** 2 * M.T @ self.Q @ M

    def unconstrained(self) -> FloatArray:
        """Minimizer over e with sum(e) = 0 (the image of M), mapped back as y = p - e."""
        K = self.probs.shape[0]
        kkt = np.zeros((K + 1, K + 1))
        kkt[:K, :K] = 2.0 * self.eta ** 2 * self.Q
        kkt[:K, K] = 1.0
        kkt[K, :K] = 1.0
        rhs = np.concatenate([2.0 * self.eta * self.b, [0.0]])
        sol = linalg.lstsq(kkt, rhs)[0]
        return self.probs - sol[:K]


def multiclass_quadratic(x, W, W_star, eta: float, lam: float = 0.0, mask=None) -> LabelQuadratic:
    x = np.asarray(x, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    W_reg = W if mask is None else W * mask
    A = (W - np.asarray(W_star, dtype=np.float64)) - eta * lam * W_reg
    Q = float(x @ x) * np.eye(W.shape[1])
    return LabelQuadratic(Q, A.T @ x, softmax(x @ W), float(np.sum(A * A)), eta)


def mlp_quadratic(
    x,
    V,
    W,
    V_star,
    W_star,
    eta: float,
    beta: float = 1.0,
    lam: float = 0.0,
    activation: str = "leaky_relu",
    slope: float = LEAKY_SLOPE,
) -> LabelQuadratic:
    """||W' - W*||^2 + beta ||V' - V*||^2 after one SGD step, as a quadratic in y."""
    if beta < 0:
        raise ConfigError("beta must be non-negative", beta=beta)
    x = np.asarray(x, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    fw = mlp_forward(x, V, W, activation, slope)
    DW = activation_deriv(fw.U, activation, slope)[:, None] * W
    A_W = (W - np.asarray(W_star, dtype=np.float64)) - eta * lam * W
    A_V = (V - np.asarray(V_star, dtype=np.float64)) - eta * lam * V
    Q = float(fw.P @ fw.P) * np.eye(W.shape[1]) + beta * float(x @ x) * DW.T @ DW
    b = A_W.T @ fw.P + beta * DW.T @ (A_V.T @ x)
    const = float(np.sum(A_W * A_W)) + beta * float(np.sum(A_V * A_V))
    return LabelQuadratic(Q, b, fw.probs, const, eta)


def _projected_descent(quad: LabelQuadratic, y0, project: Callable[[FloatArray], FloatArray]) -> FloatArray:
    """Fixed-budget projected gradient descent; returns the best iterate (y0 included)."""
    L_hat = float(np.max(np.abs(np.linalg.eigvalsh(quad.hessian()))))
    y = np.asarray(y0, dtype=np.float64).copy()
    best_y, best_v = y.copy(), quad.value(y)
    if L_hat <= 0.0:
        return best_y
    step = SIMPLEX_PGD_STEP / L_hat
    for _ in range(SIMPLEX_PGD_ITERS):
        y = project(y - step * quad.grad(y))
        v = quad.value(y)
        if v < best_v:
            best_y, best_v = y.copy(), v
    return best_y


def _best(quad: LabelQuadratic, *candidates) -> FloatArray:
    """Lowest G; earlier candidates win ties."""
    best, best_v = None, math.inf
    for c in candidates:
        if c is None:
            continue
        v = quad.value(c)
        if v < best_v:
            best, best_v = c, v
    return np.asarray(best, dtype=np.float64)


def solve_label_quadratic(quad: LabelQuadratic, constraint: LabelConstraint, y_true=None) -> FloatArray:
    K = quad.probs.shape[0]
    if K < 2:
        raise ConfigError("vector labels need at least 2 classes", K=K)
    yt = None if y_true is None else np.asarray(y_true, dtype=np.float64)
    if yt is not None and yt.shape != (K,):
        raise DimensionError("ground-truth label dimension mismatch", got=yt.shape, want=K)

    if constraint.kind == ConstraintKind.ONEHOT:
        eye = np.eye(K)
        values = [quad.value(eye[k]) for k in range(K)]
        return eye[int(np.argmin(values))]

    if constraint.kind == ConstraintKind.NONE:
        return quad.unconstrained()

    if constraint.kind == ConstraintKind.SIMPLEX:
        on_simplex = yt is not None and abs(float(yt.sum()) - 1.0) <= 1e-8 and float(yt.min()) >= -1e-12
        start = yt if on_simplex else quad.probs
        refined = _projected_descent(quad, start, project_simplex)
        return _best(quad, refined, project_simplex(quad.unconstrained()))

    if constraint.anchor == "ground_truth":
        if yt is None:
            raise ConstraintError("ground-truth anchored constraint needs the ground-truth label")
        center = yt
    else:
        center = quad.probs

    def project(v):
        return project_ball(v, center, constraint.radius, constraint.p)

    clipped = project(quad.unconstrained())
    refined = _projected_descent(quad, clipped, project)
    admissible_truth = yt if yt is not None and constraint.in_ball(yt, center) else None
    return _best(quad, refined, clipped, admissible_truth)


def synth_label_vector(
    x, w, w_star, eta: float, learner: Learner, constraint=None, y_true=None, beta: float = 1.0
) -> FloatArray:
    """
    Greedy label vector for a softmax learner. For MLP2 the hidden layer enters
    the discrepancy with weight `beta` (0 keeps the output layer only).
    """
    _check_eta(eta)
    constraint = constraint or LabelConstraint.none()
    if learner.kind == LearnerKind.MULTICLASS:
        (W,) = learner.split(w)
        (W_star,) = learner.split(w_star)
        quad = multiclass_quadratic(x, W, W_star, eta, learner.lam, learner.reg_mask.reshape(W.shape))
    elif learner.kind == LearnerKind.MLP2:
        V, W = learner.split(w)
        V_star, W_star = learner.split(w_star)
        lam = learner.lam if learner.reg_mlp else 0.0
        quad = mlp_quadratic(x, V, W, V_star, W_star, eta, beta, lam, learner.activation, learner.slope)
    else:
        raise ConfigError("vector labels need a softmax learner", kind=learner.kind.value)
    return solve_label_quadratic(quad, constraint, y_true)


def synth_label_mlp(
    x,
    V,
    W,
    V_star,
    W_star,
    eta: float,
    beta: float = 1.0,
    constraint: Optional[LabelConstraint] = None,
    y_true=None,
    lam: float = 0.0,
    activation: str = "leaky_relu",
    slope: float = LEAKY_SLOPE,
) -> FloatArray:
    """Label minimizing ||W' - W*||_F^2 + beta ||V' - V*||_F^2 over the admissible set."""
    _check_eta(eta)
    quad = mlp_quadratic(x, V, W, V_star, W_star, eta, beta, lam, activation, slope)
    return solve_label_quadratic(quad, constraint or LabelConstraint.none(), y_true)


def mlp_label_objective(
    y,
    x,
    V,
    W,
    V_star,
    W_star,
    eta: float,
    beta: float = 1.0,
    lam: float = 0.0,
    activation: str = "leaky_relu",
    slope: float = LEAKY_SLOPE,
) -> float:
    """Direct evaluation: take the SGD step with label y and measure both layers."""
    _, dV, dW = mlp_loss_grad(x, y, V, W, lam, activation, slope, require_simplex=False)
    rW = np.asarray(W) - eta * dW - np.asarray(W_star)
    rV = np.asarray(V) - eta * dV - np.asarray(V_star)
    return float(np.sum(rW * rW)) + beta * float(np.sum(rV * rV))


def synth_label(
    x, y_true, w, w_star, eta: float, learner: Learner, constraint=None, beta: float = 1.0
) -> FloatArray:
    """Dispatch on learner kind; always returns a label of shape (label_dim,)."""
    constraint = constraint or LabelConstraint.none()
    mask = learner.reg_mask
    if learner.kind == LearnerKind.LSR:
        y = _lsr_label(x, y_true, w, w_star, eta, constraint, learner.lam, mask)
        return np.array([y])
    if learner.kind == LearnerKind.LR:
        return np.array([synth_label_lr(x, w, w_star, eta, constraint, y_true, learner.lam, mask)])
    return synth_label_vector(x, w, w_star, eta, learner, constraint, y_true, beta)


# =====================================================
# POOL SELECTION / MIXED TEACHING
# =====================================================

def imt_select(
    pool: Pool,
    w,
    w_star,
    eta: float,
    learner: Learner,
    subsample: Optional[int] = None,
    rng: Optional[SeededRng] = None,
) -> Tuple[int, float]:
    """argmin_i G(x_i, y_i | w) with ground-truth labels; ties go to the lowest index."""
    _check_eta(eta)
    n = len(pool)
    if n == 0:
        raise DataFormatError("cannot select from an empty pool")
    idx = np.arange(n)
    if subsample is not None and subsample < n:
        if rng is None:
            raise ConfigError("subsampled selection needs an rng")
        idx = np.sort(rng.choice(n, size=int(subsample), replace=False))
    G = _pool_discrepancies(pool.X[idx], pool.Y[idx], w, w_star, eta, learner)
    k = int(np.argmin(G))
    return int(idx[k]), float(G[k])


def mixed_teach_step(
    pool: Pool,
    w,
    w_star,
    eta: float,
    learner: Learner,
    constraint: Optional[LabelConstraint] = None,
    subsample: Optional[int] = None,
    rng: Optional[SeededRng] = None,
    beta: float = 1.0,
) -> Tuple[int, FloatArray]:
    i, _ = imt_select(pool, w, w_star, eta, learner, subsample, rng)
    ex = pool.example(i)
    y_true = ex.y_true if not learner.is_scalar else float(ex.y_true[0])
    return i, synth_label(ex.x, y_true, w, w_star, eta, learner, constraint, beta)


# =====================================================
# GRADIENT RESCALING VIEW
# =====================================================

def g_scalar(y: float, x, y_true: float, w, learner: Learner) -> float:
    """
    Factor with grad_data l(x, y | w) = g(y) * grad_data l(x, y_true | w)
    (data term only; the ridge term does not depend on the label).
    """
    m = float(np.dot(x, w))
    y = float(y)
    y_true = float(y_true)
    if learner.kind == LearnerKind.LSR:
        den = m - y_true
        if abs(den) <= DEGENERATE_TOL:
            raise DegenerateError("prediction equals the ground-truth label", prediction=m)
        return (m - y) / den
    if learner.kind == LearnerKind.LR:
        if y_true == 0.0:
            raise DegenerateError("zero ground-truth label has no LR gradient")
        den = y_true * float(expit(np.clip(-y_true * m, -LOGIT_CLAMP, LOGIT_CLAMP)))
        if abs(den) <= DEGENERATE_TOL:
            raise DegenerateError("ground-truth LR gradient underflows", margin=y_true * m)
        return y * float(expit(np.clip(-y * m, -LOGIT_CLAMP, LOGIT_CLAMP))) / den
    raise ConfigError("g_scalar needs a scalar-label learner", kind=learner.kind.value)


def g_vector(y, x, y_true, W) -> FloatArray:
    """
    Column factors for a least-squares learner with K-dim labels (W is d x K):
    grad(y) = grad(y_true) @ diag(g), g = (y - W^T x) / (y_true - W^T x).
    """
    pred = np.asarray(x, dtype=np.float64) @ np.asarray(W, dtype=np.float64)
    den = np.asarray(y_true, dtype=np.float64) - pred
    if np.any(np.abs(den) <= DEGENERATE_TOL):
        raise DegenerateError("prediction equals the ground-truth label in some coordinate")
    return (np.asarray(y, dtype=np.float64) - pred) / den


def gain_label(g: float, x, y_true: float, w, w_star, eta: float, learner: Learner) -> float:
    """
    A label realizing the rescaling factor g. Falls back to direct greedy
    synthesis when the LR factor is degenerate.
    """
    m = float(np.dot(x, w))
    if learner.kind == LearnerKind.LSR:
        return m - g * (m - float(y_true))
    if learner.kind != LearnerKind.LR:
        raise ConfigError("gain_label needs a scalar-label learner", kind=learner.kind.value)
    try:
        g_scalar(y_true, x, y_true, w, learner)
    except DegenerateError:
        return synth_label_lr(x, w, w_star, eta, None, y_true, learner.lam, learner.reg_mask)
    B = max(LR_BRACKET_MIN, LR_BRACKET_SCALE * abs(float(y_true)) * max(1.0, abs(g)))
    return minimize_1d(lambda y: (g_scalar(y, x, y_true, w, learner) - g) ** 2, -B, B, tol=1e-10)


# =====================================================
# THEORY-DRIVEN TEACHERS
# =====================================================

def et_gain_teacher(x, y_true, w, w_star, eta: float, c1: float, learner: Learner) -> FloatArray:
    """w' = w - eta * c1 * ||w - w*|| * grad l(x, y_true | w)."""
    _check_eta(eta)
    if not c1 > 0:
        raise ConfigError("c1 must be positive", c1=c1)
    w = np.asarray(w, dtype=np.float64)
    g = c1 * float(np.linalg.norm(w - np.asarray(w_star, dtype=np.float64)))
    return w - eta * g * learner.grad(w, x, y_true)


class ArmijoStep(NamedTuple):
    g: float
    w: FloatArray
    trials: int
    satisfied: bool


def armijo_condition(learner: Learner, x, y, w, eta: float, g: float, c2: float) -> bool:
    """l(w - eta g grad) <= l(w) - c2 eta g ||grad||^2."""
    w = np.asarray(w, dtype=np.float64)
    grad = learner.grad(w, x, y)
    lhs = learner.loss(w - eta * g * grad, x, y)
    rhs = learner.loss(w, x, y) - c2 * eta * g * float(grad @ grad)
    return lhs <= rhs


def armijo_teacher(
    x,
    y_true,
    w,
    eta: float,
    learner: Learner,
    c2: float = 0.5,
    factor: float = 0.5,
    g_max: float = ARMIJO_G_MAX,
    k_max: int = ARMIJO_MAX_TRIALS,
    eta_min: float = ARMIJO_ETA_MIN,
) -> ArmijoStep:
    """
    Largest g in g_max * factor^k (k = 0 .. k_max-1) that passes the Armijo
    test. If none does, the step falls back to an effective rate eta * g = eta_min.
    """
    _check_eta(eta)
    if not 0.5 <= c2 < 1.0:
        raise ConfigError("c2 must lie in [0.5, 1)", c2=c2)
    if not 0.0 < factor < 1.0:
        raise ConfigError("backtrack factor must lie in (0, 1)", factor=factor)
    w = np.asarray(w, dtype=np.float64)
    grad = learner.grad(w, x, y_true)
    if not np.any(grad):
        raise DegenerateError("zero gradient: nothing to rescale")

    g = float(g_max)
    for k in range(int(k_max)):
        if armijo_condition(learner, x, y_true, w, eta, g, c2):
            return ArmijoStep(g, w - eta * g * grad, k + 1, True)
        g *= factor
    g = eta_min / eta
    return ArmijoStep(g, w - eta * g * grad, int(k_max), False)


class TwiceDifferentiable(Protocol):
    def grad(self, w) -> FloatArray: ...

    def hess(self, w) -> FloatArray: ...


@dataclass(frozen=True)
class CallableObjective:
    """Adapter for plain callables (any smooth test function)."""

    grad_fn: Callable[[FloatArray], FloatArray]
    hess_fn: Callable[[FloatArray], FloatArray]

    def grad(self, w) -> FloatArray:
        return np.asarray(self.grad_fn(np.asarray(w, dtype=np.float64)), dtype=np.float64)

    def hess(self, w) -> FloatArray:
        return np.asarray(self.hess_fn(np.asarray(w, dtype=np.float64)), dtype=np.float64)


@dataclass(frozen=True)
class LsrPoolObjective:
    """
    f(w) = sum_i [ 1/2 (<w, x_i> - y_i)^2 + lam/2 ||w_reg||^2 ], so
    H = X^T X + n lam diag(mask) and the minimizer is the ridge solution of the
    pool-mean objective.
    """

    X: FloatArray
    Y: FloatArray
    lam: float = 0.0
    mask: Optional[FloatArray] = None

    def _mask(self) -> FloatArray:
        d = np.shape(self.X)[1]
        return np.ones(d) if self.mask is None else np.asarray(self.mask, dtype=np.float64)

    def value(self, w) -> float:
        w = np.asarray(w, dtype=np.float64)
        r = np.asarray(self.X) @ w - np.ravel(self.Y)
        wr = w * self._mask()
        return 0.5 * float(r @ r) + 0.5 * len(r) * self.lam * float(wr @ wr)

    def grad(self, w) -> FloatArray:
        w = np.asarray(w, dtype=np.float64)
        X = np.asarray(self.X)
        return X.T @ (X @ w - np.ravel(self.Y)) + X.shape[0] * self.lam * (w * self._mask())

    def hess(self, w) -> FloatArray:
        X = np.asarray(self.X)
        return X.T @ X + X.shape[0] * self.lam * np.diag(self._mask())


def newton_last_teacher(f: TwiceDifferentiable, w, w_star, eta: float, alpha: float = 0.0) -> FloatArray:
    """
    w' = w - H^-1 grad f(w) with H the Hessian at alpha w* + (1 - alpha) w.
    The rescaling factor is (1/eta) H^-1, so eta cancels out of the update.
    """
    _check_eta(eta)
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError("alpha must lie in [0, 1]", alpha=alpha)
    w = np.asarray(w, dtype=np.float64)
    w_star = np.asarray(w_star, dtype=np.float64)
    H = np.asarray(f.hess(alpha * w_star + (1.0 - alpha) * w), dtype=np.float64)
    if H.shape != (w.size, w.size):
        raise DimensionError("Hessian shape mismatch", H=H.shape, w=w.shape)
    if np.linalg.matrix_rank(H) < w.size:
        raise SingularHessianError("Hessian is rank deficient", rank=int(np.linalg.matrix_rank(H)), dim=w.size)
    try:
        factor = linalg.cho_factor(H)
    except linalg.LinAlgError as e:
        raise SingularHessianError("Hessian is not positive definite") from e
    return w - linalg.cho_solve(factor, f.grad(w))
