# labelteach/learners.py
"""
Loss, gradient and SGD update for the learners that get taught:

  - LSR         least-squares regression, scalar label
  - LR          logistic regression, scalar label (±1 convention)
  - MULTICLASS  softmax + cross-entropy linear model, K-dim label
  - MLP2        two-layer perceptron  softmax(W^T σ(V^T x)), K-dim label

Teachers work on flat weight vectors through `Learner`; `LearnerParams` is the
structured view (w, or V and W) used for SGD updates and checkpoints.
Bias is handled by appending a constant 1 feature (see `augment`); the bias
coordinate is never regularized.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit, log_softmax, softmax

from labelteach.errors import ConfigError, ConstraintError, DimensionError
from labelteach.numerics import FloatArray, SeededRng

# =====================================================
# CONFIG
# =====================================================

DEFAULT_LAMBDA = 5e-5
DEFAULT_ETA = 1e-3
LEAKY_SLOPE = 0.01
LOGIT_CLAMP = 500.0
SIMPLEX_TOL = 1e-8


class LearnerKind(str, Enum):
    LSR = "lsr"
    LR = "lr"
    MULTICLASS = "multiclass"
    MLP2 = "mlp2"


def augment(X) -> FloatArray:
    """Append the constant-1 bias feature to a vector or to every row of a matrix."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        return np.concatenate([X, [1.0]])
    return np.hstack([X, np.ones((X.shape[0], 1))])


# =====================================================
# STEP SCHEDULE
# =====================================================

@dataclass(frozen=True)
class StepSchedule:
    kind: str = "constant"
    eta0: float = DEFAULT_ETA
    decay: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "inverse"):
            raise ConfigError(f"unknown step schedule '{self.kind}'", kind=self.kind)
        if not self.eta0 > 0:
            raise ConfigError("eta0 must be positive", eta0=self.eta0)
        if self.decay < 0:
            raise ConfigError("decay must be non-negative", decay=self.decay)

    def rate(self, t: int) -> float:
        if self.kind == "constant":
            return self.eta0
        return self.eta0 / (1.0 + self.decay * t)


# =====================================================
# SCALAR LEARNERS
# =====================================================

def _reg(w: np.ndarray, lam: float, mask: Optional[np.ndarray]) -> np.ndarray:
    return w if mask is None else w * mask


def _check_xw(x: np.ndarray, w: np.ndarray) -> None:
    if x.shape != w.shape:
        raise DimensionError("x and w dimensions differ", x=x.shape, w=w.shape)


def lsr_loss(x, y: float, w, lam: float = 0.0, mask=None) -> float:
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    _check_xw(x, w)
    r = float(x @ w) - float(y)
    wr = _reg(w, lam, mask)
    return 0.5 * r * r + 0.5 * lam * float(wr @ wr)


def lsr_grad(x, y: float, w, lam: float = 0.0, mask=None) -> FloatArray:
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    _check_xw(x, w)
    r = float(x @ w) - float(y)
    return r * x + lam * _reg(w, lam, mask)


def lr_loss(x, y: float, w, lam: float = 0.0, mask=None) -> float:
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    _check_xw(x, w)
    margin = float(y) * float(x @ w)
    wr = _reg(w, lam, mask)
    return float(np.logaddexp(0.0, -margin)) + 0.5 * lam * float(wr @ wr)


def lr_coef(x, y: float, w) -> float:
    """Scalar c with grad of the data term = c * x, i.e. -y / (1 + exp(y<w,x>))."""
    margin = float(np.clip(float(y) * float(np.dot(x, w)), -LOGIT_CLAMP, LOGIT_CLAMP))
    return -float(y) * float(expit(-margin))


def lr_grad(x, y: float, w, lam: float = 0.0, mask=None) -> FloatArray:
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    _check_xw(x, w)
    return lr_coef(x, y, w) * x + lam * _reg(w, lam, mask)


# =====================================================
# SOFTMAX LEARNERS
# =====================================================

def check_simplex(y, tol: float = SIMPLEX_TOL) -> None:
    y = np.asarray(y, dtype=np.float64)
    if abs(float(y.sum()) - 1.0) > tol or float(y.min()) < -tol:
        raise ConstraintError("label is not on the probability simplex", label=y.tolist())


def softmax_label_residual(probs, y) -> FloatArray:
    """d(-sum y log softmax(z))/dz = sum(y) * p - y (any real label vector)."""
    y = np.asarray(y, dtype=np.float64)
    return float(y.sum()) * probs - y


def multiclass_loss_grad(x, y, W, lam: float = 0.0, mask=None) -> Tuple[float, FloatArray]:
    x = np.asarray(x, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if W.shape[0] != x.shape[0] or W.shape[1] != y.shape[0]:
        raise DimensionError("multiclass: dimension mismatch", x=x.shape, W=W.shape, y=y.shape)
    z = x @ W
    Wr = _reg(W, lam, mask)
    loss = -float(y @ log_softmax(z)) + 0.5 * lam * float(np.sum(Wr * Wr))
    grad = np.outer(x, softmax_label_residual(softmax(z), y)) + lam * Wr
    return loss, grad


class MlpForward(NamedTuple):
    U: FloatArray
    P: FloatArray
    logits: FloatArray
    probs: FloatArray


def apply_activation(U: np.ndarray, activation: str, slope: float) -> np.ndarray:
    if activation == "relu":
        return np.maximum(U, 0.0)
    return np.where(U > 0, U, slope * U)


def activation_deriv(U: np.ndarray, activation: str, slope: float) -> np.ndarray:
    if activation == "relu":
        return (U > 0).astype(np.float64)
    return np.where(U > 0, 1.0, slope)


def mlp_forward(x, V, W, activation: str = "leaky_relu", slope: float = LEAKY_SLOPE) -> MlpForward:
    x = np.asarray(x, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if V.shape[0] != x.shape[0] or W.shape[0] != V.shape[1]:
        raise DimensionError("mlp: dimension mismatch", x=x.shape, V=V.shape, W=W.shape)
    U = x @ V
    P = apply_activation(U, activation, slope)
    logits = P @ W
    return MlpForward(U, P, logits, softmax(logits))


def mlp_loss_grad(
    x,
    y,
    V,
    W,
    lam: float = 0.0,
    activation: str = "leaky_relu",
    slope: float = LEAKY_SLOPE,
    require_simplex: bool = True,
) -> Tuple[float, FloatArray, FloatArray]:
    """
    Cross-entropy of softmax(W^T σ(V^T x)) against y, and (dV, dW).
    λ applies to both weight matrices.
    """
    y = np.asarray(y, dtype=np.float64)
    if require_simplex:
        check_simplex(y)
    fw = mlp_forward(x, V, W, activation, slope)
    if y.shape != fw.probs.shape:
        raise DimensionError("mlp: label dimension mismatch", y=y.shape, K=fw.probs.shape)
    x = np.asarray(x, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)

    loss = -float(y @ log_softmax(fw.logits)) + 0.5 * lam * (float(np.sum(V * V)) + float(np.sum(W * W)))
    dz = softmax_label_residual(fw.probs, y)
    dW = np.outer(fw.P, dz) + lam * W
    dU = (W @ dz) * activation_deriv(fw.U, activation, slope)
    dV = np.outer(x, dU) + lam * V
    return loss, dV, dW


# =====================================================
# PARAMETERS + SGD
# =====================================================

@dataclass(frozen=True)
class LearnerParams:
    kind: LearnerKind
    w: Optional[FloatArray] = None
    V: Optional[FloatArray] = None
    W: Optional[FloatArray] = None
    bias: bool = False
    lam: float = 0.0

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError("lambda must be non-negative", lam=self.lam)
        if self.kind == LearnerKind.MLP2:
            if self.V is None or self.W is None:
                raise DimensionError("MLP2 parameters need V and W")
            if np.ndim(self.V) != 2 or np.ndim(self.W) != 2 or self.V.shape[1] != self.W.shape[0]:
                raise DimensionError("MLP2: V and W shapes disagree", V=np.shape(self.V), W=np.shape(self.W))
        elif self.w is None or np.ndim(self.w) != 1:
            raise DimensionError("linear learners need a weight vector w")

    def blocks(self) -> Tuple[FloatArray, ...]:
        if self.kind == LearnerKind.MLP2:
            return (self.V, self.W)
        return (self.w,)

    def flat(self) -> FloatArray:
        return np.concatenate([np.ravel(b) for b in self.blocks()])


GradLike = Union[FloatArray, Sequence[FloatArray]]


def sgd_step(params: LearnerParams, grad: GradLike, eta: float) -> LearnerParams:
    """w' = w - eta * grad, block by block."""
    if not eta > 0:
        raise ConfigError("step size must be positive", eta=eta)
    blocks = params.blocks()
    if isinstance(grad, np.ndarray) and len(blocks) == 1:
        grads: Sequence[np.ndarray] = (grad,)
    elif isinstance(grad, np.ndarray):
        sizes = [b.size for b in blocks]
        if grad.size != sum(sizes):
            raise DimensionError("flat gradient size mismatch", got=grad.size, want=sum(sizes))
        cuts = np.cumsum(sizes)[:-1]
        grads = [g.reshape(b.shape) for g, b in zip(np.split(grad, cuts), blocks)]
    else:
        grads = list(grad)
    if len(grads) != len(blocks):
        raise DimensionError("gradient block count mismatch", got=len(grads), want=len(blocks))

    new = []
    for b, g in zip(blocks, grads):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != b.shape:
            raise DimensionError("gradient block shape mismatch", got=g.shape, want=b.shape)
        new.append(b - eta * g)

    if params.kind == LearnerKind.MLP2:
        return LearnerParams(params.kind, V=new[0], W=new[1], bias=params.bias, lam=params.lam)
    return LearnerParams(params.kind, w=new[0], bias=params.bias, lam=params.lam)


# =====================================================
# FLAT-WEIGHT LEARNER FACADE
# =====================================================

@dataclass(frozen=True)
class Learner:
    """
    Shape and hyper-parameters of a learner. `dim` counts the bias feature
    when `bias` is set (inputs are expected to be augmented already).
    """

    kind: LearnerKind
    dim: int
    n_classes: int = 1
    hidden: int = 0
    lam: float = DEFAULT_LAMBDA
    bias: bool = False
    activation: str = "leaky_relu"
    slope: float = LEAKY_SLOPE
    reg_mlp: bool = True
    _mask: Optional[FloatArray] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dim <= 0:
            raise ConfigError("learner dimension must be positive", dim=self.dim)
        if self.lam < 0:
            raise ConfigError("lambda must be non-negative", lam=self.lam)
        if self.kind in (LearnerKind.MULTICLASS, LearnerKind.MLP2) and self.n_classes < 2:
            raise ConfigError("softmax learners need at least 2 classes", K=self.n_classes)
        if self.kind == LearnerKind.MLP2 and self.hidden <= 0:
            raise ConfigError("MLP2 needs a positive hidden width", hidden=self.hidden)
        if self.activation not in ("relu", "leaky_relu"):
            raise ConfigError(f"unknown activation '{self.activation}'")
        object.__setattr__(self, "_mask", self._build_mask())

    # ---------------------------
    # shapes
    # ---------------------------

    @property
    def is_scalar(self) -> bool:
        return self.kind in (LearnerKind.LSR, LearnerKind.LR)

    @property
    def label_dim(self) -> int:
        return 1 if self.is_scalar else self.n_classes

    @property
    def n_params(self) -> int:
        if self.is_scalar:
            return self.dim
        if self.kind == LearnerKind.MULTICLASS:
            return self.dim * self.n_classes
        return self.dim * self.hidden + self.hidden * self.n_classes

    def _build_mask(self) -> FloatArray:
        if self.kind == LearnerKind.MLP2:
            return np.full(self.n_params, 1.0 if self.reg_mlp else 0.0)
        mask = np.ones(self.n_params)
        if self.bias:
            if self.is_scalar:
                mask[-1] = 0.0
            else:
                mask.reshape(self.dim, self.n_classes)[-1, :] = 0.0
        return mask

    @property
    def reg_mask(self) -> FloatArray:
        return self._mask

    def split(self, w) -> Tuple[FloatArray, ...]:
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self.n_params,):
            raise DimensionError("flat weight size mismatch", got=w.shape, want=self.n_params)
        if self.is_scalar:
            return (w,)
        if self.kind == LearnerKind.MULTICLASS:
            return (w.reshape(self.dim, self.n_classes),)
        cut = self.dim * self.hidden
        return (w[:cut].reshape(self.dim, self.hidden), w[cut:].reshape(self.hidden, self.n_classes))

    def to_params(self, w) -> LearnerParams:
        if self.kind == LearnerKind.MLP2:
            V, W = self.split(w)
            return LearnerParams(self.kind, V=V, W=W, bias=self.bias, lam=self.lam)
        return LearnerParams(self.kind, w=np.asarray(w, dtype=np.float64), bias=self.bias, lam=self.lam)

    # ---------------------------
    # loss / gradient
    # ---------------------------

    def loss(self, w, x, y) -> float:
        w = np.asarray(w, dtype=np.float64)
        if self.kind == LearnerKind.LSR:
            return lsr_loss(x, float(np.ravel(y)[0]), w, self.lam, self._mask)
        if self.kind == LearnerKind.LR:
            return lr_loss(x, float(np.ravel(y)[0]), w, self.lam, self._mask)
        if self.kind == LearnerKind.MULTICLASS:
            (W,) = self.split(w)
            mask = self._mask.reshape(W.shape)
            return multiclass_loss_grad(x, y, W, self.lam, mask)[0]
        V, W = self.split(w)
        lam = self.lam if self.reg_mlp else 0.0
        return mlp_loss_grad(x, y, V, W, lam, self.activation, self.slope, require_simplex=False)[0]

    def grad(self, w, x, y) -> FloatArray:
        w = np.asarray(w, dtype=np.float64)
        if self.kind == LearnerKind.LSR:
            return lsr_grad(x, float(np.ravel(y)[0]), w, self.lam, self._mask)
        if self.kind == LearnerKind.LR:
            return lr_grad(x, float(np.ravel(y)[0]), w, self.lam, self._mask)
        if self.kind == LearnerKind.MULTICLASS:
            (W,) = self.split(w)
            mask = self._mask.reshape(W.shape)
            return multiclass_loss_grad(x, y, W, self.lam, mask)[1].ravel()
        V, W = self.split(w)
        lam = self.lam if self.reg_mlp else 0.0
        _, dV, dW = mlp_loss_grad(x, y, V, W, lam, self.activation, self.slope, require_simplex=False)
        return np.concatenate([dV.ravel(), dW.ravel()])

    def grad_batch(self, w, X, Y) -> FloatArray:
        """Per-example gradients as rows of an (n, n_params) matrix."""
        w = np.asarray(w, dtype=np.float64)
        X = np.asarray(X, dtype=np.float64)
        reg = self.lam * (w * self._mask)
        if self.kind == LearnerKind.LSR:
            r = X @ w - np.ravel(Y)
            return r[:, None] * X + reg
        if self.kind == LearnerKind.LR:
            y = np.ravel(Y)
            margin = np.clip(y * (X @ w), -LOGIT_CLAMP, LOGIT_CLAMP)
            return (-y * expit(-margin))[:, None] * X + reg
        if self.kind == LearnerKind.MULTICLASS:
            (W,) = self.split(w)
            Y = np.asarray(Y, dtype=np.float64)
            P = softmax(X @ W, axis=1)
            E = Y.sum(axis=1, keepdims=True) * P - Y
            G = X[:, :, None] * E[:, None, :]
            return G.reshape(X.shape[0], -1) + reg
        return np.vstack([self.grad(w, X[i], Y[i]) for i in range(X.shape[0])])

    def objective_grad(self, w, X, Y) -> FloatArray:
        """Gradient of `objective`, i.e. the mean of the per-example gradients."""
        if self.kind != LearnerKind.MLP2:
            return self.grad_batch(w, X, Y).mean(axis=0)
        w = np.asarray(w, dtype=np.float64)
        X = np.asarray(X, dtype=np.float64)
        Y = np.asarray(Y, dtype=np.float64)
        V, W = self.split(w)
        U = X @ V
        P = apply_activation(U, self.activation, self.slope)
        E = Y.sum(axis=1, keepdims=True) * softmax(P @ W, axis=1) - Y
        n = X.shape[0]
        dW = P.T @ E / n
        dV = X.T @ ((E @ W.T) * activation_deriv(U, self.activation, self.slope)) / n
        lam = self.lam if self.reg_mlp else 0.0
        return np.concatenate([(dV + lam * V).ravel(), (dW + lam * W).ravel()])

    def step(self, w, x, y, eta: float) -> FloatArray:
        return np.asarray(w, dtype=np.float64) - eta * self.grad(w, x, y)

    # ---------------------------
    # prediction / pool metrics
    # ---------------------------

    def predict(self, w, x):
        """<w,x> for LSR, P(+1) for LR, class probabilities otherwise."""
        w = np.asarray(w, dtype=np.float64)
        x = np.asarray(x, dtype=np.float64)
        if self.kind == LearnerKind.LSR:
            return x @ w
        if self.kind == LearnerKind.LR:
            return expit(np.clip(x @ w, -LOGIT_CLAMP, LOGIT_CLAMP))
        if self.kind == LearnerKind.MULTICLASS:
            (W,) = self.split(w)
            return softmax(x @ W, axis=-1)
        V, W = self.split(w)
        P = apply_activation(x @ V, self.activation, self.slope)
        return softmax(P @ W, axis=-1)

    def objective(self, w, X, Y) -> float:
        """Mean per-example loss over a pool (each loss carries the λ term)."""
        X = np.asarray(X, dtype=np.float64)
        w = np.asarray(w, dtype=np.float64)
        wr = w * self._mask
        reg = 0.5 * self.lam * float(wr @ wr)
        if self.kind == LearnerKind.LSR:
            r = X @ w - np.ravel(Y)
            return 0.5 * float(np.mean(r * r)) + reg
        if self.kind == LearnerKind.LR:
            return float(np.mean(np.logaddexp(0.0, -np.ravel(Y) * (X @ w)))) + reg
        probs = self.predict(w, X)
        Y = np.asarray(Y, dtype=np.float64)
        return -float(np.mean(np.sum(Y * np.log(np.maximum(probs, 1e-300)), axis=1))) + reg

    def accuracy(self, w, X, Y) -> float:
        """Classification accuracy; for LSR the fraction of residuals below 0.5."""
        X = np.asarray(X, dtype=np.float64)
        pred = self.predict(w, X)
        if self.kind == LearnerKind.LSR:
            return float(np.mean(np.abs(pred - np.ravel(Y)) < 0.5))
        if self.kind == LearnerKind.LR:
            return float(np.mean(np.where(pred >= 0.5, 1.0, -1.0) == np.sign(np.ravel(Y))))
        return float(np.mean(np.argmax(pred, axis=1) == np.argmax(np.asarray(Y), axis=1)))

    def init_weights(self, rng: SeededRng, scale: float = 0.1) -> FloatArray:
        return rng.normal(size=self.n_params, scale=scale)
