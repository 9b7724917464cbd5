# labelteach/teacher_net.py
"""
Feed-forward teaching policy, its Adam optimizer and checkpoint files.

The architecture lives in `TeacherNet`; the weights are one flat vector theta
so the same object serves numpy inference, tape (unrolled) training and Adam.

Heads:
  label     K logits -> softmax -> soft label on the simplex
  residual  K logits -> softmax -> y', mixed with the ground truth by the caller
  action    M logits over a discrete label action space
  mu        M logits over a grid of smoothing weights

Checkpoint layout (numpy .npz):
  header  JSON {"format": "labelteach-teacher", "version": 1, "sizes": [...],
          "activation": str, "slope": float, "head": str, "meta": {...}}
  theta   float64 flat weights, layer by layer (W_i row-major, then b_i)
  adam_m, adam_v, adam_t, adam_hparams   optional optimizer state
"""

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import softmax

from labelteach.errors import ConfigError, DataFormatError, DimensionError, NonFiniteError
from labelteach.learners import LEAKY_SLOPE, apply_activation
from labelteach.numerics import FloatArray, SeededRng
from labelteach.tape import Tape

# =====================================================
# CONFIG
# =====================================================

ADAM_LR = 1e-3
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
ADAM_WEIGHT_DECAY = 1e-4

HEADS = ("label", "residual", "action", "mu")
CHECKPOINT_FORMAT = "labelteach-teacher"


# =====================================================
# NETWORK
# =====================================================

@dataclass(frozen=True)
class TeacherNet:
    sizes: Tuple[int, ...]
    head: str = "label"
    activation: str = "relu"
    slope: float = LEAKY_SLOPE

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if len(self.sizes) < 2 or any(s <= 0 for s in self.sizes):
            raise ConfigError("teacher sizes need an input, an output and positive widths", sizes=self.sizes)
        if self.head not in HEADS:
            raise ConfigError(f"unknown teacher head '{self.head}'", heads=HEADS)
        if self.activation not in ("relu", "leaky_relu"):
            raise ConfigError(f"unknown teacher activation '{self.activation}'")

    @classmethod
    def build(cls, in_dim: int, hidden: Sequence[int], out_dim: int, **kw) -> "TeacherNet":
        return cls((in_dim, *hidden, out_dim), **kw)

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    @property
    def n_params(self) -> int:
        return sum(a * b + b for a, b in zip(self.sizes[:-1], self.sizes[1:]))

    def layers(self, theta) -> List[Tuple[FloatArray, FloatArray]]:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise DimensionError("teacher weight size mismatch", got=theta.shape, want=self.n_params)
        out, off = [], 0
        for a, b in zip(self.sizes[:-1], self.sizes[1:]):
            W = theta[off:off + a * b].reshape(a, b)
            off += a * b
            out.append((W, theta[off:off + b]))
            off += b
        return out

    def init_theta(self, rng: SeededRng) -> FloatArray:
        """N(0, 1/fan_in) weights, zero biases."""
        parts = []
        for a, b in zip(self.sizes[:-1], self.sizes[1:]):
            parts.append(rng.normal(size=a * b, scale=1.0 / np.sqrt(a)))
            parts.append(np.zeros(b))
        return np.concatenate(parts)

    # ---------------------------
    # numpy inference
    # ---------------------------

    def logits(self, theta, state) -> FloatArray:
        h = np.asarray(state, dtype=np.float64)
        if h.shape[-1] != self.in_dim:
            raise DimensionError("teacher state size mismatch", got=h.shape[-1], want=self.in_dim)
        layers = self.layers(theta)
        for i, (W, b) in enumerate(layers):
            h = h @ W + b
            if i < len(layers) - 1:
                h = apply_activation(h, self.activation, self.slope)
        return h

    def probs(self, theta, state) -> FloatArray:
        return softmax(self.logits(theta, state), axis=-1)

    # ---------------------------
    # tape
    # ---------------------------

    def tape_params(self, tape: Tape, theta) -> List[int]:
        """One variable node per weight/bias block, in flat order."""
        nodes = []
        for W, b in self.layers(theta):
            nodes.append(tape.variable(W))
            nodes.append(tape.variable(b))
        return nodes

    def tape_logits(self, tape: Tape, params: Sequence[int], state: int) -> int:
        h = state
        n_layers = len(params) // 2
        for i in range(n_layers):
            h = tape.affine(h, params[2 * i], params[2 * i + 1])
            if i < n_layers - 1:
                h = tape.relu(h) if self.activation == "relu" else tape.leaky_relu(h, self.slope)
        return h

    def flat_grad(self, grads: Sequence[np.ndarray], params: Sequence[int]) -> FloatArray:
        return np.concatenate([np.ravel(grads[p]) for p in params])


# =====================================================
# ADAM
# =====================================================

@dataclass(frozen=True)
class AdamState:
    m: FloatArray
    v: FloatArray
    t: int = 0
    lr: float = ADAM_LR
    beta1: float = ADAM_BETAS[0]
    beta2: float = ADAM_BETAS[1]
    eps: float = ADAM_EPS
    weight_decay: float = ADAM_WEIGHT_DECAY

    @classmethod
    def zeros(cls, n: int, **hparams) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0, **hparams)

    def hparams(self) -> Dict[str, float]:
        return {
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "weight_decay": self.weight_decay,
        }


def adam_step(theta, grad, state: AdamState) -> Tuple[FloatArray, AdamState]:
    """Bias-corrected Adam with decoupled weight decay: theta -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)."""
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if theta.shape != grad.shape or state.m.shape != theta.shape:
        raise DimensionError("adam: shape mismatch", theta=theta.shape, grad=grad.shape, m=state.m.shape)
    if not np.all(np.isfinite(grad)):
        raise NonFiniteError("adam: non-finite gradient")

    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_theta = theta - state.lr * (m_hat / (np.sqrt(v_hat) + state.eps) + state.weight_decay * theta)
    return new_theta, replace(state, m=m, v=v, t=t)


# =====================================================
# CHECKPOINTS
# =====================================================

@dataclass
class Checkpoint:
    net: TeacherNet
    theta: FloatArray
    adam: Optional[AdamState] = None
    meta: Dict[str, object] = field(default_factory=dict)


def save_checkpoint(path, ckpt: Checkpoint) -> Path:
    path = Path(path)
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": 1,
        "sizes": list(ckpt.net.sizes),
        "activation": ckpt.net.activation,
        "slope": ckpt.net.slope,
        "head": ckpt.net.head,
        "meta": ckpt.meta,
    }
    arrays = {"header": np.array(json.dumps(header)), "theta": np.asarray(ckpt.theta, dtype=np.float64)}
    if ckpt.adam is not None:
        arrays["adam_m"] = ckpt.adam.m
        arrays["adam_v"] = ckpt.adam.v
        arrays["adam_t"] = np.array(ckpt.adam.t, dtype=np.int64)
        arrays["adam_hparams"] = np.array(json.dumps(ckpt.adam.hparams()))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as f:
            np.savez(f, **arrays)
    except OSError as e:
        raise OSError(f"cannot write checkpoint to {path}: {e}") from e
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as z:
            header = json.loads(str(z["header"]))
            theta = z["theta"]
            adam = None
            if "adam_m" in z.files:
                adam = AdamState(z["adam_m"], z["adam_v"], int(z["adam_t"]), **json.loads(str(z["adam_hparams"])))
    except (OSError, KeyError, ValueError) as e:
        raise DataFormatError(f"cannot read teacher checkpoint: {e}", path=str(path)) from e
    if header.get("format") != CHECKPOINT_FORMAT:
        raise DataFormatError("not a labelteach teacher checkpoint", path=str(path))
    net = TeacherNet(tuple(header["sizes"]), header["head"], header["activation"], float(header["slope"]))
    if theta.shape != (net.n_params,):
        raise DataFormatError("checkpoint weights do not match the architecture", path=str(path))
    return Checkpoint(net, theta, adam, header.get("meta", {}))
