# labelteach/tape.py
"""
Minimal reverse-mode differentiation tape.

Nodes are appended in evaluation order, so the node list is already a
topological order; `backward` walks it once in reverse. Each node keeps its
op name, operand indices, cached value and a vector-Jacobian closure.

Only the ops needed to unroll SGD on linear/softmax learners and to run a
small MLP teacher are provided.
"""

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from labelteach.errors import DimensionError, NonFiniteError
from labelteach.numerics import FloatArray

VJP = Callable[[np.ndarray], Tuple[np.ndarray, ...]]


@dataclass
class Node:
    op: str
    inputs: Tuple[int, ...]
    value: np.ndarray
    vjp: Optional[VJP] = None


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tape:
    def __init__(self):
        self.nodes: List[Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def _push(self, op: str, inputs: Sequence[int], value, vjp: Optional[VJP]) -> int:
        value = np.asarray(value, dtype=np.float64)
        self.nodes.append(Node(op, tuple(inputs), value, vjp))
        return len(self.nodes) - 1

    def value(self, i: int) -> np.ndarray:
        return self.nodes[i].value

    # ---------------------------
    # leaves
    # ---------------------------

    def variable(self, value) -> int:
        return self._push("variable", (), np.array(value, dtype=np.float64), None)

    def constant(self, value) -> int:
        return self._push("constant", (), np.array(value, dtype=np.float64), None)

    # ---------------------------
    # elementwise arithmetic
    # ---------------------------

    def add(self, a: int, b: int) -> int:
        va, vb = self.value(a), self.value(b)
        sa, sb = va.shape, vb.shape
        return self._push(
            "add", (a, b), va + vb,
            lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
        )

    def sub(self, a: int, b: int) -> int:
        va, vb = self.value(a), self.value(b)
        sa, sb = va.shape, vb.shape
        return self._push(
            "sub", (a, b), va - vb,
            lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)),
        )

    def mul(self, a: int, b: int) -> int:
        va, vb = self.value(a), self.value(b)
        return self._push(
            "mul", (a, b), va * vb,
            lambda g: (_unbroadcast(g * vb, va.shape), _unbroadcast(g * va, vb.shape)),
        )

    def scale(self, a: int, c: float) -> int:
        c = float(c)
        return self._push("scale", (a,), self.value(a) * c, lambda g: (g * c,))

    def sum(self, a: int) -> int:
        va = self.value(a)
        return self._push("sum", (a,), va.sum(), lambda g: (np.full(va.shape, float(g)),))

    def sq_norm(self, a: int) -> int:
        va = self.value(a)
        return self._push("sq_norm", (a,), np.sum(va * va), lambda g: (2.0 * float(g) * va,))

    # ---------------------------
    # linear algebra / shape
    # ---------------------------

    def affine(self, x: int, W: int, b: Optional[int] = None) -> int:
        """x @ W (+ b). x is (n,) or (B, n); W is (n, m); b is (m,)."""
        vx, vW = self.value(x), self.value(W)
        if vx.shape[-1] != vW.shape[0]:
            raise DimensionError("affine: dimension mismatch", x=vx.shape, W=vW.shape)
        out = vx @ vW
        if b is None:
            def vjp(g):
                gx = g @ vW.T
                gW = np.outer(vx, g) if vx.ndim == 1 else vx.T @ g
                return gx, gW
            return self._push("affine", (x, W), out, vjp)

        vb = self.value(b)
        out = out + vb

        def vjp_b(g):
            gx = g @ vW.T
            gW = np.outer(vx, g) if vx.ndim == 1 else vx.T @ g
            gb = g if g.ndim == 1 else g.sum(axis=0)
            return gx, gW, gb
        return self._push("affine", (x, W, b), out, vjp_b)

    def outer(self, a: int, b: int) -> int:
        va, vb = self.value(a), self.value(b)
        return self._push("outer", (a, b), np.outer(va, vb), lambda g: (g @ vb, g.T @ va))

    def reshape(self, a: int, shape: Tuple[int, ...]) -> int:
        va = self.value(a)
        old = va.shape
        return self._push("reshape", (a,), va.reshape(shape), lambda g: (g.reshape(old),))

    def transpose(self, a: int) -> int:
        va = self.value(a)
        if va.ndim != 2:
            raise DimensionError("transpose expects a matrix", shape=va.shape)
        return self._push("transpose", (a,), va.T, lambda g: (g.T,))

    def concat(self, parts: Sequence[int]) -> int:
        values = [self.value(p).ravel() for p in parts]
        shapes = [self.value(p).shape for p in parts]
        sizes = [v.size for v in values]
        offsets = np.cumsum([0] + sizes)

        def vjp(g):
            return tuple(
                g[offsets[i]:offsets[i + 1]].reshape(shapes[i]) for i in range(len(parts))
            )
        return self._push("concat", tuple(parts), np.concatenate(values), vjp)

    # ---------------------------
    # nonlinearities / losses
    # ---------------------------

    def relu(self, a: int) -> int:
        va = self.value(a)
        mask = (va > 0).astype(np.float64)
        return self._push("relu", (a,), va * mask, lambda g: (g * mask,))

    def leaky_relu(self, a: int, slope: float = 0.01) -> int:
        va = self.value(a)
        d = np.where(va > 0, 1.0, slope)
        return self._push("leaky_relu", (a,), va * d, lambda g: (g * d,))

    def softmax(self, a: int) -> int:
        """Softmax over the last axis."""
        va = self.value(a)
        z = va - va.max(axis=-1, keepdims=True)
        e = np.exp(z)
        s = e / e.sum(axis=-1, keepdims=True)

        def vjp(g):
            return (s * (g - np.sum(g * s, axis=-1, keepdims=True)),)
        return self._push("softmax", (a,), s, vjp)

    def cross_entropy(self, probs: int, target: int) -> int:
        """-sum(target * log(probs)) over every entry (scalar)."""
        p, t = self.value(probs), self.value(target)
        if p.shape != t.shape:
            raise DimensionError("cross_entropy: shape mismatch", probs=p.shape, target=t.shape)
        logp = np.log(np.maximum(p, 1e-300))

        def vjp(g):
            g = float(g)
            return -g * t / np.maximum(p, 1e-300), -g * logp
        return self._push("cross_entropy", (probs, target), -np.sum(t * logp), vjp)

    # ---------------------------
    # reverse pass
    # ---------------------------

    def backward(self, root: int) -> List[np.ndarray]:
        """
        Gradients of the scalar node `root` with respect to every node.
        Nodes that do not influence `root` get zeros.
        """
        root_val = self.value(root)
        if root_val.size != 1:
            raise DimensionError("backward needs a scalar root", shape=root_val.shape)
        if not np.isfinite(root_val).all():
            raise NonFiniteError("backward from a non-finite root", value=float(root_val))

        grads = [np.zeros_like(n.value) for n in self.nodes]
        grads[root] = np.ones_like(root_val)
        for i in range(root, -1, -1):
            node = self.nodes[i]
            if node.vjp is None or not node.inputs:
                continue
            g = grads[i]
            if not np.any(g):
                continue
            for j, gj in zip(node.inputs, node.vjp(g)):
                grads[j] = grads[j] + np.asarray(gj, dtype=np.float64).reshape(grads[j].shape)
        return grads


def tape_backward(tape: Tape, root: int) -> List[FloatArray]:
    return tape.backward(root)
