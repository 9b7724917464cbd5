# labelteach/numerics.py
"""
Dense kernels, seeded randomness, finite differences and the small 1-D /
simplex optimizers the teachers are built on.

All arrays are float64 numpy arrays. "Checked" constructors reject NaN/Inf.
"""

import math
from typing import Callable, Optional, Tuple

import numpy as np
import numpy.typing as npt
from scipy import optimize

from labelteach.errors import DimensionError, NonFiniteError

FloatArray = npt.NDArray[np.float64]

# =====================================================
# CONFIG
# =====================================================

FD_EPS = 1e-6
MINIMIZE_GRID_POINTS = 401
LABEL_BRACKET_WIDEN = 10.0


# =====================================================
# DENSE VECTORS / MATRICES
# =====================================================

def as_vector(v, name: str = "vector", checked: bool = True) -> FloatArray:
    arr = np.array(v, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-D", shape=arr.shape)
    if checked and not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} has non-finite entries", name=name)
    arr.setflags(write=False)
    return arr


def as_matrix(m, name: str = "matrix", checked: bool = True) -> FloatArray:
    arr = np.array(m, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D", shape=arr.shape)
    if checked and not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} has non-finite entries", name=name)
    arr.setflags(write=False)
    return arr


def _same_length(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: dimension mismatch", left=a.shape, right=b.shape)


def dot(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _same_length(a, b, "dot")
    return float(np.dot(a, b))


def matvec(M, v) -> FloatArray:
    M = np.asarray(M, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if M.ndim != 2 or v.ndim != 1 or M.shape[1] != v.shape[0]:
        raise DimensionError("matvec: dimension mismatch", matrix=M.shape, vector=v.shape)
    return M @ v


def norm2(v) -> float:
    return float(np.linalg.norm(np.asarray(v, dtype=np.float64).ravel()))


def frobenius(M) -> float:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise DimensionError("frobenius expects a matrix", shape=M.shape)
    return float(np.linalg.norm(M, "fro"))


# =====================================================
# SEEDED RANDOMNESS
# =====================================================

class SeededRng:
    """
    Deterministic generator on numpy's PCG64 (a published 64-bit permutation
    generator). Same seed -> same draws on every platform numpy supports.

    `spawn(k)` derives k independent child streams from the seed sequence,
    which is how per-student / per-seed streams are handed out.
    """

    def __init__(self, seed: int, _seq: Optional[np.random.SeedSequence] = None):
        if seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        self.seed = int(seed)
        self._seq = _seq if _seq is not None else np.random.SeedSequence(self.seed)
        self.gen = np.random.Generator(np.random.PCG64(self._seq))

    def spawn(self, k: int) -> list["SeededRng"]:
        return [SeededRng(self.seed, _seq=s) for s in self._seq.spawn(k)]

    def normal(self, size=None, scale: float = 1.0):
        return self.gen.normal(0.0, scale, size=size)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self.gen.uniform(low, high, size=size)

    def integers(self, n: int, size=None):
        return self.gen.integers(0, n, size=size)

    def permutation(self, n: int):
        return self.gen.permutation(n)

    def choice(self, n: int, size: int, replace: bool = False):
        return self.gen.choice(n, size=size, replace=replace)

    def categorical(self, probs) -> int:
        probs = np.asarray(probs, dtype=np.float64)
        u = self.gen.random()
        idx = int(np.searchsorted(np.cumsum(probs), u * probs.sum(), side="right"))
        return min(idx, len(probs) - 1)


# =====================================================
# FINITE DIFFERENCES
# =====================================================

def finite_diff_grad(f: Callable[[FloatArray], float], w, eps: float = FD_EPS) -> FloatArray:
    """Central differences (f(w+e_i) - f(w-e_i)) / 2eps, one coordinate at a time."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    w = np.array(w, dtype=np.float64)
    shape = w.shape
    flat = w.ravel()
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        hi = float(f(flat.reshape(shape)))
        flat[i] = old - eps
        lo = float(f(flat.reshape(shape)))
        flat[i] = old
        if not (math.isfinite(hi) and math.isfinite(lo)):
            raise NonFiniteError("f is not finite near w", coordinate=i)
        grad[i] = (hi - lo) / (2.0 * eps)
    return grad.reshape(shape)


# =====================================================
# 1-D MINIMIZATION
# =====================================================

def minimize_1d(
    phi: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-6,
    grid_points: int = MINIMIZE_GRID_POINTS,
) -> float:
    """
    Grid scan of [lo, hi] followed by a bounded golden-section/Brent refinement
    inside the two cells around the best grid point.

    The returned point is never worse than the best grid point, and the grid
    includes both endpoints.
    """
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")

    grid = np.linspace(lo, hi, max(int(grid_points), 3))
    values = np.array([phi(float(y)) for y in grid], dtype=np.float64)
    if not np.all(np.isfinite(values)):
        bad = float(grid[~np.isfinite(values)][0])
        raise NonFiniteError("phi is not finite on the bracket", at=bad)

    k = int(np.argmin(values))
    best_y, best_v = float(grid[k]), float(values[k])

    left = float(grid[max(k - 1, 0)])
    right = float(grid[min(k + 1, len(grid) - 1)])
    if right > left:
        res = optimize.minimize_scalar(
            phi,
            bounds=(left, right),
            method="bounded",
            options={"xatol": tol},
        )
        y_ref = float(res.x)
        v_ref = float(phi(y_ref))
        if not math.isfinite(v_ref):
            raise NonFiniteError("phi is not finite on the bracket", at=y_ref)
        if v_ref <= best_v:
            best_y, best_v = y_ref, v_ref
    return best_y


def label_bracket(y_true: float, prediction: float) -> Tuple[float, float]:
    """[min - 10*span, max + 10*span] with span = |y_true - prediction| + 1."""
    span = abs(y_true - prediction) + 1.0
    return (
        min(y_true, prediction) - LABEL_BRACKET_WIDEN * span,
        max(y_true, prediction) + LABEL_BRACKET_WIDEN * span,
    )


# =====================================================
# SIMPLEX / BALL PROJECTIONS
# =====================================================

def project_simplex(v) -> FloatArray:
    """Euclidean projection onto {y : sum(y) = 1, y >= 0} (sort and threshold)."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError("project_simplex expects a vector", shape=v.shape)
    if v.size == 0:
        raise DimensionError("project_simplex on an empty vector")
    if not np.all(np.isfinite(v)):
        raise NonFiniteError("project_simplex input has non-finite entries")

    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, v.size + 1)
    rho = int(k[u - (css - 1.0) / k > 0][-1])
    theta = (css[rho - 1] - 1.0) / rho
    return np.maximum(v - theta, 0.0)


def project_l1_ball(v, radius: float) -> FloatArray:
    v = np.asarray(v, dtype=np.float64)
    if np.abs(v).sum() <= radius:
        return v.copy()
    w = project_simplex(np.abs(v) / radius) * radius
    return np.sign(v) * w


def project_ball(v, center, radius: float, p: float = 2.0) -> FloatArray:
    """Projection onto {y : ||y - center||_p <= radius} for p in {1, 2, inf}."""
    v = np.asarray(v, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    diff = v - center
    if p == 2:
        n = float(np.linalg.norm(diff))
        if n <= radius:
            return v.copy()
        return center + diff * (radius / n)
    if math.isinf(p):
        return center + np.clip(diff, -radius, radius)
    if p == 1:
        return center + project_l1_ball(diff, radius)
    raise ValueError(f"unsupported p-norm {p}; use 1, 2 or inf")


def relative_error(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), 1e-12)
    return float(np.linalg.norm(a - b)) / denom
