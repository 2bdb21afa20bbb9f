"""Dense float64 kernels, numerically safe angle computation, and a
finite-difference gradient oracle.

Everything here is a pure function over immutable inputs. All arithmetic
is double precision; callers must not feed NaN/Inf.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

# Cosines are clamped this far inside [-1, 1] before arccos so the
# d(arccos)/d(cos) factor stays finite.
COS_CLAMP = 1e-7


class ShapeError(ValueError):
    """Operand dimensions do not line up."""


class DegenerateVectorError(ValueError):
    """An angle was requested for a (near-)zero-norm vector."""


class EvaluationError(RuntimeError):
    """A probed function returned a non-finite value."""


def as_f64(a) -> np.ndarray:
    return np.asarray(a, dtype=np.float64)


def affine(W, x, b) -> np.ndarray:
    """Return W @ x + b with explicit shape validation."""
    W, x, b = as_f64(W), as_f64(x), as_f64(b)
    if W.ndim != 2 or x.ndim != 1 or b.ndim != 1:
        raise ShapeError(f"affine expects (2d, 1d, 1d), got {W.ndim}d/{x.ndim}d/{b.ndim}d")
    if W.shape[1] != x.shape[0]:
        raise ShapeError(f"W has {W.shape[1]} cols but x has dim {x.shape[0]}")
    if W.shape[0] != b.shape[0]:
        raise ShapeError(f"W has {W.shape[0]} rows but b has dim {b.shape[0]}")
    return W @ x + b


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    z = as_f64(z)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def drelu(z: np.ndarray) -> np.ndarray:
    return (z > 0).astype(np.float64)


ACTIVATIONS: dict[str, tuple[Callable, Callable]] = {
    "relu": (relu, drelu),
    "tanh": (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2),
}


def clamp_cos(c):
    return np.clip(c, -1.0 + COS_CLAMP, 1.0 - COS_CLAMP)


def safe_angle(u, v) -> float:
    """Angle between two vectors, in radians, strictly inside (0, pi).

    The cosine is clamped to [-1 + COS_CLAMP, 1 - COS_CLAMP] before arccos,
    so parallel inputs come out near (not at) 0 and antiparallel ones near pi.
    """
    u, v = as_f64(u), as_f64(v)
    if u.shape != v.shape or u.ndim != 1:
        raise ShapeError(f"safe_angle expects equal-length 1d vectors, got {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if not (np.isfinite(nu) and np.isfinite(nv)) or nu <= 0.0 or nv <= 0.0:
        raise DegenerateVectorError("zero-norm or non-finite vector has no direction")
    c = float(np.dot(u, v) / (nu * nv))
    return float(np.arccos(clamp_cos(c)))


def grad_check(f: Callable[[np.ndarray], float], p, grad, h: float = 1e-5) -> float:
    """Max relative error between central differences of ``f`` and ``grad``.

    ``grad`` is the analytic gradient of ``f`` evaluated at ``p``. The
    relative error per coordinate uses a max(1, |analytic|) denominator so
    near-zero components are compared absolutely.
    """
    p = as_f64(p).ravel()
    grad = as_f64(grad).ravel()
    if grad.shape != p.shape:
        raise ShapeError(f"gradient shape {grad.shape} != parameter shape {p.shape}")
    if h <= 0:
        raise ValueError("step h must be positive")
    fd = np.empty_like(p)
    for i in range(p.size):
        e = np.zeros_like(p)
        e[i] = h
        fp = float(f(p + e))
        fm = float(f(p - e))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise EvaluationError(f"non-finite evaluation while probing coordinate {i}")
        fd[i] = (fp - fm) / (2.0 * h)
    rel = np.abs(fd - grad) / np.maximum(1.0, np.abs(grad))
    return float(rel.max()) if rel.size else 0.0
