"""Dense kernels and activations shared by the reference cells.

Arrays are plain float64 numpy arrays. ``matvec`` accumulates column by
column in ascending order, so results are reproducible bit-for-bit and match
the summation order of the compiled core.
"""

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes do not chain."""


def as_f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def matvec(m, v):
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ShapeError(f"cannot multiply matrix {m.shape} by vector {v.shape}")
    out = np.zeros(m.shape[0])
    for j in range(m.shape[1]):
        out += m[:, j] * v[j]
    return out


def sigmoid(v):
    v = np.asarray(v, dtype=np.float64)
    e = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid_deriv(y):
    """Derivative of the logistic function written in terms of its output."""
    y = np.asarray(y, dtype=np.float64)
    return y * (1.0 - y)


def tanh_act(v):
    return np.tanh(np.asarray(v, dtype=np.float64))


def tanh_deriv(y):
    y = np.asarray(y, dtype=np.float64)
    return 1.0 - y * y
