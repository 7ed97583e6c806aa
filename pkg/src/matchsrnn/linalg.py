"""Dense numeric primitives shared by the model, gradient and training code.

Vectors, matrices and the 3-axis NTN tensor are plain float64 numpy arrays.
The helpers here validate shapes and raise :class:`ShapeError` instead of
letting numpy broadcast silently.
"""

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    """Operand dimensions do not agree."""


class NumericError(FloatingPointError):
    """A non-finite value appeared during evaluation."""

    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


def as_float(x):
    """Array view of ``x``; float dtypes are kept, anything else becomes float64."""
    x = np.asarray(x)
    return x if x.dtype.kind == "f" else x.astype(DTYPE)


def as_vec(v):
    v = as_float(v)
    if v.ndim != 1:
        raise ShapeError(f"expected a vector, got shape {v.shape}")
    return v


def as_mat(m):
    m = as_float(m)
    if m.ndim != 2:
        raise ShapeError(f"expected a matrix, got shape {m.shape}")
    return m


def matvec(m, v):
    m, v = as_mat(m), as_vec(v)
    if m.shape[1] != v.shape[0]:
        raise ShapeError(f"matvec: matrix {m.shape} vs vector ({v.shape[0]},)")
    return m @ v


def bilinear(t, u, v):
    """Slice-wise bilinear form: ``out[k] = u^T t[k] v``."""
    t = as_float(t)
    u, v = as_vec(u), as_vec(v)
    if t.ndim != 3:
        raise ShapeError(f"expected a 3-axis tensor, got shape {t.shape}")
    if t.shape[1] != u.shape[0] or t.shape[2] != v.shape[0]:
        raise ShapeError(
            f"bilinear: tensor {t.shape} vs u ({u.shape[0]},), v ({v.shape[0]},)"
        )
    return np.einsum("e,kef,f->k", u, t, v)


def sigmoid(x):
    # tanh form: no overflow for large |x|, keeps the input float dtype
    return 0.5 * (1.0 + np.tanh(0.5 * as_float(x)))


def tanh_(x):
    return np.tanh(as_float(x))


def relu(x):
    return np.maximum(as_float(x), 0.0)


def softmax_gates(stacked, axis=-2):
    """Softmax across the gate axis of an array holding the four gates."""
    shifted = stacked - stacked.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_by_row(zi, zl, zt, zd):
    """Per-dimension softmax coupling four gate pre-activations.

    For each hidden dimension the four outputs are positive and sum to one.
    Returns the normalized gates in the input order.
    """
    vecs = [as_vec(z) for z in (zi, zl, zt, zd)]
    if len({v.shape[0] for v in vecs}) != 1:
        raise ShapeError(
            "softmax_by_row: gate lengths differ: "
            + ", ".join(str(v.shape[0]) for v in vecs)
        )
    out = softmax_gates(np.stack(vecs), axis=0)
    return out[0], out[1], out[2], out[3]
