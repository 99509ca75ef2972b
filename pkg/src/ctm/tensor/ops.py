"""Differentiable operations on :class:`Tensor`.

Only what the matching stack needs: no general broadcasting. Scalars (python
numbers) are accepted where noted.
"""

import numpy as np

from ..errors import ConfigError, DimensionError, NumericError
from . import kernels
from .core import Tensor, note_branch, record


def _t(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _same_shape(op, a, b):
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


def matmul(a, b):
    """Matrix product for 2-D @ 2-D, 2-D @ 1-D and 1-D @ 2-D operands."""
    a, b = _t(a), _t(b)
    if a.data.ndim not in (1, 2) or b.data.ndim not in (1, 2) or a.data.ndim + b.data.ndim == 2:
        raise DimensionError(f"matmul: unsupported ranks for shapes {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul: inner dimensions of {a.shape} and {b.shape} disagree")
    A, B = a.data, b.data

    def bw(g):
        A2 = A if A.ndim == 2 else A[None, :]
        B2 = B if B.ndim == 2 else B[:, None]
        g2 = g.reshape(A2.shape[0], B2.shape[1])
        ga = (g2 @ B2.T).reshape(A.shape) if a.requires_grad else None
        gb = (A2.T @ g2).reshape(B.shape) if b.requires_grad else None
        return ga, gb

    return record("matmul", A @ B, (a, b), bw)


def add(a, b):
    """Elementwise sum of equal-shaped tensors, or tensor plus python scalar."""
    a = _t(a)
    if not isinstance(b, Tensor):
        c = float(b)
        return record("add_scalar", a.data + a.data.dtype.type(c), (a,), lambda g: (g,))
    _same_shape("add", a, b)
    return record("add", a.data + b.data, (a, b), lambda g: (g, g))


def neg(a):
    return record("neg", -a.data, (a,), lambda g: (-g,))


def mul(a, b):
    """Elementwise product of equal-shaped tensors, or tensor times python scalar."""
    a = _t(a)
    if not isinstance(b, Tensor):
        return scale(a, b)
    _same_shape("mul", a, b)
    A, B = a.data, b.data
    return record("mul", A * B, (a, b), lambda g: (g * B, g * A))


def scale(x, c):
    c = x.data.dtype.type(c)
    return record("scale", x.data * c, (x,), lambda g: (g * c,))


def transpose(x):
    if x.data.ndim != 2:
        raise DimensionError(f"transpose needs a matrix, got shape {x.shape}")
    return record("transpose", np.ascontiguousarray(x.data.T), (x,), lambda g: (g.T,))


def reshape(x, shape):
    shape = tuple(shape)
    if int(np.prod(shape)) != x.size:
        raise DimensionError(f"cannot reshape {x.shape} to {shape}")
    old = x.shape
    return record("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def flatten(x):
    """Row-major flattening to a vector."""
    return reshape(x, (x.size,))


def concat(xs):
    """Concatenate along the first axis."""
    xs = [_t(x) for x in xs]
    if not xs:
        raise DimensionError("concat of nothing")
    tail = xs[0].shape[1:]
    for x in xs:
        if x.data.ndim != xs[0].data.ndim or x.shape[1:] != tail:
            raise DimensionError(f"concat: incompatible shapes {[y.shape for y in xs]}")
    bounds = np.cumsum([x.shape[0] for x in xs])[:-1]
    return record("concat", np.concatenate([x.data for x in xs]), tuple(xs),
                  lambda g: tuple(np.split(g, bounds)))


def stack(xs):
    """Stack equal-shaped tensors along a new first axis."""
    xs = [_t(x) for x in xs]
    if not xs:
        raise DimensionError("stack of nothing")
    for x in xs:
        _same_shape("stack", xs[0], x)
    return record("stack", np.stack([x.data for x in xs]), tuple(xs),
                  lambda g: tuple(g[i] for i in range(len(xs))))


def take(x, i):
    """Element ``i`` of a vector, as a scalar tensor."""
    if x.data.ndim != 1:
        raise DimensionError(f"take needs a vector, got shape {x.shape}")
    n = x.shape[0]

    def bw(g):
        gx = np.zeros(n, dtype=x.data.dtype)
        gx[i] = g
        return (gx,)

    return record("take", np.array(x.data[i]), (x,), bw)


def total(x):
    """Sum of all elements."""
    shape = x.shape
    return record("sum", np.asarray(x.data.sum()), (x,), lambda g: (np.full(shape, g, dtype=x.data.dtype),))


def mean(xs):
    """Arithmetic mean of a list of scalar tensors."""
    return scale(total(stack(xs)), 1.0 / len(xs))


def dot(u, v):
    if u.data.ndim != 1 or v.data.ndim != 1 or u.shape != v.shape:
        raise DimensionError(f"dot needs equal-length vectors, got {u.shape} and {v.shape}")
    U, V = u.data, v.data
    return record("dot", np.asarray(U @ V), (u, v), lambda g: (g * V, g * U))


def relu(x):
    X = x.data
    note_branch(X > 0)
    return record("relu", np.maximum(X, 0), (x,), lambda g: (g * (X > 0),))


def absolute(x):
    X = x.data
    note_branch(np.sign(X))
    return record("abs", np.abs(X), (x,), lambda g: (g * np.sign(X),))


def sigmoid(x):
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return record("sigmoid", y, (x,), lambda g: (g * y * (1 - y),))


def softmax_rows(x):
    """Row-wise softmax of a matrix, stabilized by subtracting each row max."""
    if x.data.ndim != 2:
        raise DimensionError(f"softmax_rows needs a matrix, got shape {x.shape}")
    if not np.isfinite(x.data).all():
        raise NumericError("softmax_rows received non-finite input")
    y = kernels.softmax_rows(x.data)
    return record("softmax_rows", y, (x,), lambda g: (kernels.softmax_rows_backward(y, g),))


def log_softmax(x):
    """Log-softmax of a vector."""
    if x.data.ndim != 1:
        raise DimensionError(f"log_softmax needs a vector, got shape {x.shape}")
    X = x.data
    m = X.max()
    z = X - m
    lse = np.log(np.exp(z).sum())
    out = z - lse
    p = np.exp(out)
    return record("log_softmax", out, (x,), lambda g: (g - p * g.sum(),))


def max_pool_rows(x):
    """Column-wise maximum over the rows of a matrix; gradient goes to the first argmax row."""
    if x.data.ndim != 2 or x.shape[0] < 1:
        raise DimensionError(f"max_pool_rows needs a non-empty matrix, got shape {x.shape}")
    out, arg = kernels.max_pool_rows(x.data)
    note_branch(arg)
    m = x.shape[0]
    return record("max_pool_rows", out, (x,), lambda g: (kernels.max_pool_rows_backward(arg, g, m),))


def dropout(x, rate, rng, training):
    """Inverted dropout; identity (the same object) when not training or rate is 0."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    mask = kernels.dropout_mask(rng.seed, rng.take(x.size), x.size, rate, x.data.dtype)
    mask = mask.reshape(x.shape)
    return record("dropout", x.data * mask, (x,), lambda g: (g * mask,))


def cosine(u, v, allow_zero=False):
    """Cosine similarity of two vectors, as a scalar tensor.

    A zero-norm input is an error unless ``allow_zero``, in which case the
    similarity is 0 with zero gradient.
    """
    if u.data.ndim != 1 or v.data.ndim != 1 or u.shape != v.shape:
        raise DimensionError(f"cosine needs equal-length vectors, got {u.shape} and {v.shape}")
    U, V = u.data, v.data
    nu, nv = np.sqrt(U @ U), np.sqrt(V @ V)
    if nu == 0 or nv == 0:
        if not allow_zero:
            raise NumericError("cosine of a zero-norm vector")
        return record("cosine", np.zeros((), dtype=U.dtype), (u, v),
                      lambda g: (np.zeros_like(U), np.zeros_like(V)))
    c = (U @ V) / (nu * nv)

    def bw(g):
        gu = g * (V / (nu * nv) - c * U / (nu * nu))
        gv = g * (U / (nu * nv) - c * V / (nv * nv))
        return gu, gv

    return record("cosine", np.asarray(c), (u, v), bw)


def embedding(table, ids):
    """Rows ``ids`` of ``table``; the gradient scatters back into those rows only."""
    ids = np.asarray(ids, dtype=np.intp)
    if ids.ndim != 1 or ids.size == 0:
        raise DimensionError("embedding needs a non-empty id vector")
    T = table.data

    def bw(g):
        gt = np.zeros_like(T)
        np.add.at(gt, ids, g)
        return (gt,)

    return record("embedding", T[ids], (table,), bw)


def attend(query, w, key, value):
    """Bilinear attention: ``G = softmax_rows(query @ w @ key.T)``, ``E = G @ value``.

    Returns ``(G, E)``. Only ``E`` carries gradient; ``G`` is a detached
    tensor for inspection. Runs as one fused kernel.
    """
    l = w.shape[1] if w.data.ndim == 2 else -1
    if (query.data.ndim != 2 or w.data.ndim != 2 or key.data.ndim != 2 or value.data.ndim != 2
            or query.shape[1] != w.shape[0] or key.shape[1] != l or key.shape[0] != value.shape[0]):
        raise DimensionError(
            f"attend: incompatible shapes query {query.shape}, W {w.shape}, "
            f"key {key.shape}, value {value.shape}")
    Q, W, K, V = query.data, w.data, key.data, value.data
    proj, g, e = kernels.attend(Q, W, K, V)

    def bw(ge):
        return kernels.attend_backward(Q, W, K, V, proj, g, ge)

    out = record("attend", e, (query, w, key, value), bw)
    return Tensor._wrap(g), out
