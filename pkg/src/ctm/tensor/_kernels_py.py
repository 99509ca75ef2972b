"""Pure numpy implementations of the hot kernels.

Every function here has a twin of the same name and signature in the
compiled ``_kernels_c`` extension. The two must agree to rounding error;
the integer RNG kernels must agree bit for bit.
"""

import numpy as np

BACKEND = "python"

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def splitmix_bits(seed, counter, n):
    """Raw 64-bit words ``counter .. counter+n-1`` of the splitmix64 stream of ``seed``."""
    idx = np.arange(1, n + 1, dtype=np.uint64) + np.uint64(counter)
    with np.errstate(over="ignore"):
        z = np.uint64(seed) + idx * _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def uniform(seed, counter, n):
    bits = splitmix_bits(seed, counter, n)
    return (bits >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def dropout_mask(seed, counter, n, rate, dtype):
    u = uniform(seed, counter, n)
    scale = 1.0 / (1.0 - rate)
    return np.where(u >= rate, scale, 0.0).astype(dtype)


def softmax_rows(x):
    z = x - x.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


def softmax_rows_backward(y, gy):
    return y * (gy - (gy * y).sum(axis=1, keepdims=True))


def max_pool_rows(x):
    # np.argmax returns the first maximal index, which fixes the tie rule
    arg = np.argmax(x, axis=0)
    return x[arg, np.arange(x.shape[1])], arg


def max_pool_rows_backward(arg, gout, m):
    gx = np.zeros((m, gout.shape[0]), dtype=gout.dtype)
    gx[arg, np.arange(gout.shape[0])] = gout
    return gx


def attend(query, w, key, value):
    """``G = softmax(query @ w @ key.T)``, ``E = G @ value``; returns (proj, G, E)."""
    proj = query @ w
    g = softmax_rows(proj @ key.T)
    return proj, g, g @ value


def attend_backward(query, w, key, value, proj, g, ge):
    gg = ge @ value.T
    gvalue = g.T @ ge
    gs = softmax_rows_backward(g, gg)
    gproj = gs @ key
    gkey = gs.T @ proj
    gquery = gproj @ w.T
    gw = query.T @ gproj
    return gquery, gw, gkey, gvalue
