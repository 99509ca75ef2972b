"""Context-guided triple matching and the pairwise matching baselines.

A *branch* picks one entity of the (passage, question, answer) triple as the
context and matches the other two under its guidance:

1. attend each of ``u`` and ``v`` from the context (bilinear ``W``);
2. cross-attend the two context-aligned views (bilinear ``W1``) and read
   the context back out through the resulting attention;
3. project (``W2``), rectify, and max-pool over rows.

The three branches use contexts answer, question and passage respectively.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError
from .tensor import (
    Tensor,
    absolute,
    attend,
    concat,
    dropout,
    flatten,
    matmul,
    max_pool_rows,
    relu,
    sigmoid,
    softmax_rows,
    stack,
    transpose,
)

BRANCHES = ("a", "q", "p")
BASELINES = ("dcmn", "co", "cnn")


def init_matrix(rng, rows, cols, dtype, name=None):
    """Glorot-uniform initialised trainable matrix."""
    bound = np.sqrt(6.0 / (rows + cols))
    data = rng.uniform(rows * cols, -bound, bound).reshape(rows, cols)
    return Tensor(data, requires_grad=True, dtype=dtype, name=name)


@dataclass
class BranchParams:
    W: Tensor
    W1: Tensor
    W2: Tensor

    @classmethod
    def init(cls, rng, l, dtype=np.float32, prefix="branch"):
        return cls(init_matrix(rng, l, l, dtype, f"{prefix}.W"),
                   init_matrix(rng, l, l, dtype, f"{prefix}.W1"),
                   init_matrix(rng, l, l, dtype, f"{prefix}.W2"))

    def tensors(self):
        return [self.W, self.W1, self.W2]


@dataclass
class MatchOutput:
    M_a: Tensor | None
    M_q: Tensor | None
    M_p: Tensor | None
    C: Tensor


def context_attend(ctx, x, W):
    """``G = softmax(ctx W x^T)``, ``E = G x``: a context-aligned mixture of the rows of ``x``."""
    return attend(ctx, W, x, x)


def _check_entities(*xs):
    for x in xs:
        if x is None or x.data.ndim != 2 or x.shape[0] == 0:
            raise ContractError("every entity of the triple must be a non-empty matrix")


def branch(ctx, u, v, params, rng=None, training=False, rate=0.0, intermediates=None):
    """One context-guided branch; returns a ``2 x l`` tensor.

    If ``intermediates`` is a dict it is filled with the attention matrices and
    the pre-projection mixtures (keys ``E_uvc`` and ``E_vuc``).
    """
    _check_entities(ctx, u, v)
    G_cu, E_u = context_attend(ctx, u, params.W)
    G_cv, E_v = context_attend(ctx, v, params.W)
    E_u = dropout(E_u, rate, rng, training)
    E_v = dropout(E_v, rate, rng, training)
    G_uv, E_uvc = attend(E_u, params.W1, E_v, ctx)
    G_vu, E_vuc = attend(E_v, params.W1, E_u, ctx)
    S_uv = dropout(relu(matmul(E_uvc, params.W2)), rate, rng, training)
    S_vu = dropout(relu(matmul(E_vuc, params.W2)), rate, rng, training)
    out = stack([max_pool_rows(S_uv), max_pool_rows(S_vu)])
    if intermediates is not None:
        intermediates.update(G_cu=G_cu, G_cv=G_cv, G_uv=G_uv, G_vu=G_vu,
                             E_u=E_u, E_v=E_v, E_uvc=E_uvc, E_vuc=E_vuc, S_uv=S_uv, S_vu=S_vu)
    return out


def branch_roles(name, enc):
    """(context, u, v) for a branch name: ``a`` -> (a, p, q), ``q`` -> (q, a, p), ``p`` -> (p, a, q)."""
    if name == "a":
        return enc.a, enc.p, enc.q
    if name == "q":
        return enc.q, enc.a, enc.p
    if name == "p":
        return enc.p, enc.a, enc.q
    raise ConfigError(f"unknown branch {name!r}; expected one of {BRANCHES}")


def match_triple(enc, params, rng=None, training=False, rate=0.0, branches=BRANCHES):
    """Run the enabled branches on one encoded triple.

    ``params`` maps branch name to :class:`BranchParams`. Disabled branches
    are left out of ``C`` entirely, so ``C`` has length ``2 l`` per enabled branch.
    """
    if not branches:
        raise ConfigError("at least one branch must be enabled")
    outs = {}
    for name in BRANCHES:
        if name in branches:
            outs[name] = branch(*branch_roles(name, enc), params[name], rng, training, rate)
    C = flatten(concat([outs[n] for n in BRANCHES if n in outs]))
    return MatchOutput(outs.get("a"), outs.get("q"), outs.get("p"), C)


def _att(value, query, key, W):
    # primitive-op attention, deliberately not the fused kernel
    return matmul(softmax_rows(matmul(matmul(query, W), transpose(key))), value)


def nested_attention_form(enc, params):
    """The answer-context branch rewritten as two stacked attention layers.

    Returns ``(E_pqa, E_qpa)``, which equal the branch's cross-attended answer
    mixtures when no dropout is applied.
    """
    _check_entities(enc.p, enc.q, enc.a)
    M_qa = _att(enc.q, enc.a, enc.q, params.W)
    M_pa = _att(enc.p, enc.a, enc.p, params.W)
    E_pqa = _att(enc.a, M_pa, M_qa, params.W1)
    E_qpa = _att(enc.a, M_qa, M_pa, params.W1)
    return E_pqa, E_qpa


# Pairwise baselines -------------------------------------------------------

@dataclass
class SimParams:
    """Projection of ``[u*v ; |u-v|]`` back to ``l``, split into its two column blocks."""

    P_mul: Tensor
    P_diff: Tensor

    @classmethod
    def init(cls, rng, l, dtype=np.float32, prefix="sim"):
        return cls(init_matrix(rng, l, l, dtype, f"{prefix}.P_mul"),
                   init_matrix(rng, l, l, dtype, f"{prefix}.P_diff"))

    def tensors(self):
        return [self.P_mul, self.P_diff]


def sim(u, v, params):
    """``ReLU([u*v ; |u-v|] P)`` row by row."""
    return relu(matmul(u * v, params.P_mul) + matmul(absolute(u - v), params.P_diff))


@dataclass
class GateParams:
    Wu: Tensor
    Wv: Tensor
    b: Tensor

    @classmethod
    def init(cls, rng, l, dtype=np.float32, prefix="gate"):
        return cls(init_matrix(rng, l, l, dtype, f"{prefix}.Wu"),
                   init_matrix(rng, l, l, dtype, f"{prefix}.Wv"),
                   Tensor(np.zeros(l), requires_grad=True, dtype=dtype, name=f"{prefix}.b"))

    def tensors(self):
        return [self.Wu, self.Wv, self.b]


def gated_fusion(u, v, gate):
    """``g*u + (1-g)*v`` with ``g = sigmoid(Wu u + Wv v + b)``."""
    g = sigmoid(matmul(gate.Wu, u) + matmul(gate.Wv, v) + gate.b)
    return g * u + (1.0 - g) * v


def dcmn_dual_match(enc, W, gates, rng=None, training=False, rate=0.0):
    """Three pooled pairwise attentions fused pairwise by sigmoid gates; length ``3 l``."""
    _check_entities(enc.p, enc.q, enc.a)

    def pooled(x, y):
        return max_pool_rows(dropout(attend(x, W, y, y)[1], rate, rng, training))

    M_qa = pooled(enc.q, enc.a)
    M_qp = pooled(enc.q, enc.p)
    M_ap = pooled(enc.a, enc.p)
    return concat([gated_fusion(M_qa, M_ap, gates[0]),
                   gated_fusion(M_qp, M_ap, gates[1]),
                   gated_fusion(M_qa, M_qp, gates[2])])


def co_match(enc, W, sims, rng=None, training=False, rate=0.0):
    """Question and answer each attended from the passage, compared with it, pooled; length ``2 l``."""
    _check_entities(enc.p, enc.q, enc.a)
    M_qp = dropout(attend(enc.p, W, enc.q, enc.q)[1], rate, rng, training)
    M_ap = dropout(attend(enc.p, W, enc.a, enc.a)[1], rate, rng, training)
    return concat([max_pool_rows(sim(M_qp, enc.p, sims[0])),
                   max_pool_rows(sim(M_ap, enc.p, sims[1]))])


def cnn_match(enc, W, sim_params, rng=None, training=False, rate=0.0):
    """Question+answer rows attend over the passage and are compared with the result; length ``l``."""
    _check_entities(enc.p, enc.q, enc.a)
    H_qa = concat([enc.q, enc.a])
    M = dropout(attend(H_qa, W, enc.p, enc.p)[1], rate, rng, training)
    return max_pool_rows(sim(H_qa, M, sim_params))
