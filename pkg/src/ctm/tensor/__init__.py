"""Minimal dense tensor library with reverse-mode autodiff."""

from . import kernels
from .core import Graph, Tensor, backward, fresh_graph, grad_enabled, no_grad
from .gradcheck import GradcheckReport, finite_diff_check
from .ops import (
    absolute,
    add,
    attend,
    concat,
    cosine,
    dot,
    dropout,
    embedding,
    flatten,
    log_softmax,
    matmul,
    max_pool_rows,
    mean,
    mul,
    neg,
    relu,
    reshape,
    scale,
    sigmoid,
    softmax_rows,
    stack,
    take,
    total,
    transpose,
)
from .rng import RngState

__all__ = [
    "Graph", "GradcheckReport", "RngState", "Tensor", "absolute", "add", "attend",
    "backward", "concat", "cosine", "dot", "dropout", "embedding", "finite_diff_check",
    "flatten", "fresh_graph", "grad_enabled", "kernels", "log_softmax", "matmul",
    "max_pool_rows", "mean", "mul", "neg", "no_grad", "relu", "reshape", "scale",
    "sigmoid", "softmax_rows", "stack", "take", "total", "transpose",
]
