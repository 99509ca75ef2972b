"""Dense tensors with tape-based reverse-mode differentiation.

Every differentiable operation executed while gradients are enabled appends
a node to the thread's current :class:`Graph`. Nodes are appended in
execution order, so the tape is topologically sorted by construction and
``backward`` is a single reverse sweep over it.
"""

import threading
from contextlib import contextmanager

import numpy as np

from ..errors import ContractError, DimensionError, NumericError

_state = threading.local()


def _current():
    g = getattr(_state, "graph", None)
    if g is None:
        g = _state.graph = Graph()
    return g


def grad_enabled():
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    prev = grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


@contextmanager
def branch_trace():
    """Collect the branch choices (ReLU masks, pooling argmaxes, abs signs) of
    piecewise ops run inside the block, as a list of byte strings."""
    prev = getattr(_state, "trace", None)
    _state.trace = trace = []
    try:
        yield trace
    finally:
        _state.trace = prev


def note_branch(pattern):
    trace = getattr(_state, "trace", None)
    if trace is not None:
        trace.append(np.ascontiguousarray(pattern).tobytes())


class Node:
    __slots__ = ("op", "inputs", "backward")

    def __init__(self, op, inputs, backward):
        self.op = op
        self.inputs = inputs
        self.backward = backward


class Graph:
    """Ordered record of the operations of one forward pass."""

    def __init__(self):
        self.nodes = []
        self.released = False

    def __len__(self):
        return len(self.nodes)

    def release(self):
        self.nodes = []
        self.released = True
        if getattr(_state, "graph", None) is self:
            _state.graph = Graph()


@contextmanager
def fresh_graph():
    """Run the block on a new empty tape; the previous tape is restored after."""
    prev = getattr(_state, "graph", None)
    g = _state.graph = Graph()
    try:
        yield g
    finally:
        _state.graph = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "graph_id", "_graph", "name")

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None and not (isinstance(data, np.ndarray) and data.dtype.kind == "f"):
            dtype = np.float64
        arr = np.array(data, dtype=dtype, copy=True) if dtype is not None else np.array(data, copy=True)
        if any(d <= 0 for d in arr.shape):
            raise DimensionError(f"tensor dimensions must be positive, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise NumericError("tensor data contains NaN or Inf")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.graph_id = None
        self._graph = None
        self.name = name

    @classmethod
    def _wrap(cls, arr):
        t = cls.__new__(cls)
        t.data = arr
        t.grad = None
        t.requires_grad = False
        t.graph_id = None
        t._graph = None
        t.name = None
        return t

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    @property
    def T(self):
        from .ops import transpose
        return transpose(self)

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor._wrap(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self, retain_graph=False):
        backward(self, retain_graph=retain_graph)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    def __len__(self):
        return self.data.shape[0]

    # Operator sugar; the implementations live in ops.
    def __matmul__(self, other):
        from .ops import matmul
        return matmul(self, other)

    def __add__(self, other):
        from .ops import add
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from .ops import add, neg
        return add(self, neg(other) if isinstance(other, Tensor) else -other)

    def __rsub__(self, other):
        from .ops import add, neg
        return add(neg(self), other)

    def __mul__(self, other):
        from .ops import mul
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from .ops import mul
        if isinstance(other, Tensor):
            raise ContractError("division by a tensor is not supported")
        return mul(self, 1.0 / other)

    def __neg__(self):
        from .ops import neg
        return neg(self)


def record(op, out, inputs, backward_fn):
    """Wrap ``out`` as a Tensor and put a node on the tape when any input needs a gradient.

    ``backward_fn(g)`` returns one gradient (or None) per input.
    """
    if not np.isfinite(out).all():
        raise NumericError(f"{op} produced non-finite values")
    t = Tensor._wrap(out)
    if grad_enabled() and any(x.requires_grad for x in inputs):
        g = _current()
        t.requires_grad = True
        t.graph_id = len(g.nodes)
        t._graph = g
        g.nodes.append(Node(op, inputs, backward_fn))
    return t


def backward(loss, retain_graph=False):
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf that requires it."""
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any tensor that requires grad")
    if loss.graph_id is None:
        _accumulate(loss, np.ones_like(loss.data))
        return
    graph = loss._graph
    if graph.released:
        raise ContractError("graph was released by an earlier backward; pass retain_graph=True")
    nodes = graph.nodes
    pending = {loss.graph_id: np.ones_like(loss.data)}
    for nid in range(loss.graph_id, -1, -1):
        g = pending.pop(nid, None)
        if g is None:
            continue
        node = nodes[nid]
        for x, gx in zip(node.inputs, node.backward(g)):
            if gx is None or not x.requires_grad:
                continue
            if x.graph_id is None:
                _accumulate(x, gx)
            elif x._graph is graph:
                prev = pending.get(x.graph_id)
                pending[x.graph_id] = gx if prev is None else prev + gx
            else:
                raise ContractError("tensor from a different graph reached backward")
    if not retain_graph:
        graph.release()


def _accumulate(leaf, g):
    g = np.asarray(g, dtype=leaf.data.dtype).reshape(leaf.data.shape)
    if leaf.grad is None:
        leaf.grad = g.copy()
    else:
        leaf.grad += g
