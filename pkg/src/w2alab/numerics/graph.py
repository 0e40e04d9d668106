"""Reverse-mode autodiff on an eagerly evaluated tape.

Nodes are appended in construction order, so ids are already a topological
order; ``backward`` walks them in exact reverse order and accumulates
gradients by node index, which fixes the floating-point accumulation order
and makes gradients bitwise reproducible.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import ContractError, DegenerateLatentError, DimensionError
from . import kernels
from .tensor import ParameterRecord, Tensor

LAYERNORM_EPS = 1e-5


class Node:
    __slots__ = ("graph", "id", "value", "requires_grad", "_inputs", "_vjp")

    def __init__(self, graph, nid, value, requires_grad, inputs, vjp):
        self.graph = graph
        self.id = nid
        self.value = value
        self.requires_grad = requires_grad
        self._inputs = inputs
        self._vjp = vjp

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.value.shape)

    def __repr__(self) -> str:
        return f"Node(id={self.id}, shape={self.shape})"


class Graph:
    """Single-threaded computation tape over float64 arrays."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.params: dict[str, Node] = {}

    def _append(self, value, requires_grad, inputs=(), vjp=None) -> Node:
        node = Node(self, len(self.nodes), value, requires_grad, tuple(inputs), vjp)
        self.nodes.append(node)
        return node

    def constant(self, array) -> Node:
        value = np.ascontiguousarray(array, dtype=np.float64)
        return self._append(value, requires_grad=False)

    def param(self, name: str, tensor: Tensor) -> Node:
        if name in self.params:
            raise ContractError(f"parameter {name!r} already bound to this graph")
        node = self._append(tensor.array, requires_grad=True)
        self.params[name] = node
        return node

    def bind(self, record: ParameterRecord, prefix: str = "", trainable: bool = True) -> dict[str, Node]:
        """Bind a record's tensors; frozen records always bind as constants."""
        train = trainable and not record.frozen
        out = {}
        for name, tensor in record.items():
            full = prefix + name
            out[name] = self.param(full, tensor) if train else self.constant(tensor.array)
        return out


def op(graph: Graph, value, inputs: Sequence[Node], vjp_factory: Callable | None) -> Node:
    requires = any(n.requires_grad for n in inputs)
    vjp = vjp_factory() if (requires and vjp_factory is not None) else None
    return graph._append(np.ascontiguousarray(value, dtype=np.float64), requires, inputs, vjp)


def _graph_of(*nodes: Node) -> Graph:
    g = nodes[0].graph
    for n in nodes[1:]:
        if n.graph is not g:
            raise ContractError("nodes belong to different graphs")
    return g


def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if tuple(grad.shape) == shape:
        return grad
    # scalar-with-tensor broadcast: fold everything back into the scalar
    return grad.sum().reshape(shape)


def _binary_shapes(a: Node, b: Node, name: str):
    if a.shape == b.shape or a.value.size == 1 or b.value.size == 1:
        return
    raise DimensionError(f"{name}: shapes {a.shape} and {b.shape} are not "
                         "equal and neither is a scalar")


# ---------------------------------------------------------------------------
# arithmetic
# ---------------------------------------------------------------------------

def matmul(a: Node, b: Node) -> Node:
    g = _graph_of(a, b)
    if len(a.shape) != 2 or len(b.shape) != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} x {b.shape}")
    av, bv = a.value, b.value

    def vjp_factory():
        def vjp(gy):
            return gy @ bv.T, av.T @ gy
        return vjp

    return op(g, av @ bv, (a, b), vjp_factory)


def bmm(a: Node, b: Node) -> Node:
    """Batched matmul over matching leading dimensions."""
    g = _graph_of(a, b)
    if len(a.shape) < 3 or a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"bmm: incompatible shapes {a.shape} x {b.shape}")
    av, bv = a.value, b.value

    def vjp_factory():
        def vjp(gy):
            return gy @ bv.swapaxes(-1, -2), av.swapaxes(-1, -2) @ gy
        return vjp

    return op(g, av @ bv, (a, b), vjp_factory)


def add(a: Node, b: Node) -> Node:
    g = _graph_of(a, b)
    _binary_shapes(a, b, "add")
    sa, sb = a.shape, b.shape

    def vjp_factory():
        def vjp(gy):
            return _reduce_to(gy, sa), _reduce_to(gy, sb)
        return vjp

    return op(g, a.value + b.value, (a, b), vjp_factory)


def sub(a: Node, b: Node) -> Node:
    g = _graph_of(a, b)
    _binary_shapes(a, b, "sub")
    sa, sb = a.shape, b.shape

    def vjp_factory():
        def vjp(gy):
            return _reduce_to(gy, sa), _reduce_to(-gy, sb)
        return vjp

    return op(g, a.value - b.value, (a, b), vjp_factory)


def mul(a: Node, b: Node) -> Node:
    g = _graph_of(a, b)
    _binary_shapes(a, b, "mul")
    sa, sb = a.shape, b.shape
    av, bv = a.value, b.value

    def vjp_factory():
        def vjp(gy):
            return _reduce_to(gy * bv, sa), _reduce_to(gy * av, sb)
        return vjp

    return op(g, av * bv, (a, b), vjp_factory)


def scale(a: Node, alpha: float) -> Node:
    def vjp_factory():
        def vjp(gy):
            return (gy * alpha,)
        return vjp

    return op(a.graph, a.value * alpha, (a,), vjp_factory)


def shift(a: Node, beta: float) -> Node:
    def vjp_factory():
        def vjp(gy):
            return (gy,)
        return vjp

    return op(a.graph, a.value + beta, (a,), vjp_factory)


def add_rowvec(a: Node, b: Node) -> Node:
    """Add a vector to every row of a (bias); b has shape (a.shape[-1],)."""
    g = _graph_of(a, b)
    if b.shape != (a.shape[-1],):
        raise DimensionError(f"add_rowvec: {b.shape} does not match rows of {a.shape}")
    lead = tuple(range(len(a.shape) - 1))

    def vjp_factory():
        def vjp(gy):
            return gy, gy.sum(axis=lead)
        return vjp

    return op(g, a.value + b.value, (a, b), vjp_factory)


# ---------------------------------------------------------------------------
# activations and normalizers
# ---------------------------------------------------------------------------

def relu(a: Node) -> Node:
    av = a.value

    def vjp_factory():
        def vjp(gy):
            return (gy * (av > 0.0),)
        return vjp

    return op(a.graph, np.maximum(av, 0.0), (a,), vjp_factory)


def tanh(a: Node) -> Node:
    y = np.tanh(a.value)

    def vjp_factory():
        def vjp(gy):
            return (gy * (1.0 - y * y),)
        return vjp

    return op(a.graph, y, (a,), vjp_factory)


def gelu(a: Node) -> Node:
    av = a.value

    def vjp_factory():
        def vjp(gy):
            return (kernels.gelu_bwd(av, np.ascontiguousarray(gy)),)
        return vjp

    return op(a.graph, kernels.gelu_fwd(av), (a,), vjp_factory)


def layernorm(a: Node) -> Node:
    """Normalize over the last axis (no affine parameters)."""
    shp = a.shape
    rows = a.value.reshape(-1, shp[-1])
    y2, rstd = kernels.rownorm_fwd(np.ascontiguousarray(rows), LAYERNORM_EPS)

    def vjp_factory():
        def vjp(gy):
            g2 = np.ascontiguousarray(gy.reshape(-1, shp[-1]))
            return (kernels.rownorm_bwd(y2, rstd, g2).reshape(shp),)
        return vjp

    return op(a.graph, y2.reshape(shp), (a,), vjp_factory)


def groupnorm(a: Node, groups: int) -> Node:
    """Normalize [N, C, H, W] per (sample, channel-group), no affine."""
    n, c, h, w = a.shape
    if c % groups:
        raise DimensionError(f"groupnorm: {c} channels not divisible by {groups} groups")
    rows = a.value.reshape(n * groups, (c // groups) * h * w)
    y2, rstd = kernels.rownorm_fwd(np.ascontiguousarray(rows), LAYERNORM_EPS)

    def vjp_factory():
        def vjp(gy):
            g2 = np.ascontiguousarray(gy.reshape(rows.shape))
            return (kernels.rownorm_bwd(y2, rstd, g2).reshape(a.shape),)
        return vjp

    return op(a.graph, y2.reshape(a.shape), (a,), vjp_factory)


def softmax_rows(a: Node) -> Node:
    av = a.value
    shifted = av - av.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def vjp_factory():
        def vjp(gy):
            dot = (gy * y).sum(axis=-1, keepdims=True)
            return (y * (gy - dot),)
        return vjp

    return op(a.graph, y, (a,), vjp_factory)


def log_softmax_rows(a: Node) -> Node:
    av = a.value
    shifted = av - av.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    y = shifted - lse
    sm = np.exp(y)

    def vjp_factory():
        def vjp(gy):
            return (gy - sm * gy.sum(axis=-1, keepdims=True),)
        return vjp

    return op(a.graph, y, (a,), vjp_factory)


def normalize_lastdim(a: Node) -> Node:
    """Scale each last-axis vector to unit L2 norm; zero vectors are an error."""
    av = a.value
    norms = np.linalg.norm(av, axis=-1, keepdims=True)
    if np.any(norms == 0.0):
        raise DegenerateLatentError("zero-norm latent: cosine similarity undefined")
    y = av / norms

    def vjp_factory():
        def vjp(gy):
            dot = (gy * y).sum(axis=-1, keepdims=True)
            return ((gy - y * dot) / norms,)
        return vjp

    return op(a.graph, y, (a,), vjp_factory)


# ---------------------------------------------------------------------------
# convolution and pooling
# ---------------------------------------------------------------------------

def conv2d(x: Node, w: Node, b: Node, stride: int = 2, pad: int = 1) -> Node:
    g = _graph_of(x, w, b)
    if len(x.shape) != 4 or len(w.shape) != 4 or x.shape[1] != w.shape[1]:
        raise DimensionError(f"conv2d: incompatible shapes {x.shape} and {w.shape}")
    if b.shape != (w.shape[0],):
        raise DimensionError(f"conv2d: bias {b.shape} does not match {w.shape[0]} filters")
    xv, wv = x.value, w.value
    y = kernels.conv2d_fwd(xv, wv, b.value, stride, pad)

    def vjp_factory():
        def vjp(gy):
            return kernels.conv2d_bwd(xv, wv, np.ascontiguousarray(gy), stride, pad)
        return vjp

    return op(g, y, (x, w, b), vjp_factory)


def avgpool_hw(a: Node) -> Node:
    """Spatial mean: [N, C, H, W] -> [N, C]."""
    n, c, h, w = a.shape
    inv = 1.0 / (h * w)

    def vjp_factory():
        def vjp(gy):
            return (np.broadcast_to(gy[:, :, None, None] * inv, (n, c, h, w)).copy(),)
        return vjp

    return op(a.graph, a.value.mean(axis=(2, 3)), (a,), vjp_factory)


# ---------------------------------------------------------------------------
# shape plumbing and reductions
# ---------------------------------------------------------------------------

def reshape(a: Node, shape) -> Node:
    old = a.shape

    def vjp_factory():
        def vjp(gy):
            return (gy.reshape(old),)
        return vjp

    return op(a.graph, a.value.reshape(shape), (a,), vjp_factory)


def transpose(a: Node, axes) -> Node:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def vjp_factory():
        def vjp(gy):
            return (gy.transpose(inverse),)
        return vjp

    return op(a.graph, a.value.transpose(axes), (a,), vjp_factory)


def concat(nodes: Sequence[Node], axis: int) -> Node:
    g = _graph_of(*nodes)
    sizes = [n.shape[axis] for n in nodes]
    offsets = np.cumsum(sizes)[:-1]

    def vjp_factory():
        def vjp(gy):
            return tuple(np.ascontiguousarray(piece)
                         for piece in np.split(gy, offsets, axis=axis))
        return vjp

    return op(g, np.concatenate([n.value for n in nodes], axis=axis), tuple(nodes), vjp_factory)


def sum_all(a: Node) -> Node:
    shp = a.shape

    def vjp_factory():
        def vjp(gy):
            return (np.full(shp, gy[0]),)
        return vjp

    return op(a.graph, np.array([a.value.sum()]), (a,), vjp_factory)


def mean_all(a: Node) -> Node:
    shp = a.shape
    inv = 1.0 / a.value.size

    def vjp_factory():
        def vjp(gy):
            return (np.full(shp, gy[0] * inv),)
        return vjp

    return op(a.graph, np.array([a.value.mean()]), (a,), vjp_factory)


def sum_axis(a: Node, axis: int) -> Node:
    shp = a.shape

    def vjp_factory():
        def vjp(gy):
            return (np.broadcast_to(np.expand_dims(gy, axis), shp).copy(),)
        return vjp

    return op(a.graph, a.value.sum(axis=axis), (a,), vjp_factory)


def mean_axis(a: Node, axis: int) -> Node:
    shp = a.shape
    inv = 1.0 / shp[axis]

    def vjp_factory():
        def vjp(gy):
            return (np.broadcast_to(np.expand_dims(gy * inv, axis), shp).copy(),)
        return vjp

    return op(a.graph, a.value.mean(axis=axis), (a,), vjp_factory)


def masked_rowmax(a: Node, mask: np.ndarray) -> Node:
    """Row-wise max over entries where mask is True; output shape [rows].

    Gradient flows to the argmax entry of each row (ties broken by first
    index, matching np.argmax).
    """
    if a.shape != tuple(mask.shape) or len(a.shape) != 2:
        raise DimensionError(f"masked_rowmax: mask {mask.shape} vs value {a.shape}")
    if not mask.any(axis=1).all():
        raise ContractError("masked_rowmax: some row has no valid entry")
    av = np.where(mask, a.value, -np.inf)
    idx = av.argmax(axis=1)
    rows = np.arange(a.shape[0])
    shp = a.shape

    def vjp_factory():
        def vjp(gy):
            gx = np.zeros(shp)
            gx[rows, idx] = gy
            return (gx,)
        return vjp

    return op(a.graph, av[rows, idx], (a,), vjp_factory)


# ---------------------------------------------------------------------------
# public elementwise dispatcher (spec surface)
# ---------------------------------------------------------------------------

ELEMENTWISE_OPS = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "gelu": gelu,
    "relu": relu,
    "tanh": tanh,
    "layernorm": layernorm,
    "softmax_rows": softmax_rows,
}


def elementwise(kind: str, *inputs: Node) -> Node:
    """Entry-wise operation by name; binary kinds support equal-shape or
    scalar-with-tensor broadcasting only."""
    if kind not in ELEMENTWISE_OPS:
        raise ContractError(f"unknown elementwise op {kind!r}")
    return ELEMENTWISE_OPS[kind](*inputs)


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------

def backward(graph: Graph, loss: Node) -> ParameterRecord:
    """Gradient of a scalar loss w.r.t. every bound parameter.

    Parameters the loss does not depend on receive zero gradients; constants
    receive none.
    """
    if loss.graph is not graph:
        raise ContractError("loss node belongs to a different graph")
    if loss.value.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.shape}")
    grads: list[np.ndarray | None] = [None] * (loss.id + 1)
    grads[loss.id] = np.ones_like(loss.value)
    for node in reversed(graph.nodes[: loss.id + 1]):
        gy = grads[node.id]
        if gy is None or node._vjp is None:
            continue
        input_grads = node._vjp(gy)
        for inp, gi in zip(node._inputs, input_grads):
            if gi is None or not inp.requires_grad:
                continue
            if grads[inp.id] is None:
                grads[inp.id] = gi
            else:
                grads[inp.id] = grads[inp.id] + gi
    out = ParameterRecord()
    for name, node in graph.params.items():
        g = grads[node.id] if node.id <= loss.id else None
        if g is None:
            g = np.zeros(node.shape)
        out.add(name, Tensor(np.asarray(g, dtype=np.float64).reshape(node.shape)))
    return out
