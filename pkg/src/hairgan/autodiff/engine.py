"""Reverse-mode differentiation on dense float64 tensors.

Nodes are created define-by-run: every op returns a Tensor that remembers its
parents and one vector-Jacobian callback per parent.  The callbacks are
built from the ops in this module, so the gradients returned by backward()
are themselves graph nodes and can be differentiated again (needed for the
gradient-norm penalty).

Tensors are immutable once written; parameter updates replace the .data
array of leaf tensors between graph constructions.  Creation order doubles
as a topological order (parents always precede children).
"""

from __future__ import annotations

import itertools

import numpy as np

from ..errors import InvalidInput, NumericFault, ShapeError
from . import kernels

_ids = itertools.count()
_grad_enabled = True

# Every op validates its output against NaN/Inf; a violation is a hard fault.
CHECK_FINITE = True


class Tensor:
    __slots__ = ("data", "parents", "vjps", "op", "nid")

    def __init__(self, data, parents=(), vjps=(), op="leaf"):
        data = np.asarray(data, dtype=np.float64)
        if CHECK_FINITE and not np.isfinite(data).all():
            raise NumericFault(f"non-finite values produced by op {op!r}")
        self.data = data
        self.parents = parents
        self.vjps = vjps
        self.op = op
        self.nid = next(_ids)

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def detach(self) -> "Tensor":
        """Same values, no history: constant w.r.t. any differentiation."""
        return Tensor(self.data, op="const")

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.data.shape})"

    # convenience arithmetic used throughout the losses
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scalar_mul(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def sum(self):
        return sum_all(self)

    def mean(self):
        return mean_all(self)


class no_grad:
    """Context manager: ops executed inside create history-free tensors."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _node(data, parents, vjps, op):
    if _grad_enabled:
        return Tensor(data, tuple(parents), tuple(vjps), op)
    return Tensor(data, op=op)


def constant(data) -> Tensor:
    return Tensor(data, op="const")


def _topo(root: Tensor) -> list[Tensor]:
    """Reachable nodes in creation (= topological) order."""
    seen = {}
    stack = [root]
    while stack:
        t = stack.pop()
        if t.nid in seen:
            continue
        seen[t.nid] = t
        stack.extend(t.parents)
    return [seen[k] for k in sorted(seen)]


class Graph:
    """Topologically ordered record of every node reachable from a root."""

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_root(cls, root: Tensor) -> "Graph":
        return cls(_topo(root))

    def __len__(self):
        return len(self.nodes)


def backward(root: Tensor, wrt, create_graph: bool = True) -> list[Tensor]:
    """Gradients of a scalar root w.r.t. each tensor in wrt.

    With create_graph=True the returned gradients are differentiable graph
    nodes; tensors unreachable from the root get zero gradients.
    """
    if root.data.shape != ():
        raise InvalidInput("backward root must be a scalar")
    order = _topo(root)
    # only propagate along paths that can reach a wrt tensor
    needed = {t.nid for t in wrt}
    for node in order:
        if node.nid not in needed and any(p.nid in needed
                                          for p in node.parents):
            needed.add(node.nid)
    grads: dict[int, Tensor] = {root.nid: constant(np.ones(()))}

    def run():
        for node in reversed(order):
            g = grads.get(node.nid)
            if g is None:
                continue
            for parent, vjp in zip(node.parents, node.vjps):
                if parent.nid not in needed:
                    continue
                pg = vjp(g)
                prev = grads.get(parent.nid)
                grads[parent.nid] = pg if prev is None else add(prev, pg)

    if create_graph:
        run()
    else:
        with no_grad():
            run()
    out = []
    for t in wrt:
        g = grads.get(t.nid)
        out.append(g if g is not None else constant(np.zeros(t.data.shape)))
    return out


# -------------------------------------------------------------- elementwise

def _binary_shapes(a, b, op):
    if a.data.shape == b.data.shape:
        return "same"
    if b.data.shape == ():
        return "b_scalar"
    if a.data.shape == ():
        return "a_scalar"
    raise ShapeError(f"{op}: incompatible shapes {a.data.shape} vs {b.data.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    kind = _binary_shapes(a, b, "add")
    da = (lambda g: g) if kind != "a_scalar" else (lambda g: sum_all(g))
    db = (lambda g: g) if kind != "b_scalar" else (lambda g: sum_all(g))
    return _node(a.data + b.data, (a, b), (da, db), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    kind = _binary_shapes(a, b, "sub")
    da = (lambda g: g) if kind != "a_scalar" else (lambda g: sum_all(g))
    if kind == "b_scalar":
        db = lambda g: scalar_mul(sum_all(g), -1.0)
    else:
        db = lambda g: scalar_mul(g, -1.0)
    return _node(a.data - b.data, (a, b), (da, db), "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    kind = _binary_shapes(a, b, "mul")
    if kind == "same":
        da = lambda g: mul(g, b)
        db = lambda g: mul(g, a)
    elif kind == "b_scalar":
        da = lambda g: mul(g, b)
        db = lambda g: sum_all(mul(g, a))
    else:
        da = lambda g: sum_all(mul(g, b))
        db = lambda g: mul(g, a)
    return _node(a.data * b.data, (a, b), (da, db), "mul")


def scalar_mul(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _node(a.data * c, (a,), (lambda g: scalar_mul(g, c),), "scalar_mul")


def square(a: Tensor) -> Tensor:
    return _node(a.data * a.data, (a,),
                 (lambda g: mul(g, scalar_mul(a, 2.0)),), "square")


def sqrt(a: Tensor) -> Tensor:
    out_ref = []
    with np.errstate(invalid="ignore"):
        data = np.sqrt(a.data)
    t = _node(data, (a,),
              (lambda g: mul(g, scalar_mul(reciprocal(out_ref[0]), 0.5)),),
              "sqrt")
    out_ref.append(t)
    return t


def reciprocal(a: Tensor) -> Tensor:
    out_ref = []
    with np.errstate(divide="ignore"):
        data = 1.0 / a.data
    t = _node(data, (a,),
              (lambda g: scalar_mul(mul(g, square(out_ref[0])), -1.0),),
              "reciprocal")
    out_ref.append(t)
    return t


def relu(a: Tensor) -> Tensor:
    # The 0/1 mask is a constant of the linearization; its derivative is 0
    # almost everywhere, which is what double backprop needs.
    mask = constant((a.data > 0.0).astype(np.float64))
    return _node(a.data * mask.data, (a,), (lambda g: mul(g, mask),), "relu")


# --------------------------------------------------------------- reductions

def sum_all(a: Tensor) -> Tensor:
    return _node(a.data.sum(), (a,),
                 (lambda g: broadcast_full(g, a.data.shape),), "sum")


def mean_all(a: Tensor) -> Tensor:
    return scalar_mul(sum_all(a), 1.0 / a.data.size)


def broadcast_full(a: Tensor, shape) -> Tensor:
    """Scalar -> constant-filled tensor of the given shape (adjoint of sum)."""
    if a.data.shape != ():
        raise ShapeError("broadcast_full expects a scalar")
    shape = tuple(shape)
    return _node(np.full(shape, float(a.data)), (a,),
                 (lambda g: sum_all(g),), "broadcast")


# ------------------------------------------------------------ shape surgery

def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    old = a.data.shape
    return _node(a.data.reshape(shape), (a,),
                 (lambda g: reshape(g, old),), "reshape")


def dim_expand(a: Tensor) -> Tensor:
    """Reinterpret the trailing channel axis as a spatial axis of a
    1-channel tensor: (h, w, c) -> (h, w, c, 1).  Pure reshape."""
    return reshape(a, a.data.shape + (1,))


def flatten(a: Tensor) -> Tensor:
    return reshape(a, (a.data.size,))


def slice_tensor(a: Tensor, key) -> Tensor:
    data = a.data[key]
    shape = a.data.shape
    return _node(data, (a,), (lambda g: pad_slice(g, key, shape),), "slice")


def pad_slice(a: Tensor, key, shape) -> Tensor:
    """Adjoint of slice_tensor: embed into zeros of the original shape."""
    out = np.zeros(shape)
    out[key] = a.data
    return _node(out, (a,), (lambda g: slice_tensor(g, key),), "pad_slice")


def concat_channels(tensors) -> Tensor:
    tensors = list(tensors)
    lead = tensors[0].data.shape[:-1]
    for t in tensors[1:]:
        if t.data.shape[:-1] != lead:
            raise ShapeError("concat_channels: leading extents differ")
    data = np.concatenate([t.data for t in tensors], axis=-1)
    vjps = []
    start = 0
    for t in tensors:
        stop = start + t.data.shape[-1]
        key = (Ellipsis, slice(start, stop))
        vjps.append(lambda g, key=key: slice_tensor(g, key))
        start = stop
    return _node(data, tuple(tensors), tuple(vjps), "concat")


def transpose2d(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError("transpose2d expects a matrix")
    return _node(a.data.T.copy(), (a,), (lambda g: transpose2d(g),), "transpose")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: {a.data.shape} @ {b.data.shape}")
    return _node(a.data @ b.data, (a, b),
                 (lambda g: matmul(g, transpose2d(b)),
                  lambda g: matmul(transpose2d(a), g)), "matmul")


# ------------------------------------------------------------- dense / bias

def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Scalar fully connected node: w . flatten(x) + b."""
    if w.data.ndim != 1 or w.data.size != x.data.size:
        raise ShapeError("dense: weight length must equal flattened input")
    if b.data.shape != ():
        raise ShapeError("dense: bias must be scalar")
    data = w.data @ x.data.reshape(-1) + b.data
    xshape = x.data.shape
    return _node(data, (x, w, b),
                 (lambda g: reshape(mul(w, g), xshape),
                  lambda g: mul(flatten(x), g),
                  lambda g: g), "dense")


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a per-channel bias over the trailing axis."""
    if b.data.ndim != 1 or b.data.shape[0] != x.data.shape[-1]:
        raise ShapeError("add_bias: bias length must match channel count")
    return _node(x.data + b.data, (x, b),
                 (lambda g: g, lambda g: sum_leading(g)), "add_bias")


def sum_leading(a: Tensor) -> Tensor:
    """Sum over all axes except the last (adjoint of bias broadcast)."""
    axes = tuple(range(a.data.ndim - 1))
    shape = a.data.shape
    return _node(a.data.sum(axis=axes), (a,),
                 (lambda g: broadcast_leading(g, shape),), "sum_leading")


def broadcast_leading(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    if a.data.shape != shape[-1:]:
        raise ShapeError("broadcast_leading: channel extent mismatch")
    return _node(np.broadcast_to(a.data, shape).copy(), (a,),
                 (lambda g: sum_leading(g),), "broadcast_leading")


# ------------------------------------------------------------- convolutions

def _check_conv(x, w, nd, op):
    if x.data.ndim != nd + 1:
        raise ShapeError(f"{op}: input must have {nd} spatial axes + channels")
    if w.data.ndim != nd + 2:
        raise ShapeError(f"{op}: weight rank must be {nd + 2}")
    if w.data.shape[nd] != x.data.shape[-1]:
        raise ShapeError(f"{op}: channel mismatch {w.data.shape[nd]} vs "
                         f"{x.data.shape[-1]}")


def conv2d(x: Tensor, w: Tensor, stride: int = 1) -> Tensor:
    """Cross-correlation, SAME zero padding, output extents ceil(n/stride)."""
    _check_conv(x, w, 2, "conv2d")
    data = kernels.conv2d_fwd(x.data, w.data, stride)
    return _node(data, (x, w),
                 (lambda g: conv2d_dgrad(g, w, stride, x.data.shape),
                  lambda g: conv2d_wgrad(x, g, stride, w.data.shape)),
                 "conv2d")


def conv2d_dgrad(dy: Tensor, w: Tensor, stride: int, xshape) -> Tensor:
    xshape = tuple(xshape)
    data = kernels.conv2d_dgrad(dy.data, w.data, stride, xshape)
    return _node(data, (dy, w),
                 (lambda g: conv2d(g, w, stride),
                  lambda g: conv2d_wgrad(g, dy, stride, w.data.shape)),
                 "conv2d_dgrad")


def conv2d_wgrad(x: Tensor, dy: Tensor, stride: int, wshape) -> Tensor:
    wshape = tuple(wshape)
    data = kernels.conv2d_wgrad(x.data, dy.data, stride, wshape)
    return _node(data, (x, dy),
                 (lambda g: conv2d_dgrad(dy, g, stride, x.data.shape),
                  lambda g: conv2d(x, g, stride)),
                 "conv2d_wgrad")


def conv3d(x: Tensor, w: Tensor, stride: int = 1) -> Tensor:
    _check_conv(x, w, 3, "conv3d")
    data = kernels.conv3d_fwd(x.data, w.data, stride)
    return _node(data, (x, w),
                 (lambda g: conv3d_dgrad(g, w, stride, x.data.shape),
                  lambda g: conv3d_wgrad(x, g, stride, w.data.shape)),
                 "conv3d")


def conv3d_dgrad(dy: Tensor, w: Tensor, stride: int, xshape) -> Tensor:
    xshape = tuple(xshape)
    data = kernels.conv3d_dgrad(dy.data, w.data, stride, xshape)
    return _node(data, (dy, w),
                 (lambda g: conv3d(g, w, stride),
                  lambda g: conv3d_wgrad(g, dy, stride, w.data.shape)),
                 "conv3d_dgrad")


def conv3d_wgrad(x: Tensor, dy: Tensor, stride: int, wshape) -> Tensor:
    wshape = tuple(wshape)
    data = kernels.conv3d_wgrad(x.data, dy.data, stride, wshape)
    return _node(data, (x, dy),
                 (lambda g: conv3d_dgrad(dy, g, stride, x.data.shape),
                  lambda g: conv3d(x, g, stride)),
                 "conv3d_wgrad")
