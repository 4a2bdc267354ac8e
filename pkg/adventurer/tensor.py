# -*- coding: utf-8 -*-
"""
Dense tensors with reverse-mode differentiation (`Tensor`, `Graph`)

This module is the numeric substrate for every layer of the model. A `Tensor`
wraps a contiguous row-major numpy array of rank at most 4. Operations executed
while gradient recording is enabled attach a `Node` to their output holding the
operand references and a backward rule; `backward` walks those nodes in reverse
topological order and accumulates gradients into leaf tensors.

Context-local switches (never process globals):
- `no_grad()`: run operations without recording nodes.
- `precision(dtype)`: dtype for tensors built from raw data; float32 by default,
  float64 inside the finite-difference shadow path.
- `count_ops()`: per-invocation counter of multiply-accumulates and op names.
"""

import contextlib
import contextvars
import hashlib
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from adventurer.errors import ContractError, DimensionError

logger = logging.getLogger(__name__)

MAX_RANK = 4
GELU_C = float(np.sqrt(2.0 / np.pi))

_grad_enabled = contextvars.ContextVar("grad_enabled", default=True)
_default_dtype = contextvars.ContextVar("default_dtype", default=np.float32)
_op_counter = contextvars.ContextVar("op_counter", default=None)

ArrayLike = Union[np.ndarray, float, int, Sequence]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


# --- Context switches ---
@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable node recording for the enclosed operations."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


@contextlib.contextmanager
def precision(dtype) -> Iterator[None]:
    """Set the dtype used for tensors constructed from raw data."""
    token = _default_dtype.set(np.dtype(dtype).type)
    try:
        yield
    finally:
        _default_dtype.reset(token)


@dataclass
class OpCounter:
    """
    Tally of the operations executed while the counter is active.

    Attributes:
        macs (int): Multiply-accumulates performed by matrix products.
        ops (Counter): Number of executions per operation name.
    """

    macs: int = 0
    ops: Counter = field(default_factory=Counter)

    def record(self, op: str, macs: int = 0) -> None:
        self.ops[op] += 1
        self.macs += int(macs)

    def fingerprint(self) -> str:
        """Stable digest of the MAC total and the op-name histogram."""
        payload = json.dumps({"macs": self.macs, "ops": sorted(self.ops.items())})
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@contextlib.contextmanager
def count_ops() -> Iterator[OpCounter]:
    """Count operations executed in the enclosed block."""
    counter = OpCounter()
    token = _op_counter.set(counter)
    try:
        yield counter
    finally:
        _op_counter.reset(token)


# --- Core types ---
class Node:
    """One recorded operation: its name, operands and backward rule."""

    __slots__ = ("op", "inputs", "backward_fn")

    def __init__(self, op: str, inputs: Tuple["Tensor", ...], backward_fn: BackwardFn):
        self.op = op
        self.inputs = inputs
        self.backward_fn = backward_fn

    def __repr__(self) -> str:
        return f"Node(op: {self.op}, inputs: {[t.shape for t in self.inputs]})"


class Tensor:
    """
    A dense array of reals with an optional gradient slot.

    Attributes:
        data (np.ndarray): Contiguous row-major values.
        requires_grad (bool): Whether gradients flow to this tensor.
        grad (Optional[np.ndarray]): Accumulated gradient, same shape as `data`.
        node (Optional[Node]): The operation that produced this tensor; None for leaves.
    """

    __slots__ = ("data", "requires_grad", "grad", "node")

    def __init__(self, data: ArrayLike, requires_grad: bool = False, dtype=None):
        if dtype is None:
            dtype = _default_dtype.get()
        arr = np.ascontiguousarray(np.asarray(data, dtype=dtype))
        if arr.ndim > MAX_RANK:
            raise DimensionError(
                f"Tensor rank {arr.ndim} exceeds {MAX_RANK}: {arr.shape}"
            )
        self.data: np.ndarray = arr
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.node: Optional[Node] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def astype(self, dtype, requires_grad: Optional[bool] = None) -> "Tensor":
        rg = self.requires_grad if requires_grad is None else requires_grad
        return Tensor(self.data.astype(dtype), requires_grad=rg, dtype=dtype)

    def __add__(self, other) -> "Tensor":
        return add(self, other)

    def __radd__(self, other) -> "Tensor":
        return add(other, self)

    def __sub__(self, other) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other) -> "Tensor":
        return mul(other, self)

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __matmul__(self, other) -> "Tensor":
        return matmul(self, other)

    def __repr__(self) -> str:
        return (
            f"Tensor(shape: {self.shape}, dtype: {self.dtype}, "
            f"requires_grad: {self.requires_grad})"
        )


class Graph:
    """
    The recorded operations reachable from one output, in topological order.

    Attributes:
        output (Tensor): The tensor the graph was collected from.
        nodes (List[Node]): Append-only list; every node follows its operands' nodes.
    """

    def __init__(self, output: Tensor):
        self.output = output
        self.nodes: List[Node] = []
        self._collect()

    def _collect(self) -> None:
        if self.output.node is None:
            return
        visited = set()
        stack: List[Tuple[Node, bool]] = [(self.output.node, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                self.nodes.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for t in node.inputs:
                if t.node is not None and id(t.node) not in visited:
                    stack.append((t.node, False))

    def backward(self, seed: np.ndarray) -> None:
        """Propagate `seed` (d loss / d output) to every requires_grad leaf."""
        out = self.output
        if out.node is None:
            if out.requires_grad:
                _accumulate(out, seed)
            return
        grads = {id(out.node): seed}
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            for t, gi in zip(node.inputs, node.backward_fn(g)):
                if gi is None or not t.requires_grad:
                    continue
                if t.node is None:
                    _accumulate(t, gi)
                elif id(t.node) in grads:
                    grads[id(t.node)] = grads[id(t.node)] + gi
                else:
                    grads[id(t.node)] = gi


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    g = np.asarray(g, dtype=t.dtype).reshape(t.shape)
    t.grad = g.copy() if t.grad is None else t.grad + g


def backward(loss: Tensor) -> None:
    """
    Accumulate d(loss)/d(leaf) into every leaf that requires grad.

    Args:
        loss (Tensor): A single-element tensor produced by recorded operations.

    Raises:
        ContractError: If `loss` holds more than one value.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    graph = Graph(loss)
    logger.debug(f"Backward over {len(graph.nodes)} recorded nodes")
    graph.backward(np.ones(loss.shape, dtype=loss.dtype))


# --- Helpers ---
def as_tensor(x, like: Optional[Tensor] = None) -> Tensor:
    """Wrap a scalar or array as a constant tensor, matching `like`'s dtype."""
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(x, dtype=dtype)


def _make(
    data: np.ndarray,
    op: str,
    inputs: Tuple[Tensor, ...],
    backward_fn: BackwardFn,
    macs: int = 0,
) -> Tensor:
    counter = _op_counter.get()
    if counter is not None:
        counter.record(op, macs)
    out = Tensor(data, dtype=data.dtype)
    if _grad_enabled.get() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.node = Node(op, inputs, backward_fn)
    return out


def _pair(a, b) -> Tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, a)
    return as_tensor(a, b), b


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum out the axes that broadcasting expanded so `grad` matches `shape`."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast")


def _check_axis(op: str, a: Tensor, axis: int) -> int:
    if not -a.ndim <= axis < max(a.ndim, 1):
        raise DimensionError(f"{op}: axis {axis} out of range for shape {a.shape}")
    return axis % max(a.ndim, 1)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# --- Products ---
def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product over the last two axes, leading axes broadcast.

    Raises:
        DimensionError: If the inner extents differ or an operand has rank < 2.
    """
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise DimensionError(f"matmul: batch extents of {a.shape} and {b.shape} differ")
    macs = out.size * a.shape[-1]

    def backward_fn(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return _make(out, "matmul", (a, b), backward_fn, macs=macs)


# --- Elementwise ---
def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape("add", a, b)
    return _make(
        a.data + b.data,
        "add",
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape("sub", a, b)
    return _make(
        a.data - b.data,
        "sub",
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape("mul", a, b)
    return _make(
        a.data * b.data,
        "mul",
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.shape),
            _unbroadcast(g * a.data, b.shape),
        ),
    )


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, "neg", (a,), lambda g: (-g,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make(out, "exp", (a,), lambda g: (g * out,))


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.data)
    return _make(s, "sigmoid", (a,), lambda g: (g * s * (1.0 - s),))


def silu(a: Tensor) -> Tensor:
    """x * sigmoid(x)."""
    x = a.data
    s = _sigmoid(x)
    return _make(x * s, "silu", (a,), lambda g: (g * s * (1.0 + x * (1.0 - s)),))


def softplus(a: Tensor) -> Tensor:
    """ln(1 + e^x), evaluated without overflow."""
    x = a.data
    out = np.logaddexp(0.0, x).astype(x.dtype)
    return _make(out, "softplus", (a,), lambda g: (g * _sigmoid(x),))


def gelu(a: Tensor) -> Tensor:
    """GELU, tanh form."""
    x = a.data
    t = np.tanh(GELU_C * (x + 0.044715 * x**3))
    out = 0.5 * x * (1.0 + t)

    def backward_fn(g):
        dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * dt),)

    return _make(out, "gelu", (a,), backward_fn)


def rsqrt(a: Tensor) -> Tensor:
    out = 1.0 / np.sqrt(a.data)
    return _make(out, "rsqrt", (a,), lambda g: (g * -0.5 * out**3,))


_UNARY = {"neg": neg, "exp": exp, "silu": silu, "softplus": softplus}
_BINARY = {"add": add, "mul": mul}


def elementwise(op: str, a: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """
    Dispatch a pointwise operation by name.

    Args:
        op (str): One of add, mul, silu, softplus, exp, neg.
        a (Tensor): First operand.
        b (Optional[Tensor]): Second operand for binary ops.
    """
    if op in _BINARY:
        if b is None:
            raise ContractError(f"elementwise '{op}' needs two operands")
        return _BINARY[op](a, b)
    if op in _UNARY:
        return _UNARY[op](a)
    raise ContractError(f"Unknown elementwise op '{op}'")


# --- Reductions ---
def reduce(
    op: str, a: Tensor, axis: Optional[int] = None, keepdims: bool = False
) -> Tensor:
    """
    Reduce along `axis` (all axes when None) with mean, sum or max-index.

    Raises:
        DimensionError: If `axis` is out of range.
    """
    if axis is not None:
        axis = _check_axis(f"reduce({op})", a, axis)
    if op == "max-index":
        idx = np.argmax(a.data, axis=axis)
        if keepdims and axis is not None:
            idx = np.expand_dims(idx, axis)
        counter = _op_counter.get()
        if counter is not None:
            counter.record("argmax")
        return Tensor(idx, dtype=a.dtype)
    if op not in ("mean", "sum"):
        raise ContractError(f"Unknown reduction '{op}'")
    extent = a.size if axis is None else a.shape[axis]
    out = a.data.sum(axis=axis, keepdims=keepdims)
    if op == "mean":
        out = out / extent
    factor = 1.0 / extent if op == "mean" else 1.0

    def backward_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g * factor, a.shape).astype(a.dtype),)

    return _make(np.asarray(out, dtype=a.dtype), op, (a,), backward_fn)


def mean(a: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    return reduce("mean", a, axis, keepdims)


def sum_(a: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    return reduce("sum", a, axis, keepdims)


# --- Shape operations ---
def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != a.size or len(shape) > MAX_RANK:
        raise DimensionError(f"reshape: cannot view {a.shape} as {shape}")
    out = a.data.reshape(shape)
    return _make(out, "reshape", (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    """Permute axes; the result is an explicit contiguous copy."""
    axes = tuple(axes)
    if sorted(axes) != list(range(a.ndim)):
        raise DimensionError(f"transpose: axes {axes} invalid for shape {a.shape}")
    inverse = tuple(np.argsort(axes))
    out = np.ascontiguousarray(np.transpose(a.data, axes))
    return _make(out, "transpose", (a,), lambda g: (np.transpose(g, inverse),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    axis = _check_axis("concat", tensors[0], axis)
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"concat: incompatible shapes {shapes}")
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _make(
        out, "concat", tensors, lambda g: tuple(np.split(g, bounds, axis=axis))
    )


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Positions [start, stop) along `axis`."""
    axis = _check_axis("slice_axis", a, axis)
    if not 0 <= start <= stop <= a.shape[axis]:
        raise DimensionError(
            f"slice_axis: [{start}, {stop}) outside extent {a.shape[axis]}"
        )
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def backward_fn(g):
        full = np.zeros(a.shape, dtype=g.dtype)
        full[index] = g
        return (full,)

    return _make(np.ascontiguousarray(a.data[index]), "slice", (a,), backward_fn)


def flip(a: Tensor, axis: int = 0) -> Tensor:
    axis = _check_axis("flip", a, axis)
    out = np.ascontiguousarray(np.flip(a.data, axis=axis))
    return _make(out, "flip", (a,), lambda g: (np.flip(g, axis=axis),))


def cumsum(a: Tensor, axis: int = 0) -> Tensor:
    axis = _check_axis("cumsum", a, axis)
    out = np.cumsum(a.data, axis=axis)
    return _make(
        out,
        "cumsum",
        (a,),
        lambda g: (np.flip(np.cumsum(np.flip(g, axis=axis), axis=axis), axis=axis),),
    )


# --- Fused operations ---
def softmax(a: Tensor, axis: int = -1, where: Optional[np.ndarray] = None) -> Tensor:
    """
    Softmax along `axis`; positions where `where` is False get probability 0.

    Every slice along `axis` must keep at least one visible position.
    """
    axis = _check_axis("softmax", a, axis)
    x = a.data if where is None else np.where(where, a.data, -np.inf)
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    s = (e / e.sum(axis=axis, keepdims=True)).astype(a.dtype)

    def backward_fn(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _make(s, "softmax", (a,), backward_fn)


def cross_entropy(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean negative log-likelihood of `labels` under softmax(`logits`) rows."""
    if logits.ndim != 2:
        raise DimensionError(
            f"cross_entropy expects [batch, classes], got {logits.shape}"
        )
    labels = np.asarray(labels, dtype=np.int64)
    x = logits.data
    shifted = x - x.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    rows = np.arange(x.shape[0])
    loss = np.asarray(-logp[rows, labels].mean(), dtype=logits.dtype)

    def backward_fn(g):
        p = np.exp(logp)
        p[rows, labels] -= 1.0
        return (g * p / x.shape[0],)

    return _make(loss, "cross_entropy", (logits,), backward_fn)


def unfold_patches(image: Tensor, patch: int) -> Tensor:
    """
    Cut a [C, H, W] image into non-overlapping patch rows.

    Returns [n, C*patch*patch] with patches in raster order over the patch grid
    and values ordered (channel, row, column) inside each patch.

    Raises:
        DimensionError: If H or W is not a multiple of `patch`.
    """
    if image.ndim != 3:
        raise DimensionError(f"unfold_patches expects [C, H, W], got {image.shape}")
    c, h, w = image.shape
    if patch <= 0 or h % patch or w % patch:
        raise DimensionError(
            f"Image extents {h}x{w} are not multiples of patch size {patch}"
        )
    gh, gw = h // patch, w // patch
    out = (
        image.data.reshape(c, gh, patch, gw, patch)
        .transpose(1, 3, 0, 2, 4)
        .reshape(gh * gw, c * patch * patch)
    )

    def backward_fn(g):
        blocks = g.reshape(gh, gw, c, patch, patch).transpose(2, 0, 3, 1, 4)
        return (blocks.reshape(c, h, w),)

    return _make(np.ascontiguousarray(out), "unfold_patches", (image,), backward_fn)
