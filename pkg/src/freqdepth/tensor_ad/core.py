"""Shaped float64 arrays with define-by-run reverse-mode differentiation.

Every differentiable op produces a ``Tensor`` that remembers a ``Node``
(its inputs and a backward closure).  Nodes carry a global sequence number
so that backward replay visits operations in exact reverse execution order.
"""

from __future__ import annotations

import itertools
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

_SEQ = itertools.count()
_LOCAL = threading.local()


class ShapeError(ValueError):
    pass


class DomainError(ValueError):
    pass


class Node:
    __slots__ = ("seq", "name", "inputs", "out_id", "backward_fn")

    def __init__(self, name, inputs, backward_fn):
        self.seq = next(_SEQ)
        self.name = name
        self.inputs = inputs
        self.backward_fn = backward_fn
        # id only: holding the output tensor would form a reference cycle
        self.out_id = None

    def __repr__(self):
        return f"Node({self.name}, seq={self.seq})"


class Tape:
    """Ordered record of the differentiable ops executed while active.

    Used as a context manager; tapes are thread-local, so distinct threads
    can record independently.
    """

    def __init__(self):
        self.ops: list[Node] = []
        self._prev = None

    def __enter__(self):
        self._prev = getattr(_LOCAL, "tape", None)
        _LOCAL.tape = self
        return self

    def __exit__(self, *exc):
        _LOCAL.tape = self._prev
        return False

    def record(self, node: Node) -> None:
        self.ops.append(node)

    def backward(self, loss: "Tensor") -> None:
        """Replay this tape in reverse, accumulating into leaf gradients."""
        _run_backward(loss, self.ops)


def _active_tape() -> Tape | None:
    return getattr(_LOCAL, "tape", None)


class Tensor:
    """Immutable float64 array with an optional gradient accumulator."""

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        arr.flags.writeable = False
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(arr) if requires_grad else None
        self.name = name
        self._node: Node | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, o):
        return add(self, o)

    def __radd__(self, o):
        return add(o, self)

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    def __rmul__(self, o):
        return mul(o, self)

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(o, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, o):
        return matmul(self, o)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_op(name: str, data: np.ndarray, inputs: Sequence[Tensor],
            backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]]) -> Tensor:
    """Wrap ``data`` as the output of a differentiable op.

    ``backward_fn`` maps the upstream gradient to one gradient per input
    (``None`` for inputs that need none).  Nothing is recorded when no input
    requires a gradient.
    """
    out = Tensor(data)
    if any(t.requires_grad for t in inputs):
        out.requires_grad = True
        node = Node(name, tuple(inputs), backward_fn)
        node.out_id = id(out)
        out._node = node
        tape = _active_tape()
        if tape is not None:
            tape.record(node)
    return out


def _reachable_ops(loss: Tensor) -> list[Node]:
    seen = set()
    ops = []
    stack = [loss]
    while stack:
        t = stack.pop()
        node = t._node
        if node is None or id(node) in seen:
            continue
        seen.add(id(node))
        ops.append(node)
        stack.extend(node.inputs)
    ops.sort(key=lambda n: n.seq)
    return ops


def _run_backward(loss: Tensor, ops: Iterable[Node]) -> None:
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(list(ops)):
        g = grads.pop(node.out_id, None)
        if g is None:
            continue
        in_grads = node.backward_fn(g)
        for t, gi in zip(node.inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            if gi.shape != t.shape:
                raise ShapeError(f"{node.name}: gradient shape {gi.shape} != input shape {t.shape}")
            if t._node is None:
                t.grad = gi.copy() if t.grad is None else t.grad + gi
            else:
                key = id(t)
                grads[key] = grads[key] + gi if key in grads else gi
    # loss itself may be a leaf
    if loss._node is None:
        loss.grad = (0.0 if loss.grad is None else loss.grad) + np.ones_like(loss.data)


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every leaf tensor that requires grad."""
    _run_backward(loss, _reachable_ops(loss))


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


# ---------------------------------------------------------------------------
# elementwise

def _binary_operands(a, b, opname):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
        raise ShapeError(f"{opname}: incompatible shapes {a.shape} and {b.shape}")
    return a, b


def _reduce_to(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == tuple(shape):
        return g
    return np.asarray(g.sum()).reshape(shape)


def add(a, b) -> Tensor:
    a, b = _binary_operands(a, b, "add")
    return make_op("add", a.data + b.data, (a, b),
                   lambda g: (_reduce_to(g, a.shape), _reduce_to(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _binary_operands(a, b, "sub")
    return make_op("sub", a.data - b.data, (a, b),
                   lambda g: (_reduce_to(g, a.shape), _reduce_to(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _binary_operands(a, b, "mul")
    return make_op("mul", a.data * b.data, (a, b),
                   lambda g: (_reduce_to(g * b.data, a.shape), _reduce_to(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = _binary_operands(a, b, "div")
    out = a.data / b.data
    return make_op("div", out, (a, b),
                   lambda g: (_reduce_to(g / b.data, a.shape),
                              _reduce_to(-g * out / b.data, b.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return make_op("neg", -a.data, (a,), lambda g: (-g,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return make_op("exp", out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise DomainError("log of non-positive value")
    return make_op("log", np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data < 0):
        raise DomainError("sqrt of negative value")
    out = np.sqrt(a.data)

    def bw(g):
        # subgradient 0 at the kink
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, g / (2.0 * safe), 0.0),)

    return make_op("sqrt", out, (a,), bw)


def tabs(a) -> Tensor:
    a = as_tensor(a)
    return make_op("abs", np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def square(a) -> Tensor:
    a = as_tensor(a)
    return make_op("square", a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = _sigmoid(a.data)
    return make_op("sigmoid", s, (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    t = np.tanh(a.data)
    return make_op("tanh", t, (a,), lambda g: (g * (1.0 - t * t),))


def swish(a) -> Tensor:
    """x * sigmoid(x)."""
    a = as_tensor(a)
    s = _sigmoid(a.data)
    out = a.data * s
    return make_op("swish", out, (a,), lambda g: (g * (s + out * (1.0 - s)),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    m = a.data > 0
    return make_op("relu", np.where(m, a.data, 0.0), (a,), lambda g: (g * m,))


_BINARY = {"add": add, "sub": sub, "mul": mul, "div": div}
_UNARY = {"exp": exp, "log": log, "abs": tabs, "sqrt": sqrt, "swish": swish,
          "sigmoid": sigmoid, "tanh": tanh, "neg": neg, "square": square, "relu": relu}


def elementwise(op: str, a, b=None) -> Tensor:
    if op in _BINARY:
        if b is None:
            raise ValueError(f"{op} needs two operands")
        return _BINARY[op](a, b)
    if op in _UNARY:
        return _UNARY[op](a)
    raise ValueError(f"unknown elementwise op {op!r}")


def where(mask, a, b) -> Tensor:
    """Select ``a`` where ``mask`` else ``b`` (mask is a constant)."""
    a, b = _binary_operands(a, b, "where")
    m = np.asarray(mask, dtype=bool)
    shape = np.broadcast_shapes(a.shape, b.shape)
    if m.shape != shape:
        raise ShapeError(f"where: mask shape {m.shape} != operand shape {shape}")
    return make_op("where", np.where(m, a.data, b.data), (a, b),
                   lambda g: (_reduce_to(np.where(m, g, 0.0), a.shape),
                              _reduce_to(np.where(m, 0.0, g), b.shape)))


# ---------------------------------------------------------------------------
# reductions and shape ops

def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make_op("sum", out, (a,), bw)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    n = a.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return tsum(a, axis, keepdims) * (1.0 / n)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return make_op("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = np.argsort(axes)
    return make_op("transpose", a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    out = np.broadcast_to(a.data, shape)
    lead = len(shape) - a.ndim

    def bw(g):
        g = g.sum(axis=tuple(range(lead))) if lead else g
        axes = tuple(i for i, n in enumerate(a.shape) if n == 1 and g.shape[i] != 1)
        if axes:
            g = g.sum(axis=axes, keepdims=True)
        return (g,)

    return make_op("broadcast_to", out, (a,), bw)


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return make_op("getitem", a.data[idx], (a,), bw)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return make_op("concat", np.concatenate([t.data for t in ts], axis=axis), ts, bw)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    return concat([reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in ts], axis)


def matmul(a, b) -> Tensor:
    """Batched matrix product.  ``b`` may be 2-D and shared across the batch."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        if gb.ndim > b.ndim:
            gb = gb.reshape((-1,) + b.shape).sum(axis=0)
        if ga.ndim > a.ndim:
            ga = ga.reshape((-1,) + a.shape).sum(axis=0)
        return ga, gb

    return make_op("matmul", a.data @ b.data, (a, b), bw)


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make_op("softmax", y, (a,), bw)
