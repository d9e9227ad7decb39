"""A minimal deterministic tensor with reverse-mode differentiation.

Values are 64-bit floats.  Ops record a node (parents + vector-Jacobian
product) on the implicit tape; `backward` replays the tape in reverse
topological order and accumulates gradients into the leaves.  Everything is
single-threaded and bit-deterministic given identical inputs.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np


class Node:
    """Tape record: where a tensor came from and how to push gradients back."""

    __slots__ = ("name", "parents", "vjp")

    def __init__(self, name, parents, vjp):
        self.name = name
        self.parents = parents
        self.vjp = vjp  # g -> tuple of per-parent gradients (None to skip)


# Backward fault injection for the gradcheck self-test: when set, gradients
# flowing to the first parent of every node with the given op name are scaled.
_FAULT = {"name": None, "scale": 1.0}


@contextmanager
def inject_backward_fault(op_name: str, scale: float = 1.01):
    """Deliberately corrupt the backward rule of one op (testing only)."""
    prev = dict(_FAULT)
    _FAULT["name"] = op_name
    _FAULT["scale"] = scale
    try:
        yield
    finally:
        _FAULT.update(prev)


class Tensor:
    """Dense float64 array with an optional gradient slot and tape node."""

    __slots__ = ("values", "grad", "node", "requires_grad", "name")

    def __init__(self, values, requires_grad: bool = False, name: str | None = None):
        self.values = np.ascontiguousarray(np.asarray(values, dtype=np.float64))
        self.grad: np.ndarray | None = None
        self.node: Node | None = None
        self.requires_grad = requires_grad
        self.name = name

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    def item(self) -> float:
        if self.values.size != 1:
            raise ValueError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.values.reshape(()))

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"<Tensor shape={self.shape}{tag} requires_grad={self.requires_grad}>"

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.values)

    # -- operators -----------------------------------------------------------

    def __add__(self, other):
        return add(self, _coerce(other, self.shape))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _coerce(other, self.shape))

    def __rsub__(self, other):
        return sub(_coerce(other, self.shape), self)

    def __mul__(self, other):
        return mul(self, _coerce(other, self.shape))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _coerce(other, self.shape))

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def sum(self):
        return tensor_sum(self)

    def mean(self):
        return tensor_mean(self)

    def reshape(self, shape):
        return reshape(self, shape)


def _coerce(other, shape) -> Tensor:
    if isinstance(other, Tensor):
        return other
    arr = np.asarray(other, dtype=np.float64)
    if arr.ndim == 0:
        arr = np.broadcast_to(arr, shape)
    return Tensor(np.ascontiguousarray(arr))


def make_op(name, values, parents, vjp) -> Tensor:
    """Build an op result; the node is recorded only if a parent needs grads."""
    out = Tensor(values)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.node = Node(name, parents, vjp)
    return out


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# -- elementwise ops ---------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")
    return make_op("add", a.values + b.values, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")
    return make_op("sub", a.values - b.values, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "mul")
    return make_op(
        "mul", a.values * b.values, (a, b), lambda g: (g * b.values, g * a.values)
    )


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "div")
    return make_op(
        "div",
        a.values / b.values,
        (a, b),
        lambda g: (g / b.values, -g * a.values / (b.values * b.values)),
    )


def neg(a: Tensor) -> Tensor:
    return make_op("neg", -a.values, (a,), lambda g: (-g,))


def power(a: Tensor, p) -> Tensor:
    p = float(p)
    return make_op(
        "power",
        a.values**p,
        (a,),
        lambda g: (g * p * a.values ** (p - 1.0),),
    )


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.values)
    return make_op("exp", y, (a,), lambda g: (g * y,))


def log(a: Tensor) -> Tensor:
    return make_op("log", np.log(a.values), (a,), lambda g: (g / a.values,))


def sqrt(a: Tensor) -> Tensor:
    y = np.sqrt(a.values)
    return make_op("sqrt", y, (a,), lambda g: (g * 0.5 / y,))


def absolute(a: Tensor) -> Tensor:
    return make_op("abs", np.abs(a.values), (a,), lambda g: (g * np.sign(a.values),))


def relu(a: Tensor) -> Tensor:
    mask = a.values > 0.0
    return make_op("relu", a.values * mask, (a,), lambda g: (g * mask,))


def softplus(a: Tensor) -> Tensor:
    """log(1 + exp(x)) computed without overflow; derivative is the sigmoid."""
    x = a.values
    y = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    sig = 0.5 * (1.0 + np.tanh(0.5 * x))  # overflow-free sigmoid
    return make_op("softplus", y, (a,), lambda g: (g * sig,))


# -- reductions and rearrangements ------------------------------------------


def tensor_sum(a: Tensor) -> Tensor:
    return make_op(
        "sum",
        np.asarray(np.sum(a.values)),
        (a,),
        lambda g: (np.broadcast_to(g, a.shape).copy(),),
    )


def tensor_mean(a: Tensor) -> Tensor:
    n = a.values.size
    return make_op(
        "mean",
        np.asarray(np.sum(a.values) / n),
        (a,),
        lambda g: (np.broadcast_to(g / n, a.shape).copy(),),
    )


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    orig = a.shape
    return make_op(
        "reshape",
        a.values.reshape(shape),
        (a,),
        lambda g: (g.reshape(orig),),
    )


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    values = np.concatenate([t.values for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, offsets, axis=axis))

    return make_op("concat", values, tuple(tensors), vjp)


def take(a: Tensor, flat_indices: np.ndarray) -> Tensor:
    """Gather elements by flat (row-major) index; backward scatter-adds."""
    idx = np.asarray(flat_indices, dtype=np.int64)
    values = a.values.reshape(-1)[idx]

    def vjp(g):
        out = np.zeros(a.values.size, dtype=np.float64)
        np.add.at(out, idx, g)
        return (out.reshape(a.shape),)

    return make_op("take", values, (a,), vjp)


# -- backward ----------------------------------------------------------------


def _topo_order(loss: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        t, processed = stack.pop()
        if processed:
            order.append(t)
            continue
        if id(t) in visited:
            continue
        visited.add(id(t))
        stack.append((t, True))
        if t.node is not None:
            for p in t.node.parents:
                if id(p) not in visited:
                    stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate `grad` on every requires-grad leaf reachable from `loss`.

    Repeated calls without `zero_grad` accumulate.  Visits each tape record
    exactly once, in reverse topological order.
    """
    if loss.values.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}
    for t in reversed(_topo_order(loss)):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        if t.node is None:
            if t.requires_grad:
                if t.grad is None:
                    t.grad = g.copy()
                else:
                    t.grad += g
            continue
        parent_grads = list(t.node.vjp(g))
        if _FAULT["name"] == t.node.name and parent_grads and parent_grads[0] is not None:
            parent_grads[0] = parent_grads[0] * _FAULT["scale"]
        for p, pg in zip(t.node.parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            # never mutate in place: vjp outputs may alias each other (add
            # hands the same array to both parents)
            if id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = pg
