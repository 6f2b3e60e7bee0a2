"""Reverse-mode automatic differentiation over numpy arrays.

A ``Tensor`` wraps a float64 ``np.ndarray`` together with an optional
gradient and the backward edges of the computation graph.  Operators build
the graph eagerly; ``Tensor.backward()`` walks it once in reverse
topological order.  All numerics are float64; -inf appears only as the
lattice bottom for out-of-support padding in the morphological kernels,
never inside gradient arithmetic.

Elementwise ops accept tensors of identical shape, or a scalar on either
side (a Python number or a size-1 tensor).  Anything fancier goes through a
dedicated structured op with its own backward rule.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable

import numpy as np

Array = np.ndarray
BackwardRule = Callable[[Array], Array]

_grad_enabled = True


def is_grad_enabled() -> bool:
    return _grad_enabled


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (evaluation mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def make_rng(seed: int) -> np.random.Generator:
    """Deterministic generator (PCG64) used for every random draw."""
    return np.random.Generator(np.random.PCG64(seed))


def _as_array(x) -> Array:
    a = np.asarray(x, dtype=np.float64)
    return a


class Tensor:
    """Node of the reverse-mode graph.

    ``_parents`` holds ``(parent, rule)`` pairs where ``rule`` maps this
    node's output gradient to the parent's contribution.  Rules may return
    views of the incoming gradient; accumulation never mutates in place, so
    aliasing is harmless.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents")

    def __init__(self, data, requires_grad: bool = False,
                 parents: tuple[tuple["Tensor", BackwardRule], ...] = ()):
        self.data = _as_array(data)
        self.grad: Array | None = None
        self._parents = parents
        self.requires_grad = bool(requires_grad) or bool(parents)

    # -- introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # -- graph ----------------------------------------------------------

    def backward(self) -> None:
        """Backpropagate from a scalar output.

        Parents accumulate in reverse topological order, left to right
        within each node.  Call once per forward graph: repeated calls
        would double-count intermediate gradients.
        """
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output, got shape "
                             f"{self.data.shape}")
        topo = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            g = node.grad
            if g is None:
                continue
            for parent, rule in node._parents:
                contrib = rule(g)
                if parent.grad is None:
                    parent.grad = contrib
                else:
                    parent.grad = parent.grad + contrib

    # -- operator sugar ---------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)

    def reshape(self, shape):
        return reshape(self, shape)


def _toposort(root: Tensor) -> list[Tensor]:
    # iterative postorder; recursion would overflow on long training graphs
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(_as_array(x))


def make_node(data: Array, parents: Iterable[tuple[Tensor, BackwardRule]]) -> Tensor:
    """Assemble an op result, keeping only differentiable edges."""
    if not _grad_enabled:
        return Tensor(data)
    kept = tuple((p, rule) for p, rule in parents if p.requires_grad)
    return Tensor(data, parents=kept)


def _check_elementwise(a: Tensor, b: Tensor) -> None:
    if a.data.shape == b.data.shape:
        return
    if a.data.size == 1 or b.data.size == 1:
        return
    raise ValueError("elementwise op needs matching shapes or a scalar, got "
                     f"{a.data.shape} and {b.data.shape}")


def _reduce_to(shape: tuple[int, ...], g: Array) -> Array:
    # fold a broadcast gradient back onto a scalar operand
    if g.shape == shape:
        return g
    return np.sum(g).reshape(shape)


# -- elementwise ops -----------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_elementwise(a, b)
    out = a.data + b.data
    return make_node(out, [
        (a, lambda g: _reduce_to(a.data.shape, g)),
        (b, lambda g: _reduce_to(b.data.shape, g)),
    ])


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_elementwise(a, b)
    out = a.data - b.data
    return make_node(out, [
        (a, lambda g: _reduce_to(a.data.shape, g)),
        (b, lambda g: _reduce_to(b.data.shape, -g)),
    ])


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_elementwise(a, b)
    out = a.data * b.data
    return make_node(out, [
        (a, lambda g: _reduce_to(a.data.shape, g * b.data)),
        (b, lambda g: _reduce_to(b.data.shape, g * a.data)),
    ])


def neg(a) -> Tensor:
    a = _lift(a)
    return make_node(-a.data, [(a, lambda g: -g)])


def maximum(a, b) -> Tensor:
    """Elementwise max; on ties the subgradient routes to the first operand."""
    a, b = _lift(a), _lift(b)
    _check_elementwise(a, b)
    take_a = a.data >= b.data
    out = np.where(take_a, a.data, b.data)
    return make_node(out, [
        (a, lambda g: _reduce_to(a.data.shape, g * take_a)),
        (b, lambda g: _reduce_to(b.data.shape, g * ~take_a)),
    ])


def minimum(a, b) -> Tensor:
    """Elementwise min; on ties the subgradient routes to the first operand."""
    a, b = _lift(a), _lift(b)
    _check_elementwise(a, b)
    take_a = a.data <= b.data
    out = np.where(take_a, a.data, b.data)
    return make_node(out, [
        (a, lambda g: _reduce_to(a.data.shape, g * take_a)),
        (b, lambda g: _reduce_to(b.data.shape, g * ~take_a)),
    ])


# -- reductions and shape ops ---------------------------------------------


def tsum(a: Tensor) -> Tensor:
    a = _lift(a)
    shape = a.data.shape
    return make_node(np.sum(a.data).reshape(()),
                     [(a, lambda g: np.full(shape, float(g)))])


def tmean(a: Tensor) -> Tensor:
    a = _lift(a)
    shape = a.data.shape
    n = a.data.size
    return make_node(np.mean(a.data).reshape(()),
                     [(a, lambda g: np.full(shape, float(g) / n))])


def reshape(a: Tensor, shape) -> Tensor:
    a = _lift(a)
    old = a.data.shape
    return make_node(a.data.reshape(shape), [(a, lambda g: g.reshape(old))])


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis; backward scatters into zeros."""
    a = _lift(a)
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    shape = a.data.shape

    def back(g: Array) -> Array:
        out = np.zeros(shape)
        out[idx] = g
        return out

    return make_node(a.data[idx], [(a, back)])


def swap_last2(a: Tensor) -> Tensor:
    a = _lift(a)
    return make_node(np.swapaxes(a.data, -1, -2),
                     [(a, lambda g: np.swapaxes(g, -1, -2))])


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul expects 2-d operands")
    return make_node(a.data @ b.data, [
        (a, lambda g: g @ b.data.T),
        (b, lambda g: a.data.T @ g),
    ])


def add_rowvec(x: Tensor, v: Tensor) -> Tensor:
    """Add a length-n vector to every row of an (m, n) matrix."""
    x, v = _lift(x), _lift(v)
    if x.data.ndim != 2 or v.data.shape != (x.data.shape[1],):
        raise ValueError("add_rowvec expects (m, n) and (n,)")
    return make_node(x.data + v.data, [
        (x, lambda g: g),
        (v, lambda g: g.sum(axis=0)),
    ])


# -- numerical check -------------------------------------------------------


def finite_difference_grad(fn: Callable[[Tensor], Tensor], x: Tensor,
                           h: float = 1e-5) -> Array:
    """Central-difference gradient of a scalar-valued ``fn`` at ``x``."""
    base = x.data.copy()
    out = np.zeros_like(base)
    it = np.nditer(base, flags=["multi_index"])
    with no_grad():
        while not it.finished:
            i = it.multi_index
            probe = base.copy()
            probe[i] = base[i] + h
            hi = float(fn(Tensor(probe)).data)
            probe[i] = base[i] - h
            lo = float(fn(Tensor(probe)).data)
            out[i] = (hi - lo) / (2.0 * h)
            it.iternext()
    return out
