"""Reverse-mode automatic differentiation over dense 1D/2D real arrays.

The engine is graph-based: every operation returns a new ``Tensor`` holding
the forward value plus a closure that routes upstream gradients to the
operation's inputs.  ``Tensor.backward()`` walks the recorded graph once in
reverse topological order.  All arithmetic runs in numpy; float64 is the
default so finite-difference checks are meaningful, float32 is accepted for
lighter training runs.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float64


class DimensionError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class GraphError(RuntimeError):
    """The autodiff tape was used incorrectly (e.g. backward called twice)."""


def _as_array(data, dtype=None) -> np.ndarray:
    if isinstance(data, Tensor):
        raise TypeError("wrap raw values, not Tensors")
    arr = np.asarray(data)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype == np.float32:
        return arr
    return arr.astype(DEFAULT_DTYPE, copy=False)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcasted gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A dense array plus the graph bookkeeping needed for backward()."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_grad_fn", "_backward_done")

    def __init__(self, data, requires_grad: bool = False, dtype=None,
                 _parents: tuple = (), _grad_fn=None):
        self.data = _as_array(data, dtype)
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in _parents)
        self.grad: np.ndarray | None = None
        self._parents = _parents if self.requires_grad else ()
        self._grad_fn = _grad_fn if self.requires_grad else None
        self._backward_done = False

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    # -- backward pass --------------------------------------------------------

    def backward(self, seed: np.ndarray | float | None = None) -> None:
        """Propagate gradients from this tensor to every reachable input.

        A second backward from the same output without a fresh forward pass
        raises ``GraphError``; the recorded tape is single-use.
        """
        if not self.requires_grad:
            raise GraphError("backward() on a tensor that does not require grad")
        if self._backward_done:
            raise GraphError("backward() called twice on the same tape")
        self._backward_done = True

        if seed is None:
            if self.size != 1:
                raise GraphError("backward() without a seed needs a scalar output")
            seed_arr = np.ones_like(self.data)
        else:
            seed_arr = np.asarray(seed, dtype=self.data.dtype)
            if seed_arr.shape != self.shape:
                raise DimensionError("seed gradient shape mismatch")

        order = self._toposort()
        grads: dict[int, np.ndarray] = {id(self): seed_arr}
        for node in order:
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad and node._grad_fn is None:
                # leaf: accumulate into .grad for optimizers / gradcheck
                node.grad = g.copy() if node.grad is None else node.grad + g
            if node._grad_fn is not None:
                for parent, pg in node._grad_fn(g):
                    if not parent.requires_grad:
                        continue
                    key = id(parent)
                    if key in grads:
                        grads[key] = grads[key] + pg
                    else:
                        grads[key] = np.array(pg, dtype=parent.data.dtype, copy=True)

    def _toposort(self) -> list["Tensor"]:
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        return list(reversed(order))

    # -- arithmetic -----------------------------------------------------------

    def _coerce(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

    def __add__(self, other):
        other = self._coerce(other)
        out_data = self.data + other.data

        def grad_fn(g):
            return ((self, _unbroadcast(g, self.shape)),
                    (other, _unbroadcast(g, other.shape)))

        return Tensor(out_data, _parents=(self, other), _grad_fn=grad_fn)

    __radd__ = __add__

    def __sub__(self, other):
        other = self._coerce(other)
        out_data = self.data - other.data

        def grad_fn(g):
            return ((self, _unbroadcast(g, self.shape)),
                    (other, _unbroadcast(-g, other.shape)))

        return Tensor(out_data, _parents=(self, other), _grad_fn=grad_fn)

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        out_data = self.data * other.data
        a_data, b_data = self.data, other.data

        def grad_fn(g):
            return ((self, _unbroadcast(g * b_data, self.shape)),
                    (other, _unbroadcast(g * a_data, other.shape)))

        return Tensor(out_data, _parents=(self, other), _grad_fn=grad_fn)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        out_data = self.data / other.data
        a_data, b_data = self.data, other.data

        def grad_fn(g):
            return ((self, _unbroadcast(g / b_data, self.shape)),
                    (other, _unbroadcast(-g * a_data / (b_data * b_data), other.shape)))

        return Tensor(out_data, _parents=(self, other), _grad_fn=grad_fn)

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __neg__(self):
        def grad_fn(g):
            return ((self, -g),)

        return Tensor(-self.data, _parents=(self,), _grad_fn=grad_fn)

    def __pow__(self, exponent: float):
        if isinstance(exponent, Tensor):
            raise TypeError("tensor exponents are not supported")
        e = float(exponent)
        x = self.data
        out_data = x ** e

        def grad_fn(g):
            return ((self, g * e * x ** (e - 1.0)),)

        return Tensor(out_data, _parents=(self,), _grad_fn=grad_fn)

    def __matmul__(self, other):
        other = self._coerce(other)
        if self.ndim != 2 or other.ndim != 2 or self.shape[1] != other.shape[0]:
            raise DimensionError(f"matmul shapes {self.shape} x {other.shape}")
        out_data = self.data @ other.data
        a_data, b_data = self.data, other.data

        def grad_fn(g):
            return ((self, g @ b_data.T), (other, a_data.T @ g))

        return Tensor(out_data, _parents=(self, other), _grad_fn=grad_fn)

    # -- elementwise nonlinearities --------------------------------------------

    def relu(self) -> "Tensor":
        mask = self.data > 0

        def grad_fn(g):
            return ((self, g * mask),)

        return Tensor(np.where(mask, self.data, 0.0), _parents=(self,), _grad_fn=grad_fn)

    def tanh(self) -> "Tensor":
        y = np.tanh(self.data)

        def grad_fn(g):
            return ((self, g * (1.0 - y * y)),)

        return Tensor(y, _parents=(self,), _grad_fn=grad_fn)

    def sigmoid(self) -> "Tensor":
        # stable logistic: exp only of non-positive arguments
        x = self.data
        y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.clip(x, 0, None))),
                     np.exp(np.clip(x, None, 0)) / (1.0 + np.exp(np.clip(x, None, 0))))

        def grad_fn(g):
            return ((self, g * y * (1.0 - y)),)

        return Tensor(y, _parents=(self,), _grad_fn=grad_fn)

    def exp(self) -> "Tensor":
        y = np.exp(self.data)

        def grad_fn(g):
            return ((self, g * y),)

        return Tensor(y, _parents=(self,), _grad_fn=grad_fn)

    def log(self) -> "Tensor":
        x = self.data

        def grad_fn(g):
            return ((self, g / x),)

        return Tensor(np.log(x), _parents=(self,), _grad_fn=grad_fn)

    def abs(self) -> "Tensor":
        x = self.data

        def grad_fn(g):
            return ((self, g * np.sign(x)),)

        return Tensor(np.abs(x), _parents=(self,), _grad_fn=grad_fn)

    # -- reductions -----------------------------------------------------------

    def sum(self, axis: int | None = None) -> "Tensor":
        out_data = self.data.sum(axis=axis)
        shape = self.shape

        def grad_fn(g):
            if axis is None:
                return ((self, np.broadcast_to(g, shape).copy()),)
            return ((self, np.broadcast_to(np.expand_dims(g, axis), shape).copy()),)

        return Tensor(out_data, _parents=(self,), _grad_fn=grad_fn)

    def mean(self, axis: int | None = None) -> "Tensor":
        n = self.size if axis is None else self.shape[axis]
        return self.sum(axis=axis) * (1.0 / n)

    # -- comparisons producing routed gradients --------------------------------

    def maximum(self, other) -> "Tensor":
        """Elementwise max; ties route the gradient to ``self``."""
        other = self._coerce(other)
        take_self = self.data >= other.data
        out_data = np.where(take_self, self.data, other.data)

        def grad_fn(g):
            return ((self, _unbroadcast(g * take_self, self.shape)),
                    (other, _unbroadcast(g * ~take_self, other.shape)))

        return Tensor(out_data, _parents=(self, other), _grad_fn=grad_fn)

    def minimum(self, other) -> "Tensor":
        """Elementwise min; ties route the gradient to ``self``."""
        other = self._coerce(other)
        take_self = self.data <= other.data
        out_data = np.where(take_self, self.data, other.data)

        def grad_fn(g):
            return ((self, _unbroadcast(g * take_self, self.shape)),
                    (other, _unbroadcast(g * ~take_self, other.shape)))

        return Tensor(out_data, _parents=(self, other), _grad_fn=grad_fn)

    # -- structural ops ---------------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        out_data = self.data.reshape(shape)

        def grad_fn(g):
            return ((self, g.reshape(old)),)

        return Tensor(out_data, _parents=(self,), _grad_fn=grad_fn)

    def rows(self, start: int, stop: int) -> "Tensor":
        """Contiguous row slice [start, stop) with scatter backward."""
        if not (0 <= start <= stop <= self.shape[0]):
            raise DimensionError(f"row slice [{start}, {stop}) of {self.shape}")
        out_data = self.data[start:stop]
        shape = self.shape

        def grad_fn(g):
            full = np.zeros(shape, dtype=g.dtype)
            full[start:stop] = g
            return ((self, full),)

        return Tensor(out_data, _parents=(self,), _grad_fn=grad_fn)

    def take_rows(self, indices) -> "Tensor":
        """Gather rows by integer index; duplicate indices accumulate in backward."""
        idx = np.asarray(indices, dtype=np.intp)
        out_data = self.data[idx]
        shape = self.shape

        def grad_fn(g):
            full = np.zeros(shape, dtype=g.dtype)
            np.add.at(full, idx, g)
            return ((self, full),)

        return Tensor(out_data, _parents=(self,), _grad_fn=grad_fn)

    def gather_cols(self, col_indices) -> "Tensor":
        """Pick one column per row of a 2D tensor; returns a 1D tensor."""
        if self.ndim != 2:
            raise DimensionError("gather_cols needs a 2D tensor")
        idx = np.asarray(col_indices, dtype=np.intp)
        n = self.shape[0]
        if idx.shape != (n,):
            raise DimensionError("one column index per row required")
        rows = np.arange(n)
        out_data = self.data[rows, idx]
        shape = self.shape

        def grad_fn(g):
            full = np.zeros(shape, dtype=g.dtype)
            full[rows, idx] = g
            return ((self, full),)

        return Tensor(out_data, _parents=(self,), _grad_fn=grad_fn)

    def log_softmax(self, axis: int = -1) -> "Tensor":
        x = self.data
        shift = x - x.max(axis=axis, keepdims=True)
        lse = np.log(np.exp(shift).sum(axis=axis, keepdims=True))
        y = shift - lse
        softmax = np.exp(y)

        def grad_fn(g):
            return ((self, g - softmax * g.sum(axis=axis, keepdims=True)),)

        return Tensor(y, _parents=(self,), _grad_fn=grad_fn)


# -- free functions over several tensors ---------------------------------------


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate along ``axis``; backward splits the gradient."""
    tensors = list(tensors)
    if not tensors:
        raise DimensionError("concat of zero tensors")
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def grad_fn(g):
        pieces = []
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            pieces.append((t, g[tuple(sl)]))
        return tuple(pieces)

    return Tensor(out_data, _parents=tuple(tensors), _grad_fn=grad_fn)


def stack(tensors: Sequence[Tensor]) -> Tensor:
    """Stack same-shape tensors along a new leading axis."""
    tensors = list(tensors)
    if not tensors:
        raise DimensionError("stack of zero tensors")
    out_data = np.stack([t.data for t in tensors], axis=0)

    def grad_fn(g):
        return tuple((t, g[i]) for i, t in enumerate(tensors))

    return Tensor(out_data, _parents=tuple(tensors), _grad_fn=grad_fn)


def where_scalar(condition: np.ndarray, a: Tensor, b: Tensor) -> Tensor:
    """Select elementwise between two tensors using a constant boolean mask."""
    cond = np.asarray(condition, dtype=bool)
    out_data = np.where(cond, a.data, b.data)

    def grad_fn(g):
        return ((a, _unbroadcast(g * cond, a.shape)),
                (b, _unbroadcast(g * ~cond, b.shape)))

    return Tensor(out_data, _parents=(a, b), _grad_fn=grad_fn)


def parameter(data, dtype=None) -> Tensor:
    """A leaf tensor that accumulates gradients (model weight)."""
    return Tensor(data, requires_grad=True, dtype=dtype)
