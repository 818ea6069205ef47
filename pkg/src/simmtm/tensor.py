"""
Dense float64 tensors with reverse-mode differentiation.

Every operation records its parents together with a backward closure that
maps the output gradient to one gradient per parent. `Tensor.backward`
orders the recorded graph once and accumulates into the leaves that
require gradients. Kernels are plain numpy calls in a fixed order, so a
run is bit-reproducible for a given seed.
"""

from __future__ import annotations

import math
import threading
from collections.abc import Callable
from collections.abc import Generator
from collections.abc import Sequence
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any
from typing import Optional
from typing import Tuple
from typing import Union

import numpy as np
import numpy.typing as npt

from simmtm.exceptions import ContractError
from simmtm.exceptions import DimensionError
from simmtm.exceptions import NonFiniteError

Array = npt.NDArray[np.float64]
BoolArray = npt.NDArray[np.bool_]
Operand = Union["Tensor", float, int, npt.NDArray[Any]]
Axis = Union[int, Tuple[int, ...], None]
BackwardFn = Callable[[Array], Tuple[Optional[Array], ...]]

_GELU_K = math.sqrt(2.0 / math.pi)
_GELU_C = 0.044715

_state = threading.local()


def is_grad_enabled() -> bool:
    """True unless inside a `no_grad()` block on this thread."""
    return bool(getattr(_state, "enabled", True))


@contextmanager
def no_grad() -> Generator[None, None, None]:
    """Context manager that stops graph recording on the current thread."""
    prior = is_grad_enabled()
    _state.enabled = False
    try:
        yield None

    finally:
        _state.enabled = prior


def _check_finite(values: Array, op: str) -> None:
    if not np.isfinite(values).all():
        raise NonFiniteError(f"non-finite value produced by '{op}'")


class Tensor:
    """A float64 array that records the operations producing it."""

    # ndarray <op> Tensor defers to the Tensor reflected operators
    __array_priority__ = 1000

    def __init__(self, values: Any, *, requires_grad: bool = False) -> None:
        """
        Build a leaf tensor.

        Args:
            values: Anything numpy can turn into a float64 array. Copied.
            requires_grad: Accumulate gradients into `.grad` on backward;
                `.grad` starts as zeros and stays zero for a loss that
                ignores this leaf.

        Raises:
            simmtm.exceptions.DimensionError: A dimension has size zero.
            simmtm.exceptions.NonFiniteError: Values contain NaN or Inf.
        """
        array = np.array(values, dtype=np.float64)
        if 0 in array.shape:
            raise DimensionError(f"zero-sized dimension in shape {array.shape}")
        _check_finite(array, "leaf")

        self._values: Array = array
        self.requires_grad = requires_grad
        self.grad: Array | None = np.zeros_like(array) if requires_grad else None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None
        self.op = "leaf"

    @classmethod
    def _from_op(
        cls,
        values: Array,
        parents: tuple[Tensor, ...],
        backward: BackwardFn,
        op: str,
    ) -> Tensor:
        """Wrap an op result, recording the graph edge when anything needs it."""
        values = np.asarray(values, dtype=np.float64)
        if 0 in values.shape:
            raise DimensionError(f"'{op}' produced a zero-sized dimension")
        _check_finite(values, op)

        out = cls.__new__(cls)
        track = is_grad_enabled() and any(p.requires_grad for p in parents)
        out._values = values
        out.requires_grad = track
        out.grad = None
        out._parents = parents if track else ()
        out._backward = backward if track else None
        out.op = op
        return out

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    @property
    def values(self) -> Array:
        """Underlying array. Mutating it in place is reserved for leaf updates."""
        return self._values

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self._values.shape)

    @property
    def ndim(self) -> int:
        return int(self._values.ndim)

    @property
    def size(self) -> int:
        return int(self._values.size)

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> Array:
        """Copy of the values."""
        return self._values.copy()

    def item(self) -> float:
        if self.size != 1:
            raise ContractError(f"item() needs a single value, shape is {self.shape}")
        return float(self._values.reshape(-1)[0])

    def detach(self) -> Tensor:
        """Same values, no graph, no gradient."""
        return Tensor(self._values)

    def zero_grad(self) -> None:
        """Reset an accumulating leaf to exact zeros."""
        self.grad = np.zeros_like(self._values) if self.requires_grad else None

    def backward(self) -> None:
        """
        Accumulate d(self)/d(leaf) into every reachable leaf's `.grad`.

        Raises:
            simmtm.exceptions.ContractError: self is not a scalar.
            simmtm.exceptions.NonFiniteError: A gradient became NaN or Inf.
        """
        if self.size != 1:
            raise ContractError(f"backward needs a scalar loss, shape is {self.shape}")

        graph = ComputeGraph.from_output(self)
        pending: dict[int, Array] = {id(self): np.ones_like(self._values)}

        for node in reversed(graph.nodes):
            grad = pending.pop(id(node), None)
            if grad is None:
                continue

            if node._backward is None:
                if node.requires_grad:
                    _check_finite(grad, f"grad of {node.op}")
                    node.grad = grad.copy() if node.grad is None else node.grad + grad
                continue

            for parent, parent_grad in zip(node._parents, node._backward(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = pending[key] + parent_grad if key in pending else parent_grad

    def __add__(self, other: Operand) -> Tensor:
        return add(self, other)

    def __radd__(self, other: Operand) -> Tensor:
        return add(other, self)

    def __sub__(self, other: Operand) -> Tensor:
        return sub(self, other)

    def __rsub__(self, other: Operand) -> Tensor:
        return sub(other, self)

    def __mul__(self, other: Operand) -> Tensor:
        return mul(self, other)

    def __rmul__(self, other: Operand) -> Tensor:
        return mul(other, self)

    def __truediv__(self, other: Operand) -> Tensor:
        return div(self, other)

    def __rtruediv__(self, other: Operand) -> Tensor:
        return div(other, self)

    def __neg__(self) -> Tensor:
        return neg(self)

    def __pow__(self, exponent: float) -> Tensor:
        return power(self, exponent)

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, other)

    def __getitem__(self, index: Any) -> Tensor:
        return take(self, index)

    def exp(self) -> Tensor:
        return exp(self)

    def log(self) -> Tensor:
        return log(self)

    def sqrt(self) -> Tensor:
        return sqrt(self)

    def tanh(self) -> Tensor:
        return tanh(self)

    def relu(self) -> Tensor:
        return relu(self)

    def gelu(self) -> Tensor:
        return gelu(self)

    def sum(self, axis: Axis = None, keepdims: bool = False) -> Tensor:  # noqa: A003
        return tsum(self, axis, keepdims)

    def mean(self, axis: Axis = None, keepdims: bool = False) -> Tensor:
        return mean(self, axis, keepdims)

    def reshape(self, *shape: Any) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            return reshape(self, shape[0])
        return reshape(self, shape)

    def transpose(self, *axes: int) -> Tensor:
        return transpose(self, axes or None)

    def swapaxes(self, axis1: int, axis2: int) -> Tensor:
        return swapaxes(self, axis1, axis2)


@dataclass(frozen=True)
class ComputeGraph:
    """Nodes reachable from an output, inputs before the ops consuming them."""

    nodes: tuple[Tensor, ...]

    @classmethod
    def from_output(cls, output: Tensor) -> ComputeGraph:
        """Iterative post-order walk; every reachable node appears once."""
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(output, False)]

        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        return cls(tuple(order))

    @property
    def ops(self) -> list[str]:
        return [node.op for node in self.nodes]


def as_tensor(value: Operand) -> Tensor:
    """Pass tensors through, wrap anything else as a constant."""
    return value if isinstance(value, Tensor) else Tensor(value)


def zeros(shape: Sequence[int], *, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(tuple(shape)), requires_grad=requires_grad)


def ones(shape: Sequence[int], *, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(tuple(shape)), requires_grad=requires_grad)


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum a broadcast gradient back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as err:
        raise DimensionError(f"'{op}' cannot broadcast {a.shape} with {b.shape}") from err


def add(a: Operand, b: Operand) -> Tensor:
    ta, tb = as_tensor(a), as_tensor(b)
    _broadcast_shape(ta, tb, "add")

    def backward(grad: Array) -> tuple[Array | None, ...]:
        return _unbroadcast(grad, ta.shape), _unbroadcast(grad, tb.shape)

    return Tensor._from_op(ta.values + tb.values, (ta, tb), backward, "add")


def sub(a: Operand, b: Operand) -> Tensor:
    ta, tb = as_tensor(a), as_tensor(b)
    _broadcast_shape(ta, tb, "sub")

    def backward(grad: Array) -> tuple[Array | None, ...]:
        return _unbroadcast(grad, ta.shape), _unbroadcast(-grad, tb.shape)

    return Tensor._from_op(ta.values - tb.values, (ta, tb), backward, "sub")


def mul(a: Operand, b: Operand) -> Tensor:
    ta, tb = as_tensor(a), as_tensor(b)
    _broadcast_shape(ta, tb, "mul")

    def backward(grad: Array) -> tuple[Array | None, ...]:
        return (
            _unbroadcast(grad * tb.values, ta.shape),
            _unbroadcast(grad * ta.values, tb.shape),
        )

    return Tensor._from_op(ta.values * tb.values, (ta, tb), backward, "mul")


def div(a: Operand, b: Operand) -> Tensor:
    ta, tb = as_tensor(a), as_tensor(b)
    _broadcast_shape(ta, tb, "div")

    def backward(grad: Array) -> tuple[Array | None, ...]:
        return (
            _unbroadcast(grad / tb.values, ta.shape),
            _unbroadcast(-grad * ta.values / (tb.values * tb.values), tb.shape),
        )

    with np.errstate(divide="ignore", invalid="ignore"):
        values = ta.values / tb.values
    return Tensor._from_op(values, (ta, tb), backward, "div")


def neg(a: Tensor) -> Tensor:
    def backward(grad: Array) -> tuple[Array | None, ...]:
        return (-grad,)

    return Tensor._from_op(-a.values, (a,), backward, "neg")


def power(a: Tensor, exponent: float) -> Tensor:
    def backward(grad: Array) -> tuple[Array | None, ...]:
        return (grad * exponent * a.values ** (exponent - 1),)

    with np.errstate(divide="ignore", invalid="ignore"):
        values = a.values**exponent
    return Tensor._from_op(values, (a,), backward, "pow")


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        values = np.exp(a.values)

    def backward(grad: Array) -> tuple[Array | None, ...]:
        return (grad * values,)

    return Tensor._from_op(values, (a,), backward, "exp")


def log(a: Tensor) -> Tensor:
    def backward(grad: Array) -> tuple[Array | None, ...]:
        return (grad / a.values,)

    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.log(a.values)
    return Tensor._from_op(values, (a,), backward, "log")


def sqrt(a: Tensor) -> Tensor:
    with np.errstate(invalid="ignore"):
        values = np.sqrt(a.values)

    def backward(grad: Array) -> tuple[Array | None, ...]:
        # sqrt(0) passes a zero gradient
        return (np.divide(grad, 2.0 * values, out=np.zeros_like(grad), where=values > 0),)

    return Tensor._from_op(values, (a,), backward, "sqrt")


def tanh(a: Tensor) -> Tensor:
    values = np.tanh(a.values)

    def backward(grad: Array) -> tuple[Array | None, ...]:
        return (grad * (1.0 - values * values),)

    return Tensor._from_op(values, (a,), backward, "tanh")


def relu(a: Tensor) -> Tensor:
    def backward(grad: Array) -> tuple[Array | None, ...]:
        return (grad * (a.values > 0),)

    return Tensor._from_op(np.maximum(a.values, 0.0), (a,), backward, "relu")


def gelu(a: Tensor) -> Tensor:
    """Tanh approximation of the Gaussian error linear unit."""
    x = a.values
    inner = _GELU_K * (x + _GELU_C * x**3)
    t = np.tanh(inner)

    def backward(grad: Array) -> tuple[Array | None, ...]:
        d_inner = _GELU_K * (1.0 + 3.0 * _GELU_C * x * x)
        return (grad * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner),)

    return Tensor._from_op(0.5 * x * (1.0 + t), (a,), backward, "gelu")


def clip_min(a: Tensor, floor: float) -> Tensor:
    """max(a, floor) elementwise; gradient flows only where a > floor."""

    def backward(grad: Array) -> tuple[Array | None, ...]:
        return (grad * (a.values > floor),)

    return Tensor._from_op(np.maximum(a.values, floor), (a,), backward, "clip_min")


def _normalize_axes(axis: Axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else axis
    return tuple(sorted(ax % ndim for ax in axes))


def tsum(a: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, a.ndim)

    def backward(grad: Array) -> tuple[Array | None, ...]:
        if not keepdims:
            grad = np.expand_dims(grad, axes)
        return (np.broadcast_to(grad, a.shape).copy(),)

    values = np.asarray(a.values.sum(axis=axes, keepdims=keepdims))
    return Tensor._from_op(values, (a,), backward, "sum")


def mean(a: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes]))
    return tsum(a, axis, keepdims) / float(count)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        values = a.values.reshape(tuple(shape))
    except ValueError as err:
        raise DimensionError(f"cannot reshape {a.shape} into {tuple(shape)}") from err

    def backward(grad: Array) -> tuple[Array | None, ...]:
        return (grad.reshape(a.shape),)

    return Tensor._from_op(values, (a,), backward, "reshape")


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    perm = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    if sorted(ax % a.ndim for ax in perm) != list(range(a.ndim)):
        raise DimensionError(f"axes {perm} do not permute a {a.ndim}-d tensor")
    inverse = tuple(int(ax) for ax in np.argsort([ax % a.ndim for ax in perm]))

    def backward(grad: Array) -> tuple[Array | None, ...]:
        return (grad.transpose(inverse),)

    return Tensor._from_op(a.values.transpose(perm), (a,), backward, "transpose")


def swapaxes(a: Tensor, axis1: int, axis2: int) -> Tensor:
    perm = list(range(a.ndim))
    perm[axis1], perm[axis2] = perm[axis2], perm[axis1]
    return transpose(a, perm)


def take(a: Tensor, index: Any) -> Tensor:
    """Basic or integer-array indexing; backward scatter-adds."""
    try:
        values = np.array(a.values[index])
    except IndexError as err:
        raise DimensionError(f"index out of range for shape {a.shape}") from err

    def backward(grad: Array) -> tuple[Array | None, ...]:
        full = np.zeros_like(a.values)
        np.add.at(full, index, grad)
        return (full,)

    return Tensor._from_op(values, (a,), backward, "slice")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ContractError("concat needs at least one tensor")
    parts = tuple(tensors)
    try:
        values = np.concatenate([t.values for t in parts], axis=axis)
    except ValueError as err:
        shapes = [t.shape for t in parts]
        raise DimensionError(f"cannot concat shapes {shapes} on axis {axis}") from err
    bounds = np.cumsum([t.shape[axis] for t in parts])[:-1]

    def backward(grad: Array) -> tuple[Array | None, ...]:
        return tuple(np.split(grad, bounds, axis=axis))

    return Tensor._from_op(values, parts, backward, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    expanded = []
    for t in tensors:
        shape = list(t.shape)
        shape.insert(axis % (t.ndim + 1), 1)
        expanded.append(reshape(t, shape))
    return concat(expanded, axis=axis)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product; leading dimensions broadcast as in numpy.matmul.

    Raises:
        simmtm.exceptions.DimensionError: Inner dimensions disagree.
    """
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    try:
        values = np.matmul(a.values, b.values)
    except ValueError as err:
        raise DimensionError(f"matmul cannot broadcast {a.shape} @ {b.shape}") from err

    def backward(grad: Array) -> tuple[Array | None, ...]:
        grad_a = np.matmul(grad, np.swapaxes(b.values, -1, -2))
        grad_b = np.matmul(np.swapaxes(a.values, -1, -2), grad)
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)

    return Tensor._from_op(values, (a, b), backward, "matmul")


def _masked_shift(x: Array, mask: BoolArray | None, axis: int) -> Array:
    """x minus its (candidate) max along axis; excluded entries become -inf."""
    if mask is None:
        return x - x.max(axis=axis, keepdims=True)
    if not mask.any(axis=axis).all():
        raise ContractError("softmax mask leaves a row without candidates")
    masked = np.where(mask, x, -np.inf)
    return np.where(mask, x - masked.max(axis=axis, keepdims=True), -np.inf)


def softmax(x: Tensor, axis: int = -1, mask: BoolArray | None = None) -> Tensor:
    """
    Max-shifted softmax along `axis`.

    Args:
        mask: Optional boolean array broadcastable to x; False entries are
            left out of the normalization and receive exactly zero weight.
    """
    full_mask = None if mask is None else np.broadcast_to(mask, x.shape)
    with np.errstate(under="ignore"):
        e = np.exp(_masked_shift(x.values, full_mask, axis))
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(grad: Array) -> tuple[Array | None, ...]:
        return (out * (grad - (grad * out).sum(axis=axis, keepdims=True)),)

    return Tensor._from_op(out, (x,), backward, "softmax")


def log_softmax(x: Tensor, axis: int = -1, mask: BoolArray | None = None) -> Tensor:
    """Log of `softmax`; excluded entries hold 0 and pass no gradient."""
    full_mask = (
        np.ones(x.shape, dtype=bool) if mask is None else np.broadcast_to(mask, x.shape)
    )
    shifted = _masked_shift(x.values, full_mask, axis)
    with np.errstate(under="ignore"):
        lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = np.where(full_mask, shifted - lse, 0.0)
    probs = np.where(full_mask, np.exp(out), 0.0)

    def backward(grad: Array) -> tuple[Array | None, ...]:
        kept = np.where(full_mask, grad, 0.0)
        return (kept - probs * kept.sum(axis=axis, keepdims=True),)

    return Tensor._from_op(out, (x,), backward, "log_softmax")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    centered = x - mean(x, axis=-1, keepdims=True)
    variance = mean(centered * centered, axis=-1, keepdims=True)
    return centered / sqrt(variance + eps) * gamma + beta
