"""
Reverse-mode automatic differentiation over dense float64 tensors.

A Tape records every primitive applied to tensors that live on it. Tensors
created without a tape are constants: operations on them are evaluated
eagerly and nothing is recorded, which is how inference runs.

Broadcasting is limited to leading axes: the smaller operand's shape must
equal the trailing dimensions of the larger one (or be a scalar).
"""

from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from utils.errors import NumericalError, ShapeError

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class Tensor:
    """
    n-dimensional float64 array with an optional owning tape.

    Tensors hash by identity so they can key gradient maps.
    """

    __slots__ = ('data', 'tape', 'name', '__weakref__')

    def __init__(self, data: ArrayLike, tape: Optional['Tape'] = None, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64)
        self.tape = tape
        self.name = name

    @classmethod
    def _wrap(cls, data: np.ndarray, tape: Optional['Tape']) -> 'Tensor':
        out = cls.__new__(cls)
        out.data = data
        out.tape = tape
        out.name = None
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def __repr__(self) -> str:
        where = 'taped' if self.tape is not None else 'const'
        return f"Tensor(shape={self.shape}, {where})"

    # Operator sugar, all routed through the primitives below
    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __neg__(self): return scale(self, -1.0)
    def __matmul__(self, other): return matmul(self, other)
    def __getitem__(self, index): return slice_(self, index)


@dataclass
class Node:
    """One recorded primitive application."""

    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


class Tape:
    """
    Append-only record of primitive applications.

    Nodes are appended as they are evaluated, so the list is already in
    topological order. A tape has a single writer.
    """

    def __init__(self):
        self.nodes: List[Node] = []

    def leaf(self, data: ArrayLike, name: Optional[str] = None) -> Tensor:
        """Create a differentiable input on this tape."""
        return Tensor(data, tape=self, name=name)

    def leaves(self, arrays: Mapping[str, np.ndarray]) -> Dict[str, Tensor]:
        """Create one leaf per named array (model parameters)."""
        return {name: self.leaf(value, name=name) for name, value in arrays.items()}

    def __len__(self) -> int:
        return len(self.nodes)


def constant(data: ArrayLike) -> Tensor:
    """Tensor that never receives gradients."""
    return Tensor(data)


def constants(arrays: Mapping[str, np.ndarray]) -> Dict[str, Tensor]:
    return {name: Tensor._wrap(np.asarray(value, dtype=np.float64), None) for name, value in arrays.items()}


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _tape_of(inputs: Iterable[Tensor]) -> Optional[Tape]:
    tape = None
    for t in inputs:
        if t.tape is not None:
            if tape is not None and t.tape is not tape:
                raise ValueError("Operands are recorded on different tapes")
            tape = t.tape
    return tape


def _record(op: str, inputs: Tuple[Tensor, ...], out: np.ndarray, backward: BackwardFn) -> Tensor:
    tape = _tape_of(inputs)
    result = Tensor._wrap(out, tape)
    if tape is not None:
        tape.nodes.append(Node(op, inputs, result, backward))
    return result


def _check_broadcast(a: Tuple[int, ...], b: Tuple[int, ...], op: str) -> None:
    if len(a) == 0 or len(b) == 0:
        return
    long_, short = (a, b) if len(a) >= len(b) else (b, a)
    if long_[len(long_) - len(short):] != short:
        raise ShapeError(f"{op}: shapes {a} and {b} are not leading-axis broadcastable")


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if len(shape) == 0:
        return np.asarray(grad.sum())
    lead = grad.ndim - len(shape)
    return grad.sum(axis=tuple(range(lead)))


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a.shape, b.shape, 'add')
    sa, sb = a.shape, b.shape
    return _record('add', (a, b), a.data + b.data,
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a.shape, b.shape, 'sub')
    sa, sb = a.shape, b.shape
    return _record('sub', (a, b), a.data - b.data,
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a.shape, b.shape, 'mul')
    ad, bd = a.data, b.data
    return _record('mul', (a, b), ad * bd,
                   lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def scale(a, factor: float) -> Tensor:
    """Multiply by a python scalar."""
    a = _lift(a)
    factor = float(factor)
    return _record('scale', (a,), a.data * factor, lambda g: (g * factor,))


def matmul(a, b, transpose_b: bool = False) -> Tensor:
    """
    2-D matrix product a @ b (or a @ b.T when transpose_b is set).
    """
    a, b = _lift(a), _lift(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    ad, bd = a.data, b.data
    if transpose_b:
        if ad.shape[1] != bd.shape[1]:
            raise ShapeError(f"matmul: {a.shape} @ {b.shape}^T mismatch")
        return _record('matmul_t', (a, b), ad @ bd.T,
                       lambda g: (g @ bd, g.T @ ad))
    if ad.shape[1] != bd.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape} mismatch")
    return _record('matmul', (a, b), ad @ bd,
                   lambda g: (g @ bd.T, ad.T @ g))


def tanh(a) -> Tensor:
    a = _lift(a)
    y = np.tanh(a.data)
    return _record('tanh', (a,), y, lambda g: (g * (1.0 - y * y),))


def sigmoid(a) -> Tensor:
    a = _lift(a)
    y = expit(a.data)
    return _record('sigmoid', (a,), y, lambda g: (g * y * (1.0 - y),))


def softplus(a) -> Tensor:
    """log(1 + exp(a)), always non-negative."""
    a = _lift(a)
    x = a.data
    return _record('softplus', (a,), np.logaddexp(0.0, x), lambda g: (g * expit(x),))


def softmax(a) -> Tensor:
    """Softmax over the last axis."""
    a = _lift(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _record('softmax', (a,), y, backward)


def log(a) -> Tensor:
    a = _lift(a)
    if np.any(a.data <= 0):
        raise NumericalError("log of a non-positive value")
    x = a.data
    return _record('log', (a,), np.log(x), lambda g: (g / x,))


def square(a) -> Tensor:
    a = _lift(a)
    x = a.data
    return _record('square', (a,), x * x, lambda g: (2.0 * x * g,))


def sqrt(a) -> Tensor:
    a = _lift(a)
    if np.any(a.data <= 0):
        raise NumericalError("sqrt of a non-positive value")
    y = np.sqrt(a.data)
    return _record('sqrt', (a,), y, lambda g: (g / (2.0 * y),))


def sum_(a, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    a = _lift(a)
    shape = a.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _record('sum', (a,), np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), backward)


def mean(a, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    a = _lift(a)
    shape = a.shape
    count = a.data.size if axis is None else shape[axis]

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape) / count,)

    return _record('mean', (a,), np.asarray(a.data.mean(axis=axis, keepdims=keepdims)), backward)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    parts = tuple(_lift(t) for t in tensors)
    if not parts:
        raise ShapeError("concat of nothing")
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as e:
        raise ShapeError(f"concat: {e}") from e
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _record('concat', parts, out, backward)


def slice_(a, index) -> Tensor:
    """Basic (non-fancy) indexing."""
    a = _lift(a)
    shape = a.shape

    def backward(g):
        full = np.zeros(shape)
        full[index] = g
        return (full,)

    return _record('slice', (a,), np.array(a.data[index]), backward)


def reshape(a, shape: Tuple[int, ...]) -> Tensor:
    a = _lift(a)
    original = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"reshape: {e}") from e
    return _record('reshape', (a,), out, lambda g: (g.reshape(original),))


# ---------------------------------------------------------------------------
# Backward pass and gradient checks
# ---------------------------------------------------------------------------

class GradientMap:
    """
    Gradients keyed by tensor identity.

    Tensors on the tape that the output does not depend on get zeros.
    """

    def __init__(self, grads: Dict[int, np.ndarray]):
        self._grads = grads

    def __getitem__(self, tensor: Tensor) -> np.ndarray:
        grad = self._grads.get(id(tensor))
        if grad is None:
            return np.zeros_like(tensor.data)
        return grad

    def __contains__(self, tensor: Tensor) -> bool:
        return id(tensor) in self._grads

    def for_params(self, params: Mapping[str, Tensor]) -> Dict[str, np.ndarray]:
        return {name: self[t] for name, t in params.items()}


def backward(tape: Tape, output: Tensor) -> GradientMap:
    """
    Propagate d(output)/d(node) through the tape, accumulating over fan-out.

    Args:
        tape: Tape the output was recorded on
        output: Scalar (single-element) tensor

    Returns:
        GradientMap over every tensor reached
    """
    if output.data.size != 1:
        raise ShapeError(f"backward needs a scalar output, got shape {output.shape}")
    grads: Dict[int, np.ndarray] = {id(output): np.ones_like(output.data)}
    for node in reversed(tape.nodes):
        g = grads.get(id(node.output))
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.backward(g)):
            if gi is None or inp.tape is not tape:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
    return GradientMap(grads)


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    if analytic.size == 0:
        return 0.0
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom))


def grad_check(f: Callable[[Tensor], Tensor], x: ArrayLike, eps: float = 1e-5) -> float:
    """
    Compare the tape gradient of f at x with central finite differences.

    Returns:
        max |analytic - numeric| / max(1, |analytic|, |numeric|)
    """
    x = np.array(x, dtype=np.float64)
    tape = Tape()
    leaf = tape.leaf(x)
    out = f(leaf)
    if out.data.size != 1:
        raise ShapeError(f"grad_check needs a scalar function, got shape {out.shape}")
    analytic = backward(tape, out)[leaf]

    numeric = np.zeros_like(x)
    flat = numeric.reshape(-1)
    for i in range(x.size):
        plus, minus = x.copy(), x.copy()
        plus.reshape(-1)[i] += eps
        minus.reshape(-1)[i] -= eps
        flat[i] = (f(Tensor(plus)).item() - f(Tensor(minus)).item()) / (2.0 * eps)
    return _relative_error(analytic, numeric)


def grad_check_params(f: Callable[[Dict[str, Tensor]], Tensor],
                      params: Mapping[str, np.ndarray],
                      eps: float = 1e-5) -> float:
    """
    grad_check over a dict of named arrays (model parameters).

    f must be deterministic: any randomness inside it has to be re-seeded on
    every call.
    """
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    tape = Tape()
    leaves = tape.leaves(params)
    out = f(leaves)
    if out.data.size != 1:
        raise ShapeError(f"grad_check needs a scalar function, got shape {out.shape}")
    grads = backward(tape, out)

    worst = 0.0
    for name, value in params.items():
        numeric = np.zeros_like(value)
        for i in range(value.size):
            shifted = {}
            for sign in (1.0, -1.0):
                bumped = value.copy()
                bumped.reshape(-1)[i] += sign * eps
                trial = constants({**params, name: bumped})
                shifted[sign] = f(trial).item()
            numeric.reshape(-1)[i] = (shifted[1.0] - shifted[-1.0]) / (2.0 * eps)
        worst = max(worst, _relative_error(grads[leaves[name]], numeric))
    return worst
