"""
Network building blocks

Dense layers, the LSTM cell and stacked LSTM layers, dropout, the two losses
and the Adam optimizer. Layers are lightweight specs: parameters live in a
flat name -> array dict owned by the model, and forward passes receive the
matching name -> Tensor binding (tape leaves while training, constants at
inference).
"""

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from core import autodiff as ad
from core.autodiff import Tensor
from utils.errors import NumericalError, ShapeError

ACTIVATIONS = {
    'tanh': ad.tanh,
    'sigmoid': ad.sigmoid,
    'softmax': ad.softmax,
    'softplus': ad.softplus,
    'identity': lambda x: x,
}

Params = Dict[str, np.ndarray]
Binding = Mapping[str, Tensor]


def uniform_init(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    """uniform(-s, s) with s = 1/sqrt(fan_in)."""
    s = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-s, s, size=shape)


@dataclass(frozen=True)
class DenseLayer:
    """
    Affine map followed by an activation.

    Weights are stored out x in and applied as x @ W.T + b.
    """

    name: str
    in_dim: int
    out_dim: int
    activation: str = 'identity'

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"Unknown activation '{self.activation}'")

    @property
    def weight(self) -> str:
        return f'{self.name}.W'

    @property
    def bias(self) -> str:
        return f'{self.name}.b'

    def init_params(self, rng: np.random.Generator) -> Params:
        return {
            self.weight: uniform_init(rng, (self.out_dim, self.in_dim), self.in_dim),
            self.bias: np.zeros(self.out_dim),
        }

    def pre_activation(self, p: Binding, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise ShapeError(f"{self.name}: expected {self.in_dim} inputs, got {x.shape[-1]}")
        return ad.add(ad.matmul(x, p[self.weight], transpose_b=True), p[self.bias])

    def __call__(self, p: Binding, x: Tensor) -> Tensor:
        return ACTIVATIONS[self.activation](self.pre_activation(p, x))


def mlp_layers(prefix: str, in_dim: int, hidden: Sequence[int], out_dim: int,
               hidden_activation: str = 'tanh', out_activation: str = 'identity') -> List[DenseLayer]:
    layers, width = [], in_dim
    for i, h in enumerate(hidden):
        layers.append(DenseLayer(f'{prefix}.{i}', width, h, hidden_activation))
        width = h
    layers.append(DenseLayer(f'{prefix}.out', width, out_dim, out_activation))
    return layers


def init_layers(layers: Sequence, rng: np.random.Generator) -> Params:
    params: Params = {}
    for layer in layers:
        params.update(layer.init_params(rng))
    return params


def forward_layers(layers: Sequence[DenseLayer], p: Binding, x: Tensor) -> Tensor:
    """Apply dense layers in order."""
    for layer in layers:
        x = layer(p, x)
    return x


@dataclass(frozen=True)
class LSTMCell:
    """
    Standard LSTM cell without peepholes.

    The four blocks (forget, input, output, candidate) are stacked in that
    order in one (4H x (in + H)) weight matrix acting on [x_t ; h_prev].
    """

    name: str
    input_dim: int
    hidden_dim: int
    forget_bias: float = 1.0

    @property
    def weight(self) -> str:
        return f'{self.name}.W'

    @property
    def bias(self) -> str:
        return f'{self.name}.b'

    def init_params(self, rng: np.random.Generator) -> Params:
        fan_in = self.input_dim + self.hidden_dim
        b = np.zeros(4 * self.hidden_dim)
        b[:self.hidden_dim] = self.forget_bias
        return {
            self.weight: uniform_init(rng, (4 * self.hidden_dim, fan_in), fan_in),
            self.bias: b,
        }


def lstm_cell_step(cell: LSTMCell, p: Binding, x_t: Tensor, h_prev: Tensor,
                   c_prev: Tensor) -> Tuple[Tensor, Tensor]:
    """
    One recurrence step: h_t, c_t = f(h_prev, c_prev, x_t).

    Accepts single vectors or (batch, dim) matrices.
    """
    x_t, h_prev, c_prev = ad._lift(x_t), ad._lift(h_prev), ad._lift(c_prev)
    vector = x_t.ndim == 1
    if vector:
        x_t = ad.reshape(x_t, (1, -1))
        h_prev = ad.reshape(h_prev, (1, -1))
        c_prev = ad.reshape(c_prev, (1, -1))
    if x_t.shape[-1] != cell.input_dim or h_prev.shape[-1] != cell.hidden_dim \
            or c_prev.shape[-1] != cell.hidden_dim:
        raise ShapeError(
            f"{cell.name}: got x {x_t.shape}, h {h_prev.shape}, c {c_prev.shape} "
            f"for input {cell.input_dim}, hidden {cell.hidden_dim}"
        )

    H = cell.hidden_dim
    z = ad.concat([x_t, h_prev], axis=-1)
    gates = ad.add(ad.matmul(z, p[cell.weight], transpose_b=True), p[cell.bias])
    f = ad.sigmoid(gates[:, 0:H])
    i = ad.sigmoid(gates[:, H:2 * H])
    o = ad.sigmoid(gates[:, 2 * H:3 * H])
    g = ad.tanh(gates[:, 3 * H:4 * H])
    c = ad.add(ad.mul(f, c_prev), ad.mul(i, g))
    h = ad.mul(o, ad.tanh(c))

    if vector:
        return ad.reshape(h, (H,)), ad.reshape(c, (H,))
    return h, c


def lstm_forward(stack: Sequence[LSTMCell], p: Binding, seq: Tensor,
                 return_sequences: bool = False) -> Tensor:
    """
    Run stacked LSTM layers over a sequence with zero initial state.

    Args:
        stack: Cells, first layer first
        p: Parameter binding
        seq: (batch, T, F) or (T, F)
        return_sequences: Return every step's top-layer hidden state instead of the last one

    Returns:
        (batch, H) / (batch, T, H), without the batch axis for 2-D input
    """
    seq = ad._lift(seq)
    unbatched = seq.ndim == 2
    if unbatched:
        seq = ad.reshape(seq, (1,) + seq.shape)
    if seq.ndim != 3:
        raise ShapeError(f"lstm_forward expects (batch, T, F), got {seq.shape}")
    batch, T, _ = seq.shape
    if T < 1:
        raise ShapeError("lstm_forward on an empty sequence")

    inputs = [seq[:, t, :] for t in range(T)]
    for cell in stack:
        h = ad.constant(np.zeros((batch, cell.hidden_dim)))
        c = ad.constant(np.zeros((batch, cell.hidden_dim)))
        outputs = []
        for x_t in inputs:
            h, c = lstm_cell_step(cell, p, x_t, h, c)
            outputs.append(h)
        inputs = outputs

    if return_sequences:
        top = stack[-1].hidden_dim
        out = ad.concat([ad.reshape(h, (batch, 1, top)) for h in inputs], axis=1)
        return ad.reshape(out, (T, top)) if unbatched else out
    last = inputs[-1]
    return ad.reshape(last, (last.shape[-1],)) if unbatched else last


def dropout_mask(shape: Tuple[int, ...], rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout mask: 0 with probability rate, 1/(1-rate) otherwise."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return np.ones(shape)
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def dropout(x: Tensor, rate: float, training: bool, rng: Optional[np.random.Generator] = None) -> Tensor:
    """
    Inverted dropout; the identity in eval mode or at rate 0.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    return ad.mul(x, ad.constant(dropout_mask(x.shape, rate, rng)))


def mse_loss(pred: Tensor, target) -> Tensor:
    """Mean of squared differences over all entries."""
    target = ad._lift(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: prediction {pred.shape} vs target {target.shape}")
    return ad.mean(ad.square(ad.sub(pred, target)))


def cross_entropy(probs: Tensor, labels) -> Tensor:
    """
    Mean over samples of -log p[true class].

    Args:
        probs: (n, k) rows summing to 1
        labels: (n, k) one-hot
    """
    labels = ad._lift(labels)
    if probs.shape != labels.shape or probs.ndim != 2:
        raise ShapeError(f"cross_entropy: probs {probs.shape} vs labels {labels.shape}")
    if np.any(np.abs(probs.data.sum(axis=1) - 1.0) > 1e-6) or np.any(probs.data < 0):
        raise ValueError("cross_entropy: rows of probs are not probability vectors")
    # zero-label entries read as 1 so the log never sees an off-class 0
    mask = (labels.data > 0).astype(np.float64)
    picked = ad.add(ad.mul(probs, ad.constant(mask)), ad.constant(1.0 - mask))
    per_sample = ad.sum_(ad.mul(labels, ad.log(picked)), axis=1)
    return ad.scale(ad.mean(per_sample), -1.0)


@dataclass
class AdamState:
    """Adam moments, step counter and hyperparameters."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")


def adam_step(params: Params, grads: Mapping[str, np.ndarray], state: AdamState) -> Params:
    """
    Bias-corrected Adam update, applied to params in place.

    Non-finite gradients raise NumericalError and leave params and state untouched.
    """
    for name, value in params.items():
        if name not in grads:
            raise ShapeError(f"adam_step: no gradient for '{name}'")
        if grads[name].shape != value.shape:
            raise ShapeError(f"adam_step: gradient {grads[name].shape} vs param {value.shape} for '{name}'")
        if not np.all(np.isfinite(grads[name])):
            raise NumericalError(f"adam_step: non-finite gradient for '{name}'")

    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t
    for name, value in params.items():
        g = grads[name]
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(value)
            v = np.zeros_like(value)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name], state.v[name] = m, v
        value -= state.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
    return params
