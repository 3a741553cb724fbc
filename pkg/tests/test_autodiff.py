"""
Gradient checks for every tape primitive against central finite differences.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add parent directory to path
sys.path.append(str(Path(__file__).parent.parent))

from core import autodiff as ad
from core.autodiff import Tape, Tensor, backward, grad_check
from utils.errors import NumericalError, ShapeError

CASES = 100
TOL = 1e-4


def _weights(rng, shape):
    return ad.constant(rng.standard_normal(shape))


def _scalar(t, w):
    """Contract an output with fixed random weights so every entry matters."""
    return ad.sum_(ad.mul(t, w))


PRIMITIVES = {
    'add': lambda x, rng: _scalar(ad.add(x, _weights(rng, (3, 4))), _weights(rng, (3, 4))),
    'add_broadcast': lambda x, rng: _scalar(ad.add(_weights(rng, (5, 3, 4)), x), _weights(rng, (5, 3, 4))),
    'sub': lambda x, rng: _scalar(ad.sub(_weights(rng, (3, 4)), x), _weights(rng, (3, 4))),
    'mul': lambda x, rng: _scalar(ad.mul(x, x), _weights(rng, (3, 4))),
    'mul_broadcast': lambda x, rng: _scalar(ad.mul(_weights(rng, (2, 3, 4)), x), _weights(rng, (2, 3, 4))),
    'scale': lambda x, rng: _scalar(ad.scale(x, -2.5), _weights(rng, (3, 4))),
    'matmul': lambda x, rng: _scalar(ad.matmul(x, _weights(rng, (4, 2))), _weights(rng, (3, 2))),
    'matmul_t': lambda x, rng: _scalar(ad.matmul(_weights(rng, (5, 4)), x, transpose_b=True), _weights(rng, (5, 3))),
    'tanh': lambda x, rng: _scalar(ad.tanh(x), _weights(rng, (3, 4))),
    'sigmoid': lambda x, rng: _scalar(ad.sigmoid(x), _weights(rng, (3, 4))),
    'softplus': lambda x, rng: _scalar(ad.softplus(x), _weights(rng, (3, 4))),
    'softmax': lambda x, rng: _scalar(ad.softmax(x), _weights(rng, (3, 4))),
    'square': lambda x, rng: _scalar(ad.square(x), _weights(rng, (3, 4))),
    'sum_axis': lambda x, rng: _scalar(ad.sum_(x, axis=0), _weights(rng, (4,))),
    'mean_axis': lambda x, rng: _scalar(ad.mean(x, axis=1), _weights(rng, (3,))),
    'mean_all': lambda x, rng: ad.mean(ad.square(x)),
    'concat': lambda x, rng: _scalar(ad.concat([x, _weights(rng, (3, 2)), x], axis=1), _weights(rng, (3, 10))),
    'slice': lambda x, rng: _scalar(x[1:, :3], _weights(rng, (2, 3))),
    'reshape': lambda x, rng: _scalar(ad.reshape(x, (2, 6)), _weights(rng, (2, 6))),
}


@pytest.mark.parametrize('name', sorted(PRIMITIVES))
def test_primitive_gradients(name):
    f = PRIMITIVES[name]
    rng = np.random.default_rng(sorted(PRIMITIVES).index(name))
    worst = 0.0
    for case in range(CASES):
        x = rng.standard_normal((3, 4))
        weights_seed = int(rng.integers(2 ** 32))
        # fresh rng per call so the constant weights are identical across the finite-difference evaluations
        worst = max(worst, grad_check(lambda t: f(t, np.random.default_rng(weights_seed)), x))
    assert worst < TOL, f"{name}: relative error {worst}"


@pytest.mark.parametrize('name, op', [('log', ad.log), ('sqrt', ad.sqrt)])
def test_positive_domain_gradients(name, op):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(CASES):
        x = rng.uniform(0.5, 3.0, size=(3, 4))
        w = rng.standard_normal((3, 4))
        worst = max(worst, grad_check(lambda t: ad.sum_(ad.mul(op(t), ad.constant(w))), x))
    assert worst < TOL, f"{name}: relative error {worst}"


def test_fan_out_accumulates():
    tape = Tape()
    x = tape.leaf(np.array([2.0, -1.0]))
    y = ad.sum_(ad.add(ad.mul(x, x), ad.scale(x, 3.0)))
    grads = backward(tape, y)
    np.testing.assert_allclose(grads[x], 2 * x.data + 3.0)


def test_constants_record_nothing():
    tape = Tape()
    a = ad.constant(np.ones((2, 2)))
    out = ad.tanh(ad.add(a, a))
    assert out.tape is None
    assert len(tape) == 0


def test_unused_leaf_gets_zero_gradient():
    tape = Tape()
    x = tape.leaf(np.ones(3))
    unused = tape.leaf(np.ones((2, 2)))
    grads = backward(tape, ad.sum_(x))
    np.testing.assert_array_equal(grads[unused], np.zeros((2, 2)))


def test_backward_needs_scalar():
    tape = Tape()
    x = tape.leaf(np.ones(3))
    with pytest.raises(ShapeError):
        backward(tape, ad.tanh(x))


def test_broadcast_mismatch_is_rejected():
    with pytest.raises(ShapeError):
        ad.add(Tensor(np.ones((3, 4))), Tensor(np.ones(3)))
    with pytest.raises(ShapeError):
        ad.matmul(Tensor(np.ones((3, 4))), Tensor(np.ones((3, 4))))


def test_log_and_sqrt_domain():
    with pytest.raises(NumericalError):
        ad.log(Tensor(np.array([1.0, 0.0])))
    with pytest.raises(NumericalError):
        ad.sqrt(Tensor(np.array([-1.0])))


def test_softmax_rows_sum_to_one():
    y = ad.softmax(Tensor(np.array([[1000.0, 1000.0], [0.0, -5.0]])))
    np.testing.assert_allclose(y.data.sum(axis=1), [1.0, 1.0])
    np.testing.assert_allclose(y.data[0], [0.5, 0.5])


def test_mixed_tapes_raise():
    a, b = Tape().leaf(np.ones(2)), Tape().leaf(np.ones(2))
    with pytest.raises(ValueError):
        ad.add(a, b)
