"""Central finite-difference verification of every differentiable op.

Each registered case builds a small randomized graph ending in a scalar and
is checked by perturbing every leaf entry by ``h`` in both directions. The
same registry drives the test suite and the ``gradcheck`` CLI subcommand.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

DEFAULT_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-5


def finite_difference(func, leaves, h: float = DEFAULT_STEP) -> list[np.ndarray]:
    """Central-difference gradient of ``func()`` w.r.t. every leaf entry."""
    grads = []
    for leaf in leaves:
        grad = np.zeros_like(leaf.values)
        flat_values = leaf.values.reshape(-1)
        flat_grad = grad.reshape(-1)
        for i in range(flat_values.size):
            original = flat_values[i]
            flat_values[i] = original + h
            upper = float(func().values)
            flat_values[i] = original - h
            lower = float(func().values)
            flat_values[i] = original
            flat_grad[i] = (upper - lower) / (2.0 * h)
        grads.append(grad)
    return grads


def analytic_gradients(func, leaves) -> list[np.ndarray]:
    for leaf in leaves:
        leaf.zero_grad()
    func().backward()
    return [
        leaf.grad if leaf.grad is not None else np.zeros_like(leaf.values)
        for leaf in leaves
    ]


def max_relative_error(analytic, numeric) -> float:
    worst = 0.0
    for a, n in zip(analytic, numeric):
        scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
        worst = max(worst, float(np.max(np.abs(a - n) / scale)))
    return worst


def check_case(builder, seed: int = 0, h: float = DEFAULT_STEP) -> float:
    """Max relative error between tape and finite-difference gradients."""
    leaves, func = builder(np.random.default_rng(seed))
    return max_relative_error(
        analytic_gradients(func, leaves), finite_difference(func, leaves, h=h)
    )


def _weighted_scalar(out: Tensor, rng) -> Tensor:
    """Contract an op output to a scalar with fixed random weights."""
    weights = Tensor(rng.normal(size=out.shape))
    return ad.total(ad.mul(out, weights))


def _leaf(rng, shape, low=-1.0, high=1.0):
    return Tensor(rng.uniform(low, high, size=shape), requires_grad=True)


def _case_add(rng):
    a, b = _leaf(rng, (3, 4)), _leaf(rng, (1, 4))
    return [a, b], lambda: _weighted_scalar(ad.add(a, b), np.random.default_rng(1))


def _case_sub(rng):
    a, b = _leaf(rng, (2, 5)), _leaf(rng, (2, 1))
    return [a, b], lambda: _weighted_scalar(ad.sub(a, b), np.random.default_rng(2))


def _case_mul(rng):
    a, b = _leaf(rng, (4, 3)), _leaf(rng, (4, 3))
    return [a, b], lambda: _weighted_scalar(ad.mul(a, b), np.random.default_rng(3))


def _case_div(rng):
    a = _leaf(rng, (3, 3))
    b = Tensor(rng.uniform(0.5, 1.5, size=(3, 3)), requires_grad=True)
    return [a, b], lambda: _weighted_scalar(ad.div(a, b), np.random.default_rng(4))


def _case_matmul(rng):
    a, b = _leaf(rng, (3, 4)), _leaf(rng, (4, 2))
    return [a, b], lambda: _weighted_scalar(ad.matmul(a, b), np.random.default_rng(5))


def _make_conv_case(batch, c_in, c_out, t_in, width, stride, padding):
    def build(rng):
        shape = (c_in, t_in) if batch is None else (batch, c_in, t_in)
        x = _leaf(rng, shape)
        kernel = _leaf(rng, (c_out, c_in, width))
        bias = _leaf(rng, (c_out,))
        return [x, kernel, bias], lambda: _weighted_scalar(
            ad.conv1d(x, kernel, bias, stride=stride, padding=padding),
            np.random.default_rng(6),
        )

    return build


def _case_leaky_relu(rng):
    x = Tensor(rng.uniform(0.1, 1.0, size=(3, 5)) * rng.choice([-1, 1], size=(3, 5)),
               requires_grad=True)
    return [x], lambda: _weighted_scalar(ad.leaky_relu(x), np.random.default_rng(7))


def _case_sigmoid(rng):
    x = _leaf(rng, (4, 4), -3, 3)
    return [x], lambda: _weighted_scalar(ad.sigmoid(x), np.random.default_rng(8))


def _case_log(rng):
    x = Tensor(rng.uniform(0.2, 2.0, size=(5,)), requires_grad=True)
    return [x], lambda: _weighted_scalar(ad.log(x), np.random.default_rng(9))


def _case_sqrt(rng):
    x = Tensor(rng.uniform(0.2, 2.0, size=(5,)), requires_grad=True)
    return [x], lambda: _weighted_scalar(ad.sqrt(x), np.random.default_rng(10))


def _case_absolute(rng):
    x = Tensor(rng.uniform(0.1, 1.0, size=(6,)) * rng.choice([-1, 1], size=6),
               requires_grad=True)
    return [x], lambda: _weighted_scalar(ad.absolute(x), np.random.default_rng(11))


def _case_clip(rng):
    x = Tensor(rng.uniform(0.3, 0.7, size=(6,)), requires_grad=True)
    return [x], lambda: _weighted_scalar(ad.clip(x, 0.1, 0.9), np.random.default_rng(12))


def _case_mean(rng):
    x = _leaf(rng, (3, 4, 2))
    return [x], lambda: _weighted_scalar(ad.mean(x, axis=1), np.random.default_rng(13))


def _case_total(rng):
    x = _leaf(rng, (2, 6))
    return [x], lambda: _weighted_scalar(ad.total(x, axis=0), np.random.default_rng(14))


def _case_reshape_transpose(rng):
    x = _leaf(rng, (2, 3, 4))
    return [x], lambda: _weighted_scalar(
        ad.reshape(ad.transpose(x, (2, 0, 1)), (4, 6)), np.random.default_rng(15)
    )


def _case_concat(rng):
    a, b = _leaf(rng, (2, 3)), _leaf(rng, (2, 2))
    return [a, b], lambda: _weighted_scalar(ad.concat([a, b], axis=1), np.random.default_rng(16))


def _case_narrow(rng):
    x = _leaf(rng, (3, 8))
    return [x], lambda: _weighted_scalar(ad.narrow(x, 1, 2, 4), np.random.default_rng(17))


def _case_take(rng):
    x = _leaf(rng, (5, 3))
    idx = np.array([0, 2, 2, 4])
    return [x], lambda: _weighted_scalar(ad.take(x, idx, axis=0), np.random.default_rng(18))


def _case_nearest_upsample(rng):
    x = _leaf(rng, (2, 3, 4))
    return [x], lambda: _weighted_scalar(ad.nearest_upsample(x, 2), np.random.default_rng(19))


def _case_linear(rng):
    x, w, b = _leaf(rng, (4, 3)), _leaf(rng, (2, 3)), _leaf(rng, (2,))
    return [x, w, b], lambda: _weighted_scalar(ad.linear(x, w, b), np.random.default_rng(20))


def _case_instance_norm(rng):
    x = _leaf(rng, (2, 3, 6))
    gain = Tensor(rng.uniform(0.5, 1.5, size=(3,)), requires_grad=True)
    bias = _leaf(rng, (3,))
    return [x, gain, bias], lambda: _weighted_scalar(
        ad.instance_norm(x, gain, bias), np.random.default_rng(21)
    )


OP_CASES = OrderedDict(
    [
        ("add", _case_add),
        ("sub", _case_sub),
        ("mul", _case_mul),
        ("div", _case_div),
        ("matmul", _case_matmul),
        ("conv1d", _make_conv_case(None, 2, 3, 7, 3, 1, 1)),
        ("conv1d_strided", _make_conv_case(2, 3, 4, 10, 4, 2, 1)),
        ("conv1d_pointwise", _make_conv_case(2, 4, 2, 6, 1, 1, 0)),
        ("leaky_relu", _case_leaky_relu),
        ("sigmoid", _case_sigmoid),
        ("log", _case_log),
        ("sqrt", _case_sqrt),
        ("absolute", _case_absolute),
        ("clip", _case_clip),
        ("mean", _case_mean),
        ("sum", _case_total),
        ("reshape_transpose", _case_reshape_transpose),
        ("concat", _case_concat),
        ("narrow", _case_narrow),
        ("take", _case_take),
        ("nearest_upsample", _case_nearest_upsample),
        ("linear", _case_linear),
        ("instance_norm", _case_instance_norm),
    ]
)


@dataclass
class GradCheckResult:
    name: str
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def run_op_checks(seed: int = 0, tolerance: float = DEFAULT_TOLERANCE) -> list[GradCheckResult]:
    return [
        GradCheckResult(name, check_case(builder, seed=seed), tolerance)
        for name, builder in OP_CASES.items()
    ]
