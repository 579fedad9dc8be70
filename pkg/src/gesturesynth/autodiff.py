"""Reverse-mode automatic differentiation over float64 numpy arrays.

A :class:`Tensor` wraps an ndarray plus an optional gradient; every
operation records its inputs and a backward closure on the result, so
calling :meth:`Tensor.backward` on a scalar loss walks the tape in reverse
topological order and accumulates gradients into the leaves.

Only what the networks need is implemented: elementwise arithmetic with
broadcasting, 1-D cross-correlation, the activations, upsampling, slicing,
gathering, reductions, and a few composites (instance norm, linear). All
math is float64; graphs whose inputs do not require gradients carry no
tape and cost nothing extra.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError, ShapeError


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """Array value on the tape. Leaves with ``requires_grad`` collect grads."""

    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, values, requires_grad=False, _parents=(), _backward=None):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = tuple(_parents) if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    def detach(self) -> "Tensor":
        """A tape-free view of the same values."""
        return Tensor(self.values)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        self.grad += grad

    def backward(self, seed=None) -> None:
        """Backpropagate from this node; scalar nodes default to seed 1."""
        if not self.requires_grad:
            raise InvalidInputError("backward() on a tensor with no gradient path")
        if seed is None:
            if self.values.size != 1:
                raise InvalidInputError("backward() without seed requires a scalar")
            seed = np.ones_like(self.values)
        order = []
        visited = set()
        stack = [(self, False)]
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
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        self._accumulate(np.asarray(seed, dtype=np.float64))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar -----------------------------------------------------

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, _lift(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __neg__(self):
        return mul(self, Tensor(-1.0))


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _binary(a: Tensor, b: Tensor, values, da, db) -> Tensor:
    def backward(grad):
        if a.requires_grad:
            a._accumulate(_unbroadcast(da(grad), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(db(grad), b.shape))

    return Tensor(values, _parents=(a, b), _backward=backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    return _binary(a, b, a.values + b.values, lambda g: g, lambda g: g)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _binary(a, b, a.values - b.values, lambda g: g, lambda g: -g)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return _binary(a, b, a.values * b.values, lambda g: g * b.values, lambda g: g * a.values)


def div(a: Tensor, b: Tensor) -> Tensor:
    return _binary(
        a,
        b,
        a.values / b.values,
        lambda g: g / b.values,
        lambda g: -g * a.values / (b.values * b.values),
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.values.ndim != 2 or b.values.ndim != 2:
        raise ShapeError("matmul expects 2-D operands")

    def backward(grad):
        if a.requires_grad:
            a._accumulate(grad @ b.values.T)
        if b.requires_grad:
            b._accumulate(a.values.T @ grad)

    return Tensor(a.values @ b.values, _parents=(a, b), _backward=backward)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    mask = np.where(x.values > 0, 1.0, slope)

    def backward(grad):
        x._accumulate(grad * mask)

    return Tensor(x.values * mask, _parents=(x,), _backward=backward)


def sigmoid(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = 1.0 / (1.0 + np.exp(-x.values))

    def backward(grad):
        x._accumulate(grad * out * (1.0 - out))

    return Tensor(out, _parents=(x,), _backward=backward)


def log(x: Tensor) -> Tensor:
    def backward(grad):
        x._accumulate(grad / x.values)

    return Tensor(np.log(x.values), _parents=(x,), _backward=backward)


def sqrt(x: Tensor) -> Tensor:
    """Elementwise square root; the subgradient at 0 is taken as 0."""
    root = np.sqrt(x.values)

    def backward(grad):
        safe = np.where(root > 0, root, 1.0)
        x._accumulate(np.where(root > 0, grad / (2.0 * safe), 0.0))

    return Tensor(root, _parents=(x,), _backward=backward)


def absolute(x: Tensor) -> Tensor:
    """Elementwise |x| with sign(0) = 0 as the subgradient."""

    def backward(grad):
        x._accumulate(grad * np.sign(x.values))

    return Tensor(np.abs(x.values), _parents=(x,), _backward=backward)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    inside = (x.values > lo) & (x.values < hi)

    def backward(grad):
        x._accumulate(grad * inside)

    return Tensor(np.clip(x.values, lo, hi), _parents=(x,), _backward=backward)


def _reduce(x: Tensor, values, axis, keepdims, count) -> Tensor:
    def backward(grad):
        g = grad
        if not keepdims and axis is not None:
            g = np.expand_dims(g, axis)
        x._accumulate(np.broadcast_to(g, x.shape) / count)

    return Tensor(values, _parents=(x,), _backward=backward)


def mean(x: Tensor, axis=None, keepdims=False) -> Tensor:
    count = x.size if axis is None else x.shape[axis]
    return _reduce(x, x.values.mean(axis=axis, keepdims=keepdims), axis, keepdims, count)


def total(x: Tensor, axis=None, keepdims=False) -> Tensor:
    return _reduce(x, x.values.sum(axis=axis, keepdims=keepdims), axis, keepdims, 1.0)


def reshape(x: Tensor, shape) -> Tensor:
    def backward(grad):
        x._accumulate(grad.reshape(x.shape))

    return Tensor(x.values.reshape(shape), _parents=(x,), _backward=backward)


def transpose(x: Tensor, axes) -> Tensor:
    inverse = np.argsort(axes)

    def backward(grad):
        x._accumulate(grad.transpose(inverse))

    return Tensor(x.values.transpose(axes), _parents=(x,), _backward=backward)


def concat(tensors, axis: int) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(grad):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                index = [slice(None)] * grad.ndim
                index[axis] = slice(start, stop)
                t._accumulate(grad[tuple(index)])

    values = np.concatenate([t.values for t in tensors], axis=axis)
    return Tensor(values, _parents=tuple(tensors), _backward=backward)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    index = [slice(None)] * x.values.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)

    def backward(grad):
        buf = np.zeros_like(x.values)
        buf[index] = grad
        x._accumulate(buf)

    return Tensor(x.values[index], _parents=(x,), _backward=backward)


def take(x: Tensor, indices, axis: int) -> Tensor:
    indices = np.asarray(indices)

    def backward(grad):
        buf = np.zeros_like(x.values)
        np.add.at(buf, (slice(None),) * axis + (indices,), grad)
        x._accumulate(buf)

    return Tensor(np.take(x.values, indices, axis=axis), _parents=(x,), _backward=backward)


def nearest_upsample(x: Tensor, factor: int) -> Tensor:
    """Repeat each step along the last axis ``factor`` times."""
    if factor < 1:
        raise InvalidInputError(f"upsample factor must be >= 1, got {factor}")

    def backward(grad):
        x._accumulate(grad.reshape(x.shape + (factor,)).sum(axis=-1))

    return Tensor(np.repeat(x.values, factor, axis=-1), _parents=(x,), _backward=backward)


def conv1d(x: Tensor, kernel: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """1-D cross-correlation with zero padding and per-channel bias.

    ``x`` is (C_in, T) or batched (B, C_in, T); the kernel is
    (C_out, C_in, W). Output length is floor((T + 2p - W)/stride) + 1.
    """
    if stride < 1 or padding < 0:
        raise InvalidInputError(f"bad stride/padding: {stride}/{padding}")
    squeeze = x.values.ndim == 2
    xv = x.values[None] if squeeze else x.values
    if xv.ndim != 3 or kernel.values.ndim != 3:
        raise ShapeError("conv1d expects (B, C_in, T) input and (C_out, C_in, W) kernel")
    n_batch, c_in, t_in = xv.shape
    c_out, c_in_k, width = kernel.values.shape
    if c_in != c_in_k:
        raise ShapeError(f"conv1d channel mismatch: input {c_in}, kernel {c_in_k}")
    if bias.values.shape != (c_out,):
        raise ShapeError(f"conv1d bias must have shape ({c_out},), got {bias.values.shape}")
    t_out = (t_in + 2 * padding - width) // stride + 1
    if t_out < 1:
        raise ShapeError(f"conv1d output length {t_out} < 1")

    padded = np.zeros((n_batch, c_in, t_in + 2 * padding))
    padded[:, :, padding : padding + t_in] = xv
    s0, s1, s2 = padded.strides
    patches = np.lib.stride_tricks.as_strided(
        padded, (n_batch, c_in, width, t_out), (s0, s1, s2, s2 * stride)
    )
    cols = np.ascontiguousarray(patches.transpose(1, 2, 0, 3)).reshape(
        c_in * width, n_batch * t_out
    )
    flat_kernel = kernel.values.reshape(c_out, c_in * width)
    out = (flat_kernel @ cols).reshape(c_out, n_batch, t_out).transpose(1, 0, 2)
    out = out + bias.values[None, :, None]
    if squeeze:
        out = out[0]

    def backward(grad):
        g = grad[None] if squeeze else grad
        gmat = np.ascontiguousarray(g.transpose(1, 0, 2)).reshape(c_out, n_batch * t_out)
        if bias.requires_grad:
            bias._accumulate(gmat.sum(axis=1))
        if kernel.requires_grad:
            kernel._accumulate((gmat @ cols.T).reshape(c_out, c_in, width))
        if x.requires_grad:
            gcols = flat_kernel.T @ gmat
            gpatches = gcols.reshape(c_in, width, n_batch, t_out).transpose(2, 0, 1, 3)
            gpadded = np.zeros_like(padded)
            for w in range(width):
                gpadded[:, :, w : w + stride * t_out : stride] += gpatches[:, :, w, :]
            gx = gpadded[:, :, padding : padding + t_in]
            x._accumulate(gx[0] if squeeze else gx)

    return Tensor(out, _parents=(x, kernel, bias), _backward=backward)


# -- composites -------------------------------------------------------------


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """x (B, C_in) times weight (C_out, C_in) transposed, plus bias."""
    return add(matmul(x, transpose(weight, (1, 0))), bias)


def instance_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-sample, per-channel normalization over the time axis.

    ``x`` is (B, C, T) or (C, T); gain/bias are (C,) and broadcast over time.
    """
    axis = x.values.ndim - 1
    centered = sub(x, mean(x, axis=axis, keepdims=True))
    variance = mean(mul(centered, centered), axis=axis, keepdims=True)
    normalized = div(centered, sqrt(add(variance, Tensor(eps))))
    shape = (1,) * (x.values.ndim - 2) + (gain.size, 1)
    return add(mul(normalized, reshape(gain, shape)), reshape(bias, shape))
