from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from autodiff.tensor import Tape, Tensor
from errors import NonFiniteError, ShapeMismatchError, TapeError


"""
Differentiable operations. Every op validates shapes, computes its output with numpy,
rejects non-finite results and, when any input requires grad, records a backward closure
on the tape. Broadcasting is limited to a one-element operand against a tensor; anything
else needs an explicit reshape.

Image tensors use the (N, C, H, W) layout; conv weights are (C_out, C_in, kh, kw) and
transposed-conv weights (C_in, C_out, kh, kw).
"""


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _select_tape(tracked: Sequence[Tensor]) -> Tape | None:
    """
    The active tape when there is one, else the single live tape the inputs were recorded on.
    Returns None (untracked result) when neither exists.
    """
    live = {}
    for tensor in tracked:
        if tensor.tape is not None and not tensor.tape.consumed:
            live[id(tensor.tape)] = tensor.tape
    active = Tape.active()
    if active is not None:
        if any(tape is not active for tape in live.values()):
            raise TapeError("inputs were recorded on a tape other than the active one")
        return active
    if len(live) > 1:
        raise TapeError("inputs were recorded on different tapes")
    return next(iter(live.values()), None)


def _result(op: str, data: np.ndarray, inputs: tuple[Tensor, ...],
            backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]) -> Tensor:
    data = np.asarray(data, dtype=np.float64)
    if not np.isfinite(data).all():
        raise NonFiniteError(f"{op}: non-finite output")
    tracked = [t for t in inputs if t.requires_grad]
    if not tracked:
        return Tensor(data)
    tape = _select_tape(tracked)
    if tape is None:
        return Tensor(data)
    out = Tensor(data, requires_grad=True)
    tape.record(op, inputs, out, backward)
    return out


def _pair(op: str, a, b) -> tuple[Tensor, Tensor, tuple[int, ...]]:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape == b.shape:
        return a, b, a.shape
    if a.size == 1:
        return a, b, b.shape
    if b.size == 1:
        return a, b, a.shape
    raise ShapeMismatchError(op, a.shape, b.shape)


def _operand(t: Tensor, shape: tuple[int, ...]) -> np.ndarray:
    return t.data if t.shape == shape else t.data.reshape(())


def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    return np.full(shape, grad.sum())


# ===== elementwise =====

def add(a, b) -> Tensor:
    a, b, shape = _pair("add", a, b)

    def backward(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return _result("add", _operand(a, shape) + _operand(b, shape), (a, b), backward)


def sub(a, b) -> Tensor:
    a, b, shape = _pair("sub", a, b)

    def backward(g):
        return _reduce_to(g, a.shape), _reduce_to(-g, b.shape)

    return _result("sub", _operand(a, shape) - _operand(b, shape), (a, b), backward)


def mul(a, b) -> Tensor:
    a, b, shape = _pair("mul", a, b)
    a_data, b_data = _operand(a, shape), _operand(b, shape)

    def backward(g):
        return _reduce_to(g * b_data, a.shape), _reduce_to(g * a_data, b.shape)

    return _result("mul", a_data * b_data, (a, b), backward)


def square(x) -> Tensor:
    x = as_tensor(x)
    return _result("square", x.data * x.data, (x,), lambda g: (2.0 * x.data * g,))


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    if (x.data <= 0.0).any():
        # the derivative is unbounded at 0
        raise NonFiniteError("sqrt: input must be strictly positive")
    out = np.sqrt(x.data)
    return _result("sqrt", out, (x,), lambda g: (g / (2.0 * out),))


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return _result("exp", out, (x,), lambda g: (g * out,))


def log(x) -> Tensor:
    x = as_tensor(x)
    if (x.data <= 0.0).any():
        raise NonFiniteError("log: input must be strictly positive")
    return _result("log", np.log(x.data), (x,), lambda g: (g / x.data,))


def abs_(x) -> Tensor:
    x = as_tensor(x)
    return _result("abs", np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0.0
    return _result("relu", np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def leaky_relu(x, slope: float = 0.1) -> Tensor:
    x = as_tensor(x)
    scale = np.where(x.data > 0.0, 1.0, slope)
    return _result("leaky_relu", x.data * scale, (x,), lambda g: (g * scale,))


# ===== reductions =====

def _norm_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    return tuple(sorted(a % ndim for a in axes))


def sum_(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    if axis is None:
        out = np.sum(x.data).reshape(1)

        def backward(g):
            return (np.full(x.shape, g.reshape(-1)[0]),)

        return _result("sum", out, (x,), backward)

    axes = _norm_axes(axis, x.ndim)
    out = np.sum(x.data, axis=axes, keepdims=keepdims)

    def backward(g):
        expanded = g if keepdims else np.expand_dims(g, axes)
        return (np.broadcast_to(expanded, x.shape).copy(),)

    return _result("sum", out, (x,), backward)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    count = x.size if axis is None else int(np.prod([x.shape[a] for a in _norm_axes(axis, x.ndim)]))
    return mul(sum_(x, axis=axis, keepdims=keepdims), 1.0 / count)


def masked_logsumexp(x, include: np.ndarray, axis: int = -1) -> Tensor:
    """log(sum(exp(x))) over entries where <include> is True, along <axis>."""
    x = as_tensor(x)
    include = np.asarray(include, dtype=bool)
    if include.shape != x.shape:
        raise ShapeMismatchError("masked_logsumexp", x.shape, include.shape)
    if not include.any(axis=axis).all():
        raise ValueError("masked_logsumexp: a reduced slice has no included entries")
    peak = np.max(np.where(include, x.data, -np.inf), axis=axis, keepdims=True)
    weights = np.where(include, np.exp(x.data - peak), 0.0)
    total = weights.sum(axis=axis, keepdims=True)
    out = (peak + np.log(total)).squeeze(axis)

    def backward(g):
        return (np.expand_dims(g, axis) * weights / total,)

    return _result("masked_logsumexp", out, (x,), backward)


# ===== linear algebra =====

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError("matmul", a.shape, b.shape)

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _result("matmul", a.data @ b.data, (a, b), backward)


def l2_normalize(x, axis: int = -1, eps: float = 1e-12) -> Tensor:
    """Unit-norm slices along <axis>; slices with norm < eps pass through with zero gradient."""
    x = as_tensor(x)
    norm = np.sqrt(np.sum(x.data * x.data, axis=axis, keepdims=True))
    guarded = norm < eps
    safe_norm = np.where(guarded, 1.0, norm)
    out = np.where(guarded, x.data, x.data / safe_norm)

    def backward(g):
        radial = np.sum(g * out, axis=axis, keepdims=True)
        return (np.where(guarded, 0.0, (g - out * radial) / safe_norm),)

    return _result("l2_normalize", out, (x,), backward)


def linear_map(x, forward: Callable[[np.ndarray], np.ndarray],
               adjoint: Callable[[np.ndarray], np.ndarray], name: str = "linear_map") -> Tensor:
    """Apply a fixed linear operator; the backward pass applies its adjoint."""
    x = as_tensor(x)
    return _result(name, forward(x.data), (x,), lambda g: (adjoint(g),))


# ===== shape manipulation =====

def reshape(x, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError:
        raise ShapeMismatchError("reshape", x.shape, tuple(shape)) from None
    return _result("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes: Sequence[int] | None = None) -> Tensor:
    x = as_tensor(x)
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _result("transpose", np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),))


def slice_(x, index) -> Tensor:
    x = as_tensor(x)
    out = x.data[index]

    def backward(g):
        grad = np.zeros_like(x.data)
        np.add.at(grad, index, g)
        return (grad,)

    return _result("slice", out, (x,), backward)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    reference = tensors[0].shape
    axis = axis % len(reference)
    for t in tensors[1:]:
        if len(t.shape) != len(reference) or any(
                t.shape[d] != reference[d] for d in range(len(reference)) if d != axis):
            raise ShapeMismatchError("concat", reference, t.shape)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result("concat", np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def upsample_nearest(x, factor: int) -> Tensor:
    """Repeat each pixel into a factor x factor block over the last two axes."""
    x = as_tensor(x)
    out = np.repeat(np.repeat(x.data, factor, axis=-2), factor, axis=-1)

    def backward(g):
        h, w = x.shape[-2], x.shape[-1]
        blocks = g.reshape(g.shape[:-2] + (h, factor, w, factor))
        return (blocks.sum(axis=(-3, -1)),)

    return _result("upsample_nearest", out, (x,), backward)


# ===== convolution =====

def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int):
    n, c, h, w = x.shape
    padded = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride][:, :, :oh, :ow]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)
    return cols, oh, ow


def _col2im(cols: np.ndarray, x_shape, kh: int, kw: int, stride: int, pad: int, oh: int, ow: int):
    n, c, h, w = x_shape
    padded = np.zeros((n, c, h + 2 * pad, w + 2 * pad))
    patches = cols.reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    for i in range(kh):
        for j in range(kw):
            padded[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += patches[:, :, i, j]
    return padded[:, :, pad:pad + h, pad:pad + w]


def conv2d(x, weight, bias=None, stride: int = 1, pad: int = 0) -> Tensor:
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeMismatchError("conv2d", x.shape, weight.shape)
    n = x.shape[0]
    c_out, _, kh, kw = weight.shape
    cols, oh, ow = _im2col(x.data, kh, kw, stride, pad)
    w_mat = weight.data.reshape(c_out, -1)
    out = cols @ w_mat.T
    inputs = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (c_out,):
            raise ShapeMismatchError("conv2d bias", bias.shape, (c_out,))
        out = out + bias.data
        inputs = (x, weight, bias)
    out = out.reshape(n, oh, ow, c_out).transpose(0, 3, 1, 2)

    def backward(g):
        g_mat = g.transpose(0, 2, 3, 1).reshape(-1, c_out)
        grad_w = (g_mat.T @ cols).reshape(weight.shape)
        grad_x = _col2im(g_mat @ w_mat, x.shape, kh, kw, stride, pad, oh, ow) if x.requires_grad else None
        grads = (grad_x, grad_w)
        if bias is not None:
            grads = grads + (g_mat.sum(axis=0),)
        return grads

    return _result("conv2d", out, inputs, backward)


def conv_transpose2d(x, weight, bias=None, stride: int = 1, pad: int = 0) -> Tensor:
    """Adjoint of conv2d with respect to its input, as a layer (used by patch decoders)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[0]:
        raise ShapeMismatchError("conv_transpose2d", x.shape, weight.shape)
    n, c_in, h, w = x.shape
    _, c_out, kh, kw = weight.shape
    oh = (h - 1) * stride - 2 * pad + kh
    ow = (w - 1) * stride - 2 * pad + kw
    out_shape = (n, c_out, oh, ow)
    x_mat = x.data.transpose(0, 2, 3, 1).reshape(-1, c_in)
    w_mat = weight.data.reshape(c_in, -1)
    out = _col2im(x_mat @ w_mat, out_shape, kh, kw, stride, pad, h, w)
    inputs = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (c_out,):
            raise ShapeMismatchError("conv_transpose2d bias", bias.shape, (c_out,))
        out = out + bias.data.reshape(1, c_out, 1, 1)
        inputs = (x, weight, bias)

    def backward(g):
        g_cols, _, _ = _im2col(g, kh, kw, stride, pad)
        grad_x = (g_cols @ w_mat.T).reshape(n, h, w, c_in).transpose(0, 3, 1, 2)
        grad_w = (x_mat.T @ g_cols).reshape(weight.shape)
        grads = (grad_x, grad_w)
        if bias is not None:
            grads = grads + (g.sum(axis=(0, 2, 3)),)
        return grads

    return _result("conv_transpose2d", out, inputs, backward)
