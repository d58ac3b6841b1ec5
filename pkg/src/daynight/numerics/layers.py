"""
Differentiable layers and losses on batched ``(N, C, H, W)`` grids.

Each function computes its forward value with numpy and, when a tape is
given and an input requires a gradient, records its reverse rule. All
reverse rules are checked against central finite differences in
`daynight.harness.selftest`.
"""

from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.special
from numpy.lib.stride_tricks import sliding_window_view

from daynight.constants import BCE_CLAMP, BN_EPS
from daynight.errors import DomainError, ShapeError
from daynight.numerics.autodiff import GradTape, Variable, as_variable

BN_AXES = (0, 2, 3)


def _record(
    tape: Optional[GradTape],
    name: str,
    inputs: Sequence[Variable],
    outputs: Sequence[Variable],
    backward,
) -> None:
    if tape is not None and tape.watching(*inputs):
        tape.record(name, inputs, outputs, backward)


def _per_channel(v: np.ndarray) -> np.ndarray:
    return v.reshape(1, -1, 1, 1)


def _check_batch(x: np.ndarray, what: str) -> None:
    if x.ndim != 4:
        batch_shape_message = (
            f"{what} expects an (N, C, H, W) batch, got shape {x.shape}."
        )
        raise ShapeError(batch_shape_message)


def conv2d(
    x: Variable,
    weight: Variable,
    bias: Variable,
    stride: int = 1,
    tape: Optional[GradTape] = None,
) -> Variable:
    """
    Zero-padded cross-correlation with an odd square kernel.

    Padding is ``k // 2`` so stride 1 keeps the spatial size and stride 2
    halves it (rounding up).
    """
    x, weight, bias = as_variable(x), as_variable(weight), as_variable(bias)
    xv, wv = x.value, weight.value
    _check_batch(xv, "conv2d")
    if wv.ndim != 4 or wv.shape[2] != wv.shape[3] or wv.shape[2] % 2 == 0:
        kernel_message = (
            f"conv2d expects an (C_out, C_in, k, k) kernel with odd k, "
            f"got {wv.shape}."
        )
        raise ShapeError(kernel_message)
    if wv.shape[1] != xv.shape[1]:
        channel_message = (
            f"conv2d kernel expects {wv.shape[1]} input channels, "
            f"input has {xv.shape[1]}."
        )
        raise ShapeError(channel_message)
    if stride not in (1, 2):
        stride_message = f"conv2d stride must be 1 or 2, got {stride}."
        raise ShapeError(stride_message)

    n, _, h, w = xv.shape
    k = wv.shape[2]
    pad = k // 2
    out_h = (h + 2 * pad - k) // stride + 1
    out_w = (w + 2 * pad - k) // stride + 1

    padded = np.pad(xv, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(padded, (k, k), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride][:, :, :out_h, :out_w]
    out = np.tensordot(windows, wv, axes=([1, 4, 5], [1, 2, 3]))
    out = out.transpose(0, 3, 1, 2) + _per_channel(bias.value)
    result = Variable(np.ascontiguousarray(out))

    def backward(grads):
        (g,) = grads
        d_weight = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
        d_bias = g.sum(axis=BN_AXES)
        d_padded = np.zeros_like(padded)
        for i in range(k):
            for j in range(k):
                contrib = np.tensordot(g, wv[:, :, i, j], axes=([1], [0]))
                d_padded[
                    :,
                    :,
                    i : i + stride * out_h : stride,
                    j : j + stride * out_w : stride,
                ] += contrib.transpose(0, 3, 1, 2)
        d_x = d_padded[:, :, pad : pad + h, pad : pad + w]
        return d_x, d_weight, d_bias

    _record(tape, "conv2d", (x, weight, bias), (result,), backward)
    return result


def batch_norm(
    x: Variable,
    gamma: Variable,
    beta: Variable,
    mean: Optional[np.ndarray] = None,
    std: Optional[np.ndarray] = None,
    eps: float = BN_EPS,
    tape: Optional[GradTape] = None,
) -> Tuple[Variable, Variable, Variable]:
    """
    Per-channel affine normalization ``gamma * (x - mean) / std + beta``.

    With `mean`/`std` omitted the batch statistics are used (biased variance
    over batch and spatial positions, ``std = sqrt(var + eps)``) and
    differentiated through. Supplied statistics are constants.

    Returns the normalized output together with the batch mean and batch
    standard deviation of `x`, which are always computed and are themselves
    differentiable outputs.

    Examples:
        >>> import numpy as np
        >>> y, _, _ = batch_norm(
        ...     Variable(np.full((1, 1, 1, 1), 5.0)),
        ...     Variable([2.0]),
        ...     Variable([1.0]),
        ...     mean=np.array([2.0]),
        ...     std=np.array([3.0]),
        ... )
        >>> float(y.value.ravel()[0])
        3.0
    """
    x, gamma, beta = as_variable(x), as_variable(gamma), as_variable(beta)
    xv = x.value
    _check_batch(xv, "batch_norm")
    channels = xv.shape[1]
    m = xv.shape[0] * xv.shape[2] * xv.shape[3]

    batch_mean = xv.mean(axis=BN_AXES)
    centered = xv - _per_channel(batch_mean)
    batch_std = np.sqrt((centered**2).mean(axis=BN_AXES) + eps)
    xhat_batch = centered / _per_channel(batch_std)

    injected = mean is not None or std is not None
    if injected:
        if mean is None or std is None:
            partial_stats_message = (
                "batch_norm needs both mean and std when injecting statistics."
            )
            raise ShapeError(partial_stats_message)
        mean = np.asarray(mean, dtype=np.float64)
        std = np.asarray(std, dtype=np.float64)
        if mean.shape != (channels,) or std.shape != (channels,):
            stats_shape_message = (
                f"batch_norm statistics must have length {channels}, got "
                f"{mean.shape} and {std.shape}."
            )
            raise ShapeError(stats_shape_message)
        if np.any(std <= 0):
            std_domain_message = "batch_norm requires every std entry > 0."
            raise DomainError(std_domain_message)
        norm_std = std
        xhat = (xv - _per_channel(mean)) / _per_channel(std)
    else:
        norm_std = batch_std
        xhat = xhat_batch

    for name, param in (("gamma", gamma), ("beta", beta)):
        if param.shape != (channels,):
            affine_message = (
                f"batch_norm {name} must have length {channels}, "
                f"got {param.shape}."
            )
            raise ShapeError(affine_message)

    y = _per_channel(gamma.value) * xhat + _per_channel(beta.value)
    outputs = (Variable(y), Variable(batch_mean), Variable(batch_std))

    def backward(grads):
        g_y, g_mean, g_std = grads
        d_gamma = (g_y * xhat).sum(axis=BN_AXES)
        d_beta = g_y.sum(axis=BN_AXES)
        d_xhat = g_y * _per_channel(gamma.value)
        if injected:
            d_x = d_xhat / _per_channel(norm_std)
        else:
            d_x = (
                d_xhat
                - d_xhat.mean(axis=BN_AXES, keepdims=True)
                - xhat
                * (d_xhat * xhat).mean(axis=BN_AXES, keepdims=True)
            ) / _per_channel(norm_std)
        d_x = d_x + _per_channel(g_mean) / m
        d_x = d_x + _per_channel(g_std) * xhat_batch / m
        return d_x, d_gamma, d_beta

    _record(tape, "batch_norm", (x, gamma, beta), outputs, backward)
    return outputs


def relu(x: Variable, tape: Optional[GradTape] = None) -> Variable:
    x = as_variable(x)
    active = x.value > 0
    result = Variable(np.where(active, x.value, 0.0))
    _record(tape, "relu", (x,), (result,), lambda g: (g[0] * active,))
    return result


def sigmoid(x: Variable, tape: Optional[GradTape] = None) -> Variable:
    x = as_variable(x)
    s = scipy.special.expit(x.value)
    result = Variable(s)
    _record(
        tape, "sigmoid", (x,), (result,), lambda g: (g[0] * s * (1.0 - s),)
    )
    return result


def upsample2(x: Variable, tape: Optional[GradTape] = None) -> Variable:
    """Nearest-neighbour upsampling by a factor of two."""
    x = as_variable(x)
    _check_batch(x.value, "upsample2")
    n, c, h, w = x.shape
    result = Variable(np.repeat(np.repeat(x.value, 2, axis=2), 2, axis=3))

    def backward(grads):
        return (grads[0].reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)

    _record(tape, "upsample2", (x,), (result,), backward)
    return result


def mul_const(
    x: Variable, c: np.ndarray, tape: Optional[GradTape] = None
) -> Variable:
    x = as_variable(x)
    c = np.asarray(c, dtype=np.float64)
    result = Variable(x.value * c)
    _record(tape, "mul_const", (x,), (result,), lambda g: (g[0] * c,))
    return result


def add(*terms: Variable, tape: Optional[GradTape] = None) -> Variable:
    terms = tuple(as_variable(t) for t in terms)
    result = Variable(sum(t.value for t in terms))
    _record(tape, "add", terms, (result,), lambda g: (g[0],) * len(terms))
    return result


def scale(
    x: Variable, factor: float, tape: Optional[GradTape] = None
) -> Variable:
    x = as_variable(x)
    result = Variable(x.value * factor)
    _record(tape, "scale", (x,), (result,), lambda g: (g[0] * factor,))
    return result


def abs_diff_mean(
    x: Variable, target: np.ndarray, tape: Optional[GradTape] = None
) -> Variable:
    """Mean absolute difference against a constant target."""
    x = as_variable(x)
    target = np.asarray(target, dtype=np.float64)
    if target.shape != x.shape:
        target_message = (
            f"abs_diff_mean target shape {target.shape} does not match "
            f"{x.shape}."
        )
        raise ShapeError(target_message)
    diff = x.value - target
    result = Variable(np.mean(np.abs(diff)))

    def backward(grads):
        return (grads[0] * np.sign(diff) / diff.size,)

    _record(tape, "abs_diff_mean", (x,), (result,), backward)
    return result


def binary_cross_entropy(
    p: Variable, target: np.ndarray, tape: Optional[GradTape] = None
) -> Variable:
    """
    Pixel-mean binary cross-entropy with soft (probability) targets.

    Predictions are clamped to ``[1e-7, 1 - 1e-7]`` before the logarithm;
    targets are constants.

    Examples:
        >>> import numpy as np
        >>> loss = binary_cross_entropy(Variable(np.full(4, 0.5)), np.full(4, 0.5))
        >>> round(float(loss.value), 6)
        0.693147
    """
    p = as_variable(p)
    target = np.asarray(target, dtype=np.float64)
    if target.shape != p.shape:
        bce_shape_message = (
            f"BCE target shape {target.shape} does not match {p.shape}."
        )
        raise ShapeError(bce_shape_message)
    for what, values in (("prediction", p.value), ("target", target)):
        if np.any(values < 0.0) or np.any(values > 1.0):
            bce_domain_message = f"BCE {what} values must lie in [0, 1]."
            raise DomainError(bce_domain_message)

    lo, hi = BCE_CLAMP, 1.0 - BCE_CLAMP
    inside = (p.value >= lo) & (p.value <= hi)
    pc = np.clip(p.value, lo, hi)
    loss = -(target * np.log(pc) + (1.0 - target) * np.log(1.0 - pc))
    result = Variable(loss.mean())

    def backward(grads):
        d_p = (pc - target) / (pc * (1.0 - pc)) / pc.size
        return (grads[0] * d_p * inside,)

    _record(tape, "binary_cross_entropy", (p,), (result,), backward)
    return result
