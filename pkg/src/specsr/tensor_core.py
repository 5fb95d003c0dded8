"""Dense 4-D array kernels: the forward/backward primitives every layer is built from.

All kernels operate on numpy arrays in (batch, channels, height, width) layout,
row-major with width fastest, float32 by default (float64 for gradient checks).
They are pure functions of their inputs and preserve the input dtype.

Convolution uses cross-correlation semantics (no kernel flip) with zero padding
and stride 1. Internally it works in a channel-major flat layout, one GEMM per
kernel tap with axis-aligned slice copies; on a single CPU core this is
markedly faster than an im2col gather for these layer sizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError


def check_tensor4(x: np.ndarray, name: str = "input") -> None:
    """Validate the (batch, channels, height, width) contract."""
    if x.ndim != 4:
        raise ShapeError(f"{name}: expected 4 dims (b, c, h, w), got shape {x.shape}")
    if min(x.shape) < 1:
        raise ShapeError(f"{name}: all dimensions must be >= 1, got shape {x.shape}")


@dataclass
class ConvKernel:
    """Convolution parameters: weights (out_ch, in_ch, kh, kw) and bias (out_ch,)."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        if self.weights.ndim != 4:
            raise ShapeError(f"kernel weights must be 4-D, got shape {self.weights.shape}")
        kh, kw = self.weights.shape[2:]
        if kh not in (1, 3) or kw not in (1, 3):
            raise ParameterError(f"kernel size must be 1 or 3 per axis, got {kh}x{kw}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(
                f"bias shape {self.bias.shape} does not match out_ch {self.weights.shape[0]}"
            )

    @property
    def out_ch(self) -> int:
        return self.weights.shape[0]

    @property
    def in_ch(self) -> int:
        return self.weights.shape[1]

    def check_finite(self) -> None:
        if not np.isfinite(self.weights).all() or not np.isfinite(self.bias).all():
            raise ParameterError("kernel contains non-finite values")


def pad_cbhw(x: np.ndarray, pad: int) -> np.ndarray:
    """Zero-padded copy of x in (channels, batch, height, width) layout.

    This is the internal working layout of the conv kernels; conv2d_backward
    can reuse the one built by conv2d (see conv2d_backward's `xpt` argument).
    """
    b, c, h, w = x.shape
    xpt = np.zeros((c, b, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
    if pad:
        xpt[:, :, pad:-pad, pad:-pad] = x.transpose(1, 0, 2, 3)
    else:
        xpt[...] = x.transpose(1, 0, 2, 3)
    return xpt


def _check_conv_args(x: np.ndarray, k: ConvKernel, pad: int) -> tuple[int, int]:
    out_ch, in_ch, kh, kw = k.weights.shape
    if in_ch != x.shape[1]:
        raise ShapeError(f"kernel expects {in_ch} input channels, input has {x.shape[1]}")
    oh = x.shape[2] + 2 * pad - kh + 1
    ow = x.shape[3] + 2 * pad - kw + 1
    if oh < 1 or ow < 1:
        raise ShapeError(f"kernel {kh}x{kw} with pad={pad} does not fit input "
                         f"{x.shape[2]}x{x.shape[3]}")
    return oh, ow


def conv2d(x: np.ndarray, k: ConvKernel, pad: int,
           xpt: np.ndarray | None = None) -> np.ndarray:
    """Cross-correlate x with k.weights (stride 1, zero padding) and add bias.

    pad=1 with a 3x3 kernel and pad=0 with a 1x1 kernel preserve spatial size.
    """
    check_tensor4(x)
    w, bias = k.weights, k.bias
    out_ch, in_ch, kh, kw = w.shape
    oh, ow = _check_conv_args(x, k, pad)
    b = x.shape[0]
    n = b * oh * ow
    if xpt is None:
        xpt = pad_cbhw(x, pad)
    out2 = np.empty((out_ch, n), dtype=x.dtype)
    out2[...] = bias.astype(x.dtype)[:, None]
    tmp = np.empty((out_ch, n), dtype=x.dtype)
    for dy in range(kh):
        for dx in range(kw):
            xs2 = xpt[:, :, dy : dy + oh, dx : dx + ow].reshape(in_ch, n)
            np.matmul(np.ascontiguousarray(w[:, :, dy, dx]), xs2, out=tmp)
            out2 += tmp
    return np.ascontiguousarray(out2.reshape(out_ch, b, oh, ow).transpose(1, 0, 2, 3))


def conv2d_backward(
    x: np.ndarray, k: ConvKernel, grad_out: np.ndarray, pad: int,
    xpt: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of sum(grad_out * conv2d(x, k)) w.r.t. x, weights, and bias."""
    check_tensor4(x)
    check_tensor4(grad_out, "grad_out")
    w = k.weights
    out_ch, in_ch, kh, kw = w.shape
    b, _, h, wd = x.shape
    oh, ow = _check_conv_args(x, k, pad)
    if grad_out.shape != (b, out_ch, oh, ow):
        raise ShapeError(
            f"grad_out shape {grad_out.shape} does not match forward output "
            f"{(b, out_ch, oh, ow)}"
        )
    n = b * oh * ow
    if xpt is None:
        xpt = pad_cbhw(x, pad)
    go2 = np.ascontiguousarray(grad_out.transpose(1, 0, 2, 3)).reshape(out_ch, n)
    grad_b = go2.sum(axis=1)
    grad_w = np.empty_like(w)
    grad_xpt = np.zeros_like(xpt)
    tmp = np.empty((in_ch, n), dtype=x.dtype)
    tmp_w = np.empty((out_ch, in_ch), dtype=x.dtype)
    for dy in range(kh):
        for dx in range(kw):
            xs2 = xpt[:, :, dy : dy + oh, dx : dx + ow].reshape(in_ch, n)
            np.matmul(go2, xs2.T, out=tmp_w)
            grad_w[:, :, dy, dx] = tmp_w
            np.matmul(np.ascontiguousarray(w[:, :, dy, dx].T), go2, out=tmp)
            grad_xpt[:, :, dy : dy + oh, dx : dx + ow] += tmp.reshape(in_ch, b, oh, ow)
    if pad:
        grad_xpt = grad_xpt[:, :, pad:-pad, pad:-pad]
    grad_x = np.ascontiguousarray(grad_xpt.transpose(1, 0, 2, 3))
    return grad_x, grad_w, grad_b


def max_pool2x2(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2 max pooling with stride 2. Returns (pooled, argmax index map).

    The index map holds, per output position, the winning offset 0..3 within
    its window in row-major window order; ties go to the first position.
    """
    check_tensor4(x)
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"max_pool2x2 needs even spatial dims, got {h}x{w}")
    oh, ow = h // 2, w // 2
    windows = x.reshape(b, c, oh, 2, ow, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, oh, ow, 4)
    idx = windows.argmax(axis=4).astype(np.uint8)  # argmax takes the first max: row-major tie-break
    y = windows.max(axis=4)
    return y, idx


def max_pool2x2_backward(argmax: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Route each output gradient to its winning input position."""
    check_tensor4(grad_out, "grad_out")
    if argmax.shape != grad_out.shape:
        raise ShapeError(f"argmax shape {argmax.shape} != grad_out shape {grad_out.shape}")
    b, c, oh, ow = grad_out.shape
    windows = np.zeros((b, c, oh, ow, 4), dtype=grad_out.dtype)
    np.put_along_axis(windows, argmax[..., None].astype(np.intp), grad_out[..., None], axis=4)
    return windows.reshape(b, c, oh, ow, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, 2 * oh, 2 * ow)


def concat_channels(xs: list[np.ndarray]) -> np.ndarray:
    """Concatenate along the channel axis; all inputs must share b, h, w."""
    if not xs:
        raise ShapeError("concat_channels needs at least one input")
    for i, x in enumerate(xs):
        check_tensor4(x, f"input {i}")
        if x.shape[0] != xs[0].shape[0] or x.shape[2:] != xs[0].shape[2:]:
            raise ShapeError(
                f"input {i} shape {x.shape} incompatible with input 0 shape {xs[0].shape}"
            )
    if len(xs) == 1:
        return xs[0]
    return np.concatenate(xs, axis=1)


def split_channels(y: np.ndarray, sizes: list[int]) -> list[np.ndarray]:
    """Exact inverse of concat_channels for the given channel sizes."""
    check_tensor4(y)
    if sum(sizes) != y.shape[1]:
        raise ShapeError(f"split sizes {sizes} do not sum to {y.shape[1]} channels")
    out, start = [], 0
    for s in sizes:
        out.append(y[:, start : start + s])
        start += s
    return out


def pixel_shuffle(x: np.ndarray, r: int) -> np.ndarray:
    """Rearrange r*r channel groups into an r-times larger spatial grid.

    out[b, c, r*h+dy, r*w+dx] = x[b, c*r*r + dy*r + dx, h, w]
    """
    check_tensor4(x)
    if r < 1:
        raise ParameterError(f"upscale factor must be >= 1, got {r}")
    b, c, h, w = x.shape
    if c % (r * r):
        raise ShapeError(f"channels {c} not divisible by r^2 = {r * r}")
    if r == 1:
        return x
    co = c // (r * r)
    return (
        x.reshape(b, co, r, r, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(b, co, h * r, w * r)
    )


def pixel_unshuffle(y: np.ndarray, r: int) -> np.ndarray:
    """Inverse permutation of pixel_shuffle (also its backward pass)."""
    check_tensor4(y)
    if r < 1:
        raise ParameterError(f"upscale factor must be >= 1, got {r}")
    b, c, hh, ww = y.shape
    if hh % r or ww % r:
        raise ShapeError(f"spatial dims {hh}x{ww} not divisible by r = {r}")
    if r == 1:
        return y
    h, w = hh // r, ww // r
    return y.reshape(b, c, h, r, w, r).transpose(0, 1, 3, 5, 2, 4).reshape(b, c * r * r, h, w)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Pass gradient where x > 0; subgradient 0 at 0."""
    if x.shape != grad_out.shape:
        raise ShapeError(f"shape mismatch: x {x.shape} vs grad_out {grad_out.shape}")
    return grad_out * (x > 0)


def dropout(
    x: np.ndarray, rate: float, rng: np.random.Generator | None, training: bool
) -> tuple[np.ndarray, np.ndarray | None]:
    """Inverted dropout: zero with probability `rate`, scale survivors by 1/(1-rate).

    Inference (training=False) is an exact passthrough. Returns (y, mask);
    mask is None at inference or when rate == 0.
    """
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    if rng is None:
        raise ParameterError("dropout in training mode needs an rng")
    mask = (rng.random(x.shape, dtype=np.float32) >= rate).astype(x.dtype)
    return x * mask * (1.0 / (1.0 - rate)), mask


def dropout_backward(mask: np.ndarray | None, rate: float, grad_out: np.ndarray) -> np.ndarray:
    """Backward of dropout with the mask from the matching forward call."""
    if mask is None:
        return grad_out
    return grad_out * mask * (1.0 / (1.0 - rate))
