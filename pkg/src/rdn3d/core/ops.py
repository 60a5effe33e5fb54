"""Differentiable volumetric operators on ``(C, D, H, W)`` tensors.

Spatial axes follow numpy's row-major layout, so for a volume ``D`` is z,
``H`` is y and ``W`` is x. Convolutions are cross-correlations with zero
"same" padding and unit stride.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from .tensor import Tensor


def _check_4d(x: Tensor, op: str) -> None:
    if x.ndim != 4:
        raise ValueError(f"{op}: expected a (C, D, H, W) tensor, got shape {x.shape}")


def _im2col(xp: np.ndarray, k: tuple[int, int, int], out_shape: tuple[int, int, int]) -> np.ndarray:
    # xp is the padded input (C, D+kd-1, H+kh-1, W+kw-1); rows ordered (c, a, b, e) to match kernel.reshape
    c = xp.shape[0]
    win = sliding_window_view(xp, k, axis=(1, 2, 3))
    cols = np.ascontiguousarray(win.transpose(0, 4, 5, 6, 1, 2, 3))
    return cols.reshape(c * k[0] * k[1] * k[2], out_shape[0] * out_shape[1] * out_shape[2])


def _col2im(cols: np.ndarray, c: int, k: tuple[int, int, int], out_shape: tuple[int, int, int]) -> np.ndarray:
    kd, kh, kw = k
    d, h, w = out_shape
    cols = cols.reshape(c, kd, kh, kw, d, h, w)
    xp = np.zeros((c, d + kd - 1, h + kh - 1, w + kw - 1), dtype=cols.dtype)
    for a in range(kd):
        for b in range(kh):
            for e in range(kw):
                xp[:, a:a + d, b:b + h, e:e + w] += cols[:, a, b, e]
    return xp


def conv3d(x: Tensor, kernel: Tensor, bias: Tensor | None = None) -> Tensor:
    """Same-padded, stride-1 3D cross-correlation.

    Parameters
    ----------
    x : Tensor
        Input of shape ``(C_in, D, H, W)``.
    kernel : Tensor
        Weights of shape ``(C_out, C_in, kd, kh, kw)`` with odd extents.
    bias : Tensor, optional
        Per-output-channel offsets, shape ``(C_out,)``.

    Returns
    -------
    Tensor
        Output of shape ``(C_out, D, H, W)``.
    """
    _check_4d(x, "conv3d")
    if kernel.ndim != 5:
        raise ValueError(f"conv3d: kernel must be (C_out, C_in, kd, kh, kw), got {kernel.shape}")
    c_out, c_in = kernel.shape[:2]
    k = tuple(kernel.shape[2:])
    if x.shape[0] != c_in:
        raise ValueError(
            f"conv3d: input channels do not match kernel; input shape {x.shape}, kernel shape {kernel.shape}"
        )
    if any(n % 2 == 0 for n in k):
        raise ValueError(f"conv3d: kernel spatial extents must be odd, got {k}")
    if bias is not None and bias.shape != (c_out,):
        raise ValueError(f"conv3d: bias shape {bias.shape} does not match C_out={c_out}")

    spatial = x.shape[1:]
    n_vox = spatial[0] * spatial[1] * spatial[2]
    w2 = kernel.data.reshape(c_out, -1)
    if k == (1, 1, 1):
        cols = x.data.reshape(c_in, n_vox)
    else:
        pad = [(0, 0)] + [(n // 2, n // 2) for n in k]
        cols = _im2col(np.pad(x.data, pad), k, spatial)
    out = w2 @ cols
    if bias is not None:
        out += bias.data[:, None]
    out = out.reshape((c_out,) + spatial)

    def backward(g):
        g2 = g.reshape(c_out, n_vox)
        gk = (g2 @ cols.T).reshape(kernel.shape) if kernel.requires_grad else None
        gb = g2.sum(axis=1, dtype=np.float64).astype(g.dtype) if bias is not None and bias.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = w2.T @ g2
            if k == (1, 1, 1):
                gx = gcols.reshape(x.shape)
            else:
                gxp = _col2im(gcols, c_in, k, spatial)
                gx = gxp[:, k[0] // 2:k[0] // 2 + spatial[0],
                         k[1] // 2:k[1] // 2 + spatial[1],
                         k[2] // 2:k[2] // 2 + spatial[2]]
        return gx, gk, gb

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return Tensor._result(out, parents, backward)


def maxpool3d(x: Tensor, pool: Sequence[int]) -> Tensor:
    """Max over disjoint ``(pd, ph, pw)`` windows.

    The gradient goes to the first maximal element of each window in scan order.
    """
    _check_4d(x, "maxpool3d")
    pd, ph, pw = (int(p) for p in pool)
    c, d, h, w = x.shape
    for name, n, p in (("D", d, pd), ("H", h, ph), ("W", w, pw)):
        if p < 1 or n % p:
            raise ValueError(f"maxpool3d: extent {name}={n} is not divisible by pool factor {p}")
    if (pd, ph, pw) == (1, 1, 1):
        return Tensor._result(x.data, (x,), lambda g: (g,))
    blocks = x.data.reshape(c, d // pd, pd, h // ph, ph, w // pw, pw)
    blocks = blocks.transpose(0, 1, 3, 5, 2, 4, 6).reshape(c, d // pd, h // ph, w // pw, pd * ph * pw)
    arg = np.argmax(blocks, axis=-1)[..., None]
    out = np.take_along_axis(blocks, arg, axis=-1)[..., 0]

    def backward(g):
        gb = np.zeros(blocks.shape, dtype=g.dtype)
        np.put_along_axis(gb, arg, g[..., None], axis=-1)
        gb = gb.reshape(c, d // pd, h // ph, w // pw, pd, ph, pw).transpose(0, 1, 4, 2, 5, 3, 6)
        return (gb.reshape(x.shape),)

    return Tensor._result(out, (x,), backward)


def upsample3d_nearest(x: Tensor, factor: Sequence[int]) -> Tensor:
    """Nearest-neighbour upsampling by integer ``(fd, fh, fw)``."""
    _check_4d(x, "upsample3d_nearest")
    fd, fh, fw = (int(f) for f in factor)
    if min(fd, fh, fw) < 1:
        raise ValueError(f"upsample3d_nearest: factors must be >= 1, got {tuple(factor)}")
    c, d, h, w = x.shape
    out = np.broadcast_to(
        x.data[:, :, None, :, None, :, None], (c, d, fd, h, fh, w, fw)
    ).reshape(c, d * fd, h * fh, w * fw)

    def backward(g):
        return (g.reshape(c, d, fd, h, fh, w, fw).sum(axis=(2, 4, 6)),)

    return Tensor._result(out, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    out = expit(x.data)
    return Tensor._result(out, (x,), lambda g: (g * out * (1.0 - out),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor._result(np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,))


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or ``rate == 0``."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout: rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout: an rng is required in training mode")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) * x.dtype.type(1.0 / (1.0 - rate))
    return Tensor._result(x.data * keep, (x,), lambda g: (g * keep,))


def concat_channels(*tensors: Tensor) -> Tensor:
    """Concatenate along axis 0; all other extents must agree."""
    if not tensors:
        raise ValueError("concat_channels: nothing to concatenate")
    rest = tensors[0].shape[1:]
    for t in tensors[1:]:
        if t.shape[1:] != rest:
            raise ValueError(
                f"concat_channels: shape mismatch {tensors[0].shape} vs {t.shape}"
            )
    out = np.concatenate([t.data for t in tensors], axis=0)
    bounds = np.cumsum([0] + [t.shape[0] for t in tensors])

    def backward(g):
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(tensors)))

    return Tensor._result(out, tensors, backward)


def take_channels(x: Tensor, index) -> Tensor:
    """Select channels (an int, slice or index list) along axis 0, keeping the axis."""
    if isinstance(index, int):
        index = [index]
    idx = np.arange(x.shape[0])[index]
    out = x.data[idx]

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)

    return Tensor._result(out, (x,), backward)


def vector_norm(x: Tensor, axis: int = 0) -> Tensor:
    """Euclidean norm along ``axis``; the gradient at a zero vector is taken as zero."""
    norm = np.sqrt(np.sum(x.data * x.data, axis=axis, keepdims=True))
    safe = np.where(norm > 0, norm, 1).astype(x.dtype)

    def backward(g):
        return (np.expand_dims(g, axis) * x.data / safe * (norm > 0),)

    return Tensor._result(np.squeeze(norm, axis=axis), (x,), backward)
