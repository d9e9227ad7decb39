"""Spatial operators on (C, H, W) tensors: convolution, pooling, upsampling.

All forwards are plain numpy; every backward is hand-derived and covered by
the finite-difference harness.  Padding is zero or replicate.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .tensor import Tensor, make_op

PAD_MODES = ("zero", "replicate")


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        a, b = v
        return int(a), int(b)
    return int(v), int(v)


def _check_chw(x: Tensor, op: str) -> None:
    if x.values.ndim != 3:
        raise ValueError(f"{op}: expected (C, H, W) input, got shape {x.shape}")


def _pad_values(v: np.ndarray, ph: int, pw: int, mode: str) -> np.ndarray:
    if ph == 0 and pw == 0:
        return v
    if mode not in PAD_MODES:
        raise ValueError(f"unknown padding mode {mode!r}; expected one of {PAD_MODES}")
    c, h, w = v.shape
    out = np.zeros((c, h + 2 * ph, w + 2 * pw), dtype=np.float64)
    out[:, ph : ph + h, pw : pw + w] = v
    if mode == "replicate":
        # rows first, then full-width columns, so corners replicate too
        if ph:
            out[:, :ph, pw : pw + w] = v[:, :1]
            out[:, ph + h :, pw : pw + w] = v[:, -1:]
        if pw:
            out[:, :, :pw] = out[:, :, pw : pw + 1]
            out[:, :, pw + w :] = out[:, :, pw + w - 1 : pw + w]
    return out


def _unpad_grad(g: np.ndarray, h: int, w: int, ph: int, pw: int, mode: str) -> np.ndarray:
    """Backward of padding: crop, folding replicated borders onto the edges."""
    if ph == 0 and pw == 0:
        return g
    if mode == "zero":
        return g[:, ph : ph + h, pw : pw + w]
    c = g.shape[0]
    iy = np.clip(np.arange(g.shape[1]) - ph, 0, h - 1)
    ix = np.clip(np.arange(g.shape[2]) - pw, 0, w - 1)
    out = np.zeros((c, h, w), dtype=np.float64)
    np.add.at(
        out,
        (np.arange(c)[:, None, None], iy[None, :, None], ix[None, None, :]),
        g,
    )
    return out


def _conv_windows(
    xp: np.ndarray, kh: int, kw: int, sh: int, sw: int, oh: int, ow: int
) -> np.ndarray:
    c = xp.shape[0]
    s0, s1, s2 = xp.strides
    return as_strided(
        xp, shape=(c, kh, kw, oh, ow), strides=(s0, s1, s2, s1 * sh, s2 * sw)
    )


def conv2d(
    x: Tensor,
    w: Tensor,
    b: Tensor | None = None,
    stride=1,
    padding=0,
    pad_mode: str = "zero",
) -> Tensor:
    """Cross-correlation of (C_in, H, W) with (C_out, C_in, kh, kw) weights.

    Output spatial size is floor((H + 2p - k) / stride) + 1 per axis.
    """
    _check_chw(x, "conv2d")
    cin, h, wdt = x.shape
    cout, cin_w, kh, kw = w.shape
    if cin != cin_w:
        raise ValueError(f"conv2d: input has {cin} channels but weights expect {cin_w}")
    if b is not None and b.shape != (cout,):
        raise ValueError(f"conv2d: bias shape {b.shape} != ({cout},)")
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    xp = _pad_values(x.values, ph, pw, pad_mode)
    hp, wp = xp.shape[1], xp.shape[2]
    if hp < kh or wp < kw:
        raise ValueError(
            f"conv2d: kernel ({kh}x{kw}) larger than padded input ({hp}x{wp})"
        )
    oh = (hp - kh) // sh + 1
    ow = (wp - kw) // sw + 1
    win = _conv_windows(xp, kh, kw, sh, sw, oh, ow)
    win_mat = win.reshape(cin * kh * kw, oh * ow)
    w_mat = w.values.reshape(cout, cin * kh * kw)
    out = (w_mat @ win_mat).reshape(cout, oh, ow)
    if b is not None:
        out += b.values[:, None, None]

    def vjp(g):
        g_mat = g.reshape(cout, oh * ow)
        dw = (g_mat @ win_mat.T).reshape(w.shape)
        dcols = (w_mat.T @ g_mat).reshape(cin, kh, kw, oh, ow)
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                dxp[:, i : i + sh * oh : sh, j : j + sw * ow : sw] += dcols[:, i, j]
        dx = _unpad_grad(dxp, h, wdt, ph, pw, pad_mode)
        if b is None:
            return (dx, dw)
        return (dx, dw, g.sum(axis=(1, 2)))

    parents = (x, w) if b is None else (x, w, b)
    return make_op("conv2d", out, parents, vjp)


def transposed_conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride=2) -> Tensor:
    """Stride-s transposed convolution; weights are (C_out, C_in, kh, kw).

    Output spatial size is (H - 1) * stride + k per axis.
    """
    _check_chw(x, "transposed_conv2d")
    cin, h, wdt = x.shape
    cout, cin_w, kh, kw = w.shape
    if cin != cin_w:
        raise ValueError(
            f"transposed_conv2d: input has {cin} channels but weights expect {cin_w}"
        )
    sh, sw = _pair(stride)
    oh = (h - 1) * sh + kh
    ow = (wdt - 1) * sw + kw
    out = np.zeros((cout, oh, ow), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            out[:, i : i + sh * h : sh, j : j + sw * wdt : sw] += np.einsum(
                "chw,oc->ohw", x.values, w.values[:, :, i, j]
            )
    if b is not None:
        out += b.values[:, None, None]

    def vjp(g):
        dx = np.zeros_like(x.values)
        dw = np.zeros_like(w.values)
        for i in range(kh):
            for j in range(kw):
                g_slice = g[:, i : i + sh * h : sh, j : j + sw * wdt : sw]
                dx += np.einsum("ohw,oc->chw", g_slice, w.values[:, :, i, j])
                dw[:, :, i, j] = np.einsum("ohw,chw->oc", g_slice, x.values)
        if b is None:
            return (dx, dw)
        return (dx, dw, g.sum(axis=(1, 2)))

    parents = (x, w) if b is None else (x, w, b)
    return make_op("transposed_conv2d", out, parents, vjp)


def maxpool2d(x: Tensor, kernel=2, stride=2) -> Tensor:
    """Max pooling; ties route the gradient to the first element in the window."""
    _check_chw(x, "maxpool2d")
    c, h, w = x.shape
    kh, kw = _pair(kernel)
    sh, sw = _pair(stride)
    if h < kh or w < kw:
        raise ValueError(f"maxpool2d: kernel ({kh}x{kw}) larger than input ({h}x{w})")
    oh = (h - kh) // sh + 1
    ow = (w - kw) // sw + 1
    win = _conv_windows(x.values, kh, kw, sh, sw, oh, ow)
    flat = win.transpose(0, 3, 4, 1, 2).reshape(c, oh, ow, kh * kw)
    arg = np.argmax(flat, axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def vjp(g):
        dx = np.zeros_like(x.values)
        di, dj = arg // kw, arg % kw
        iy = np.arange(oh)[None, :, None] * sh + di
        ix = np.arange(ow)[None, None, :] * sw + dj
        cg = np.broadcast_to(np.arange(c)[:, None, None], arg.shape)
        np.add.at(dx, (cg, iy, ix), g)
        return (dx,)

    return make_op("maxpool2d", out, (x,), vjp)


def nearest_upsample(x: Tensor, scale: int) -> Tensor:
    """Nearest-neighbor upsampling by an integer factor."""
    _check_chw(x, "nearest_upsample")
    s = int(scale)
    if s < 1:
        raise ValueError(f"nearest_upsample: scale must be >= 1, got {scale}")
    c, h, w = x.shape
    out = np.repeat(np.repeat(x.values, s, axis=1), s, axis=2)

    def vjp(g):
        return (g.reshape(c, h, s, w, s).sum(axis=(2, 4)),)

    return make_op("nearest_upsample", out, (x,), vjp)


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """(C*r*r, H, W) -> (C, r*H, r*W); lossless channel-to-space rearrangement."""
    _check_chw(x, "pixel_shuffle")
    r = int(r)
    crr, h, w = x.shape
    if crr % (r * r) != 0:
        raise ValueError(f"pixel_shuffle: {crr} channels not divisible by r^2={r * r}")
    c = crr // (r * r)
    out = (
        x.values.reshape(c, r, r, h, w)
        .transpose(0, 3, 1, 4, 2)
        .reshape(c, h * r, w * r)
    )

    def vjp(g):
        return (
            g.reshape(c, h, r, w, r).transpose(0, 2, 4, 1, 3).reshape(crr, h, w).copy(),
        )

    return make_op("pixel_shuffle", out, (x,), vjp)


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    """(C, r*H, r*W) -> (C*r*r, H, W); exact inverse of pixel_shuffle."""
    _check_chw(x, "pixel_unshuffle")
    r = int(r)
    c, hr, wr = x.shape
    if hr % r != 0 or wr % r != 0:
        raise ValueError(f"pixel_unshuffle: spatial {hr}x{wr} not divisible by r={r}")
    h, w = hr // r, wr // r
    out = x.values.reshape(c, h, r, w, r).transpose(0, 2, 4, 1, 3).reshape(c * r * r, h, w)

    def vjp(g):
        return (
            g.reshape(c, r, r, h, w).transpose(0, 3, 1, 4, 2).reshape(c, hr, wr).copy(),
        )

    return make_op("pixel_unshuffle", out, (x,), vjp)


def channel_softmax(x: Tensor) -> Tensor:
    """Softmax over the channel axis at every spatial position (overflow-safe)."""
    _check_chw(x, "channel_softmax")
    shifted = x.values - np.max(x.values, axis=0, keepdims=True)
    e = np.exp(shifted)
    y = e / np.sum(e, axis=0, keepdims=True)

    def vjp(g):
        return (y * (g - np.sum(g * y, axis=0, keepdims=True)),)

    return make_op("channel_softmax", y, (x,), vjp)


def channel_affine(x: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    """Per-channel learned scale and shift (batch-free normalization)."""
    _check_chw(x, "channel_affine")
    c = x.shape[0]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ValueError(
            f"channel_affine: expected ({c},) gamma/beta, got {gamma.shape}/{beta.shape}"
        )
    out = x.values * gamma.values[:, None, None] + beta.values[:, None, None]

    def vjp(g):
        return (
            g * gamma.values[:, None, None],
            np.sum(g * x.values, axis=(1, 2)),
            g.sum(axis=(1, 2)),
        )

    return make_op("channel_affine", out, (x, gamma, beta), vjp)
