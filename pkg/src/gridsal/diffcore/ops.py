"""Forward ops and their reverse-mode rules.

Convolution is im2col + one BLAS sgemm; its input gradient reuses the
same fast path as a flipped-kernel convolution when stride is 1 (the only
configuration the segmentation net uses), and falls back to an explicit
col2im scatter otherwise.
"""

from __future__ import annotations

import numpy as np

from gridsal.diffcore.tensor import Tensor

_TINY = np.float32(1e-38)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float32))


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    # xp is the already padded input (N, C, Hp, Wp); output (N*ho*wo, C*kh*kw)
    n, c, _, _ = xp.shape
    sn, sc, sh, sw = xp.strides
    win = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, ho, wo, c, kh, kw),
        strides=(sn, sh * stride, sw * stride, sc, sh, sw),
        writeable=False,
    )
    return win.reshape(n * ho * wo, c * kh * kw)


def _conv_forward_raw(x: np.ndarray, w: np.ndarray, stride: int, padding: int):
    n, c, h, wd = x.shape
    co, ci, kh, kw = w.shape
    if ci != c:
        raise ValueError(f"conv2d channel mismatch: input has {c}, weight expects {ci}")
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    if ho <= 0 or wo <= 0:
        raise ValueError("conv2d output would be empty")
    if padding:
        xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x
    cols = _im2col(xp, kh, kw, stride, ho, wo)
    out = cols @ w.reshape(co, ci * kh * kw).T
    out = np.ascontiguousarray(out.reshape(n, ho, wo, co).transpose(0, 3, 1, 2))
    return out, cols


def _col2im_add(dcols: np.ndarray, xshape, kh, kw, stride, padding, ho, wo) -> np.ndarray:
    # Generic scatter-add used only for stride > 1.
    n, c, h, w = xshape
    hp, wp = h + 2 * padding, w + 2 * padding
    dxp = np.zeros((n, c, hp, wp), dtype=np.float32)
    dcols = dcols.reshape(n, ho, wo, c, kh, kw)
    for u in range(kh):
        for v in range(kw):
            dxp[:, :, u : u + ho * stride : stride, v : v + wo * stride : stride] += (
                dcols[:, :, :, :, u, v].transpose(0, 3, 1, 2)
            )
    if padding:
        return dxp[:, :, padding : padding + h, padding : padding + w]
    return dxp


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
           padding: int = 0) -> Tensor:
    """2D cross-correlation over NCHW input with OIHW weights.

    Odd kernel sides only; padding (k-1)/2 preserves the spatial size at
    stride 1. Backward yields gradients for input, weight and bias.
    """
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ValueError("conv2d expects 4D input and weight")
    co, ci, kh, kw = weight.data.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError("conv2d kernel sides must be odd")
    if bias is not None and bias.data.shape != (co,):
        raise ValueError("conv2d bias must have shape (out_channels,)")

    out, _ = _conv_forward_raw(x.data, weight.data, stride, padding)
    if bias is not None:
        out += bias.data.reshape(1, co, 1, 1)

    n, _, h, w = x.data.shape
    ho, wo = out.shape[2], out.shape[3]
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(gout: np.ndarray):
        gy = np.ascontiguousarray(gout.transpose(0, 2, 3, 1)).reshape(n * ho * wo, co)
        gx = gw = gb = None
        if x.requires_grad:
            if stride == 1:
                # d/dx of a stride-1 correlation is a correlation with the
                # spatially flipped kernel, channels swapped.
                wflip = np.ascontiguousarray(
                    weight.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
                )
                gx, _ = _conv_forward_raw(gout, wflip, 1, kh - 1 - padding)
            else:
                dcols = gy @ weight.data.reshape(co, ci * kh * kw)
                gx = _col2im_add(dcols, x.data.shape, kh, kw, stride, padding, ho, wo)
        if weight.requires_grad:
            if padding:
                xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
            else:
                xp = x.data
            cols = _im2col(xp, kh, kw, stride, ho, wo)
            gw = (gy.T @ cols).reshape(co, ci, kh, kw)
        if bias is not None and bias.requires_grad:
            gb = gy.sum(axis=0)
        if bias is None:
            return gx, gw
        return gx, gw, gb

    return Tensor._from_op(out, parents, backward)


# ---------------------------------------------------------------------------
# pooling / resampling / concat
# ---------------------------------------------------------------------------


def maxpool2x2(x: Tensor) -> Tensor:
    """2x2 max pooling, stride 2. Backward routes the gradient to the first
    maximum of each window in row-major order."""
    n, c, h, w = x.data.shape
    if h % 2 or w % 2:
        raise ValueError("maxpool2x2 requires even spatial dims")
    win = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    win = np.ascontiguousarray(win).reshape(n, c, h // 2, w // 2, 4)
    am = win.argmax(axis=-1)
    out = np.take_along_axis(win, am[..., None], axis=-1)[..., 0]

    def backward(gout: np.ndarray):
        gwin = np.zeros((n, c, h // 2, w // 2, 4), dtype=np.float32)
        np.put_along_axis(gwin, am[..., None], gout[..., None], axis=-1)
        gx = gwin.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return (np.ascontiguousarray(gx).reshape(n, c, h, w),)

    return Tensor._from_op(out, (x,), backward)


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    """Nearest-neighbor upsampling by an integer factor on both spatial axes."""
    if factor < 1 or int(factor) != factor:
        raise ValueError("upsample factor must be a positive integer")
    n, c, h, w = x.data.shape
    out = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)

    def backward(gout: np.ndarray):
        g = gout.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5))
        return (g,)

    return Tensor._from_op(out, (x,), backward)


def upsample_nearest2x(x: Tensor) -> Tensor:
    return upsample_nearest(x, 2)


def resize_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Dense 1D bilinear resampling matrix (half-pixel-center convention)."""
    m = np.zeros((n_out, n_in), dtype=np.float32)
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    i0 = np.floor(src).astype(int)
    t = (src - i0).astype(np.float32)
    lo = np.clip(i0, 0, n_in - 1)
    hi = np.clip(i0 + 1, 0, n_in - 1)
    rows = np.arange(n_out)
    np.add.at(m, (rows, lo), 1.0 - t)
    np.add.at(m, (rows, hi), t)
    return m


def upsample_bilinear(x: Tensor, out_hw: tuple[int, int]) -> Tensor:
    """Bilinear resize to (H_out, W_out); separable, so forward and backward
    are two small matmuls each."""
    n, c, h, w = x.data.shape
    ho, wo = out_hw
    ry = resize_matrix(h, ho)
    rx = resize_matrix(w, wo)
    xr = x.data.reshape(n * c, h, w)
    out = np.matmul(np.matmul(ry, xr), rx.T).reshape(n, c, ho, wo)

    def backward(gout: np.ndarray):
        gr = gout.reshape(n * c, ho, wo)
        gx = np.matmul(np.matmul(ry.T, gr), rx).reshape(n, c, h, w)
        return (gx,)

    return Tensor._from_op(np.ascontiguousarray(out), (x,), backward)


def concat_channels(tensors) -> Tensor:
    """Concatenate NCHW tensors along the channel axis."""
    tensors = list(tensors)
    if not tensors:
        raise ValueError("concat_channels needs at least one tensor")
    base = tensors[0].data.shape
    for t in tensors[1:]:
        if t.data.shape[0] != base[0] or t.data.shape[2:] != base[2:]:
            raise ValueError("concat_channels spatial/batch mismatch")
    out = np.concatenate([t.data for t in tensors], axis=1)
    splits = np.cumsum([t.data.shape[1] for t in tensors])[:-1]

    def backward(gout: np.ndarray):
        return tuple(np.ascontiguousarray(g) for g in np.split(gout, splits, axis=1))

    return Tensor._from_op(out, tuple(tensors), backward)


# ---------------------------------------------------------------------------
# activations / losses
# ---------------------------------------------------------------------------


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0.0)

    def backward(gout: np.ndarray):
        return (gout * (x.data > 0),)

    return Tensor._from_op(out, (x,), backward)


def softmax_channelwise(x: Tensor) -> Tensor:
    """Softmax over the channel axis of an NCHW tensor, per pixel."""
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)

    def backward(gout: np.ndarray):
        dot = (gout * p).sum(axis=1, keepdims=True)
        return (p * (gout - dot),)

    return Tensor._from_op(p, (x,), backward)


def cross_entropy(probs: Tensor, labels: np.ndarray) -> Tensor:
    """Mean -log p(label) over N*H*W pixels. `probs` is the channelwise
    softmax output; the gradient composed with the softmax backward gives
    the usual (p - onehot) / (N*H*W) at the softmax input."""
    n, c, h, w = probs.data.shape
    labels = np.asarray(labels)
    if labels.shape != (n, h, w):
        raise ValueError("labels must have shape (N, H, W)")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"labels out of range [0, {c})")
    lab = labels.astype(np.int64)
    p_lab = np.take_along_axis(probs.data, lab[:, None], axis=1)[:, 0]
    m = n * h * w
    loss = np.float32(-np.log(np.maximum(p_lab, _TINY), dtype=np.float32).mean())

    def backward(gout: np.ndarray):
        g = np.zeros_like(probs.data)
        inv = np.where(p_lab >= _TINY, -1.0 / np.maximum(p_lab, _TINY), 0.0) / m
        np.put_along_axis(g, lab[:, None], (gout * inv)[:, None].astype(np.float32), axis=1)
        return (g,)

    return Tensor._from_op(loss.reshape(()), (probs,), backward)


def select_channel(x: Tensor, channels: np.ndarray) -> Tensor:
    """Per-instance channel gather: out[i] = x[i, channels[i]]."""
    n = x.data.shape[0]
    channels = np.asarray(channels, dtype=np.int64)
    if channels.shape != (n,):
        raise ValueError("channels must have shape (N,)")
    idx = np.arange(n)
    out = x.data[idx, channels]

    def backward(gout: np.ndarray):
        g = np.zeros_like(x.data)
        g[idx, channels] = gout
        return (g,)

    return Tensor._from_op(np.ascontiguousarray(out), (x,), backward)


# ---------------------------------------------------------------------------
# elementwise and reductions
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    if isinstance(a, Tensor) and isinstance(b, Tensor):
        if a.data.shape != b.data.shape:
            raise ValueError("add shape mismatch")
        out = a.data + b.data

        def backward(gout):
            return gout, gout

        return Tensor._from_op(out, (a, b), backward)
    if isinstance(b, Tensor):
        a, b = b, a
    s = np.float32(b)

    def backward_s(gout):
        return (gout,)

    return Tensor._from_op(a.data + s, (a,), backward_s)


def sub(a, b) -> Tensor:
    if isinstance(a, Tensor) and isinstance(b, Tensor):
        if a.data.shape != b.data.shape:
            raise ValueError("sub shape mismatch")

        def backward(gout):
            return gout, -gout

        return Tensor._from_op(a.data - b.data, (a, b), backward)
    if isinstance(a, Tensor):
        def backward_r(gout):
            return (gout,)

        return Tensor._from_op(a.data - np.float32(b), (a,), backward_r)

    def backward_l(gout):
        return (-gout,)

    return Tensor._from_op(np.float32(a) - b.data, (b,), backward_l)


def mul(a, b) -> Tensor:
    if isinstance(a, Tensor) and isinstance(b, Tensor):
        if a.data.shape != b.data.shape:
            raise ValueError("mul shape mismatch")

        def backward(gout):
            ga = gout * b.data if a.requires_grad else None
            gb = gout * a.data if b.requires_grad else None
            return ga, gb

        return Tensor._from_op(a.data * b.data, (a, b), backward)
    if isinstance(b, Tensor):
        a, b = b, a
    s = np.float32(b)

    def backward_s(gout):
        return (gout * s,)

    return Tensor._from_op(a.data * s, (a,), backward_s)


def clip01(x: Tensor) -> Tensor:
    """Clamp to [0, 1]; pass-through gradient on the closed interval."""
    out = np.clip(x.data, 0.0, 1.0)

    def backward(gout):
        return (gout * ((x.data >= 0.0) & (x.data <= 1.0)),)

    return Tensor._from_op(out, (x,), backward)


def sum_all(x: Tensor) -> Tensor:
    out = np.float32(x.data.sum())

    def backward(gout):
        return (np.broadcast_to(gout, x.data.shape).astype(np.float32),)

    return Tensor._from_op(out.reshape(()), (x,), backward)


def sum_per_instance(x: Tensor) -> Tensor:
    """Sum every axis except the first: (N, ...) -> (N,)."""
    n = x.data.shape[0]
    out = x.data.reshape(n, -1).sum(axis=1)

    def backward(gout):
        shape = (n,) + (1,) * (x.data.ndim - 1)
        return (np.broadcast_to(gout.reshape(shape), x.data.shape).astype(np.float32),)

    return Tensor._from_op(np.ascontiguousarray(out), (x,), backward)
