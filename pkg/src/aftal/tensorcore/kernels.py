"""Differentiable kernels used by the detection head.

Temporal sequences are [T x C] tensors (time major).  Convolution is
cross-correlation with zero padding, no kernel flip.  Region pooling expands
fractional endpoints to the integer index range [floor(lo), ceil(hi)] clamped
to the sequence, and max pooling routes the whole gradient of each channel to
that channel's first argmax index.
"""

from __future__ import annotations

import numpy as np

from .tensor import DimensionError, Tensor


def conv1d(x: Tensor, w: Tensor, b: Tensor | None = None,
           stride: int = 1, pad: int = 0) -> Tensor:
    """Temporal cross-correlation of x [T x Cin] with w [K x Cin x Cout].

    out[t, o] = b[o] + sum_{k,c} w[k, c, o] * x_pad[t*stride + k, c]
    """
    if x.ndim != 2 or w.ndim != 3:
        raise DimensionError(f"conv1d expects [T x Cin] and [K x Cin x Cout], got {x.shape}, {w.shape}")
    T, c_in = x.shape
    K, w_cin, c_out = w.shape
    if w_cin != c_in:
        raise DimensionError(f"conv1d channel mismatch: x has {c_in}, w has {w_cin}")
    if K % 2 != 1:
        raise DimensionError(f"kernel size {K} must be odd")
    if stride < 1 or pad < 0:
        raise DimensionError(f"invalid stride={stride} pad={pad}")
    if b is not None and b.shape != (c_out,):
        raise DimensionError(f"bias shape {b.shape} != ({c_out},)")
    t_out = (T + 2 * pad - K) // stride + 1
    if t_out < 1:
        raise DimensionError(f"conv1d output would be empty (T={T}, K={K}, stride={stride}, pad={pad})")

    xp = np.zeros((T + 2 * pad, c_in), dtype=x.data.dtype)
    xp[pad:pad + T] = x.data
    win = np.arange(t_out)[:, None] * stride + np.arange(K)[None, :]
    cols = xp[win].reshape(t_out, K * c_in)
    wmat = w.data.reshape(K * c_in, c_out)
    out_data = cols @ wmat
    if b is not None:
        out_data = out_data + b.data

    def grad_fn(g):
        grads = []
        gw = (cols.T @ g).reshape(K, c_in, c_out)
        grads.append((w, gw))
        if b is not None:
            grads.append((b, g.sum(axis=0)))
        gcols = (g @ wmat.T).reshape(t_out, K, c_in)
        gxp = np.zeros_like(xp)
        base = np.arange(t_out) * stride
        for k in range(K):
            gxp[base + k] += gcols[:, k, :]
        grads.append((x, gxp[pad:pad + T]))
        return tuple(grads)

    parents = (x, w) if b is None else (x, w, b)
    return Tensor(out_data, _parents=parents, _grad_fn=grad_fn)


def group_norm(x: Tensor, groups: int, gamma: Tensor, beta: Tensor,
               eps: float = 1e-5) -> Tensor:
    """Normalize each channel group to zero mean / unit variance over T x C/g."""
    if x.ndim != 2:
        raise DimensionError("group_norm expects [T x C]")
    T, C = x.shape
    if C % groups != 0:
        raise DimensionError(f"channels {C} not divisible by groups {groups}")
    if gamma.shape != (C,) or beta.shape != (C,):
        raise DimensionError("gamma/beta must be per-channel vectors")
    if eps <= 0:
        raise DimensionError("eps must be positive")

    per = C // groups
    xg = x.data.reshape(T, groups, per)
    mu = xg.mean(axis=(0, 2), keepdims=True)
    var = xg.var(axis=(0, 2), keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat_g = (xg - mu) * inv_std
    xhat = xhat_g.reshape(T, C)
    out_data = gamma.data * xhat + beta.data

    def grad_fn(g):
        dgamma = (g * xhat).sum(axis=0)
        dbeta = g.sum(axis=0)
        dxhat = (g * gamma.data).reshape(T, groups, per)
        mean_dxhat = dxhat.mean(axis=(0, 2), keepdims=True)
        mean_dxhat_xhat = (dxhat * xhat_g).mean(axis=(0, 2), keepdims=True)
        dx = inv_std * (dxhat - mean_dxhat - xhat_g * mean_dxhat_xhat)
        return ((x, dx.reshape(T, C)), (gamma, dgamma), (beta, dbeta))

    return Tensor(out_data, _parents=(x, gamma, beta), _grad_fn=grad_fn)


def pointwise(x: Tensor, kind: str) -> Tensor:
    """Elementwise nonlinearity: relu, tanh or sigmoid."""
    if kind == "relu":
        return x.relu()
    if kind == "tanh":
        return x.tanh()
    if kind == "sigmoid":
        return x.sigmoid()
    raise ValueError(f"unknown pointwise kind {kind!r}")


def _region_index_range(lo: float, hi: float, length: int) -> tuple[int, int]:
    if hi < lo:
        raise DimensionError(f"region [{lo}, {hi}] is inverted; caller must clamp")
    if length < 1:
        raise AssertionError("region pooling over an empty sequence")
    a = int(np.floor(lo))
    b = int(np.ceil(hi))
    a = min(max(a, 0), length - 1)
    b = min(max(b, 0), length - 1)
    assert a <= b, "clamped region index set is empty"
    return a, b


def region_max_pool(x: Tensor, region: tuple[float, float]) -> Tensor:
    """Per-channel max of x over the integer indices covered by region.

    The backward pass routes each channel's incoming gradient entirely to the
    channel's argmax row (first index on ties).
    """
    lo, hi = region
    a, b = _region_index_range(lo, hi, x.shape[0])
    seg = x.data[a:b + 1]
    arg = seg.argmax(axis=0) + a
    cols = np.arange(x.shape[1])
    out_data = x.data[arg, cols]
    shape = x.shape

    def grad_fn(g):
        full = np.zeros(shape, dtype=g.dtype)
        np.add.at(full, (arg, cols), g)
        return ((x, full),)

    return Tensor(out_data, _parents=(x,), _grad_fn=grad_fn)


def _region_bounds_batch(los, his, length: int) -> tuple[np.ndarray, np.ndarray]:
    lo_arr = np.asarray(los, dtype=np.float64)
    hi_arr = np.asarray(his, dtype=np.float64)
    if np.any(hi_arr < lo_arr):
        raise DimensionError("inverted region; caller must clamp")
    if length < 1:
        raise AssertionError("region pooling over an empty sequence")
    a = np.clip(np.floor(lo_arr), 0, length - 1).astype(np.intp)
    b = np.clip(np.ceil(hi_arr), 0, length - 1).astype(np.intp)
    return a, b


def _segment_rows(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row indices of all segments [a_i, b_i] flattened, plus segment offsets."""
    lens = b - a + 1
    offsets = np.concatenate(([0], np.cumsum(lens)[:-1]))
    total = int(lens.sum())
    flat = np.arange(total) - np.repeat(offsets, lens) + np.repeat(a, lens)
    return flat, offsets, lens


def region_max_pool_batch(x: Tensor, los, his) -> Tensor:
    """region_max_pool over N regions at once; returns [N x C].

    Semantically identical to stacking ``region_max_pool`` results, with one
    graph node instead of N.
    """
    T, C = x.shape
    a, b = _region_bounds_batch(los, his, T)
    n = len(a)
    flat, offsets, lens = _segment_rows(a, b)
    vals = x.data[flat]
    out_data = np.maximum.reduceat(vals, offsets, axis=0)
    # first argmax per segment and channel: minimize row index over maxima
    hit = vals == np.repeat(out_data, lens, axis=0)
    pos = np.where(hit, flat[:, None], T)
    args = np.minimum.reduceat(pos, offsets, axis=0)
    shape = x.shape

    def grad_fn(g):
        full = np.zeros(shape, dtype=g.dtype)
        cols = np.broadcast_to(np.arange(C), (n, C))
        np.add.at(full, (args.ravel(), cols.ravel()), g.ravel())
        return ((x, full),)

    return Tensor(out_data, _parents=(x,), _grad_fn=grad_fn)


def region_mean_pool(x: Tensor, region: tuple[float, float]) -> Tensor:
    """Per-channel average over the integer index set of region."""
    lo, hi = region
    a, b = _region_index_range(lo, hi, x.shape[0])
    count = b - a + 1
    out_data = x.data[a:b + 1].mean(axis=0)
    shape = x.shape

    def grad_fn(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[a:b + 1] = g / count
        return ((x, full),)

    return Tensor(out_data, _parents=(x,), _grad_fn=grad_fn)


def region_mean_pool_batch(x: Tensor, los, his) -> Tensor:
    """Batched ``region_mean_pool``; returns [N x C]."""
    T, C = x.shape
    a, b = _region_bounds_batch(los, his, T)
    flat, offsets, lens = _segment_rows(a, b)
    out_data = np.add.reduceat(x.data[flat], offsets, axis=0) / lens[:, None]
    shape = x.shape

    def grad_fn(g):
        full = np.zeros(shape, dtype=g.dtype)
        np.add.at(full, flat, np.repeat(g / lens[:, None], lens, axis=0))
        return ((x, full),)

    return Tensor(out_data, _parents=(x,), _grad_fn=grad_fn)


def _three_sample_indices(lo: float, hi: float, length: int) -> np.ndarray:
    # nearest-index lookup at lo, midpoint and hi, after clamping
    pts = np.array([lo, (lo + hi) / 2.0, hi], dtype=np.float64)
    idx = np.rint(pts).astype(np.intp)
    return np.clip(idx, 0, length - 1)


def region_stack_pool(x: Tensor, region: tuple[float, float]) -> Tensor:
    """Concatenate three uniformly spaced samples (lo, mid, hi) into 3C values."""
    lo, hi = region
    if hi < lo:
        raise DimensionError(f"region [{lo}, {hi}] is inverted; caller must clamp")
    idx = _three_sample_indices(lo, hi, x.shape[0])
    out_data = x.data[idx].reshape(-1)
    shape = x.shape

    def grad_fn(g):
        full = np.zeros(shape, dtype=g.dtype)
        np.add.at(full, idx, g.reshape(3, shape[1]))
        return ((x, full),)

    return Tensor(out_data, _parents=(x,), _grad_fn=grad_fn)


def _three_sample_indices_batch(los, his, length: int) -> np.ndarray:
    lo_arr = np.asarray(los, dtype=np.float64)
    hi_arr = np.asarray(his, dtype=np.float64)
    if np.any(hi_arr < lo_arr):
        raise DimensionError("inverted region; caller must clamp")
    pts = np.stack([lo_arr, (lo_arr + hi_arr) / 2.0, hi_arr], axis=1)
    return np.clip(np.rint(pts), 0, length - 1).astype(np.intp)


def region_stack_pool_batch(x: Tensor, los, his) -> Tensor:
    """Batched ``region_stack_pool``; returns [N x 3C]."""
    T, C = x.shape
    idx = _three_sample_indices_batch(los, his, T)
    n = idx.shape[0]
    out_data = x.data[idx].reshape(n, 3 * C)
    shape = x.shape

    def grad_fn(g):
        full = np.zeros(shape, dtype=g.dtype)
        np.add.at(full, idx.ravel(), g.reshape(n * 3, C))
        return ((x, full),)

    return Tensor(out_data, _parents=(x,), _grad_fn=grad_fn)


def region_conv_pool(x: Tensor, region: tuple[float, float], taps: Tensor) -> Tensor:
    """Learned aggregation of the three samples: out = sum_j taps[j] * sample_j."""
    if taps.shape != (3,):
        raise DimensionError("conv pooling uses exactly 3 taps")
    lo, hi = region
    if hi < lo:
        raise DimensionError(f"region [{lo}, {hi}] is inverted; caller must clamp")
    idx = _three_sample_indices(lo, hi, x.shape[0])
    samples = x.data[idx]
    out_data = (taps.data[:, None] * samples).sum(axis=0)
    shape = x.shape

    def grad_fn(g):
        full = np.zeros(shape, dtype=g.dtype)
        np.add.at(full, idx, taps.data[:, None] * g[None, :])
        gt = (samples * g[None, :]).sum(axis=1)
        return ((x, full), (taps, gt))

    return Tensor(out_data, _parents=(x, taps), _grad_fn=grad_fn)


def region_conv_pool_batch(x: Tensor, los, his, taps: Tensor) -> Tensor:
    """Batched ``region_conv_pool``; returns [N x C]."""
    if taps.shape != (3,):
        raise DimensionError("conv pooling uses exactly 3 taps")
    T, C = x.shape
    idx = _three_sample_indices_batch(los, his, T)
    n = idx.shape[0]
    samples = x.data[idx]                       # [N, 3, C]
    out_data = (taps.data[None, :, None] * samples).sum(axis=1)
    shape = x.shape

    def grad_fn(g):
        full = np.zeros(shape, dtype=g.dtype)
        weighted = taps.data[None, :, None] * g[:, None, :]
        np.add.at(full, idx.ravel(), weighted.reshape(n * 3, C))
        gt = (samples * g[:, None, :]).sum(axis=(0, 2))
        return ((x, full), (taps, gt))

    return Tensor(out_data, _parents=(x, taps), _grad_fn=grad_fn)


def linear_upsample(x: Tensor, factor: int) -> Tensor:
    """Upsample [T x C] to [T*factor x C] by linear interpolation.

    Output row j samples the input at position j / factor; positions past the
    last row replicate the final value.  factor=1 is the identity.
    """
    if factor < 1:
        raise DimensionError(f"upsample factor {factor} must be >= 1")
    T, C = x.shape
    pos = np.arange(T * factor, dtype=np.float64) / factor
    i0 = np.floor(pos).astype(np.intp)
    frac = pos - i0
    i0 = np.minimum(i0, T - 1)
    i1 = np.minimum(i0 + 1, T - 1)
    w1 = frac[:, None]
    w0 = 1.0 - w1
    out_data = w0 * x.data[i0] + w1 * x.data[i1]
    shape = x.shape

    def grad_fn(g):
        full = np.zeros(shape, dtype=g.dtype)
        np.add.at(full, i0, w0 * g)
        np.add.at(full, i1, w1 * g)
        return ((x, full),)

    return Tensor(out_data, _parents=(x,), _grad_fn=grad_fn)
