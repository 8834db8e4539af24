"""Differentiable operators.

Binary elementwise ops accept two tensors of identical shape, or a tensor and
a python scalar. There is no general broadcasting; biases and affine
parameters are folded into the ops that need them (``linear``, ``conv2d``,
``instance_norm``).
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from . import kernels
from .tensor import Tensor, as_tensor, make_node, shape_error, ShapeError

NEG_FILL = -1e30  # stands in for -inf in masked logits; exp() underflows to exactly 0


def _is_scalar(x) -> bool:
    return isinstance(x, (int, float, np.floating, np.integer))


def _same(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise shape_error(op, a.shape, b.shape)


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------
def add(a: Tensor, b) -> Tensor:
    if _is_scalar(b):
        return make_node(a.data + a.dtype.type(b), (a,), lambda g: (g,))
    b = as_tensor(b, a.dtype)
    _same("add", a, b)
    return make_node(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b) -> Tensor:
    if _is_scalar(b):
        return make_node(a.data - a.dtype.type(b), (a,), lambda g: (g,))
    b = as_tensor(b, a.dtype)
    _same("sub", a, b)
    return make_node(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b) -> Tensor:
    if _is_scalar(b):
        s = a.dtype.type(b)
        return make_node(a.data * s, (a,), lambda g: (g * s,))
    b = as_tensor(b, a.dtype)
    _same("mul", a, b)
    ad, bd = a.data, b.data
    return make_node(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def div(a: Tensor, b) -> Tensor:
    if _is_scalar(b):
        s = a.dtype.type(1.0 / b)
        return make_node(a.data * s, (a,), lambda g: (g * s,))
    b = as_tensor(b, a.dtype)
    _same("div", a, b)
    ad, bd = a.data, b.data
    out = ad / bd
    return make_node(out, (a, b), lambda g: (g / bd, -g * out / bd))


def neg(a: Tensor) -> Tensor:
    return make_node(-a.data, (a,), lambda g: (-g,))


def reciprocal(a: Tensor) -> Tensor:
    out = 1.0 / a.data
    return make_node(out, (a,), lambda g: (-g * out * out,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return make_node(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    return make_node(np.log(ad), (a,), lambda g: (g / ad,))


def abs(a: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    ad = a.data
    return make_node(np.abs(ad), (a,), lambda g: (g * np.sign(ad),))


def square(a: Tensor) -> Tensor:
    ad = a.data
    return make_node(ad * ad, (a,), lambda g: (2 * g * ad,))


def relu(a: Tensor) -> Tensor:
    pos = a.data > 0
    return make_node(np.maximum(a.data, 0), (a,), lambda g: (g * pos,))


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    ad = a.data
    inside = (ad >= lo) & (ad <= hi)
    return make_node(np.clip(ad, lo, hi), (a,), lambda g: (g * inside,))


def minimum(a: Tensor, b: Tensor) -> Tensor:
    _same("minimum", a, b)
    take_a = a.data <= b.data
    out = np.where(take_a, a.data, b.data)
    return make_node(out, (a, b), lambda g: (g * take_a, g * ~take_a))


# ---------------------------------------------------------------------------
# shape / reductions
# ---------------------------------------------------------------------------
def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum(a: Tensor, axis=None) -> Tensor:  # noqa: A001
    axes = _norm_axis(axis, a.ndim)
    out = np.asarray(a.data.sum(axis=axes), dtype=a.dtype)
    shape = a.shape
    keep = tuple(1 if i in axes else s for i, s in enumerate(shape))
    return make_node(out, (a,), lambda g: (np.broadcast_to(g.reshape(keep), shape).copy(),))


def mean(a: Tensor, axis=None) -> Tensor:
    axes = _norm_axis(axis, a.ndim)
    count = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    return mul(sum(a, axes), 1.0 / count)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {old} as {tuple(shape)}") from exc
    return make_node(out, (a,), lambda g: (g.reshape(old),))


def concat(tensors: list, axis: int = -1) -> Tensor:
    """Concatenate along ``axis`` (the NHWC channel axis by default)."""
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(s != r for i, (s, r) in enumerate(zip(t.shape, ref)) if i != ax):
            raise shape_error("concat", ref, t.shape)
    sizes = [t.shape[ax] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in tensors], axis=ax)
    return make_node(out, tuple(tensors), lambda g: tuple(np.split(g, splits, axis=ax)))


def pick(a: Tensor, index: np.ndarray) -> Tensor:
    """Row-wise gather: ``out[i] = a[i, index[i]]`` for a 2D tensor."""
    if a.ndim != 2 or len(index) != a.shape[0]:
        raise shape_error("pick", a.shape, np.shape(index))
    rows = np.arange(a.shape[0])
    index = np.asarray(index)

    def grad(g):
        ga = np.zeros_like(a.data)
        ga[rows, index] = g
        return (ga,)

    return make_node(a.data[rows, index], (a,), grad)


# ---------------------------------------------------------------------------
# dense layers
# ---------------------------------------------------------------------------
def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w.T + b`` for x of shape (N, F), w of shape (O, F)."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
        raise shape_error("linear", x.shape, w.shape)
    xd, wd = x.data, w.data
    out = xd @ wd.T
    if b is not None:
        if b.shape != (w.shape[0],):
            raise shape_error("linear(bias)", w.shape, b.shape)
        out = out + b.data
        return make_node(out, (x, w, b), lambda g: (g @ wd, g.T @ xd, g.sum(0)))
    return make_node(out, (x, w), lambda g: (g @ wd, g.T @ xd))


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Stride-1 'same' convolution (cross-correlation), NHWC layout.

    ``x``: (N, H, W, C); ``w``: (k, k, C, O), k odd; ``b``: (O,).
    The zero-padded batch is flattened to rows of C values; every kernel tap is
    then a constant row offset, so each tap is one large GEMM over all samples.
    Offsets never cross sample boundaries for interior rows because the padding
    border is at least k // 2 wide.
    """
    if (x.ndim != 4 or w.ndim != 4 or w.shape[0] != w.shape[1] or w.shape[0] % 2 == 0
            or x.shape[3] != w.shape[2]):
        raise shape_error("conv2d", x.shape, w.shape)
    if b is not None and b.shape != (w.shape[3],):
        raise shape_error("conv2d(bias)", w.shape, b.shape)
    n, h, wd, c = x.shape
    k, o = w.shape[0], w.shape[3]
    p = k // 2
    hp, wp = h + 2 * p, wd + 2 * p
    rows = n * hp * wp
    lo = p * wp + p
    hi = rows - lo
    offsets = [(dy - p) * wp + (dx - p) for dy in range(k) for dx in range(k)]
    dt = x.dtype
    xp = np.zeros((n, hp, wp, c), dtype=dt)
    xp[:, p:p + h, p:p + wd] = x.data
    x2 = xp.reshape(rows, c)
    wk = w.data.reshape(k * k, c, o)
    out2 = np.zeros((rows, o), dtype=dt)
    use_cols = c * k * k <= 36
    if use_cols:
        # narrow inputs: one GEMM over a tap-major (k*k*C, rows) patch matrix
        x2t = np.ascontiguousarray(x2.T)
        cols = np.empty((k * k * c, hi - lo), dtype=dt)
        for t, off in enumerate(offsets):
            cols[t * c:(t + 1) * c] = x2t[:, lo + off:hi + off]
        del x2t
        wmat = w.data.reshape(k * k * c, o)
        np.matmul(cols.T, wmat, out=out2[lo:hi])
    else:
        for t, off in enumerate(offsets):
            out2[lo:hi] += x2[lo + off:hi + off] @ wk[t]
    out = np.ascontiguousarray(out2.reshape(n, hp, wp, o)[:, p:p + h, p:p + wd])
    del out2
    if b is not None:
        kernels.add_bias(out.reshape(-1, o), b.data)

    def grad(g):
        gp = np.zeros((n, hp, wp, o), dtype=g.dtype)
        gp[:, p:p + h, p:p + wd] = g
        g2 = gp.reshape(rows, o)[lo:hi]
        g2t = np.ascontiguousarray(g2.T)
        need_gx = x.requires_grad
        gx2 = None
        if use_cols:
            gw = (g2t @ cols.T).T.reshape(w.shape)
            if need_gx:
                gcols = wmat @ g2t
                gx2t = np.zeros((c, rows), dtype=g.dtype)
                for t, off in enumerate(offsets):
                    gx2t[:, lo + off:hi + off] += gcols[t * c:(t + 1) * c]
                gx2 = gx2t.T
        else:
            gw = np.empty((k * k, c, o), dtype=g.dtype)
            for t, off in enumerate(offsets):
                gw[t] = (g2t @ x2[lo + off:hi + off]).T
            gw = gw.reshape(w.shape)
            if need_gx:
                gx2 = np.zeros((rows, c), dtype=g.dtype)
                for t, off in enumerate(offsets):
                    gx2[lo + off:hi + off] += g2 @ wk[t].T
        gx = None
        if need_gx:
            gx = np.ascontiguousarray(gx2.reshape(n, hp, wp, c)[:, p:p + h, p:p + wd])
        grads = (gx, gw)
        if b is not None:
            grads += (_channel_sum(g),)
        return grads

    parents = (x, w) if b is None else (x, w, b)
    return make_node(out, parents, grad)


def max_pool2d(x: Tensor) -> Tensor:
    """2x2 max-pool, stride 2, NHWC. Gradient routes to the first maximal element
    in row-major window order."""
    if x.ndim != 4 or x.shape[1] % 2 or x.shape[2] % 2:
        raise ShapeError(f"max_pool2d: need (N, even H, even W, C), got {x.shape}")
    out, code = kernels.pool_forward(np.ascontiguousarray(x.data))
    return make_node(out, (x,), lambda g: (kernels.pool_backward(np.ascontiguousarray(g), code),))


def separable_filter(x: Tensor, rows: np.ndarray, cols: np.ndarray) -> Tensor:
    """Apply fixed linear maps on the last two axes: ``rows @ x @ cols.T``."""
    if x.ndim < 2 or rows.shape[1] != x.shape[-2] or cols.shape[1] != x.shape[-1]:
        raise shape_error("separable_filter", x.shape, (rows.shape, cols.shape))
    r = rows.astype(x.dtype, copy=False)
    c = cols.astype(x.dtype, copy=False)
    out = np.matmul(np.matmul(r, x.data), c.T)
    return make_node(out, (x,), lambda g: (np.matmul(np.matmul(r.T, g), c),))


@lru_cache(maxsize=None)
def bilinear_matrix(n: int) -> np.ndarray:
    """(2n, n) half-pixel bilinear interpolation matrix, edge-clamped."""
    m = np.zeros((2 * n, n))
    for dst in range(2 * n):
        src = max((dst + 0.5) / 2.0 - 0.5, 0.0)
        i0 = int(np.floor(src))
        i1 = min(i0 + 1, n - 1)
        frac = src - i0
        m[dst, i0] += 1.0 - frac
        m[dst, i1] += frac
    m.setflags(write=False)
    return m


def upsample2x(x: Tensor) -> Tensor:
    """Bilinear x2 upsampling of an NHWC tensor."""
    if x.ndim != 4:
        raise ShapeError(f"upsample2x: need (N, H, W, C), got {x.shape}")
    n, h, w, c = x.shape
    uh = bilinear_matrix(h).astype(x.dtype)
    uw = bilinear_matrix(w).astype(x.dtype)
    t = np.matmul(uh, x.data.reshape(n, h, w * c)).reshape(n * 2 * h, w, c)
    out = np.matmul(uw, t).reshape(n, 2 * h, 2 * w, c)

    def grad(g):
        gt = np.matmul(uw.T, g.reshape(n * 2 * h, 2 * w, c)).reshape(n, 2 * h, w * c)
        return (np.matmul(uh.T, gt).reshape(n, h, w, c),)

    return make_node(out, (x,), grad)


@lru_cache(maxsize=None)
def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    if size % 2 == 0:
        raise ValueError("gaussian window size must be odd")
    r = np.arange(size) - size // 2
    w = np.exp(-(r ** 2) / (2 * sigma ** 2))
    w /= w.sum()
    w.setflags(write=False)
    return w


@lru_cache(maxsize=None)
def gaussian_valid_matrix(n: int, size: int = 11, sigma: float = 1.5) -> np.ndarray:
    """(n - size + 1, n) matrix computing 'valid' 1D Gaussian-weighted means."""
    if n < size:
        raise ShapeError(f"gaussian window of size {size} does not fit extent {n}")
    w = gaussian_window(size, sigma)
    m = np.zeros((n - size + 1, n))
    for i in range(n - size + 1):
        m[i, i:i + size] = w
    m.setflags(write=False)
    return m


def local_mean(x: Tensor, size: int = 11, sigma: float = 1.5) -> Tensor:
    """Gaussian-weighted local means over 'valid' window placements."""
    return separable_filter(x, gaussian_valid_matrix(x.shape[-2], size, sigma),
                            gaussian_valid_matrix(x.shape[-1], size, sigma))


def _channel_sum(a: np.ndarray) -> np.ndarray:
    """Sum an (..., C) array over every axis but the last."""
    flat = a.reshape(-1, a.shape[-1])
    return np.ones(flat.shape[0], dtype=a.dtype) @ flat


def instance_norm(x: Tensor, gamma: Tensor | None = None, beta: Tensor | None = None,
                  eps: float = 1e-5) -> Tensor:
    """Per-sample, per-channel normalisation over H, W (NHWC) with optional affine."""
    if x.ndim != 4:
        raise ShapeError(f"instance_norm: need (N, H, W, C), got {x.shape}")
    c = x.shape[3]
    if gamma is not None and (gamma.shape != (c,) or beta is None or beta.shape != (c,)):
        raise shape_error("instance_norm(affine)", x.shape, gamma.shape)
    xd = np.ascontiguousarray(x.data)
    gd = gamma.data if gamma is not None else np.ones(c, xd.dtype)
    bd = beta.data if beta is not None else np.zeros(c, xd.dtype)
    out, xhat, inv = kernels.norm_forward(xd, gd, bd, float(eps))

    def grad(g):
        gx, dgamma, dbeta = kernels.norm_backward(np.ascontiguousarray(g), xhat, inv, gd)
        if gamma is None:
            return (gx,)
        return gx, dgamma.astype(g.dtype), dbeta.astype(g.dtype)

    parents = (x,) if gamma is None else (x, gamma, beta)
    return make_node(out, parents, grad)


# ---------------------------------------------------------------------------
# softmax family
# ---------------------------------------------------------------------------
def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=axis, keepdims=True)
    return make_node(p, (x,), lambda g: (p * (g - (g * p).sum(axis=axis, keepdims=True)),))


def log_softmax(x: Tensor, valid: np.ndarray | None = None) -> Tensor:
    """Log-softmax over the last axis; entries with ``valid == False`` get
    probability exactly zero and receive no gradient."""
    xd = x.data
    if valid is not None:
        valid = np.asarray(valid, dtype=bool)
        if valid.shape != xd.shape:
            raise shape_error("log_softmax(mask)", xd.shape, valid.shape)
        if not valid.any(axis=-1).all():
            raise ValueError("log_softmax: a row has no valid entries")
        xd = np.where(valid, xd, xd.dtype.type(NEG_FILL))
    m = xd.max(axis=-1, keepdims=True)
    z = xd - m
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def grad(g):
        gx = g - p * g.sum(axis=-1, keepdims=True)
        if valid is not None:
            gx = np.where(valid, gx, 0).astype(g.dtype)
        return (gx,)

    return make_node(out, (x,), grad)
