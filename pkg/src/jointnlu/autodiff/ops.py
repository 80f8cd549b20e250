"""Differentiable primitives.

Every function takes and returns :class:`Tensor`.  Plain arrays are accepted
wherever an input is a constant.  There is no implicit broadcasting: each
primitive states the shapes it accepts and raises ``ShapeError`` otherwise.
"""
from __future__ import annotations

import numpy as np

from .tensor import Tensor, as_tensor, record


class ShapeError(ValueError):
    pass


def _fail(op: str, *shapes) -> None:
    raise ShapeError(f"{op}: incompatible shapes {', '.join(str(tuple(s)) for s in shapes)}")


def _wrap(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=like.dtype if like is not None else None)


# ---------------------------------------------------------------- linear algebra


def matmul(a, b) -> Tensor:
    """``[..., k] @ [k, n] -> [..., n]`` for a rank-2 or rank-3 left operand."""
    a, b = as_tensor(a), as_tensor(b)
    if b.data.ndim != 2 or a.data.ndim not in (2, 3) or a.shape[-1] != b.shape[0]:
        _fail("matmul", a.shape, b.shape)
    A, B = a.data, b.data
    out = Tensor(A @ B)

    def back(g):
        ga = g @ B.T if a.requires_grad else None
        gb = None
        if b.requires_grad:
            gb = A.reshape(-1, A.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return record(out, (a, b), back)


def add_bias(x, bias) -> Tensor:
    x, bias = as_tensor(x), as_tensor(bias)
    if bias.data.ndim != 1 or x.shape[-1] != bias.shape[0]:
        _fail("add_bias", x.shape, bias.shape)
    out = Tensor(x.data + bias.data)
    n = bias.shape[0]
    return record(out, (x, bias), lambda g: (g, g.reshape(-1, n).sum(axis=0)))


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        _fail("add", a.shape, b.shape)
    return record(Tensor(a.data + b.data), (a, b), lambda g: (g, g))


def mul(a, b) -> Tensor:
    """Elementwise product of equal-shaped tensors."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        _fail("mul", a.shape, b.shape)
    A, B = a.data, b.data
    return record(Tensor(A * B), (a, b), lambda g: (g * B, g * A))


def scale(x, c: float) -> Tensor:
    x = as_tensor(x)
    c = x.dtype.type(c)
    return record(Tensor(x.data * c), (x,), lambda g: (g * c,))


def sum_all(x) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    return record(Tensor(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, shape).copy(),))


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    try:
        data = x.data.reshape(shape)
    except ValueError:
        _fail("reshape", old, shape)
    return record(Tensor(data), (x,), lambda g: (g.reshape(old),))


# ---------------------------------------------------------------- slicing and stacking


def concat_last_axis(*xs) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    lead = xs[0].shape[:-1]
    if any(x.shape[:-1] != lead for x in xs):
        _fail("concat_last_axis", *(x.shape for x in xs))
    sizes = [x.shape[-1] for x in xs]
    bounds = np.cumsum([0] + sizes)
    out = Tensor(np.concatenate([x.data for x in xs], axis=-1))

    def back(g):
        return [g[..., bounds[i]:bounds[i + 1]] for i in range(len(xs))]

    return record(out, xs, back)


def slice_last_axis(x, start: int, stop: int) -> Tensor:
    x = as_tensor(x)
    if not 0 <= start < stop <= x.shape[-1]:
        _fail("slice_last_axis", x.shape, (start, stop))
    shape = x.shape

    def back(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[..., start:stop] = g
        return (full,)

    return record(Tensor(x.data[..., start:stop]), (x,), back)


def slice_rows(x, start: int, stop: int) -> Tensor:
    """Rows ``start:stop`` of a rank-2 tensor."""
    x = as_tensor(x)
    if x.data.ndim != 2 or not 0 <= start < stop <= x.shape[0]:
        _fail("slice_rows", x.shape, (start, stop))
    shape = x.shape

    def back(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[start:stop] = g
        return (full,)

    return record(Tensor(x.data[start:stop]), (x,), back)


def select_time(x, t: int) -> Tensor:
    """``x[:, t, :]`` of a ``[batch, time, dim]`` tensor."""
    x = as_tensor(x)
    if x.data.ndim != 3 or not 0 <= t < x.shape[1]:
        _fail("select_time", x.shape, (t,))
    shape = x.shape

    def back(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[:, t, :] = g
        return (full,)

    return record(Tensor(x.data[:, t, :]), (x,), back)


def stack_time(xs) -> Tensor:
    """Stack ``T`` tensors of shape ``[batch, dim]`` into ``[batch, T, dim]``."""
    xs = [as_tensor(x) for x in xs]
    shape = xs[0].shape
    if len(shape) != 2 or any(x.shape != shape for x in xs):
        _fail("stack_time", *(x.shape for x in xs))
    out = Tensor(np.stack([x.data for x in xs], axis=1))
    return record(out, xs, lambda g: [g[:, t, :] for t in range(len(xs))])


# ---------------------------------------------------------------- nonlinearities


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return record(Tensor(y), (x,), lambda g: (g * (1 - y * y),))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    # exp(-|x|) never overflows
    e = np.exp(-np.abs(x.data))
    y = np.where(x.data >= 0, 1 / (1 + e), e / (1 + e))
    return record(Tensor(y), (x,), lambda g: (g * y * (1 - y),))


def relu(x) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    return record(Tensor(np.where(pos, x.data, 0)), (x,), lambda g: (g * pos,))


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax_last_axis(x) -> Tensor:
    x = as_tensor(x)
    y = np.exp(_log_softmax(x.data))

    def back(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return record(Tensor(y), (x,), back)


# ---------------------------------------------------------------- lookup, convolution, pooling


def embedding_gather(table, ids) -> Tensor:
    """Rows of ``table [V, d]`` for an integer array ``ids`` of rank 1 or 2."""
    table = as_tensor(table)
    ids = np.asarray(ids)
    if table.data.ndim != 2 or ids.ndim not in (1, 2) or ids.dtype.kind not in "iu":
        _fail("embedding_gather", table.shape, ids.shape)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"embedding_gather: index out of range for table of {table.shape[0]} rows")
    shape = table.shape

    def back(g):
        full = np.zeros(shape, dtype=g.dtype)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, shape[1]))
        return (full,)

    return record(Tensor(table.data[ids]), (table,), back)


def _same_pad(width: int) -> tuple[int, int]:
    left = (width - 1) // 2
    return left, width - 1 - left


def conv1d_over_time(x, kernel, bias) -> Tensor:
    """Same-padded 1-D convolution.

    ``x [N, L, C]``, ``kernel [width, C, F]``, ``bias [F]`` -> ``[N, L, F]``.
    Positions outside the sequence read zeros, so ``L == 1`` is fine for any width.
    """
    x, kernel, bias = as_tensor(x), as_tensor(kernel), as_tensor(bias)
    if (x.data.ndim != 3 or kernel.data.ndim != 3 or bias.data.ndim != 1
            or kernel.shape[1] != x.shape[2] or bias.shape[0] != kernel.shape[2]):
        _fail("conv1d_over_time", x.shape, kernel.shape, bias.shape)
    N, L, C = x.shape
    W, _, F = kernel.shape
    left, right = _same_pad(W)
    padded = np.pad(x.data, ((0, 0), (left, right), (0, 0)))
    # windows[n, t, w, c] = padded[n, t + w, c]
    windows = np.stack([padded[:, w:w + L, :] for w in range(W)], axis=2).reshape(N, L, W * C)
    K = kernel.data.reshape(W * C, F)
    out = Tensor(windows @ K + bias.data)

    def back(g):
        gx = gk = gb = None
        if x.requires_grad:
            gw = (g @ K.T).reshape(N, L, W, C)
            gp = np.zeros_like(padded)
            for w in range(W):
                gp[:, w:w + L, :] += gw[:, :, w, :]
            gx = gp[:, left:left + L, :]
        if kernel.requires_grad:
            gk = (windows.reshape(-1, W * C).T @ g.reshape(-1, F)).reshape(W, C, F)
        if bias.requires_grad:
            gb = g.reshape(-1, F).sum(axis=0)
        return gx, gk, gb

    return record(out, (x, kernel, bias), back)


def max_pool_over_time(x, mask=None) -> Tensor:
    """Max over axis 1 of ``x [N, L, F]`` -> ``[N, F]``.

    With ``mask [N, L]`` only valid positions compete; rows with no valid
    position produce zeros.  Ties route the gradient to the first maximum.
    """
    x = as_tensor(x)
    if x.data.ndim != 3:
        _fail("max_pool_over_time", x.shape)
    data = x.data
    N, L, F = x.shape
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (N, L):
            _fail("max_pool_over_time", x.shape, mask.shape)
        data = np.where(mask[:, :, None], data, -np.inf)
    arg = data.argmax(axis=1)  # [N, F]
    val = np.take_along_axis(data, arg[:, None, :], axis=1)[:, 0, :]
    empty = ~np.isfinite(val)
    val = np.where(empty, 0, val).astype(x.dtype)

    def back(g):
        g = np.where(empty, 0, g)
        full = np.zeros((N, L, F), dtype=g.dtype)
        np.put_along_axis(full, arg[:, None, :], g[:, None, :], axis=1)
        return (full,)

    return record(Tensor(val), (x,), back)


# ---------------------------------------------------------------- masking and regularisation


def dropout(x, rate: float, train_mode: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors are scaled by ``1 / (1 - rate)``; identity in eval mode."""
    x = as_tensor(x)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not train_mode or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in train mode needs an rng")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)
    return record(Tensor(x.data * keep), (x,), lambda g: (g * keep,))


def blend(mask, a, b) -> Tensor:
    """Row-wise select: ``mask[i] * a[i] + (1 - mask[i]) * b[i]`` for ``[batch, dim]`` inputs."""
    a, b = as_tensor(a), as_tensor(b)
    m = np.asarray(mask, dtype=a.dtype)
    if a.shape != b.shape or a.data.ndim != 2 or m.shape != (a.shape[0],):
        _fail("blend", m.shape, a.shape, b.shape)
    m = m[:, None]
    inv = 1 - m
    return record(Tensor(m * a.data + inv * b.data), (a, b), lambda g: (g * m, g * inv))


def mask_time(x, mask) -> Tensor:
    """Zero the padded steps of ``x [batch, time, dim]`` given ``mask [batch, time]``."""
    x = as_tensor(x)
    m = np.asarray(mask, dtype=x.dtype)
    if x.data.ndim != 3 or m.shape != x.shape[:2]:
        _fail("mask_time", x.shape, m.shape)
    m = m[:, :, None]
    return record(Tensor(x.data * m), (x,), lambda g: (g * m,))


def masked_mean_over_time(x, mask) -> Tensor:
    """Mean over the valid steps of ``x [batch, time, dim]`` -> ``[batch, dim]``."""
    x = as_tensor(x)
    m = np.asarray(mask, dtype=x.dtype)
    if x.data.ndim != 3 or m.shape != x.shape[:2]:
        _fail("masked_mean_over_time", x.shape, m.shape)
    counts = m.sum(axis=1)
    if np.any(counts == 0):
        raise ValueError("masked_mean_over_time: a row has no valid steps")
    w = (m / counts[:, None])[:, :, None]
    return record(Tensor((x.data * w).sum(axis=1)), (x,), lambda g: (g[:, None, :] * w,))


def masked_cross_entropy(logits, targets, mask=None) -> Tensor:
    """Mean negative log-likelihood over the unmasked positions.

    ``logits [..., K]``; ``targets`` integer array of the leading shape;
    ``mask`` (optional) 0/1 array of the leading shape.  Targets at masked
    positions are ignored, so they may hold any value.
    """
    logits = as_tensor(logits)
    targets = np.asarray(targets)
    lead = logits.shape[:-1]
    if targets.shape != lead:
        _fail("masked_cross_entropy", logits.shape, targets.shape)
    m = np.ones(lead, dtype=logits.dtype) if mask is None else np.asarray(mask, dtype=logits.dtype)
    if m.shape != lead:
        _fail("masked_cross_entropy", logits.shape, m.shape)
    total = m.sum()
    if total == 0:
        raise ValueError("masked_cross_entropy: mask selects no positions")
    K = logits.shape[-1]
    safe = np.where(m > 0, targets, 0)
    if safe.size and (safe.min() < 0 or safe.max() >= K):
        raise IndexError("masked_cross_entropy: target index out of range")
    logp = _log_softmax(logits.data)
    picked = np.take_along_axis(logp, safe[..., None], axis=-1)[..., 0]
    loss = -(picked * m).sum() / total
    out = Tensor(np.asarray(loss, dtype=logits.dtype))

    def back(g):
        p = np.exp(logp)
        onehot = np.zeros_like(p)
        np.put_along_axis(onehot, safe[..., None], 1.0, axis=-1)
        return ((p - onehot) * (m / total)[..., None] * g,)

    return record(out, (logits,), back)
