"""LSTM cell and masked bidirectional LSTM built from the primitives.

Gate blocks in the packed weight ``[input + hidden, 4 * hidden]`` and bias
``[4 * hidden]`` are ordered (input, forget, candidate, output).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .tensor import Tensor


@dataclass
class LSTMParams:
    weight: Tensor  # [d + h, 4h]
    bias: Tensor  # [4h]

    @property
    def hidden(self) -> int:
        return self.bias.shape[0] // 4

    @property
    def input_dim(self) -> int:
        return self.weight.shape[0] - self.hidden

    def check(self) -> None:
        h4 = self.bias.shape[0]
        if self.bias.data.ndim != 1 or h4 % 4 or self.weight.data.ndim != 2 or self.weight.shape[1] != h4:
            raise ops.ShapeError(f"lstm: weight {self.weight.shape} and bias {self.bias.shape} are not [d+h, 4h], [4h]")


def _gates(z: Tensor, c_prev: Tensor, h: int) -> tuple[Tensor, Tensor]:
    i = ops.sigmoid(ops.slice_last_axis(z, 0, h))
    f = ops.sigmoid(ops.slice_last_axis(z, h, 2 * h))
    g = ops.tanh(ops.slice_last_axis(z, 2 * h, 3 * h))
    o = ops.sigmoid(ops.slice_last_axis(z, 3 * h, 4 * h))
    c = ops.add(ops.mul(f, c_prev), ops.mul(i, g))
    return ops.mul(o, ops.tanh(c)), c


def lstm_cell(x_t, h_prev, c_prev, params: LSTMParams) -> tuple[Tensor, Tensor]:
    """One step: ``x_t [B, d]``, ``h_prev``/``c_prev [B, h]`` -> ``(h_t, c_t)``."""
    params.check()
    x_t, h_prev, c_prev = ops.as_tensor(x_t), ops.as_tensor(h_prev), ops.as_tensor(c_prev)
    h = params.hidden
    if (x_t.data.ndim != 2 or h_prev.shape != (x_t.shape[0], h) or c_prev.shape != h_prev.shape
            or x_t.shape[1] != params.input_dim):
        raise ops.ShapeError(
            f"lstm_cell: x {x_t.shape}, h {h_prev.shape}, c {c_prev.shape} vs weight {params.weight.shape}"
        )
    z = ops.add_bias(ops.matmul(ops.concat_last_axis(x_t, h_prev), params.weight), params.bias)
    return _gates(z, c_prev, h)


def _run_direction(xw: Tensor, w_h: Tensor, mask: np.ndarray, steps, h: int):
    B = xw.shape[0]
    zeros = np.zeros((B, h), dtype=xw.dtype)
    h_t, c_t = Tensor(zeros), Tensor(zeros)
    outs = {}
    for t in steps:
        z = ops.add(ops.select_time(xw, t), ops.matmul(h_t, w_h))
        h_new, c_new = _gates(z, c_t, h)
        m = mask[:, t]
        # padded steps carry the previous state through unchanged
        h_t = ops.blend(m, h_new, h_t)
        c_t = ops.blend(m, c_new, c_t)
        outs[t] = h_t
    return outs, h_t, c_t


def bilstm(x, mask, params_fwd: LSTMParams, params_bwd: LSTMParams):
    """Masked bidirectional LSTM over ``x [B, T, d]``.

    Returns ``(outputs [B, T, 2h], (h_fwd_final, h_bwd_final))``.  The forward
    final state is the state at each row's last valid step; the backward final
    state is the state at step 0.  Outputs at padded steps are zero.

    Valid steps must form a prefix of each row.  The input projection is
    computed for all steps at once; only the recurrent term runs per step.
    """
    x = ops.as_tensor(x)
    mask = np.asarray(mask, dtype=x.dtype)
    if x.data.ndim != 3 or mask.shape != x.shape[:2]:
        raise ops.ShapeError(f"bilstm: x {x.shape}, mask {mask.shape}")
    T, d = x.shape[1], x.shape[2]
    finals = []
    per_dir = []
    for params, steps in ((params_fwd, range(T)), (params_bwd, range(T - 1, -1, -1))):
        params.check()
        if params.input_dim != d:
            raise ops.ShapeError(f"bilstm: input dim {d} vs weight {params.weight.shape}")
        h = params.hidden
        w_x = ops.slice_rows(params.weight, 0, d)
        w_h = ops.slice_rows(params.weight, d, d + h)
        xw = ops.add_bias(ops.matmul(x, w_x), params.bias)
        outs, h_final, _ = _run_direction(xw, w_h, mask, steps, h)
        per_dir.append(ops.stack_time([outs[t] for t in range(T)]))
        finals.append(h_final)
    out = ops.mask_time(ops.concat_last_axis(*per_dir), mask)
    return out, (finals[0], finals[1])
