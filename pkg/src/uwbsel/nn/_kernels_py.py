"""Pure numpy 1-D convolution kernels (fallback backend).

Shapes: ``x`` is ``(batch, channels, length)``, ``w`` is
``(filters, channels, kernel)``.  Cross-correlation, as in most DL stacks.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _pad(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding)))


def conv1d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int, padding: int) -> np.ndarray:
    k = w.shape[2]
    xp = _pad(x, padding)
    # (batch, channels, out, kernel)
    win = sliding_window_view(xp, k, axis=2)[:, :, ::stride, :]
    y = np.einsum("bcok,fck->bfo", win, w, optimize=True)
    y += b[None, :, None]
    return y


def conv1d_backward(
    x: np.ndarray, w: np.ndarray, dy: np.ndarray, stride: int, padding: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    k = w.shape[2]
    xp = _pad(x, padding)
    win = sliding_window_view(xp, k, axis=2)[:, :, ::stride, :]
    dw = np.einsum("bfo,bcok->fck", dy, win, optimize=True)
    db = dy.sum(axis=(0, 2))
    n_out = dy.shape[2]
    # contribution of every output position to its input window
    dwin = np.einsum("bfo,fck->bcok", dy, w, optimize=True)
    dxp = np.zeros_like(xp)
    span = stride * (n_out - 1) + 1
    for j in range(k):
        dxp[:, :, j : j + span : stride] += dwin[:, :, :, j]
    dx = dxp[:, :, padding : padding + x.shape[2]] if padding else dxp
    return dx, dw, db
