"""Pointwise reaction step and 3x3 convolution building blocks.

The reaction is a residual two-layer perceptron applied independently at
every pixel (a nonlinear 1x1 convolution): ``I + h (W2 silu(W1 I + b1) + b2)``.
The same channel-mixing primitive also backs the embedding and projection
MLPs of the full model.

``conv3x3`` is a cross-correlation with edge-replicated (mirror) padding,
the same boundary rule as the diffusion stencil, so a kernel holding the
5-point Laplacian weights reproduces ``laplacian_5pt`` everywhere including
the border.  A residual pair of these convolutions is the fused alternative
to the split diffusion-then-reaction step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatchError
from .tape import active_tape, add, scale, silu, value_of


@dataclass(frozen=True, eq=False)
class Mlp1x1Params:
    """Two-layer pointwise MLP weights; fields may hold arrays or tape Vars."""

    w1: object  # (hidden, c_in)
    b1: object  # (hidden,)
    w2: object  # (c_out, hidden)
    b2: object  # (c_out,)


@dataclass(frozen=True, eq=False)
class Conv3x3Params:
    """3x3 cross-correlation weights; mirror padding is part of the contract."""

    kernel: object  # (c_out, c_in, 3, 3)
    bias: object    # (c_out,)


def channel_linear(x, w, b):
    """Affine channel mixing at every pixel: einsum('oc,bchw->bohw') + bias."""
    xv, wv, bv = value_of(x), value_of(w), value_of(b)
    if xv.ndim != 4 or wv.ndim != 2 or wv.shape[1] != xv.shape[1] or bv.shape != (wv.shape[0],):
        raise ShapeMismatchError("channel_linear", xv.shape, wv.shape)
    out = np.moveaxis(np.tensordot(wv, xv, axes=([1], [1])), 0, 1)
    out += bv[None, :, None, None]
    tape = active_tape(x, w, b)
    if tape is None:
        return out

    def vjp(g):
        gx = np.moveaxis(np.tensordot(wv, g, axes=([0], [1])), 0, 1)
        gw = np.tensordot(g, xv, axes=([0, 2, 3], [0, 2, 3]))
        return gx, gw, g.sum(axis=(0, 2, 3))

    return tape.record("channel_linear", (x, w, b), out, vjp)


def apply_mlp(x, p: Mlp1x1Params):
    """silu-gated two-layer pointwise MLP."""
    return channel_linear(silu(channel_linear(x, p.w1, p.b1)), p.w2, p.b2)


def reaction_step(x, p: Mlp1x1Params, h: float):
    """Residual pointwise update ``x + h * mlp(x)``; spatially equivariant."""
    return add(x, scale(apply_mlp(x, p), h))


def _patches(x: np.ndarray) -> np.ndarray:
    """Edge-padded 3x3 neighborhoods, shape (B, C*9, H, W)."""
    B, C, H, W = x.shape
    xp = np.pad(x, [(0, 0), (0, 0), (1, 1), (1, 1)], mode="edge")
    stack = np.stack([xp[:, :, dy:dy + H, dx:dx + W]
                      for dy in range(3) for dx in range(3)], axis=2)
    return stack.reshape(B, C * 9, H, W)


def _fold_edge_padding(gpad: np.ndarray) -> np.ndarray:
    """Adjoint of 1-pixel edge replication: fold pad rows/cols onto the border."""
    g = gpad[..., 1:-1, 1:-1].copy()
    g[..., 0, :] += gpad[..., 0, 1:-1]
    g[..., -1, :] += gpad[..., -1, 1:-1]
    g[..., :, 0] += gpad[..., 1:-1, 0]
    g[..., :, -1] += gpad[..., 1:-1, -1]
    g[..., 0, 0] += gpad[..., 0, 0]
    g[..., 0, -1] += gpad[..., 0, -1]
    g[..., -1, 0] += gpad[..., -1, 0]
    g[..., -1, -1] += gpad[..., -1, -1]
    return g


def conv3x3(x, p: Conv3x3Params):
    """3x3 cross-correlation with mirror padding; linear in x."""
    xv, kv, bv = value_of(x), value_of(p.kernel), value_of(p.bias)
    if (xv.ndim != 4 or kv.ndim != 4 or kv.shape[2:] != (3, 3)
            or kv.shape[1] != xv.shape[1] or bv.shape != (kv.shape[0],)):
        raise ShapeMismatchError("conv3x3", xv.shape, kv.shape)
    B, C, H, W = xv.shape
    O = kv.shape[0]
    pat = _patches(xv)
    out = np.moveaxis(np.tensordot(kv.reshape(O, C * 9), pat, axes=([1], [1])), 0, 1)
    out += bv[None, :, None, None]
    tape = active_tape(x, p.kernel, p.bias)
    if tape is None:
        return out

    def vjp(g):
        gk = np.tensordot(g, pat, axes=([0, 2, 3], [0, 2, 3])).reshape(O, C, 3, 3)
        gpad = np.zeros((B, C, H + 2, W + 2), dtype=g.dtype)
        for dy in range(3):
            for dx in range(3):
                tap = np.moveaxis(np.tensordot(kv[:, :, dy, dx], g, axes=([0], [1])), 0, 1)
                gpad[:, :, dy:dy + H, dx:dx + W] += tap
        return _fold_edge_padding(gpad), gk, g.sum(axis=(0, 2, 3))

    return tape.record("conv3x3", (x, p.kernel, p.bias), out, vjp)


def residual_conv_block(x, first: Conv3x3Params, second: Conv3x3Params, h: float = 1.0):
    """Classic residual pair ``x + h * conv(silu(conv(x)))``.

    With the first kernel carrying the Laplacian stencil and the second a
    channel mixer this subsumes one explicit diffusion-reaction step, which
    is why it serves as the fused alternative to the split pair.
    """
    return add(x, scale(conv3x3(silu(conv3x3(x, first)), second), h))


LAPLACIAN_STENCIL = np.array([[0.0, 1.0, 0.0],
                              [1.0, -4.0, 1.0],
                              [0.0, 1.0, 0.0]])
