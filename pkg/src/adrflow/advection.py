"""Semi-Lagrangian push operators.

Both forms move information through the arithmetic point ``x + U(x)`` and
are exact transposes of one another for the same displacement field:

* ``push_mass``  splats the value at source pixel ``x`` onto the four grid
  neighbors of ``x + U(x)`` with bilinear weights, so the per-channel sum is
  conserved and features travel along ``+U``.
* ``push_color`` gives destination pixel ``x`` the bilinearly interpolated
  value at ``x + U(x)``, so intensities are preserved along characteristics
  and features travel along ``-U``.

Sample and splat coordinates are clamped to the grid, the zero-normal-flux
analog of the mirror boundary used by the diffusion stencil: no mass leaves
the domain, and gathers past the edge read the edge value.  Gradients with
respect to the displacement are zero wherever the clamp saturates.

A single application is non-local: a displacement of magnitude H-1 carries a
value across the whole grid, which no small convolution kernel can do.
"""

from __future__ import annotations

import numpy as np

from .errors import NonFiniteError, ShapeMismatchError
from .fields import DisplacementField, GridField, PushMode
from .tape import Var, active_tape, value_of

MAX_DENSE_PIXELS = 4096


class _BilinearSetup:
    """Clamped sample coordinates, corner indices, weights and clamp masks."""

    __slots__ = ("y0", "y1", "x0", "x1", "wy", "wx", "row_free", "col_free", "cu")

    def __init__(self, U: np.ndarray, H: int, W: int):
        rows = np.arange(H, dtype=np.float64)[None, None, :, None] + U[:, :, 0]
        cols = np.arange(W, dtype=np.float64)[None, None, None, :] + U[:, :, 1]
        # derivative of the clamp is zero strictly outside the domain
        self.row_free = (rows >= 0.0) & (rows <= H - 1.0)
        self.col_free = (cols >= 0.0) & (cols <= W - 1.0)
        y = np.clip(rows, 0.0, H - 1.0)
        x = np.clip(cols, 0.0, W - 1.0)
        self.y0 = np.clip(np.floor(y), 0, H - 2).astype(np.intp)
        self.x0 = np.clip(np.floor(x), 0, W - 2).astype(np.intp)
        self.y1 = self.y0 + 1
        self.x1 = self.x0 + 1
        self.wy = y - self.y0
        self.wx = x - self.x0
        self.cu = U.shape[1]


def _check_shapes(op: str, I: np.ndarray, U: np.ndarray):
    if I.ndim != 4 or U.ndim != 5 or U.shape[2] != 2:
        raise ShapeMismatchError(op, I.shape, U.shape)
    B, C, H, W = I.shape
    if U.shape[0] != B or U.shape[3] != H or U.shape[4] != W or U.shape[1] not in (1, C):
        raise ShapeMismatchError(op, I.shape, U.shape)
    if H < 2 or W < 2:
        raise ValueError(f"{op} needs at least a 2x2 grid, got {H}x{W}")
    if not np.all(np.isfinite(U)):
        raise NonFiniteError(f"{op}: displacement field contains non-finite entries")


def _batch_channel_index(B: int, C: int):
    b = np.arange(B)[:, None, None, None]
    c = np.arange(C)[None, :, None, None]
    return b, c


def _gather(F: np.ndarray, s: _BilinearSetup) -> np.ndarray:
    """Bilinear interpolation of F at the setup's sample points (color form)."""
    b, c = _batch_channel_index(F.shape[0], F.shape[1])
    wy, wx = s.wy, s.wx
    return ((1.0 - wy) * (1.0 - wx) * F[b, c, s.y0, s.x0]
            + (1.0 - wy) * wx * F[b, c, s.y0, s.x1]
            + wy * (1.0 - wx) * F[b, c, s.y1, s.x0]
            + wy * wx * F[b, c, s.y1, s.x1])


def _scatter(F: np.ndarray, s: _BilinearSetup) -> np.ndarray:
    """Bilinear splat of F onto the setup's sample points (mass form)."""
    B, C, H, W = F.shape
    b, c = _batch_channel_index(B, C)
    wy, wx = s.wy, s.wx
    out = np.zeros(F.shape, dtype=np.result_type(F, wy))
    np.add.at(out, (b, c, s.y0, s.x0), F * (1.0 - wy) * (1.0 - wx))
    np.add.at(out, (b, c, s.y0, s.x1), F * (1.0 - wy) * wx)
    np.add.at(out, (b, c, s.y1, s.x0), F * wy * (1.0 - wx))
    np.add.at(out, (b, c, s.y1, s.x1), F * wy * wx)
    return out


def _sample_point_derivative(F: np.ndarray, s: _BilinearSetup):
    """d/dy and d/dx of the bilinear interpolant of F at the sample points."""
    b, c = _batch_channel_index(F.shape[0], F.shape[1])
    f00 = F[b, c, s.y0, s.x0]
    f01 = F[b, c, s.y0, s.x1]
    f10 = F[b, c, s.y1, s.x0]
    f11 = F[b, c, s.y1, s.x1]
    ddy = ((1.0 - s.wx) * (f10 - f00) + s.wx * (f11 - f01)) * s.row_free
    ddx = ((1.0 - s.wy) * (f01 - f00) + s.wy * (f11 - f10)) * s.col_free
    return ddy, ddx


def _stack_disp_grad(ddy: np.ndarray, ddx: np.ndarray, cu: int) -> np.ndarray:
    gU = np.stack([ddy, ddx], axis=2)
    if cu == 1 and gU.shape[1] != 1:
        gU = gU.sum(axis=1, keepdims=True)
    return gU


def _wrap_like(template, out):
    if isinstance(template, GridField) and isinstance(out, np.ndarray):
        return GridField(out)
    return out


def push_color(I, U):
    """Backward-gather transport: output(x) = interpolate I at x + U(x).

    Linear in I; the exact transpose of :func:`push_mass` for the same U.
    """
    Iv, Uv = value_of(I), value_of(U)
    _check_shapes("push_color", Iv, Uv)
    s = _BilinearSetup(Uv, Iv.shape[2], Iv.shape[3])
    out = _gather(Iv, s)
    tape = active_tape(I, U)
    if tape is None:
        return _wrap_like(I, out)

    def vjp(g):
        gI = _scatter(g, s)
        ddy, ddx = _sample_point_derivative(Iv, s)
        return gI, _stack_disp_grad(g * ddy, g * ddx, s.cu)

    return tape.record("push_color", (I, U), out, vjp)


def push_mass(I, U):
    """Forward-splat transport: pixel x spreads its value over the four
    grid neighbors of x + U(x), conserving the per-channel sum exactly.

    Linear in I; the exact transpose of :func:`push_color` for the same U.
    """
    Iv, Uv = value_of(I), value_of(U)
    _check_shapes("push_mass", Iv, Uv)
    s = _BilinearSetup(Uv, Iv.shape[2], Iv.shape[3])
    out = _scatter(Iv, s)
    tape = active_tape(I, U)
    if tape is None:
        return _wrap_like(I, out)

    def vjp(g):
        gI = _gather(g, s)
        ddy, ddx = _sample_point_derivative(g, s)
        return gI, _stack_disp_grad(Iv * ddy, Iv * ddx, s.cu)

    return tape.record("push_mass", (I, U), out, vjp)


def push(I, U, mode: PushMode | str):
    mode = PushMode.parse(mode)
    return push_mass(I, U) if mode is PushMode.MASS else push_color(I, U)


def assemble_push_matrix(U, mode: PushMode | str, channel: int = 0,
                         batch: int = 0) -> np.ndarray:
    """Dense (HW x HW) matrix M with flatten(push(I)) = M @ flatten(I).

    Assembled entry by entry from the bilinear weight definition, with scalar
    arithmetic, independently of the vectorized operators; serves as the
    oracle for the mass/color transpose identity and the row-sum property.
    """
    mode = PushMode.parse(mode)
    Uv = value_of(U)
    if Uv.ndim != 5 or Uv.shape[2] != 2:
        raise ShapeMismatchError("assemble_push_matrix", Uv.shape, ("B", "C", 2, "H", "W"))
    H, W = Uv.shape[3], Uv.shape[4]
    if H * W > MAX_DENSE_PIXELS:
        raise ValueError(f"grid {H}x{W} too large for dense assembly "
                         f"(limit {MAX_DENSE_PIXELS} pixels)")
    ch = 0 if Uv.shape[1] == 1 else channel
    u_row = Uv[batch, ch, 0]
    u_col = Uv[batch, ch, 1]
    M = np.zeros((H * W, H * W))
    for r in range(H):
        for c in range(W):
            p = r * W + c
            y = min(max(r + u_row[r, c], 0.0), H - 1.0)
            x = min(max(c + u_col[r, c], 0.0), W - 1.0)
            y0 = min(max(int(np.floor(y)), 0), H - 2)
            x0 = min(max(int(np.floor(x)), 0), W - 2)
            wy = y - y0
            wx = x - x0
            for (yy, xx, w) in ((y0, x0, (1 - wy) * (1 - wx)),
                                (y0, x0 + 1, (1 - wy) * wx),
                                (y0 + 1, x0, wy * (1 - wx)),
                                (y0 + 1, x0 + 1, wy * wx)):
                q = yy * W + xx
                if mode is PushMode.COLOR:
                    M[p, q] += w  # row p gathers from the neighbors of p+U(p)
                else:
                    M[q, p] += w  # column p splats onto the neighbors of p+U(p)
    return M
