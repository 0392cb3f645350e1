"""Diffusion on the pixel grid under mirror (zero normal derivative) boundaries.

The 5-point Laplacian replaces a missing neighbor with the center value, and
the orthonormal 2D DCT-II diagonalizes it exactly: the eigenvalues of the
negated operator are ``4 sin^2(pi i / 2H) + 4 sin^2(pi j / 2W)`` at grid
spacing 1.  The backward-Euler step ``(Id - h k Lap) X = I`` therefore
reduces to dividing each transform coefficient by ``1 + h k lambda``, which
is unconditionally stable (no coefficient is ever amplified) and preserves
the per-channel mean exactly (the (0,0) eigenvalue is zero).

The transform itself comes in two flavors behind one plan object: the
default precomputed separable basis matrices, and an FFT-backed fast path.
The forward-Euler step ``I + h k Lap I`` is also provided; it amplifies the
highest mode once ``h k`` exceeds ``2 / lambda_max`` (the classical
``h k <= 1/4`` rule as the grid grows).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .errors import ShapeMismatchError
from .tape import active_tape, value_of

EXPLICIT_STABILITY_BOUND = 0.25  # h*kappa at or below this never amplifies


def dct_basis(n: int) -> np.ndarray:
    """Orthonormal DCT-II analysis matrix; row i is the i-th cosine mode."""
    i = np.arange(n)[:, None]
    r = np.arange(n)[None, :]
    basis = np.cos(np.pi * i * (r + 0.5) / n)
    basis *= np.sqrt(2.0 / n)
    basis[0] *= np.sqrt(0.5)
    return basis


def neumann_eigenvalues(height: int, width: int) -> np.ndarray:
    """Eigenvalues of the negated mirror-boundary 5-point Laplacian."""
    li = 4.0 * np.sin(np.pi * np.arange(height) / (2.0 * height)) ** 2
    lj = 4.0 * np.sin(np.pi * np.arange(width) / (2.0 * width)) ** 2
    return li[:, None] + lj[None, :]


@dataclass(frozen=True, eq=False)
class DctPlan:
    """Immutable, thread-shareable transform plan for one grid size."""

    height: int
    width: int
    basis_h: np.ndarray = field(repr=False)
    basis_w: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray = field(repr=False)
    use_fft: bool = False

    @classmethod
    def create(cls, height: int, width: int, use_fft: bool = False) -> "DctPlan":
        return cls(height, width, dct_basis(height), dct_basis(width),
                   neumann_eigenvalues(height, width), use_fft)


def _check_plan(op: str, x: np.ndarray, plan: DctPlan):
    if x.ndim < 2 or x.shape[-2] != plan.height or x.shape[-1] != plan.width:
        raise ShapeMismatchError(op, x.shape, (plan.height, plan.width))


def _dct2(x: np.ndarray, plan: DctPlan) -> np.ndarray:
    if plan.use_fft:
        return scipy.fft.dctn(x, type=2, axes=(-2, -1), norm="ortho")
    return plan.basis_h @ x @ plan.basis_w.T


def _idct2(x: np.ndarray, plan: DctPlan) -> np.ndarray:
    if plan.use_fft:
        return scipy.fft.idctn(x, type=2, axes=(-2, -1), norm="ortho")
    return plan.basis_h.T @ x @ plan.basis_w


def dct2(x, plan: DctPlan):
    """Orthonormal 2D DCT-II over the trailing two axes (Parseval holds)."""
    xv = value_of(x)
    _check_plan("dct2", xv, plan)
    out = _dct2(xv, plan)
    tape = active_tape(x)
    if tape is None:
        return out
    return tape.record("dct2", (x,), out, lambda g: (_idct2(g, plan),))


def idct2(x, plan: DctPlan):
    """Inverse of :func:`dct2`; round-trips to 1e-12."""
    xv = value_of(x)
    _check_plan("idct2", xv, plan)
    out = _idct2(xv, plan)
    tape = active_tape(x)
    if tape is None:
        return out
    return tape.record("idct2", (x,), out, lambda g: (_dct2(g, plan),))


def _laplacian(x: np.ndarray) -> np.ndarray:
    pad = [(0, 0)] * (x.ndim - 2) + [(1, 1), (1, 1)]
    xp = np.pad(x, pad, mode="edge")
    return (xp[..., :-2, 1:-1] + xp[..., 2:, 1:-1]
            + xp[..., 1:-1, :-2] + xp[..., 1:-1, 2:] - 4.0 * x)


def laplacian_5pt(x):
    """Mirror-boundary 5-point Laplacian; self-adjoint, annihilates constants."""
    xv = value_of(x)
    if xv.ndim < 2 or xv.shape[-2] < 2 or xv.shape[-1] < 2:
        raise ValueError(f"laplacian_5pt needs at least a 2x2 grid, got shape {xv.shape}")
    out = _laplacian(xv)
    tape = active_tape(x)
    if tape is None:
        return out
    return tape.record("laplacian_5pt", (x,), out, lambda g: (_laplacian(g),))


def diffuse_explicit(I, kappa, h: float):
    """One forward-Euler step ``I + h * kappa_c * Lap I`` per channel.

    Stability is the caller's concern: modes grow once h*kappa exceeds
    2/lambda_max (just above EXPLICIT_STABILITY_BOUND on fine grids).
    """
    from .tape import add, channel_scale, scale
    if h <= 0:
        raise ValueError("step size h must be positive")
    return add(I, scale(channel_scale(laplacian_5pt(I), kappa), h))


def diffuse_implicit(I, kappa, h: float, plan: DctPlan):
    """One backward-Euler step: solve ``(Id - h kappa_c Lap) X = I`` per channel.

    Every DCT coefficient is divided by ``1 + h kappa lambda >= 1``, so the
    solve never amplifies a mode for any h, kappa >= 0 and keeps the channel
    mean exact.  The resolvent is symmetric, so the gradient in I is the same
    solve; the gradient in kappa follows from differentiating the resolvent.
    """
    if h <= 0:
        raise ValueError("step size h must be positive")
    Iv, kv = value_of(I), value_of(kappa)
    _check_plan("diffuse_implicit", Iv, plan)
    if Iv.ndim != 4 or kv.ndim != 1 or kv.shape[0] != Iv.shape[1]:
        raise ShapeMismatchError("diffuse_implicit", Iv.shape, kv.shape)
    lam = plan.eigenvalues[None, None, :, :]
    denom = 1.0 + h * kv[None, :, None, None] * lam
    Xhat = _dct2(Iv, plan) / denom
    out = _idct2(Xhat, plan)
    tape = active_tape(I, kappa)
    if tape is None:
        return out

    def vjp(g):
        ghat = _dct2(g, plan)
        gI = _idct2(ghat / denom, plan)
        gk = -h * (ghat * lam * Xhat / denom).sum(axis=(0, 2, 3))
        return gI, gk

    return tape.record("diffuse_implicit", (I, kappa), out, vjp)


def softplus_inverse(y: float) -> float:
    """Raw parameter value whose softplus equals y (y > 0)."""
    return float(np.log(np.expm1(y)))


def dense_neumann_laplacian(height: int, width: int) -> np.ndarray:
    """Dense (HW x HW) mirror-boundary Laplacian, assembled via Kronecker sums.

    Oracle for both the stencil and the DCT diagonalization; row-major
    flattening (row*W + col) matches the field layout.
    """
    def tridiag(n):
        T = np.diag(np.full(n - 1, 1.0), -1) + np.diag(np.full(n - 1, 1.0), 1)
        T += np.diag(np.full(n, -2.0))
        T[0, 0] = -1.0
        T[n - 1, n - 1] = -1.0
        return T

    return (np.kron(tridiag(height), np.eye(width))
            + np.kron(np.eye(height), tridiag(width)))
