"""Evaluation metrics over (N, C, H, W) batches, bit-deterministic.

Two summation conventions are exposed for MSE/MAE: the video convention
sums pixel-wise values over H, W, C per image and averages over N only; the
PDE convention divides by the full N*H*W*C count.  The two differ exactly by
the factor H*W*C.

RMSE and nRMSE take the square root per sample and then average over the
batch.  Normalized metrics divide the squared error pointwise by the target
square by default, which requires every target entry to be nonzero; the
``norm`` mode instead divides each sample's error 2-norm by its target
2-norm, the robust choice for fields with near-zero background.

PSNR is computed per image from its own mean squared error and averaged;
identical images yield the +inf sentinel, not an error.  SSIM uses an
11x11 Gaussian window (sigma 1.5) over valid positions with K1=0.01,
K2=0.03, and an optional uniform-window fallback.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(op: str, pred, target):
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeMismatchError(op, p.shape, t.shape)
    if p.ndim != 4:
        raise ShapeMismatchError(op, p.shape, ("N", "C", "H", "W"))
    return p, t


def _check_convention(convention: str):
    if convention not in ("video", "pdebench"):
        raise ValueError(f"unknown convention {convention!r}; use 'video' or 'pdebench'")


def mse(pred, target, convention: str = "pdebench") -> float:
    p, t = _pair("mse", pred, target)
    _check_convention(convention)
    sq = (p - t) ** 2
    if convention == "video":
        return float(sq.sum(axis=(1, 2, 3)).mean())
    return float(sq.mean())


def mae(pred, target, convention: str = "pdebench") -> float:
    p, t = _pair("mae", pred, target)
    _check_convention(convention)
    ab = np.abs(p - t)
    if convention == "video":
        return float(ab.sum(axis=(1, 2, 3)).mean())
    return float(ab.mean())


def rmse(pred, target) -> float:
    p, t = _pair("rmse", pred, target)
    per_sample = np.sqrt(((p - t) ** 2).mean(axis=(1, 2, 3)))
    return float(per_sample.mean())


def _require_nonzero(op: str, t: np.ndarray):
    zeros = np.argwhere(t == 0.0)
    if zeros.size:
        idx = tuple(int(v) for v in zeros[0])
        raise ZeroDivisionError(f"{op}: target entry {idx} is zero; "
                                "pointwise normalization undefined")


def nmse(pred, target) -> float:
    p, t = _pair("nmse", pred, target)
    _require_nonzero("nmse", t)
    return float((((p - t) ** 2) / (t ** 2)).mean())


def nrmse(pred, target, normalization: str = "pointwise") -> float:
    p, t = _pair("nrmse", pred, target)
    if normalization == "pointwise":
        _require_nonzero("nrmse", t)
        per_sample = np.sqrt((((p - t) ** 2) / (t ** 2)).mean(axis=(1, 2, 3)))
    elif normalization == "norm":
        num = np.linalg.norm((p - t).reshape(p.shape[0], -1), axis=1)
        den = np.linalg.norm(t.reshape(t.shape[0], -1), axis=1)
        if np.any(den == 0.0):
            raise ZeroDivisionError("nrmse: a target sample has zero norm")
        per_sample = num / den
    else:
        raise ValueError(f"unknown nrmse normalization {normalization!r}")
    return float(per_sample.mean())


def psnr(pred, target, max_val: float) -> float:
    """Per-image 10*log10(MAX^2 / MSE), averaged; identical images give +inf."""
    p, t = _pair("psnr", pred, target)
    per_image = ((p - t) ** 2).mean(axis=(1, 2, 3))
    values = [math.inf if m == 0.0 else 10.0 * math.log10(max_val ** 2 / m)
              for m in per_image]
    return float(np.mean(values))


def _ssim_kernel(window: str) -> np.ndarray:
    if window == "uniform":
        k = np.ones((SSIM_WINDOW, SSIM_WINDOW))
    elif window == "gaussian":
        half = (SSIM_WINDOW - 1) / 2.0
        ax = np.arange(SSIM_WINDOW) - half
        g = np.exp(-(ax ** 2) / (2.0 * SSIM_SIGMA ** 2))
        k = np.outer(g, g)
    else:
        raise ValueError(f"unknown ssim window {window!r}")
    return k / k.sum()


def _local_mean(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    win = np.lib.stride_tricks.sliding_window_view(x, kernel.shape, axis=(-2, -1))
    return np.einsum("...ij,ij->...", win, kernel)


def ssim(pred, target, max_val: float, window: str = "gaussian") -> float:
    """Mean local structural similarity over valid window positions."""
    p, t = _pair("ssim", pred, target)
    if p.shape[2] < SSIM_WINDOW or p.shape[3] < SSIM_WINDOW:
        raise ValueError(f"image {p.shape[2]}x{p.shape[3]} smaller than the "
                         f"{SSIM_WINDOW}x{SSIM_WINDOW} ssim window")
    k = _ssim_kernel(window)
    mu_p = _local_mean(p, k)
    mu_t = _local_mean(t, k)
    var_p = _local_mean(p * p, k) - mu_p ** 2
    var_t = _local_mean(t * t, k) - mu_t ** 2
    cov = _local_mean(p * t, k) - mu_p * mu_t
    c1 = (SSIM_K1 * max_val) ** 2
    c2 = (SSIM_K2 * max_val) ** 2
    s = ((2.0 * mu_p * mu_t + c1) * (2.0 * cov + c2)
         / ((mu_p ** 2 + mu_t ** 2 + c1) * (var_p + var_t + c2)))
    return float(s.mean(axis=(1, 2, 3)).mean())


@dataclass(frozen=True)
class MetricReport:
    mse: float
    mae: float
    rmse: float
    nmse: float
    nrmse: float
    psnr: float
    ssim: float
    n_samples: int

    def rows(self):
        """(metric, value) pairs for CSV emission."""
        return [("mse", self.mse), ("mae", self.mae), ("rmse", self.rmse),
                ("nmse", self.nmse), ("nrmse", self.nrmse),
                ("psnr", self.psnr), ("ssim", self.ssim),
                ("n_samples", self.n_samples)]


def compute_report(pred, target, max_val: float = 1.0,
                   convention: str = "pdebench",
                   nrmse_mode: str = "norm",
                   ssim_window: str = "gaussian") -> MetricReport:
    """All metrics in one pass; normalized ones fall back to NaN when the
    target contains zeros under the pointwise mode."""
    p, t = _pair("report", pred, target)
    try:
        if nrmse_mode == "pointwise":
            nmse_val = nmse(p, t)
        else:
            num = np.linalg.norm((p - t).reshape(p.shape[0], -1), axis=1)
            den = np.linalg.norm(t.reshape(t.shape[0], -1), axis=1)
            if np.any(den == 0.0):
                raise ZeroDivisionError("nmse: a target sample has zero norm")
            nmse_val = float(((num / den) ** 2).mean())
    except ZeroDivisionError:
        nmse_val = float("nan")
    try:
        nrmse_val = nrmse(p, t, nrmse_mode)
    except ZeroDivisionError:
        nrmse_val = float("nan")
    try:
        ssim_val = ssim(p, t, max_val)
    except ValueError:
        ssim_val = float("nan")  # image smaller than the window
    return MetricReport(mse=mse(p, t, convention), mae=mae(p, t, convention),
                        rmse=rmse(p, t), nmse=nmse_val, nrmse=nrmse_val,
                        psnr=psnr(p, t, max_val), ssim=ssim_val,
                        n_samples=p.shape[0])
