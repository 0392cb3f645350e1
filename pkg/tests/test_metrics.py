"""Metric formulas against frozen constants and double-loop oracles."""

import math

import numpy as np
import pytest

from adrflow.errors import ShapeMismatchError
from adrflow.metrics import (SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW,
                             MetricReport, compute_report, mae, mse, nmse,
                             nrmse, psnr, rmse, ssim)

PSNR_255_MSE1 = 48.1308036086791  # 10*log10(255^2), frozen scalar evaluation


def test_identical_inputs_zero_everywhere():
    x = np.random.default_rng(0).uniform(1.0, 2.0, size=(2, 1, 4, 4))
    assert mse(x, x) == 0.0
    assert mae(x, x) == 0.0
    assert rmse(x, x) == 0.0
    assert nmse(x, x) == 0.0
    assert nrmse(x, x) == 0.0


def test_mse_conventions_constant_residual():
    t = np.zeros((1, 1, 4, 4))
    p = np.full((1, 1, 4, 4), 0.1)
    assert mse(p, t, "pdebench") == pytest.approx(0.01, abs=1e-15)
    assert mse(p, t, "video") == pytest.approx(0.16, abs=1e-14)


def test_video_convention_is_pdebench_times_pixel_count():
    rng = np.random.default_rng(1)
    p = rng.normal(size=(3, 2, 5, 4))
    t = rng.normal(size=(3, 2, 5, 4))
    assert mse(p, t, "video") == pytest.approx(mse(p, t, "pdebench") * 2 * 5 * 4,
                                               rel=1e-12)
    assert mae(p, t, "video") == pytest.approx(mae(p, t, "pdebench") * 2 * 5 * 4,
                                               rel=1e-12)


def test_shape_mismatch_and_unknown_convention():
    with pytest.raises(ShapeMismatchError):
        mse(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 3, 3)))
    with pytest.raises(ValueError):
        mse(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 2, 2)), "other")


def test_nrmse_uniform_relative_error_is_exact():
    t = np.ones((2, 1, 4, 4))
    p = 1.1 * t
    assert nrmse(p, t, "pointwise") == pytest.approx(0.1, rel=1e-12)
    assert nrmse(p, t, "norm") == pytest.approx(0.1, rel=1e-12)


def test_normalized_metrics_reject_zero_targets_with_index():
    t = np.ones((1, 1, 3, 3))
    t[0, 0, 1, 2] = 0.0
    p = t + 0.1
    with pytest.raises(ZeroDivisionError) as err:
        nmse(p, t)
    assert "(0, 0, 1, 2)" in str(err.value)
    with pytest.raises(ZeroDivisionError):
        nrmse(p, t, "pointwise")


def test_rmse_and_normalized_match_double_loop_oracle():
    rng = np.random.default_rng(2)
    p = rng.uniform(0.5, 1.5, size=(2, 1, 3, 3))
    t = rng.uniform(0.5, 1.5, size=(2, 1, 3, 3))

    rmse_acc, nrmse_acc, nmse_acc = 0.0, 0.0, 0.0
    N = p.shape[0]
    per_image = p.shape[1] * p.shape[2] * p.shape[3]
    for n in range(N):
        sq, nsq = 0.0, 0.0
        for c in range(p.shape[1]):
            for hh in range(p.shape[2]):
                for ww in range(p.shape[3]):
                    d = p[n, c, hh, ww] - t[n, c, hh, ww]
                    sq += d * d
                    nsq += d * d / t[n, c, hh, ww] ** 2
        rmse_acc += math.sqrt(sq / per_image)
        nrmse_acc += math.sqrt(nsq / per_image)
        nmse_acc += nsq / per_image
    assert rmse(p, t) == pytest.approx(rmse_acc / N, rel=1e-12)
    assert nrmse(p, t, "pointwise") == pytest.approx(nrmse_acc / N, rel=1e-12)
    assert nmse(p, t) == pytest.approx(nmse_acc / N, rel=1e-12)


def test_psnr_frozen_values_and_sentinel():
    t = np.zeros((1, 1, 10, 10))
    p = np.full((1, 1, 10, 10), 0.1)  # per-image mse = 0.01
    assert psnr(p, t, max_val=1.0) == pytest.approx(20.0, abs=1e-12)

    rng = np.random.default_rng(3)
    t2 = rng.uniform(size=(1, 1, 8, 8))
    d = rng.normal(size=(1, 1, 8, 8))
    d *= 1.0 / np.sqrt((d ** 2).mean())  # per-image mse exactly ~1
    assert psnr(t2 + d, t2, max_val=255.0) == pytest.approx(PSNR_255_MSE1, rel=1e-9)

    assert psnr(t2, t2, max_val=1.0) == math.inf


def test_psnr_decreases_as_mse_grows():
    t = np.zeros((1, 1, 8, 8))
    values = [psnr(np.full_like(t, a), t, 1.0) for a in (0.05, 0.1, 0.2, 0.4)]
    assert all(b < a for a, b in zip(values, values[1:]))


def test_ssim_self_is_one_and_symmetric():
    rng = np.random.default_rng(4)
    x = rng.uniform(size=(2, 1, 16, 16))
    y = rng.uniform(size=(2, 1, 16, 16))
    assert ssim(x, x, 1.0) == pytest.approx(1.0, abs=1e-12)
    assert ssim(x, y, 1.0) == pytest.approx(ssim(y, x, 1.0), abs=1e-12)


def test_ssim_rejects_images_smaller_than_window():
    with pytest.raises(ValueError):
        ssim(np.zeros((1, 1, 8, 8)), np.zeros((1, 1, 8, 8)), 1.0)


def test_ssim_matches_per_window_loop_oracle():
    rng = np.random.default_rng(5)
    x = rng.uniform(size=(1, 1, 16, 16))
    y = np.clip(x + 0.1 * rng.normal(size=x.shape), 0, 1)

    half = (SSIM_WINDOW - 1) // 2
    ax = np.arange(SSIM_WINDOW) - half
    g = np.exp(-(ax ** 2) / (2.0 * SSIM_SIGMA ** 2))
    kern = np.outer(g, g)
    kern /= kern.sum()
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2

    vals = []
    for r in range(16 - SSIM_WINDOW + 1):
        for c in range(16 - SSIM_WINDOW + 1):
            wx = x[0, 0, r:r + SSIM_WINDOW, c:c + SSIM_WINDOW]
            wy = y[0, 0, r:r + SSIM_WINDOW, c:c + SSIM_WINDOW]
            mx = (kern * wx).sum()
            my = (kern * wy).sum()
            vx = (kern * wx * wx).sum() - mx ** 2
            vy = (kern * wy * wy).sum() - my ** 2
            cxy = (kern * wx * wy).sum() - mx * my
            vals.append(((2 * mx * my + c1) * (2 * cxy + c2))
                        / ((mx ** 2 + my ** 2 + c1) * (vx + vy + c2)))
    assert ssim(x, y, 1.0) == pytest.approx(float(np.mean(vals)), abs=1e-10)


def test_uniform_window_fallback_differs_but_bounded():
    rng = np.random.default_rng(6)
    x = rng.uniform(size=(1, 1, 16, 16))
    y = rng.uniform(size=(1, 1, 16, 16))
    a = ssim(x, y, 1.0, window="gaussian")
    b = ssim(x, y, 1.0, window="uniform")
    assert -1.0 <= a <= 1.0 and -1.0 <= b <= 1.0
    assert a != b


def test_metrics_invariant_under_batch_permutation():
    rng = np.random.default_rng(7)
    p = rng.uniform(0.5, 1.5, size=(4, 1, 12, 12))
    t = rng.uniform(0.5, 1.5, size=(4, 1, 12, 12))
    perm = rng.permutation(4)
    for fn in (lambda a, b: mse(a, b), lambda a, b: mae(a, b),
               lambda a, b: rmse(a, b), lambda a, b: nrmse(a, b, "norm"),
               lambda a, b: psnr(a, b, 1.0)):
        assert fn(p, t) == pytest.approx(fn(p[perm], t[perm]), rel=1e-12)


def test_compute_report_rows_and_nan_fallbacks():
    rng = np.random.default_rng(8)
    t = rng.uniform(0.5, 1.5, size=(2, 1, 16, 16))
    p = t + 0.01
    rep = compute_report(p, t, max_val=1.0, nrmse_mode="pointwise")
    rows = dict(rep.rows())
    assert rows["n_samples"] == 2
    assert rows["mse"] == pytest.approx(1e-4, rel=1e-10)

    t0 = np.zeros((1, 1, 4, 4))  # zero target and sub-window image
    rep0 = compute_report(t0 + 0.1, t0, nrmse_mode="pointwise")
    assert math.isnan(rep0.nrmse) and math.isnan(rep0.ssim)
