"""Run artifacts: delimited output, raw frame dumps, and rendered figures.

Every reporting path writes machine-readable CSV first (header row, '.'
decimal separators) and, alongside it, a matplotlib figure rendered straight
to a file.  Frames are dumped as binary 8-bit PGM with per-image min/max
normalization; the constants are logged next to the dumps so the images are
invertible.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(str(h) for h in header)]
    for row in rows:
        lines.append(",".join(_format_cell(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _format_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_pgm(path, image: np.ndarray) -> tuple[float, float]:
    """Binary P5 dump of one 2D frame, min-max normalized to 8 bits.

    Returns the (min, max) constants used so the dump can be inverted.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"PGM dump needs a 2D frame, got shape {img.shape}")
    lo = float(img.min())
    hi = float(img.max())
    span = hi - lo if hi > lo else 1.0
    quantized = np.round((img - lo) / span * 255.0).astype(np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(quantized.tobytes())
    return lo, hi


def dump_triptych(outdir, prediction: np.ndarray, target: np.ndarray,
                  stem: str = "frame") -> list[Path]:
    """Prediction / target / abs-difference PGM triple plus normalization log."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    diff = np.abs(prediction - target)
    paths, norms = [], []
    for name, img in (("prediction", prediction), ("target", target),
                      ("absdiff", diff)):
        p = outdir / f"{stem}_{name}.pgm"
        lo, hi = write_pgm(p, img)
        paths.append(p)
        norms.append((f"{stem}_{name}", lo, hi))
    write_csv(outdir / f"{stem}_normalization.csv", ["image", "min", "max"], norms)
    return paths


def save_loss_curve(path, log_rows) -> None:
    """Semilog convergence plot from (epoch, train_loss, val_loss, lr) rows."""
    epochs = [r[0] for r in log_rows]
    train = [r[1] for r in log_rows]
    val = [r[2] for r in log_rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(epochs, train, label="train")
    if not all(np.isnan(v) for v in val):
        ax.semilogy(epochs, val, label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("MSE loss")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_triptych_figure(path, prediction: np.ndarray, target: np.ndarray) -> None:
    """Heatmap figure mirroring the PGM triple: prediction, target, |difference|."""
    diff = np.abs(prediction - target)
    fig, axes = plt.subplots(1, 3, figsize=(10, 3.4))
    for ax, (title, img) in zip(axes, (("prediction", prediction),
                                       ("target", target),
                                       ("|difference|", diff))):
        im = ax.imshow(img, cmap="viridis")
        ax.set_title(title)
        ax.set_xticks([])
        ax.set_yticks([])
        fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_bench_figure(path, rows) -> None:
    """Log-log wall time vs pixel count, one line per benchmarked op."""
    ops = sorted({r[0] for r in rows})
    fig, ax = plt.subplots(figsize=(6, 4))
    for op in ops:
        pts = sorted((r[1] * r[1], r[2]) for r in rows if r[0] == op)
        ax.loglog([n for n, _ in pts], [t for _, t in pts], marker="o", label=op)
    ax.set_xlabel("pixels (H*W)")
    ax.set_ylabel("median seconds per apply")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_metric_bars(path, horizon_reports) -> None:
    """nRMSE per rollout horizon as a simple bar chart."""
    horizons = [h for h, _ in horizon_reports]
    values = [r.nrmse for _, r in horizon_reports]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar([str(h) for h in horizons], values)
    ax.set_xlabel("rollout horizon")
    ax.set_ylabel("nRMSE")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
