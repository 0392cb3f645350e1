"""Synthetic sequence generators, windowing, and dataset files.

Three generators cover the transport, advection and diffusion pathways:

* ``gen_fig1``: the single-pixel corner-to-corner transport task (one
  sample, history length 1).
* ``gen_blob_sequence``: a Gaussian blob translated at constant velocity,
  evaluated analytically at every frame so there is no accumulation error.
* ``gen_diffusion_sequence``: a random field evolved by exact backward-Euler
  mode scaling in the cosine basis.

All generators are deterministic functions of their seed.  Dataset files
are tensor containers holding one ``seq/NNNN`` tensor of shape (T, m, H, W)
per sequence, written under ``<dir>/{train,val}.adrt`` with a JSON manifest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .container import load_container, save_container
from .diffusion import DctPlan

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class SequenceSample:
    """A (history window, future frames) pair cut from one sequence."""

    history: np.ndarray  # (j+1, m, H, W)
    target: np.ndarray   # (l, m, H, W)


def gen_fig1(height: int, width: int) -> SequenceSample:
    """Corner transport task: 1 at the bottom-left maps to 1 at the top-right."""
    if height < 2 or width < 2:
        raise ValueError("fig1 task needs at least a 2x2 grid")
    source = np.zeros((1, 1, height, width))
    target = np.zeros((1, 1, height, width))
    source[0, 0, height - 1, 0] = 1.0
    target[0, 0, 0, width - 1] = 1.0
    return SequenceSample(history=source, target=target)


def gen_blob_sequence(height: int, width: int, velocity, sigma: float,
                      steps: int, seed: int, start=None) -> np.ndarray:
    """Gaussian blob of width sigma translated by ``velocity`` per frame.

    Each frame is evaluated analytically at the shifted center, values in
    (0, 1]; returns (steps, 1, H, W).  The start is drawn uniformly at least
    2*sigma from the boundary unless given explicitly.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    vr, vc = float(velocity[0]), float(velocity[1])
    rng = np.random.default_rng(seed)
    if start is not None:
        r0, c0 = float(start[0]), float(start[1])
    else:
        margin = min(2.0 * sigma, (min(height, width) - 1) / 2.0)
        r0 = rng.uniform(margin, height - 1 - margin)
        c0 = rng.uniform(margin, width - 1 - margin)
    rows = np.arange(height)[:, None]
    cols = np.arange(width)[None, :]
    frames = np.empty((steps, 1, height, width))
    for t in range(steps):
        cr = r0 + t * vr
        cc = c0 + t * vc
        frames[t, 0] = np.exp(-((rows - cr) ** 2 + (cols - cc) ** 2) / (2.0 * sigma ** 2))
    return frames


def gen_diffusion_sequence(height: int, width: int, kappa: float, h: float,
                           steps: int, seed: int) -> np.ndarray:
    """Random field smoothed by exact backward-Euler spectral decay.

    Frame t carries the initial cosine coefficients divided by
    ``(1 + h kappa lambda)^t``; the mean is preserved exactly.
    """
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    rng = np.random.default_rng(seed)
    plan = DctPlan.create(height, width)
    init = rng.uniform(0.0, 1.0, size=(height, width))
    coef0 = plan.basis_h @ init @ plan.basis_w.T
    decay = 1.0 / (1.0 + h * kappa * plan.eigenvalues)
    frames = np.empty((steps, 1, height, width))
    coef = coef0
    for t in range(steps):
        frames[t, 0] = plan.basis_h.T @ coef @ plan.basis_w
        coef = coef * decay
    return frames


def window(sequence: np.ndarray, j: int, horizon: int, stride: int = 1) -> list:
    """Sliding (history, target) samples from one (T, m, H, W) sequence.

    History holds frames [t-j .. t], the target the next ``horizon`` frames;
    sample count is ``(T - (j + 1 + horizon)) // stride + 1``.  No window
    crosses the sequence boundary.
    """
    seq = np.asarray(sequence)
    need = j + 1 + horizon
    if seq.shape[0] < need:
        raise ValueError(f"sequence of {seq.shape[0]} frames is shorter than "
                         f"j+1+horizon = {need}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    samples = []
    for start in range(0, seq.shape[0] - need + 1, stride):
        samples.append(SequenceSample(history=seq[start:start + j + 1],
                                      target=seq[start + j + 1:start + need]))
    return samples


def stack_samples(samples) -> tuple[np.ndarray, np.ndarray]:
    """Batch a sample list into (N, j+1, m, H, W) histories and (N, l, m, H, W) targets."""
    if not samples:
        raise ValueError("no samples to stack")
    hist = np.stack([s.history for s in samples])
    targ = np.stack([s.target for s in samples])
    return hist, targ


def split_sequences(n: int, val_count: int, seed: int):
    """Whole sequences go to one split; seeded permutation, val at the end."""
    if not 0 <= val_count <= n:
        raise ValueError(f"val_count {val_count} out of range for {n} sequences")
    order = np.random.default_rng(seed).permutation(n)
    return np.sort(order[:n - val_count]), np.sort(order[n - val_count:])


def save_sequences(path, sequences) -> None:
    tensors = {f"seq/{i:04d}": np.asarray(seq, dtype=np.float64)
               for i, seq in enumerate(sequences)}
    save_container(path, tensors)


def load_sequences(path) -> list:
    tensors = load_container(path)
    return [tensors[name] for name in sorted(tensors)]


def write_dataset(outdir, train_seqs, val_seqs, manifest: dict) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    save_sequences(outdir / "train.adrt", train_seqs)
    save_sequences(outdir / "val.adrt", val_seqs)
    (outdir / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_dataset(outdir) -> tuple[list, list]:
    outdir = Path(outdir)
    return (load_sequences(outdir / "train.adrt"),
            load_sequences(outdir / "val.adrt"))


def windowed_arrays(sequences, j: int, horizon: int, stride: int = 1):
    """Window every sequence and stack the results into batch arrays."""
    samples = []
    for seq in sequences:
        samples.extend(window(seq, j, horizon, stride))
    return stack_samples(samples)
