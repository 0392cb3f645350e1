"""Wall-time scaling of the core operators vs grid size.

Times one apply of each op at several square grid sizes and fits the
log-log growth exponent in the pixel count N = H*W.  The point of the
exercise: the cosine-transform diffusion solve (matrix form ~N^1.5, FFT
form ~N log N) grows strictly slower than the dense direct solve (~N^3),
so the dense baseline is only measured up to ``dense_limit`` where it is
affordable.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .advection import push_color
from .diffusion import DctPlan, dense_neumann_laplacian, diffuse_implicit

DEFAULT_SIZES = (32, 64, 128, 256)


@dataclass(frozen=True)
class BenchRow:
    op: str
    size: int
    seconds: float   # median over reps
    spread: float    # max/min over reps


def _time_op(fn, reps: int) -> tuple[float, float]:
    fn()  # warm up
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    times.sort()
    median = times[len(times) // 2]
    return median, times[-1] / max(times[0], 1e-12)


def run_bench(sizes=DEFAULT_SIZES, dense_limit: int = 64, reps: int = 3,
              seed: int = 0) -> list[BenchRow]:
    rng = np.random.default_rng(seed)
    rows = []
    for n in sizes:
        I = rng.normal(size=(1, 1, n, n))
        U = rng.uniform(-2.0, 2.0, size=(1, 1, 2, n, n))
        kappa = np.array([1.0])
        plan = DctPlan.create(n, n)
        plan_fft = DctPlan.create(n, n, use_fft=True)

        for op, fn in (("push_color", lambda: push_color(I, U)),
                       ("dct_matrix_solve", lambda: diffuse_implicit(I, kappa, 0.5, plan)),
                       ("dct_fft_solve", lambda: diffuse_implicit(I, kappa, 0.5, plan_fft))):
            median, spread = _time_op(fn, reps)
            rows.append(BenchRow(op, n, median, spread))

        if n <= dense_limit:
            A = np.eye(n * n) - 0.5 * dense_neumann_laplacian(n, n)
            b = I[0, 0].ravel()
            median, spread = _time_op(lambda: np.linalg.solve(A, b), reps)
            rows.append(BenchRow("dense_solve", n, median, spread))
    return rows


def growth_exponents(rows) -> dict[str, float]:
    """Least-squares slope of log(seconds) against log(pixels), per op."""
    out = {}
    for op in sorted({r.op for r in rows}):
        pts = [(r.size * r.size, r.seconds) for r in rows if r.op == op]
        if len(pts) < 2:
            continue
        x = np.log([p[0] for p in pts])
        y = np.log([max(p[1], 1e-9) for p in pts])
        out[op] = float(np.polyfit(x, y, 1)[0])
    return out


def bench_csv_rows(rows) -> list:
    return [(r.op, r.size, r.seconds, r.spread) for r in rows]
