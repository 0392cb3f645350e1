"""Oracle suites behind the ``verify`` command.

Each suite re-derives a mathematical property of the operators from an
independent route (dense matrices, direct solves, finite differences,
summation) and reports named checks with their worst observed value against
the tolerance.  A fresh build passes every suite; any failure names the
violated property.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .advection import assemble_push_matrix, push_color, push_mass
from .diffusion import (DctPlan, dct2, dense_neumann_laplacian, diffuse_explicit,
                        diffuse_implicit)
from .metrics import mse, nrmse, psnr, ssim
from .model import ModelConfig, init_model
from .training import gradcheck_model, randomize_heads


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    threshold: float
    passed: bool


@dataclass
class SuiteResult:
    name: str
    checks: list = field(default_factory=list)

    def add(self, name: str, value: float, threshold: float, larger_is_worse=True):
        passed = value <= threshold if larger_is_worse else value >= threshold
        self.checks.append(CheckResult(name, float(value), float(threshold), passed))

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def suite_adjoint(trials: int = 100, seed: int = 0) -> SuiteResult:
    """Mass matrix equals the transpose of the color matrix, entrywise."""
    suite = SuiteResult("adjoint")
    rng = np.random.default_rng(seed)
    worst_t, worst_rows, worst_mass, worst_color = 0.0, 0.0, 0.0, 0.0
    for _ in range(trials):
        for H in (4, 8):
            U = rng.uniform(-3.0, 3.0, size=(1, 1, 2, H, H))
            M = assemble_push_matrix(U, "mass")
            C = assemble_push_matrix(U, "color")
            worst_t = max(worst_t, float(np.max(np.abs(M - C.T))))
            worst_rows = max(worst_rows, float(np.max(np.abs(C.sum(axis=1) - 1.0))))
            I = rng.normal(size=(1, 1, H, H))
            worst_mass = max(worst_mass, float(np.max(np.abs(
                M @ I[0, 0].ravel() - push_mass(I, U)[0, 0].ravel()))))
            worst_color = max(worst_color, float(np.max(np.abs(
                C @ I[0, 0].ravel() - push_color(I, U)[0, 0].ravel()))))
    suite.add("mass equals transpose(color)", worst_t, 1e-12)
    suite.add("color rows sum to one", worst_rows, 1e-12)
    suite.add("matrix reproduces mass operator", worst_mass, 1e-12)
    suite.add("matrix reproduces color operator", worst_color, 1e-12)
    return suite


def suite_conservation(trials: int = 1000, seed: int = 1) -> SuiteResult:
    """Forward splat preserves per-channel sums, including clamped exits."""
    suite = SuiteResult("conservation")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(trials):
        H = int(rng.integers(4, 9))
        W = int(rng.integers(4, 9))
        C = int(rng.integers(1, 3))
        I = rng.uniform(0.1, 1.0, size=(1, C, H, W))
        span = 2.0 * max(H, W) if k % 2 else 1.0  # half the trials leave the domain
        U = rng.uniform(-span, span, size=(1, C, 2, H, W))
        out = push_mass(I, U)
        rel = np.abs(out.sum(axis=(2, 3)) - I.sum(axis=(2, 3))) / I.sum(axis=(2, 3))
        worst = max(worst, float(rel.max()))
    suite.add("per-channel mass conservation (relative)", worst, 1e-12)
    return suite


def suite_solver(seed: int = 2) -> SuiteResult:
    """Implicit diffusion equals the dense direct solve on 8x8 grids."""
    suite = SuiteResult("solver")
    rng = np.random.default_rng(seed)
    plan = DctPlan.create(8, 8)
    L = dense_neumann_laplacian(8, 8)
    worst = 0.0
    for kappa in (0.01, 1.0, 100.0):
        for h in (0.1, 1.0):
            I = rng.normal(size=(1, 1, 8, 8))
            ours = diffuse_implicit(I, np.array([kappa]), h, plan)[0, 0]
            direct = np.linalg.solve(np.eye(64) - h * kappa * L,
                                     I[0, 0].ravel()).reshape(8, 8)
            worst = max(worst, float(np.max(np.abs(ours - direct))))
    suite.add("implicit solve vs dense solve (max abs)", worst, 1e-10)
    return suite


def suite_stability(seed: int = 3) -> SuiteResult:
    """Backward Euler never amplifies; forward Euler obeys the h*kappa bound."""
    suite = SuiteResult("stability")
    rng = np.random.default_rng(seed)
    plan = DctPlan.create(8, 8)
    I = rng.normal(size=(1, 1, 8, 8))
    before = np.abs(dct2(I, plan))
    worst_growth = 0.0
    for kappa, h in ((0.1, 0.1), (1.0, 1.0), (100.0, 10.0), (3.0, 0.5)):
        after = np.abs(dct2(diffuse_implicit(I, np.array([kappa]), h, plan), plan))
        worst_growth = max(worst_growth, float(np.max(after - before)))
    suite.add("implicit never amplifies a coefficient", worst_growth, 1e-12)

    mode = np.outer(plan.basis_h[7], plan.basis_w[7])[None, None]
    def top_mode_ratio(hk):
        out = diffuse_explicit(mode, np.array([hk]), 1.0)
        return float(np.abs(dct2(out, plan)[0, 0, 7, 7])
                     / np.abs(dct2(mode, plan)[0, 0, 7, 7]))
    suite.add("explicit amplifies top mode at h*kappa=0.30",
              top_mode_ratio(0.30), 1.0, larger_is_worse=False)
    suite.add("explicit stable at h*kappa=0.25", top_mode_ratio(0.25), 1.0)
    return suite


def gradcheck_reference_setup(seed: int = 0):
    """The 2-layer, c=4, 6x6 model and sample used by the gradient suite."""
    cfg = ModelConfig(in_channels=1, hidden_channels=4, layer_count=2,
                      flow_width=4, flow_blocks=1)
    model = init_model(cfg, seed=seed)
    randomize_heads(model, scale=0.3, seed=seed + 1)
    rng = np.random.default_rng(seed + 2)
    hist = rng.uniform(size=(1, 1, 1, 6, 6))
    targ = rng.uniform(size=(1, 1, 6, 6))
    return model, hist, targ


def suite_gradcheck(seeds=(0, 1), tol: float = 1e-4) -> SuiteResult:
    """End-to-end parameter gradients vs central finite differences."""
    suite = SuiteResult("gradcheck")
    worst_name, worst = "", 0.0
    for seed in seeds:
        model, hist, targ = gradcheck_reference_setup(seed)
        report = gradcheck_model(model, hist, targ)
        name, value = max(report.items(), key=lambda kv: kv[1])
        if value > worst:
            worst_name, worst = f"seed {seed}: {name}", value
    suite.add(f"max relative error over parameter groups ({worst_name})", worst, tol)
    return suite


def suite_metrics(seed: int = 4) -> SuiteResult:
    """Metric self-tests against closed-form values."""
    suite = SuiteResult("metrics")
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(2, 1, 16, 16))
    suite.add("ssim(x, x) == 1", abs(ssim(x, x, 1.0) - 1.0), 1e-12)
    t = np.zeros((1, 1, 12, 12))
    p = np.full_like(t, 0.1)
    suite.add("psnr(MAX=1, MSE=0.01) == 20 dB", abs(psnr(p, t, 1.0) - 20.0), 1e-12)
    ones = np.ones((2, 1, 8, 8))
    suite.add("nrmse of a 10% uniform error == 0.1",
              abs(nrmse(1.1 * ones, ones, "pointwise") - 0.1), 1e-12)
    suite.add("mse conventions ratio == H*W*C",
              abs(mse(p, t, "video") / mse(p, t, "pdebench") - 144.0), 1e-9)
    return suite


ALL_SUITES = {
    "adjoint": suite_adjoint,
    "conservation": suite_conservation,
    "solver": suite_solver,
    "stability": suite_stability,
    "gradcheck": suite_gradcheck,
    "metrics": suite_metrics,
}


def run_suites(only=None) -> list[SuiteResult]:
    names = list(ALL_SUITES) if not only else list(only)
    unknown = [n for n in names if n not in ALL_SUITES]
    if unknown:
        raise ValueError(f"unknown verification suites {unknown}; have {list(ALL_SUITES)}")
    return [ALL_SUITES[name]() for name in names]
