"""Laplacian stencil, cosine transform, and both diffusion steps vs oracles."""

import numpy as np
import pytest
import scipy.fft

from adrflow.diffusion import (DctPlan, dct2, dense_neumann_laplacian,
                               diffuse_explicit, diffuse_implicit, idct2,
                               laplacian_5pt, softplus_inverse)
from adrflow.errors import ShapeMismatchError
from adrflow.tape import (Tape, backward, finite_difference_grad, mul, softplus,
                          total)


def naive_dct2(x):
    """O(N^2) direct evaluation of the orthonormal 2D DCT-II (test oracle)."""
    H, W = x.shape
    out = np.zeros((H, W))
    for i in range(H):
        for j in range(W):
            si = np.sqrt((1.0 if i == 0 else 2.0) / H)
            sj = np.sqrt((1.0 if j == 0 else 2.0) / W)
            acc = 0.0
            for r in range(H):
                for c in range(W):
                    acc += (x[r, c]
                            * np.cos(np.pi * i * (r + 0.5) / H)
                            * np.cos(np.pi * j * (c + 0.5) / W))
            out[i, j] = si * sj * acc
    return out


# ---------------------------------------------------------------------------
# Laplacian


def test_laplacian_annihilates_constants():
    I = np.full((1, 1, 4, 5), 3.7)
    assert np.allclose(laplacian_5pt(I), 0.0)


def test_laplacian_center_delta_stencil():
    I = np.zeros((1, 1, 3, 3))
    I[0, 0, 1, 1] = 1.0
    out = laplacian_5pt(I)[0, 0]
    expected = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])
    assert np.array_equal(out, expected)


def test_laplacian_linear_ramp_boundary_columns():
    # I[r,c] = c: interior zero, mirrored boundary gives +1 / -1 columns
    I = np.tile(np.arange(4.0), (4, 1))[None, None]
    out = laplacian_5pt(I)[0, 0]
    assert np.allclose(out[:, 0], 1.0)
    assert np.allclose(out[:, -1], -1.0)
    assert np.allclose(out[:, 1:-1], 0.0)


def test_laplacian_rejects_degenerate_grids():
    with pytest.raises(ValueError):
        laplacian_5pt(np.zeros((1, 1, 1, 7)))


def test_laplacian_matches_dense_oracle():
    rng = np.random.default_rng(0)
    I = rng.normal(size=(1, 1, 5, 4))
    L = dense_neumann_laplacian(5, 4)
    assert np.allclose(laplacian_5pt(I)[0, 0].ravel(), L @ I[0, 0].ravel(), atol=1e-13)


def test_laplacian_is_self_adjoint_dense():
    L = dense_neumann_laplacian(6, 6)
    assert np.allclose(L, L.T)


# ---------------------------------------------------------------------------
# DCT plan


def test_dct_round_trip_and_parseval():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 3, 8, 8))
    plan = DctPlan.create(8, 8)
    back = idct2(dct2(x, plan), plan)
    assert np.max(np.abs(back - x)) < 1e-12
    assert abs(np.linalg.norm(dct2(x, plan)) - np.linalg.norm(x)) < 1e-12


def test_constant_field_is_pure_dc():
    plan = DctPlan.create(4, 4)
    coef = dct2(np.full((4, 4), 2.0), plan)
    assert coef[0, 0] == pytest.approx(8.0)  # 2 * sqrt(16)
    assert np.max(np.abs(coef.ravel()[1:])) < 1e-13


def test_dct_matches_naive_oracle_and_row_mode():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(5, 6))
    plan = DctPlan.create(5, 6)
    assert np.max(np.abs(dct2(x, plan) - naive_dct2(x))) < 1e-12

    i = 2
    mode = np.tile(np.cos(np.pi * i * (np.arange(5) + 0.5) / 5)[:, None], (1, 6))
    coef = dct2(mode, plan)
    mask = np.zeros_like(coef, dtype=bool)
    mask[i, 0] = True
    assert np.max(np.abs(coef[~mask])) < 1e-12
    assert abs(coef[i, 0]) > 1.0


def test_fft_plan_agrees_with_matrix_plan():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(1, 2, 8, 8))
    slow = DctPlan.create(8, 8, use_fft=False)
    fast = DctPlan.create(8, 8, use_fft=True)
    assert np.max(np.abs(dct2(x, slow) - dct2(x, fast))) < 1e-12
    assert np.max(np.abs(idct2(x, slow) - idct2(x, fast))) < 1e-12


def test_plan_dimension_mismatch():
    plan = DctPlan.create(4, 4)
    with pytest.raises(ShapeMismatchError):
        dct2(np.zeros((1, 1, 5, 4)), plan)


def test_eigenvalues_diagonalize_dense_laplacian():
    H, W = 5, 4
    plan = DctPlan.create(H, W)
    L = dense_neumann_laplacian(H, W)
    # -Lap applied to each 2D cosine mode equals lambda times the mode
    for i in range(H):
        for j in range(W):
            mode = np.outer(plan.basis_h[i], plan.basis_w[j]).ravel()
            assert np.allclose(-L @ mode, plan.eigenvalues[i, j] * mode, atol=1e-12)


# ---------------------------------------------------------------------------
# explicit step


def test_explicit_zero_kappa_and_constant_field():
    rng = np.random.default_rng(4)
    I = rng.normal(size=(1, 2, 4, 4))
    assert np.allclose(diffuse_explicit(I, np.zeros(2), 0.7), I)
    const = np.full((1, 1, 4, 4), 1.3)
    assert np.allclose(diffuse_explicit(const, np.array([2.0]), 0.5), const)


def test_explicit_scales_each_mode_by_one_minus_h_kappa_lambda():
    H = W = 6
    plan = DctPlan.create(H, W)
    kappa, h = 0.11, 0.8
    i, j = 3, 2
    mode = np.outer(plan.basis_h[i], plan.basis_w[j])[None, None]
    out = diffuse_explicit(mode, np.array([kappa]), h)
    expected = (1.0 - h * kappa * plan.eigenvalues[i, j])
    coef = dct2(out, plan)[0, 0]
    assert coef[i, j] == pytest.approx(expected * dct2(mode, plan)[0, 0][i, j], abs=1e-12)


def test_explicit_amplification_threshold():
    # highest mode amplifies at h*kappa = 0.3 and not at 0.25 (8x8 grid)
    H = W = 8
    plan = DctPlan.create(H, W)
    mode = np.outer(plan.basis_h[H - 1], plan.basis_w[W - 1])[None, None]
    for hk, amplified in ((0.3, True), (0.25, False)):
        out = diffuse_explicit(mode, np.array([hk]), 1.0)
        ratio = np.abs(dct2(out, plan)[0, 0, H - 1, W - 1]) / np.abs(
            dct2(mode, plan)[0, 0, H - 1, W - 1])
        assert (ratio > 1.0) == amplified


# ---------------------------------------------------------------------------
# implicit step


def test_implicit_identity_cases():
    rng = np.random.default_rng(5)
    I = rng.normal(size=(1, 2, 4, 4))
    plan = DctPlan.create(4, 4)
    assert np.max(np.abs(diffuse_implicit(I, np.zeros(2), 1.0, plan) - I)) < 1e-13
    const = np.full((1, 1, 4, 4), 0.9)
    out = diffuse_implicit(const, np.array([5.0]), 2.0, plan)
    assert np.max(np.abs(out - const)) < 1e-13


@pytest.mark.parametrize("kappa", [0.01, 1.0, 100.0])
@pytest.mark.parametrize("h", [0.1, 1.0])
def test_implicit_matches_dense_solve(kappa, h):
    rng = np.random.default_rng(6)
    I = rng.normal(size=(1, 1, 8, 8))
    plan = DctPlan.create(8, 8)
    out = diffuse_implicit(I, np.array([kappa]), h, plan)
    A = np.eye(64) - h * kappa * dense_neumann_laplacian(8, 8)
    direct = np.linalg.solve(A, I[0, 0].ravel()).reshape(8, 8)
    assert np.max(np.abs(out[0, 0] - direct)) < 1e-10


def test_implicit_never_amplifies_any_mode():
    rng = np.random.default_rng(7)
    I = rng.normal(size=(1, 1, 8, 8))
    plan = DctPlan.create(8, 8)
    before = np.abs(dct2(I, plan))
    for kappa, h in ((0.1, 0.1), (1.0, 1.0), (100.0, 10.0)):
        after = np.abs(dct2(diffuse_implicit(I, np.array([kappa]), h, plan), plan))
        assert np.all(after <= before + 1e-15)


def test_implicit_preserves_channel_mean_exactly():
    rng = np.random.default_rng(8)
    I = rng.uniform(size=(2, 3, 6, 6))
    plan = DctPlan.create(6, 6)
    out = diffuse_implicit(I, np.array([0.5, 2.0, 7.0]), 1.5, plan)
    assert np.allclose(out.mean(axis=(2, 3)), I.mean(axis=(2, 3)), atol=1e-13)


def test_implicit_resolvent_is_symmetric():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(1, 1, 7, 7))
    y = rng.normal(size=(1, 1, 7, 7))
    plan = DctPlan.create(7, 7)
    k = np.array([2.3])
    lhs = float((diffuse_implicit(x, k, 0.7, plan) * y).sum())
    rhs = float((x * diffuse_implicit(y, k, 0.7, plan)).sum())
    assert abs(lhs - rhs) < 1e-12


def test_implicit_rejects_plan_mismatch_and_bad_h():
    plan = DctPlan.create(4, 4)
    with pytest.raises(ShapeMismatchError):
        diffuse_implicit(np.zeros((1, 1, 5, 5)), np.array([1.0]), 1.0, plan)
    with pytest.raises(ValueError):
        diffuse_implicit(np.zeros((1, 1, 4, 4)), np.array([1.0]), -1.0, plan)


# ---------------------------------------------------------------------------
# gradients


@pytest.mark.parametrize("seed", range(20))
def test_implicit_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    I = rng.normal(size=(1, 2, 4, 4))
    raw = rng.normal(size=2)
    w = rng.normal(size=(1, 2, 4, 4))
    plan = DctPlan.create(4, 4)
    h = 0.6

    tape = Tape()
    vi = tape.leaf(I.copy())
    vraw = tape.leaf(raw.copy())
    loss = total(mul(diffuse_implicit(vi, softplus(vraw), h, plan), w))
    grads = backward(tape, loss)

    fd_I = finite_difference_grad(
        lambda a: float((diffuse_implicit(a, np.logaddexp(0, raw), h, plan) * w).sum()),
        I.copy(), 1e-6)
    fd_raw = finite_difference_grad(
        lambda a: float((diffuse_implicit(I, np.logaddexp(0, a), h, plan) * w).sum()),
        raw.copy(), 1e-6)
    for analytic, fd in ((grads[vi.id], fd_I), (grads[vraw.id], fd_raw)):
        denom = np.maximum(np.maximum(np.abs(fd), np.abs(analytic)), 1e-6)
        assert np.max(np.abs(fd - analytic) / denom) < 1e-5


@pytest.mark.parametrize("seed", range(5))
def test_explicit_and_laplacian_gradients(seed):
    rng = np.random.default_rng(seed)
    I = rng.normal(size=(1, 1, 4, 4))
    w = rng.normal(size=(1, 1, 4, 4))
    tape = Tape()
    vi = tape.leaf(I.copy())
    loss = total(mul(diffuse_explicit(vi, np.array([0.2]), 0.5, ), w))
    analytic = backward(tape, loss)[vi.id]
    fd = finite_difference_grad(
        lambda a: float((diffuse_explicit(a, np.array([0.2]), 0.5) * w).sum()),
        I.copy(), 1e-6)
    assert np.allclose(analytic, fd, atol=1e-8)


def test_softplus_inverse_round_trip():
    for y in (1e-3, 0.5, 2.0):
        assert np.logaddexp(0, softplus_inverse(y)) == pytest.approx(y, rel=1e-12)


def test_fft_plan_solve_agrees_with_matrix_plan_solve():
    rng = np.random.default_rng(10)
    I = rng.normal(size=(1, 1, 16, 16))
    k = np.array([3.0])
    slow = diffuse_implicit(I, k, 0.9, DctPlan.create(16, 16, use_fft=False))
    fast = diffuse_implicit(I, k, 0.9, DctPlan.create(16, 16, use_fft=True))
    assert np.max(np.abs(slow - fast)) < 1e-12


def test_scipy_dct_normalization_matches_basis():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(6, 5))
    plan = DctPlan.create(6, 5)
    ours = dct2(x, plan)
    ref = scipy.fft.dctn(x, type=2, norm="ortho")
    assert np.max(np.abs(ours - ref)) < 1e-12
